"""Data-generating processes for the coverage study.

Both scenarios draw U, Z ~ Bernoulli(1/2) independently and then

    P(A=1 | U, Z) = tu * U + tz * Z + t0
    P(Y=1 | U, A) = ou * U + oa * A + o0

Scenario 1 has an unmeasured confounder U acting on both A and Y; scenario 2
drops U. The true ATE is `oa` in both.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction

import numpy as np
from loguru import logger

from fidbound.errors import DataError
from fidbound.model.data import RecordBatch
from fidbound.model.strata import AssumptionSet, Estimand, ObservableDist
from fidbound.oracle.exact import plug_in_bounds

HALF = Fraction(1, 2)


class ScenarioId(IntEnum):
    SCENARIO_1 = 1
    SCENARIO_2 = 2

    @staticmethod
    def parse(value: ScenarioId | int | str) -> ScenarioId:
        try:
            return ScenarioId(int(value))
        except ValueError:
            raise DataError(f"Unknown scenario '{value}'. Supported: 1, 2.") from None


@dataclass(frozen=True)
class ScenarioParams:
    id: ScenarioId
    treatment_u: Fraction
    treatment_z: Fraction
    treatment_intercept: Fraction
    outcome_u: Fraction
    outcome_a: Fraction
    outcome_intercept: Fraction

    def __post_init__(self):
        for u in (0, 1):
            for x in (0, 1):
                for p in (self.p_treatment(u, x), self.p_outcome(u, x)):
                    assert 0 <= p <= 1, f"Scenario {self.id} has a probability {p} outside [0, 1]."

    @property
    def confounded(self) -> bool:
        return self.treatment_u != 0 or self.outcome_u != 0

    def p_treatment(self, u: int, z: int) -> Fraction:
        return self.treatment_u * u + self.treatment_z * z + self.treatment_intercept

    def p_outcome(self, u: int, a: int) -> Fraction:
        return self.outcome_u * u + self.outcome_a * a + self.outcome_intercept


SCENARIOS: dict[ScenarioId, ScenarioParams] = {
    ScenarioId.SCENARIO_1: ScenarioParams(
        ScenarioId.SCENARIO_1,
        treatment_u=Fraction(1, 16),
        treatment_z=Fraction(2, 5),
        treatment_intercept=Fraction(1, 2),
        outcome_u=Fraction(1, 16),
        outcome_a=Fraction(1, 5),
        outcome_intercept=Fraction(1, 15),
    ),
    ScenarioId.SCENARIO_2: ScenarioParams(
        ScenarioId.SCENARIO_2,
        treatment_u=Fraction(0),
        treatment_z=Fraction(1, 5),
        treatment_intercept=Fraction(1, 5),
        outcome_u=Fraction(0),
        outcome_a=Fraction(1, 5),
        outcome_intercept=Fraction(1, 15),
    ),
}


def scenario_params(scenario: ScenarioParams | ScenarioId | int | str) -> ScenarioParams:
    if isinstance(scenario, ScenarioParams):
        return scenario
    return SCENARIOS[ScenarioId.parse(scenario)]


def simulate(scenario: ScenarioParams | ScenarioId | int, n: int, seed: int) -> RecordBatch:
    """Draw n i.i.d. records by ancestral sampling U -> Z -> A -> Y."""
    assert n >= 1, f"n must be at least 1, got {n}."
    params = scenario_params(scenario)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    u = (rng.random(n) < 0.5).astype(np.int8)
    z = (rng.random(n) < 0.5).astype(np.int8)
    p_a = (
        float(params.treatment_u) * u + float(params.treatment_z) * z + float(params.treatment_intercept)
    )
    a = (rng.random(n) < p_a).astype(np.int8)
    p_y = float(params.outcome_u) * u + float(params.outcome_a) * a + float(params.outcome_intercept)
    y = (rng.random(n) < p_y).astype(np.int8)

    logger.debug(f"Simulated {n} records from scenario {params.id.value} with seed {seed}")
    return RecordBatch(z, a, y)


def true_cells(scenario: ScenarioParams | ScenarioId | int) -> tuple[Fraction, ...]:
    """Exact q_zay = sum_u P(U=u) P(A=a | u, z) P(Y=y | u, a), (z, a, y) order."""
    params = scenario_params(scenario)
    cells = []
    for z in (0, 1):
        for a in (0, 1):
            for y in (0, 1):
                total = Fraction(0)
                for u in (0, 1):
                    p_a = params.p_treatment(u, z) if a else 1 - params.p_treatment(u, z)
                    p_y = params.p_outcome(u, a) if y else 1 - params.p_outcome(u, a)
                    total += HALF * p_a * p_y
                cells.append(total)
    return tuple(cells)


def true_q(scenario: ScenarioParams | ScenarioId | int) -> ObservableDist:
    cells = np.array([float(c) for c in true_cells(scenario)]).reshape(2, 4)
    cells = cells / cells.sum(axis=1, keepdims=True)
    return ObservableDist(cells.reshape(2, 2, 2))


def true_ate(scenario: ScenarioParams | ScenarioId | int) -> Fraction:
    params = scenario_params(scenario)
    return sum(
        (HALF * (params.p_outcome(u, 1) - params.p_outcome(u, 0)) for u in (0, 1)), Fraction(0)
    )


def true_bounds(
    scenario: ScenarioParams | ScenarioId | int, target: Estimand, assumptions: AssumptionSet
) -> tuple[float, float]:
    """The coverage targets: plug-in bounds evaluated at the true q."""
    return plug_in_bounds(true_q(scenario), target, assumptions)
