"""Acceptance-rate check of IV-assumption plausibility.

The acceptance rate estimates the fiducial probability that the data-generating
observable distribution lies in the feasible set F. As n grows it tends to 1
for q inside F, to 0 for q outside F, and stays spread out over (0, 1) when q
sits on the boundary of F.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import partial

from loguru import logger
from scipy.stats import binomtest

from fidbound.engine.fiducial_engine import IterationPool
from fidbound.engine.sampler import DEFAULT_SEED, RngStream, propose
from fidbound.model.data import CountsTable
from fidbound.model.strata import AssumptionSet
from fidbound.optim.bounds import StratumPolytope
from fidbound.oracle.exact import observable_in_feasible_set

INTERPRETATION = (
    "The acceptance rate estimates the fiducial probability that the observable "
    "distribution is compatible with the {assumptions} assumptions. Rates close to 1 "
    "indicate that the observed proportions lie safely inside the feasible set; rates "
    "close to 0 indicate that the assumptions are likely violated. Intermediate rates "
    "are expected when the observed proportions lie near the boundary of the feasible "
    "set; there the rate does not settle as the sample size grows."
)


@dataclass(frozen=True)
class PlausibilityReport:
    assumptions: str
    seed: int
    attempts: int
    accepted: int
    acceptance_rate: float
    rate_ci_low: float
    rate_ci_high: float
    q_hat_feasible: bool
    interpretation: str

    def to_document(self) -> dict:
        return asdict(self)


def _first_attempt_accepted(iteration: int, counts: CountsTable, assumptions: AssumptionSet, seed: int) -> bool:
    draw = propose(counts, RngStream(seed, iteration))
    return StratumPolytope.from_draw(draw, assumptions).is_feasible()


def diagnose(
    counts: CountsTable,
    assumptions: AssumptionSet,
    n_proposals: int,
    seed: int = DEFAULT_SEED,
    workers: int | None = 1,
) -> PlausibilityReport:
    """Run `n_proposals` acceptance tests without solving any bound LPs.

    Check j uses the first attempt of stream j, the same proposal the sampler
    would test first for iteration j.
    """
    assert n_proposals >= 1, f"n_proposals must be at least 1, got {n_proposals}."
    counts.require_both_arms()

    work = partial(_first_attempt_accepted, counts=counts, assumptions=assumptions, seed=seed)
    with IterationPool(workers) as pool:
        accepted = sum(pool.map(work, range(n_proposals)))

    interval = binomtest(accepted, n_proposals).proportion_ci(
        confidence_level=0.95, method="wilson"
    )
    inside = observable_in_feasible_set(counts, assumptions)
    report = PlausibilityReport(
        assumptions=assumptions.label.value,
        seed=seed,
        attempts=n_proposals,
        accepted=accepted,
        acceptance_rate=accepted / n_proposals,
        rate_ci_low=float(interval.low),
        rate_ci_high=float(interval.high),
        q_hat_feasible=inside,
        interpretation=INTERPRETATION.format(assumptions=assumptions.label.value),
    )
    logger.info(
        f"Plausibility check: {accepted}/{n_proposals} accepted, q_hat "
        f"{'inside' if inside else 'outside'} the feasible set"
    )
    return report
