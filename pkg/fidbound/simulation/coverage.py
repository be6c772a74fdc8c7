"""Coverage and width study of the bound intervals, with a Bayesian comparator.

For every sample size and replication a dataset is simulated, analyzed, and
the lower- and upper-bound intervals are compared with the true bounds. The
dataset of replication r at size n depends only on (seed, n, r), so every
method sees the same datasets.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from enum import Enum
from functools import partial

import numpy as np
import pandas as pd
from loguru import logger

from fidbound.engine.fiducial_engine import (
    AnalysisResult,
    BoundsSample,
    Interval,
    IterationPool,
    analyze,
    polytope_bounds,
    summarize_samples,
)
from fidbound.engine.sampler import DEFAULT_SEED, RngStream, derive_seed, dirichlet_draw
from fidbound.errors import AllDrawsInfeasible, DataError, MissingArm, SamplingError
from fidbound.model.data import CountsTable, summarize
from fidbound.model.strata import AssumptionSet, Estimand, EstimandKind, assumption_set, estimand
from fidbound.optim.bounds import StratumPolytope
from fidbound.simulation.scenarios import ScenarioId, simulate, true_bounds

COVERAGE_COLUMNS = ["scenario", "bound", "method", "n", "replications", "stalled", "LR", "UR", "WD"]


class Method(Enum):
    fiducial = "fiducial"
    bayes1 = "bayes1"
    bayes2 = "bayes2"

    @staticmethod
    def parse(method: Method | str) -> Method:
        if isinstance(method, Method):
            return method
        try:
            return Method(str(method).strip().lower())
        except ValueError:
            supported = ", ".join(m.value for m in Method)
            raise DataError(f"Unknown method '{method}'. Supported: {supported}.") from None


# (z, a, y) lexicographic; the zeros sit on cells (0, 1, 0) and (0, 1, 1)
PRIORS: dict[Method, tuple[float, ...]] = {
    Method.bayes1: (1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0),
    Method.bayes2: (0.5, 0.5, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0),
}


@dataclass(frozen=True)
class CoverageRow:
    scenario: int
    bound: str
    method: str
    n: int
    replications: int
    stalled: int
    LR: float
    UR: float
    WD: float


def _posterior_bounds(
    iteration: int,
    counts: CountsTable,
    prior: np.ndarray,
    target: Estimand,
    assumptions: AssumptionSet,
    seed: int,
) -> BoundsSample | None:
    generator = RngStream(seed, iteration).generator()
    cells = np.concatenate(
        [dirichlet_draw(prior[4 * z : 4 * z + 4] + counts.arm(z), generator) for z in (0, 1)]
    )
    polytope = StratumPolytope(cells, assumptions, equality=True)
    if not polytope.is_feasible():
        return None
    return polytope_bounds(polytope, target)


def bayesian_comparator(
    counts: CountsTable,
    prior: Sequence[float],
    n_draws: int,
    seed: int,
    target: Estimand,
    assumptions: AssumptionSet,
    level: float = 0.95,
    workers: int | None = 1,
    method: str = "bayes",
) -> AnalysisResult:
    """Posterior intervals for the bounds under per-arm Dirichlet(prior_z + n_z).

    Posterior draws of q outside the feasible set are discarded and counted;
    the result's `attempts` is `n_draws` and `accepted` the retained draws.

    Raises:
        AllDrawsInfeasible: if no posterior draw is feasible.
    """
    prior = np.asarray(prior, dtype=float)
    if prior.shape != (8,) or np.any(prior < 0) or not np.all(np.isfinite(prior)):
        raise DataError(f"A prior needs 8 nonnegative components, got {prior.tolist()}.")
    assert n_draws >= 1, f"n_draws must be at least 1, got {n_draws}."
    counts.require_both_arms()
    assumptions.check_estimand(target)

    work = partial(
        _posterior_bounds,
        counts=counts,
        prior=prior,
        target=target,
        assumptions=assumptions,
        seed=seed,
    )
    with IterationPool(workers) as pool:
        samples = [s for s in pool.map(work, range(n_draws)) if s is not None]

    discarded = n_draws - len(samples)
    if not samples:
        raise AllDrawsInfeasible(
            f"All {n_draws} posterior draws fall outside the feasible set "
            f"under '{assumptions.label.value}'."
        )
    if discarded:
        logger.debug(f"Discarded {discarded}/{n_draws} infeasible posterior draws")
    return summarize_samples(
        samples, target, assumptions, seed, level, len(samples), n_draws, method=method
    )


def _replicate(
    replication: int,
    scenario: ScenarioId,
    n: int,
    n_mcmc: int,
    level: float,
    method: Method,
    target: Estimand,
    assumptions: AssumptionSet,
    seed: int,
) -> tuple[Interval, Interval] | None:
    records = simulate(scenario, n, derive_seed(seed, n, replication))
    analysis_seed = derive_seed(seed, n, replication, 1)
    try:
        counts = summarize(records)
        if method is Method.fiducial:
            result = analyze(
                counts, target, assumptions, n_mcmc, analysis_seed, level, workers=1
            )
        else:
            result = bayesian_comparator(
                counts, PRIORS[method], n_mcmc, analysis_seed, target, assumptions,
                level, workers=1, method=method.value,
            )
    except (MissingArm, SamplingError) as e:
        logger.debug(f"Replication {replication} at n={n} excluded: {e}")
        return None
    return result.lower_ci, result.upper_ci


def _summarize_bound(
    scenario: ScenarioId,
    bound: str,
    method: Method,
    n: int,
    intervals: Sequence[Interval],
    truth: float,
    replications: int,
) -> CoverageRow:
    valid = len(intervals)
    if valid == 0:
        lr = ur = wd = math.nan
    else:
        lr = 100.0 * sum(truth < ci.low for ci in intervals) / valid
        ur = 100.0 * sum(truth > ci.high for ci in intervals) / valid
        wd = float(np.mean([ci.width for ci in intervals]))
    return CoverageRow(
        scenario=int(scenario),
        bound=bound,
        method=method.value,
        n=n,
        replications=replications,
        stalled=replications - valid,
        LR=lr,
        UR=ur,
        WD=wd,
    )


def coverage_experiment(
    scenario: ScenarioId | int,
    n_list: Sequence[int],
    replications: int,
    n_mcmc: int,
    level: float = 0.95,
    method: Method | str = Method.fiducial,
    target: Estimand | EstimandKind | str = EstimandKind.ate,
    assumptions: AssumptionSet | str = "core",
    seed: int = DEFAULT_SEED,
    workers: int | None = 1,
) -> list[CoverageRow]:
    """Error rates (percent) and mean widths of the lower- and upper-bound intervals.

    LR is the share of replications whose interval lies entirely above the true
    bound, UR the share whose interval lies entirely below it. Replications that
    stall or miss an arm are counted in `stalled` and left out of LR, UR and WD.
    """
    assert replications >= 1, f"replications must be at least 1, got {replications}."
    scenario = ScenarioId.parse(scenario)
    method = Method.parse(method)
    target = target if isinstance(target, Estimand) else estimand(target)
    assumptions = (
        assumptions if isinstance(assumptions, AssumptionSet) else assumption_set(assumptions)
    )
    true_lower, true_upper = true_bounds(scenario, target, assumptions)
    logger.info(
        f"Scenario {scenario.value}: true bounds ({true_lower:.4f}, {true_upper:.4f}) "
        f"for '{target.kind.value}'"
    )

    rows: list[CoverageRow] = []
    with IterationPool(workers) as pool:
        for n in n_list:
            work = partial(
                _replicate,
                scenario=scenario,
                n=n,
                n_mcmc=n_mcmc,
                level=level,
                method=method,
                target=target,
                assumptions=assumptions,
                seed=seed,
            )
            outcomes = [o for o in pool.map(work, range(replications)) if o is not None]
            if len(outcomes) < replications:
                logger.warning(
                    f"n={n}: {replications - len(outcomes)}/{replications} replications excluded"
                )
            rows.append(
                _summarize_bound(scenario, "lower", method, n, [o[0] for o in outcomes],
                                 true_lower, replications)
            )
            rows.append(
                _summarize_bound(scenario, "upper", method, n, [o[1] for o in outcomes],
                                 true_upper, replications)
            )
            logger.info(f"n={n}: {rows[-2]} / {rows[-1]}")
    return rows


def coverage_frame(rows: Sequence[CoverageRow]) -> pd.DataFrame:
    return pd.DataFrame([asdict(row) for row in rows], columns=COVERAGE_COLUMNS)


def format_table(rows: Sequence[CoverageRow]) -> str:
    frame = coverage_frame(rows)
    return frame.to_string(
        index=False,
        formatters={"LR": "{:.1f}".format, "UR": "{:.1f}".format, "WD": "{:.2f}".format},
    )


def write_coverage(rows: Sequence[CoverageRow], path_or_buffer) -> None:
    coverage_frame(rows).to_csv(path_or_buffer, index=False, lineterminator="\n")
