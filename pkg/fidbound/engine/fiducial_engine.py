"""Fiducial analysis: acceptance sampling, per-draw bounds, and intervals.

`run_acceptance_sampler` generates proposals until enough of them admit a
stratum vector under the assumptions; `bounds_for_draws` solves the lower and
upper bound LPs for each stored draw; `analyze` turns the bound samples into
median point estimates and quantile confidence intervals.
"""

from __future__ import annotations

import json
import math
import multiprocessing
import os
from collections.abc import Callable, Iterable, Iterator, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, is_dataclass
from enum import Enum
from functools import partial
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from fidbound.engine.sampler import DEFAULT_SEED, RngStream, propose
from fidbound.errors import AcceptanceStalled, EmptySamples
from fidbound.model.data import CountsTable
from fidbound.model.draws import FiducialDraw
from fidbound.model.strata import AssumptionSet, Estimand, EstimandKind, estimand
from fidbound.optim.bounds import ORDER_TOLERANCE, Direction, StratumPolytope

ATTEMPTS_PER_DRAW = 1000
ITERATIONS_PER_WORKER = 64
ESTIMAND_RANGE = (-1.0, 1.0)


@dataclass(frozen=True)
class BoundsSample:
    l: float  # noqa: E741
    u: float
    degenerate: bool = False


@dataclass(frozen=True)
class Interval:
    low: float
    high: float

    def __post_init__(self):
        assert self.low <= self.high, f"Interval endpoints out of order: {self}"

    @property
    def width(self) -> float:
        return self.high - self.low

    def contains(self, other: Interval) -> bool:
        return self.low <= other.low and other.high <= self.high


@dataclass(frozen=True)
class SamplerRun:
    draws: list[FiducialDraw]
    attempts: int

    @property
    def accepted(self) -> int:
        return len(self.draws)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts


@dataclass(frozen=True)
class AnalysisResult:
    estimand: str
    assumptions: str
    method: str
    seed: int
    level: float
    accepted: int
    attempts: int
    acceptance_rate: float
    lower_point: float
    upper_point: float
    lower_ci: Interval
    upper_ci: Interval
    degenerate_fraction: float
    samples: list[BoundsSample] = field(repr=False)

    def to_document(self, include_samples: bool = True) -> dict:
        document = asdict(self)
        if not include_samples:
            del document["samples"]
        return document


class JsonEncoder(json.JSONEncoder):
    def default(self, obj):
        if is_dataclass(obj):
            return asdict(obj)
        if isinstance(obj, Enum):
            return obj.value
        if isinstance(obj, np.generic):
            return obj.item()
        return super().default(obj)


def dumps_document(document) -> str:
    """Serialize a result document; equal inputs give byte-identical text."""
    return json.dumps(document, cls=JsonEncoder, sort_keys=True, indent=2) + "\n"


def write_samples(samples: Sequence[BoundsSample], path_or_buffer) -> None:
    frame = pd.DataFrame(
        {
            "j": np.arange(1, len(samples) + 1),
            "l": [s.l for s in samples],
            "u": [s.u for s in samples],
            "degenerate": [int(s.degenerate) for s in samples],
        }
    )
    frame.to_csv(path_or_buffer, index=False, lineterminator="\n")


class IterationPool:
    """Maps a picklable function over iteration indices, preserving order.

    With one worker everything runs in-process; otherwise a spawn-context
    ProcessPoolExecutor is used. Results are always returned in input order,
    so the reduction never depends on scheduling.
    """

    def __init__(self, workers: int | None = None):
        self.workers = max(1, workers if workers is not None else (os.cpu_count() or 1))
        self._executor: ProcessPoolExecutor | None = None
        self._depth = 0

    def __enter__(self) -> IterationPool:
        # nested use by the sampler and the bound solver shares one executor
        self._depth += 1
        if self.workers > 1 and self._executor is None:
            context = multiprocessing.get_context("spawn")
            self._executor = ProcessPoolExecutor(max_workers=self.workers, mp_context=context)
            logger.debug(f"Started {self.workers} worker processes")
        return self

    def __exit__(self, *exc_info):
        self._depth -= 1
        if self._depth == 0 and self._executor is not None:
            self._executor.shutdown(wait=True, cancel_futures=True)
            self._executor = None

    @property
    def batch_size(self) -> int:
        return self.workers * ITERATIONS_PER_WORKER

    def map(self, function: Callable, items: Iterable) -> Iterator:
        if self._executor is None:
            return map(function, items)
        items = list(items)
        chunksize = max(1, math.ceil(len(items) / (self.workers * 4)))
        return self._executor.map(function, items, chunksize=chunksize)


def _accept_iteration(
    iteration: int,
    counts: CountsTable,
    assumptions: AssumptionSet,
    seed: int,
    budget: int,
) -> tuple[FiducialDraw | None, int]:
    """Propose for one iteration until a draw is feasible or the budget runs out."""
    stream = RngStream(seed, iteration)
    for attempt in range(1, budget + 1):
        draw = propose(counts, stream)
        if StratumPolytope.from_draw(draw, assumptions).is_feasible():
            return draw, attempt
        stream = stream.next_attempt()
    return None, budget


def run_acceptance_sampler(
    counts: CountsTable,
    assumptions: AssumptionSet,
    n_mcmc: int,
    seed: int = DEFAULT_SEED,
    max_attempts: int | None = None,
    workers: int | None = 1,
    pool: IterationPool | None = None,
) -> SamplerRun:
    """Collect `n_mcmc` feasible fiducial draws by acceptance sampling.

    Iteration j draws its k-th attempt from stream (seed, j, k). Iterations
    are evaluated in index-ordered batches and reduced in order against the
    global attempt cap, which reproduces the serial run exactly.

    Raises:
        AcceptanceStalled: if `max_attempts` proposals do not yield `n_mcmc`
            acceptances. The exception carries the attempts and acceptances.
    """
    assert n_mcmc >= 1, f"n_mcmc must be at least 1, got {n_mcmc}."
    max_attempts = max_attempts if max_attempts is not None else ATTEMPTS_PER_DRAW * n_mcmc
    assert max_attempts >= n_mcmc, (
        f"max_attempts ({max_attempts}) must be at least n_mcmc ({n_mcmc})."
    )
    counts.require_both_arms()

    draws: list[FiducialDraw] = []
    attempts = 0
    with pool or IterationPool(workers) as active:
        for start in range(0, n_mcmc, active.batch_size):
            stop = min(start + active.batch_size, n_mcmc)
            work = partial(
                _accept_iteration,
                counts=counts,
                assumptions=assumptions,
                seed=seed,
                budget=max_attempts - attempts,
            )
            for draw, used in active.map(work, range(start, stop)):
                if draw is None or attempts + used > max_attempts:
                    logger.warning(
                        f"Acceptance sampler stalled: {len(draws)}/{n_mcmc} draws "
                        f"after {max_attempts} attempts"
                    )
                    raise AcceptanceStalled(max_attempts, len(draws), n_mcmc)
                draws.append(draw)
                attempts += used
            logger.debug(f"Accepted {len(draws)}/{n_mcmc} draws in {attempts} attempts")

    run = SamplerRun(draws, attempts)
    logger.info(
        f"Accepted {run.accepted} draws in {run.attempts} attempts "
        f"(acceptance rate {run.acceptance_rate:.4f})"
    )
    return run


def polytope_bounds(polytope: StratumPolytope, target: Estimand) -> BoundsSample:
    """Lower and upper bound of `target` over one polytope.

    Optima that cross by less than ORDER_TOLERANCE are merged at their midpoint.
    """
    lower = polytope.optimize(target, Direction.min)
    upper = polytope.optimize(target, Direction.max)
    low, high = lower.value, upper.value
    assert low - high <= ORDER_TOLERANCE, (
        f"Lower bound {low} exceeds upper bound {high} for '{target.kind.value}' "
        f"by more than {ORDER_TOLERANCE}."
    )
    if low > high:
        low = high = 0.5 * (low + high)
    return BoundsSample(low, high, lower.degenerate or upper.degenerate)


def _bounds_for_draw(
    draw: FiducialDraw, target: Estimand, assumptions: AssumptionSet
) -> BoundsSample:
    return polytope_bounds(StratumPolytope.from_draw(draw, assumptions), target)


def bounds_for_draws(
    draws: Sequence[FiducialDraw],
    target: Estimand,
    assumptions: AssumptionSet,
    workers: int | None = 1,
    pool: IterationPool | None = None,
) -> list[BoundsSample]:
    """The lower and upper bound samples (l*_j, u*_j) per draw.

    Raises:
        InfeasibleDraw: if a draw was not accepted under `assumptions`.
    """
    assumptions.check_estimand(target)
    work = partial(_bounds_for_draw, target=target, assumptions=assumptions)
    with pool or IterationPool(workers) as active:
        samples = list(active.map(work, draws))

    degenerate = sum(s.degenerate for s in samples)
    if degenerate:
        logger.warning(
            f"{degenerate}/{len(samples)} draws for '{target.kind.value}' have a "
            "denominator that can vanish; their bounds use the restricted region."
        )
    return samples


def _order_statistic(sorted_values: np.ndarray, prob: float) -> float:
    m = sorted_values.size
    # guard against 0.975 * 100 landing a hair above 97.5
    k = math.ceil(prob * m - 1e-9)
    k = min(max(k, 1), m)
    return float(sorted_values[k - 1])


def quantile_ci(values: Sequence[float], prob_low: float, prob_high: float) -> Interval:
    """Empirical quantile interval using the ceil(p * m)-th order statistic at both ends.

    Raises:
        EmptySamples: if `values` is empty.
    """
    assert 0.0 <= prob_low < prob_high <= 1.0, (
        f"Quantile probabilities must satisfy 0 <= low < high <= 1: ({prob_low}, {prob_high})"
    )
    sorted_values = np.sort(np.asarray(values, dtype=float))
    if sorted_values.size == 0:
        raise EmptySamples("Cannot form an interval from no samples.")
    return Interval(
        _order_statistic(sorted_values, prob_low),
        _order_statistic(sorted_values, prob_high),
    )


def median(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EmptySamples("Cannot take the median of no samples.")
    return float(np.median(values))


def level_interval(values: Sequence[float], level: float) -> Interval:
    """Equal-tailed interval of the given level; level 1 is the full estimand range."""
    assert 0.0 < level <= 1.0, f"level must lie in (0, 1], got {level}"
    if level >= 1.0:
        if len(values) == 0:
            raise EmptySamples("Cannot form an interval from no samples.")
        return Interval(*ESTIMAND_RANGE)
    tail = (1.0 - level) / 2.0
    return quantile_ci(values, tail, 1.0 - tail)


def summarize_samples(
    samples: Sequence[BoundsSample],
    target: Estimand,
    assumptions: AssumptionSet,
    seed: int,
    level: float,
    accepted: int,
    attempts: int,
    method: str = "fiducial",
) -> AnalysisResult:
    """Point estimates (medians) and per-bound intervals from bound samples."""
    if not samples:
        raise EmptySamples("No bound samples to summarize.")
    lower = [s.l for s in samples]
    upper = [s.u for s in samples]
    return AnalysisResult(
        estimand=target.kind.value,
        assumptions=assumptions.label.value,
        method=method,
        seed=seed,
        level=level,
        accepted=accepted,
        attempts=attempts,
        acceptance_rate=accepted / attempts,
        lower_point=median(lower),
        upper_point=median(upper),
        lower_ci=level_interval(lower, level),
        upper_ci=level_interval(upper, level),
        degenerate_fraction=sum(s.degenerate for s in samples) / len(samples),
        samples=list(samples),
    )


def analyze_estimands(
    counts: CountsTable,
    kinds: Sequence[EstimandKind | str],
    assumptions: AssumptionSet,
    n_mcmc: int,
    seed: int = DEFAULT_SEED,
    level: float = 0.95,
    max_attempts: int | None = None,
    workers: int | None = 1,
) -> dict[str, AnalysisResult]:
    """Sample draws once and solve the bound LPs for every requested estimand."""
    targets = [estimand(kind) for kind in kinds]
    for target in targets:
        assumptions.check_estimand(target)

    results: dict[str, AnalysisResult] = {}
    with IterationPool(workers) as pool:
        run = run_acceptance_sampler(
            counts, assumptions, n_mcmc, seed, max_attempts, pool=pool
        )
        for target in targets:
            samples = bounds_for_draws(run.draws, target, assumptions, pool=pool)
            results[target.kind.value] = summarize_samples(
                samples, target, assumptions, seed, level, run.accepted, run.attempts
            )
            logger.info(
                f"{target.kind.value}: lower {results[target.kind.value].lower_point:.4f}, "
                f"upper {results[target.kind.value].upper_point:.4f}"
            )
    return results


def analyze(
    counts: CountsTable,
    target: Estimand | EstimandKind | str,
    assumptions: AssumptionSet,
    n_mcmc: int,
    seed: int = DEFAULT_SEED,
    level: float = 0.95,
    max_attempts: int | None = None,
    workers: int | None = 1,
) -> AnalysisResult:
    """Full fiducial pipeline for one estimand.

    Raises:
        AcceptanceStalled: propagated from the sampler, with its diagnostics.
    """
    kind = target.kind if isinstance(target, Estimand) else target
    results = analyze_estimands(
        counts, [kind], assumptions, n_mcmc, seed, level, max_attempts, workers
    )
    return next(iter(results.values()))


def save_result(result: AnalysisResult, path: Path) -> Path:
    path.write_text(dumps_document(result.to_document()))
    return path
