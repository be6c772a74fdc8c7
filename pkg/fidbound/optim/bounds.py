"""Bounds of causal estimands over the stratum polytope.

Two polytopes share one builder. A fiducial draw V* gives

    sum(p) = 1, p >= 0, G p >= V*, p_s = 0 for forced-zero strata

and an observable distribution q gives the plug-in polytope with G p = q,
where G is the 8x16 observable matrix. Forced-zero strata are removed from
the variable set rather than pinned by extra rows.

Fractional estimands numerator.p / denominator.p are optimized through the
Charnes-Cooper change of variables y = t p, t = 1 / denominator.p. The
numerator is supported on the denominator strata with coefficients in
{-1, 0, 1}, so the transformed LP stays bounded when the denominator can
vanish. On an edge leaving a vertex with denominator 0 the ratio is constant,
so the optimum over {denominator.p >= DENOMINATOR_FLOOR} is the ratio at a
vertex with positive denominator, which the transform reaches without a
floor row.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from loguru import logger

from fidbound.errors import InfeasibleDraw, NumericalFailure
from fidbound.model.draws import FiducialDraw
from fidbound.model.strata import (
    NUM_STRATA,
    OBSERVABLE_MATRIX,
    STRATA,
    AssumptionSet,
    Estimand,
    ObservableDist,
)
from fidbound.optim.simplex import DEFAULT_SOLVER, LpProblem, LpSolution, LpStatus, SimplexSolver

DENOMINATOR_FLOOR = 1e-9
# lower and upper optima may cross by solver tolerance, never by more
ORDER_TOLERANCE = 1e-7


class Direction(Enum):
    min = "min"
    max = "max"

    @property
    def maximize(self) -> bool:
        return self is Direction.max


@dataclass(frozen=True)
class BoundResult:
    value: float
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class StratumPolytope:
    """Latent strata consistent with 8 cell values under an assumption set.

    With `equality=False` the cells are the fiducial lower limits V*_zay
    (`G p >= cells`); with `equality=True` they are observable probabilities
    (`G p = cells`).
    """

    cells: np.ndarray
    assumptions: AssumptionSet
    equality: bool = False

    def __post_init__(self):
        cells = np.array(self.cells, dtype=float).reshape(8)
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)

    @staticmethod
    def from_draw(draw: FiducialDraw, assumptions: AssumptionSet) -> StratumPolytope:
        return StratumPolytope(draw.flat, assumptions)

    @staticmethod
    def from_observable(q: ObservableDist, assumptions: AssumptionSet) -> StratumPolytope:
        return StratumPolytope(q.flat, assumptions, equality=True)

    @property
    def free(self) -> list[int]:
        return list(self.assumptions.free_strata)

    def stratum_names(self) -> tuple[str, ...]:
        return tuple(f"p_{STRATA[s][0]}_{STRATA[s][1]}" for s in self.free)

    def lift(self, point: np.ndarray) -> np.ndarray:
        """Expand a point over the free strata back to all 16 strata."""
        p = np.zeros(NUM_STRATA)
        p[self.free] = point[: len(self.free)]
        return p

    def linear_problem(self, objective: np.ndarray, maximize: bool = False) -> LpProblem:
        free = self.free
        g = OBSERVABLE_MATRIX[:, free]
        ones = np.ones((1, len(free)))
        if self.equality:
            return LpProblem(
                objective[free],
                a_eq=np.vstack([ones, g]),
                b_eq=np.concatenate([[1.0], self.cells]),
                maximize=maximize,
                variable_names=self.stratum_names(),
            )
        return LpProblem(
            objective[free],
            a_eq=ones,
            b_eq=[1.0],
            a_ge=g,
            b_ge=self.cells,
            maximize=maximize,
            variable_names=self.stratum_names(),
        )

    def charnes_cooper_problem(
        self,
        numerator: np.ndarray,
        denominator: np.ndarray,
        maximize: bool = False,
    ) -> LpProblem:
        """LP over (y, t) equivalent to optimizing numerator.p / denominator.p.

        Rows: sum(y) - t = 0, denominator.y = 1, G y - cells t (>= or =) 0.
        """
        free = self.free
        k = len(free)
        g = OBSERVABLE_MATRIX[:, free]
        objective = np.concatenate([numerator[free], [0.0]])

        normalization = np.zeros((2, k + 1))
        normalization[0, :k] = 1.0
        normalization[0, k] = -1.0
        normalization[1, :k] = denominator[free]
        homogenized = np.hstack([g, -self.cells.reshape(8, 1)])

        a_eq = [normalization]
        b_eq = [[0.0, 1.0]]
        a_ge, b_ge = [], []
        if self.equality:
            a_eq.append(homogenized)
            b_eq.append(np.zeros(8))
        else:
            a_ge.append(homogenized)
            b_ge.append(np.zeros(8))

        return LpProblem(
            objective,
            a_eq=np.vstack(a_eq),
            b_eq=np.concatenate(b_eq),
            a_ge=np.vstack(a_ge) if a_ge else None,
            b_ge=np.concatenate(b_ge) if b_ge else None,
            maximize=maximize,
            variable_names=self.stratum_names() + ("t",),
        )

    def is_feasible(self, solver: SimplexSolver = DEFAULT_SOLVER) -> bool:
        return solver.feasible(self.linear_problem(np.zeros(NUM_STRATA)))

    def optimize_linear(
        self, objective: np.ndarray, direction: Direction, solver: SimplexSolver = DEFAULT_SOLVER
    ) -> LpSolution:
        solution = solver.solve(self.linear_problem(objective, direction.maximize))
        if solution.status is LpStatus.infeasible:
            raise InfeasibleDraw(
                f"No stratum vector satisfies the constraints (cells {self.cells.tolist()}, "
                f"assumptions '{self.assumptions.label.value}')."
            )
        return solution

    def optimize(
        self, target: Estimand, direction: Direction, solver: SimplexSolver = DEFAULT_SOLVER
    ) -> BoundResult:
        if target.is_linear:
            return BoundResult(self.optimize_linear(target.numerator, direction, solver).value)
        return self.optimize_fractional(target, direction, solver)

    def problem_for(
        self, target: Estimand, direction: Direction, solver: SimplexSolver = DEFAULT_SOLVER
    ) -> tuple[LpProblem, bool]:
        """The LP that bounds `target`, and whether its denominator can vanish.

        Linear estimands give `linear_problem`; fractional ones the Charnes-Cooper
        problem, flagged as degenerate when the denominator can fall to
        DENOMINATOR_FLOOR or below on the polytope.
        """
        if target.is_linear:
            return self.linear_problem(target.numerator, direction.maximize), False
        self.assumptions.check_estimand(target)
        smallest = self.optimize_linear(target.denominator, Direction.min, solver).value
        problem = self.charnes_cooper_problem(target.numerator, target.denominator, direction.maximize)
        return problem, smallest <= DENOMINATOR_FLOOR

    def optimize_fractional(
        self, target: Estimand, direction: Direction, solver: SimplexSolver = DEFAULT_SOLVER
    ) -> BoundResult:
        problem, degenerate = self.problem_for(target, direction, solver)
        vacuous = BoundResult(1.0 if direction.maximize else -1.0, degenerate=True)
        if degenerate:
            largest = self.optimize_linear(target.denominator, Direction.max, solver).value
            if largest <= DENOMINATOR_FLOOR:
                # denominator below the floor everywhere: only the vacuous range remains
                logger.debug(
                    f"Restricted region for '{target.kind.value}' is empty; reporting the vacuous bound."
                )
                return vacuous
        solution = solver.solve(problem)
        if solution.status is not LpStatus.optimal:
            if degenerate:
                logger.debug(
                    f"Charnes-Cooper problem for '{target.kind.value}' ended "
                    f"{solution.status.value}; reporting the vacuous bound."
                )
                return vacuous
            raise NumericalFailure(
                f"Charnes-Cooper problem for '{target.kind.value}' ended {solution.status.value} "
                f"although its denominator stays above {DENOMINATOR_FLOOR}."
            )
        return BoundResult(float(np.clip(solution.value, -1.0, 1.0)), degenerate)

    def recover_point(self, solution: LpSolution) -> np.ndarray:
        """p = y / t for a Charnes-Cooper solution, lifted to 16 strata."""
        assert solution.is_optimal, "Only optimal solutions carry a point."
        y, t = solution.point[:-1], solution.point[-1]
        return self.lift(y / t)


def feasible(draw: FiducialDraw, assumptions: AssumptionSet) -> bool:
    """Does some stratum vector satisfy the draw's inequalities?"""
    return StratumPolytope.from_draw(draw, assumptions).is_feasible()


def bound_linear(
    draw: FiducialDraw, target: Estimand, assumptions: AssumptionSet, direction: Direction
) -> float:
    """l*_j (MIN) or u*_j (MAX) of a linear estimand for one accepted draw.

    Raises:
        InfeasibleDraw: if the draw admits no stratum vector.
    """
    assert target.is_linear, f"'{target.kind.value}' is fractional; use bound_fractional."
    polytope = StratumPolytope.from_draw(draw, assumptions)
    return polytope.optimize_linear(target.numerator, direction).value


def bound_fractional(
    draw: FiducialDraw, target: Estimand, assumptions: AssumptionSet, direction: Direction
) -> BoundResult:
    """Ratio bound of a fractional estimand with a degeneracy flag.

    If the denominator can reach 0 on the draw's polytope, the optimum is taken
    over the part where the denominator is at least DENOMINATOR_FLOOR and the
    result is flagged as degenerate.
    """
    assert not target.is_linear, f"'{target.kind.value}' is linear; use bound_linear."
    polytope = StratumPolytope.from_draw(draw, assumptions)
    return polytope.optimize_fractional(target, direction, DEFAULT_SOLVER)


def bound(
    draw: FiducialDraw, target: Estimand, assumptions: AssumptionSet, direction: Direction
) -> BoundResult:
    if target.is_linear:
        return BoundResult(bound_linear(draw, target, assumptions, direction))
    return bound_fractional(draw, target, assumptions, direction)
