"""Dense two-phase primal simplex for the small stratum-polytope LPs.

Problems are stated as

    min/max  c . x
    s.t.     A_eq x  = b_eq
             A_ge x >= b_ge
             x >= 0

and brought to standard form by one surplus column per `>=` row. Phase 1
adds one artificial column per row (equality rows included; rows are never
split into pairs of inequalities). Pivoting follows Bland's rule: the entering
column is the lowest-index column with a negative reduced cost, the leaving
row is the min-ratio row whose basic variable has the lowest index. Given the
same problem, the pivot path is therefore always the same.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from loguru import logger

from fidbound.errors import NumericalFailure

FEASIBILITY_TOLERANCE = 1e-8
OPTIMALITY_TOLERANCE = 1e-9
PIVOT_TOLERANCE = 1e-9
MIN_PIVOT = 1e-11
MAX_CONDITION = 1e13
REFACTOR_INTERVAL = 32
MAX_PIVOTS = 10_000


class LpStatus(Enum):
    optimal = "OPTIMAL"
    infeasible = "INFEASIBLE"
    unbounded = "UNBOUNDED"


def _matrix(values, num_columns: int) -> np.ndarray:
    if values is None:
        return np.zeros((0, num_columns))
    return np.array(values, dtype=float).reshape(-1, num_columns)


def _vector(values) -> np.ndarray:
    if values is None:
        return np.zeros(0)
    return np.array(values, dtype=float).reshape(-1)


@dataclass(frozen=True, eq=False)
class LpProblem:
    objective: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ge: np.ndarray | None = None
    b_ge: np.ndarray | None = None
    maximize: bool = False
    variable_names: tuple[str, ...] | None = None

    def __post_init__(self):
        objective = _vector(self.objective)
        n = objective.size
        a_eq, b_eq = _matrix(self.a_eq, n), _vector(self.b_eq)
        a_ge, b_ge = _matrix(self.a_ge, n), _vector(self.b_ge)

        assert n > 0, "An LP needs at least one variable."
        assert a_eq.shape[0] == b_eq.size, (
            f"Equality rows ({a_eq.shape[0]}) and right-hand sides ({b_eq.size}) differ."
        )
        assert a_ge.shape[0] == b_ge.size, (
            f"Inequality rows ({a_ge.shape[0]}) and right-hand sides ({b_ge.size}) differ."
        )
        assert self.variable_names is None or len(self.variable_names) == n, (
            "One name per variable is required."
        )
        for name, array in (("objective", objective), ("A_eq", a_eq), ("b_eq", b_eq),
                            ("A_ge", a_ge), ("b_ge", b_ge)):
            assert np.all(np.isfinite(array)), f"{name} has non-finite entries."
            array.flags.writeable = False

        object.__setattr__(self, "objective", objective)
        object.__setattr__(self, "a_eq", a_eq)
        object.__setattr__(self, "b_eq", b_eq)
        object.__setattr__(self, "a_ge", a_ge)
        object.__setattr__(self, "b_ge", b_ge)

    @property
    def num_variables(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return self.b_eq.size + self.b_ge.size

    def names(self) -> tuple[str, ...]:
        return self.variable_names or tuple(f"x{i}" for i in range(self.num_variables))

    def max_violation(self, point: np.ndarray) -> float:
        violations = [0.0, float(np.max(-point, initial=0.0))]
        if self.b_eq.size:
            violations.append(float(np.max(np.abs(self.a_eq @ point - self.b_eq))))
        if self.b_ge.size:
            violations.append(float(np.max(self.b_ge - self.a_ge @ point, initial=0.0)))
        return max(violations)


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: LpStatus
    value: float
    point: np.ndarray | None = None
    pivots: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.optimal


@dataclass
class _Tableau:
    """Working state of one solve: standard-form data plus the tableau."""

    a: np.ndarray
    b: np.ndarray
    num_structural: int
    table: np.ndarray = field(init=False)
    basis: list[int] = field(init=False)
    pivots: int = 0

    def __post_init__(self):
        m, columns = self.a.shape
        self.basis = list(range(columns, columns + m))
        self.table = np.zeros((m + 1, columns + m + 1))
        self.table[:m, :columns] = self.a
        self.table[:m, columns : columns + m] = np.eye(m)
        self.table[:m, -1] = self.b

    @property
    def num_rows(self) -> int:
        return self.table.shape[0] - 1

    @property
    def num_columns(self) -> int:
        return self.table.shape[1] - 1

    def full_column(self, j: int) -> np.ndarray:
        m = self.num_rows
        if j < self.a.shape[1]:
            return self.a[:, j]
        unit = np.zeros(m)
        unit[j - self.a.shape[1]] = 1.0
        return unit

    def price(self, costs: np.ndarray):
        """Rewrite the objective row as reduced costs for the current basis."""
        m = self.num_rows
        row = np.zeros(self.table.shape[1])
        row[: costs.size] = costs
        basic_costs = np.array([costs[j] if j < costs.size else 0.0 for j in self.basis])
        self.table[m] = row - basic_costs @ self.table[:m]

    def pivot(self, r: int, j: int):
        pivot = self.table[r, j]
        if abs(pivot) < MIN_PIVOT:
            raise NumericalFailure(
                f"Pivot magnitude {abs(pivot):.3e} at row {r}, column {j} is below {MIN_PIVOT}."
            )
        self.table[r] /= pivot
        column = self.table[:, j].copy()
        column[r] = 0.0
        self.table -= np.outer(column, self.table[r])
        self.table[:, j] = 0.0
        self.table[r, j] = 1.0
        self.basis[r] = j
        self.pivots += 1

    def refactor(self, costs: np.ndarray):
        """Recompute the tableau from the original data and the current basis."""
        m = self.num_rows
        basis_matrix = np.column_stack([self.full_column(j) for j in self.basis])
        full = np.zeros((m, self.num_columns + 1))
        full[:, : self.a.shape[1]] = self.a
        num_artificial = self.num_columns - self.a.shape[1]
        full[:, self.a.shape[1] : self.num_columns] = np.eye(m)[:, :num_artificial]
        full[:, -1] = self.b
        if np.linalg.cond(basis_matrix) > MAX_CONDITION:
            raise NumericalFailure(
                f"Basis is ill-conditioned after {self.pivots} pivots "
                f"(condition number {np.linalg.cond(basis_matrix):.3e})."
            )
        try:
            self.table[:m] = np.linalg.solve(basis_matrix, full)
        except np.linalg.LinAlgError as e:
            raise NumericalFailure(f"Basis became singular during refactorization: {e}") from e
        rhs = self.table[:m, -1]
        rhs[(rhs < 0) & (rhs > -PIVOT_TOLERANCE)] = 0.0
        self.price(costs)

    def drop_columns_from(self, start: int):
        """Remove artificial columns once phase 1 has finished with them."""
        self.table = np.delete(self.table, np.s_[start : self.num_columns], axis=1)

    def drop_row(self, r: int):
        self.table = np.delete(self.table, r, axis=0)
        self.a = np.delete(self.a, r, axis=0)
        self.b = np.delete(self.b, r, axis=0)
        del self.basis[r]

    def primal(self) -> np.ndarray:
        x = np.zeros(self.a.shape[1])
        for r, j in enumerate(self.basis):
            if j < x.size:
                x[j] = max(self.table[r, -1], 0.0)
        return x


class SimplexSolver:
    """Deterministic dense simplex.

    The solver keeps no state between calls; every solve allocates its own
    tableau, so one instance can be shared by any number of callers.
    """

    def __init__(
        self,
        feasibility_tolerance: float = FEASIBILITY_TOLERANCE,
        optimality_tolerance: float = OPTIMALITY_TOLERANCE,
        pivot_tolerance: float = PIVOT_TOLERANCE,
        max_pivots: int = MAX_PIVOTS,
    ):
        self.feasibility_tolerance = feasibility_tolerance
        self.optimality_tolerance = optimality_tolerance
        self.pivot_tolerance = pivot_tolerance
        self.max_pivots = max_pivots

    def _standard_form(self, problem: LpProblem) -> _Tableau:
        n = problem.num_variables
        m_eq, m_ge = problem.b_eq.size, problem.b_ge.size
        a = np.zeros((m_eq + m_ge, n + m_ge))
        a[:m_eq, :n] = problem.a_eq
        a[m_eq:, :n] = problem.a_ge
        a[m_eq:, n:] = -np.eye(m_ge)
        b = np.concatenate([problem.b_eq, problem.b_ge])
        negative = b < 0
        a[negative] *= -1.0
        b[negative] *= -1.0
        return _Tableau(a, b, n)

    def _iterate(self, tableau: _Tableau, costs: np.ndarray, eligible: int) -> LpStatus:
        """Pivot until no column below `eligible` has a negative reduced cost."""
        m = tableau.num_rows
        since_refactor = 0
        while True:
            reduced = tableau.table[m, :eligible]
            candidates = np.flatnonzero(reduced < -self.optimality_tolerance)
            if candidates.size == 0:
                return LpStatus.optimal
            j = int(candidates[0])

            column = tableau.table[:m, j]
            rows = np.flatnonzero(column > self.pivot_tolerance)
            if rows.size == 0:
                return LpStatus.unbounded
            ratios = tableau.table[rows, -1] / column[rows]
            best = ratios.min()
            tied = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(min(tied, key=lambda i: tableau.basis[i]))

            tableau.pivot(r, j)
            since_refactor += 1
            if tableau.pivots > self.max_pivots:
                raise NumericalFailure(
                    f"Simplex exceeded {self.max_pivots} pivots; the instance looks ill-conditioned."
                )
            if since_refactor >= REFACTOR_INTERVAL:
                tableau.refactor(costs)
                since_refactor = 0

    def _phase_one(self, tableau: _Tableau) -> bool:
        columns = tableau.a.shape[1]
        m = tableau.num_rows
        costs = np.concatenate([np.zeros(columns), np.ones(m)])
        tableau.price(costs)
        self._iterate(tableau, costs, eligible=columns)
        infeasibility = -tableau.table[m, -1]
        logger.trace("Phase 1 finished after {} pivots, infeasibility {:.3e}", tableau.pivots, infeasibility)
        return infeasibility <= self.feasibility_tolerance

    def _expel_artificials(self, tableau: _Tableau):
        columns = tableau.a.shape[1]
        r = 0
        while r < tableau.num_rows:
            if tableau.basis[r] < columns:
                r += 1
                continue
            row = tableau.table[r, :columns]
            candidates = np.flatnonzero(np.abs(row) > self.pivot_tolerance)
            if candidates.size == 0:
                # linearly dependent constraint row
                tableau.drop_row(r)
                continue
            tableau.pivot(r, int(candidates[0]))
            r += 1
        tableau.drop_columns_from(columns)
        # residual phase-1 infeasibility is below tolerance; keep the basis primal feasible
        rhs = tableau.table[: tableau.num_rows, -1]
        rhs[rhs < 0] = 0.0

    def feasible(self, problem: LpProblem) -> bool:
        """Phase 1 only: does {A_eq x = b_eq, A_ge x >= b_ge, x >= 0} have a point?"""
        return self._phase_one(self._standard_form(problem))

    def solve(self, problem: LpProblem) -> LpSolution:
        tableau = self._standard_form(problem)
        if not self._phase_one(tableau):
            return LpSolution(LpStatus.infeasible, float("nan"), pivots=tableau.pivots)
        self._expel_artificials(tableau)

        columns = tableau.a.shape[1]
        sign = -1.0 if problem.maximize else 1.0
        costs = np.zeros(columns)
        costs[: problem.num_variables] = sign * problem.objective
        tableau.price(costs)

        status = self._iterate(tableau, costs, eligible=columns)
        if status is LpStatus.unbounded:
            value = float("inf") if problem.maximize else float("-inf")
            return LpSolution(status, value, pivots=tableau.pivots)

        tableau.refactor(costs)
        x = tableau.primal()[: problem.num_variables]
        violation = problem.max_violation(x) / max(1.0, float(np.max(np.abs(x), initial=0.0)))
        if violation > 10 * self.feasibility_tolerance:
            raise NumericalFailure(
                f"Optimal point violates the constraints by {violation:.3e}."
            )
        value = float(problem.objective @ x)
        x.flags.writeable = False
        return LpSolution(LpStatus.optimal, value, x, tableau.pivots)


DEFAULT_SOLVER = SimplexSolver()


def solve(problem: LpProblem) -> LpSolution:
    return DEFAULT_SOLVER.solve(problem)
