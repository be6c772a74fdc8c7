"""Exact reference computations.

Everything here runs in `fractions.Fraction` arithmetic, so feasibility is
decided without tolerances. Small instances are solved by enumerating every
basis; larger members of the stratum-polytope family go through an exact
simplex with Bland's rule. Both return the exact optimum.

`plug_in_bounds` is the float-kernel map g(q_hat) over the equality polytope
G p = q_hat, and `monotone_cace_closed_form` the Wald-type ratio that point
identifies the complier effect under monotonicity.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from loguru import logger

from fidbound.errors import InfeasibleAtPlugIn, InfeasibleDraw, InstanceTooLarge, ZeroComplianceMass
from fidbound.model.data import CountsTable, empirical_proportions
from fidbound.model.draws import FiducialDraw
from fidbound.model.strata import NUM_STRATA, AssumptionSet, Estimand, ObservableDist
from fidbound.optim.bounds import DENOMINATOR_FLOOR, ORDER_TOLERANCE, Direction, StratumPolytope
from fidbound.optim.simplex import LpProblem, LpStatus

MAX_VARIABLES = 24
MAX_ROWS = 14
ENUMERATION_LIMIT = 20_000


@dataclass(frozen=True)
class RationalVector(Sequence):
    values: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(Fraction(v) for v in self.values))

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, index):
        return self.values[index]

    def dot(self, other: Sequence) -> Fraction:
        return sum((v * Fraction(w) for v, w in zip(self.values, other)), Fraction(0))

    def to_numpy(self) -> np.ndarray:
        return np.array([float(v) for v in self.values])

    @staticmethod
    def from_floats(values: Sequence[float] | np.ndarray) -> RationalVector:
        """Exact binary value of each float; no rounding happens."""
        return RationalVector(tuple(Fraction(float(v)) for v in values))


@dataclass(frozen=True)
class ExactProblem:
    """An LpProblem with rational data."""

    objective: tuple[Fraction, ...]
    a_eq: tuple[tuple[Fraction, ...], ...]
    b_eq: tuple[Fraction, ...]
    a_ge: tuple[tuple[Fraction, ...], ...]
    b_ge: tuple[Fraction, ...]
    maximize: bool = False

    @property
    def num_variables(self) -> int:
        return len(self.objective)

    @property
    def num_rows(self) -> int:
        return len(self.b_eq) + len(self.b_ge)

    @staticmethod
    def from_problem(problem: LpProblem) -> ExactProblem:
        def rows(matrix: np.ndarray) -> tuple[tuple[Fraction, ...], ...]:
            return tuple(tuple(Fraction(float(v)) for v in row) for row in matrix)

        return ExactProblem(
            tuple(Fraction(float(v)) for v in problem.objective),
            rows(problem.a_eq),
            tuple(Fraction(float(v)) for v in problem.b_eq),
            rows(problem.a_ge),
            tuple(Fraction(float(v)) for v in problem.b_ge),
            problem.maximize,
        )

    def with_rhs(
        self, b_eq: Sequence[Fraction] | None = None, b_ge: Sequence[Fraction] | None = None
    ) -> ExactProblem:
        return ExactProblem(
            self.objective,
            self.a_eq,
            tuple(Fraction(v) for v in b_eq) if b_eq is not None else self.b_eq,
            self.a_ge,
            tuple(Fraction(v) for v in b_ge) if b_ge is not None else self.b_ge,
            self.maximize,
        )


@dataclass(frozen=True)
class ExactSolution:
    status: LpStatus
    value: Fraction | None = None
    point: RationalVector | None = None
    method: str = "enumeration"

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.optimal


def _row_reduce(
    a: list[list[Fraction]], b: list[Fraction]
) -> tuple[list[list[Fraction]], list[Fraction]] | None:
    """Reduced row echelon form of [a | b] with zero rows removed.

    Returns None if the system is inconsistent.
    """
    a = [row[:] for row in a]
    b = b[:]
    m = len(a)
    n = len(a[0]) if a else 0
    rank = 0
    for j in range(n):
        pivot = next((i for i in range(rank, m) if a[i][j] != 0), None)
        if pivot is None:
            continue
        a[rank], a[pivot] = a[pivot], a[rank]
        b[rank], b[pivot] = b[pivot], b[rank]
        factor = a[rank][j]
        a[rank] = [v / factor for v in a[rank]]
        b[rank] = b[rank] / factor
        for i in range(m):
            if i != rank and a[i][j] != 0:
                scale = a[i][j]
                a[i] = [v - scale * w for v, w in zip(a[i], a[rank])]
                b[i] = b[i] - scale * b[rank]
        rank += 1
        if rank == m:
            break
    if any(b[i] != 0 for i in range(rank, m)):
        return None
    return a[:rank], b[:rank]


def _solve_square(columns: list[list[Fraction]], b: list[Fraction]) -> list[Fraction] | None:
    """Solve B x = b where `columns` are the columns of B; None if B is singular."""
    m = len(b)
    rows = [[columns[j][i] for j in range(m)] + [b[i]] for i in range(m)]
    for j in range(m):
        pivot = next((i for i in range(j, m) if rows[i][j] != 0), None)
        if pivot is None:
            return None
        rows[j], rows[pivot] = rows[pivot], rows[j]
        factor = rows[j][j]
        rows[j] = [v / factor for v in rows[j]]
        for i in range(m):
            if i != j and rows[i][j] != 0:
                scale = rows[i][j]
                rows[i] = [v - scale * w for v, w in zip(rows[i], rows[j])]
    return [rows[i][m] for i in range(m)]


def _standard_form(problem: ExactProblem) -> tuple[list[list[Fraction]], list[Fraction], list[Fraction]]:
    """Rows A x = b with surplus columns, and costs for minimization."""
    n = problem.num_variables
    m_ge = len(problem.b_ge)
    zero, one = Fraction(0), Fraction(1)
    a = [list(row) + [zero] * m_ge for row in problem.a_eq]
    for i, row in enumerate(problem.a_ge):
        surplus = [zero] * m_ge
        surplus[i] = -one
        a.append(list(row) + surplus)
    b = list(problem.b_eq) + list(problem.b_ge)
    sign = -1 if problem.maximize else 1
    costs = [sign * c for c in problem.objective] + [zero] * m_ge
    return a, b, costs


def _enumerate(
    a: list[list[Fraction]], b: list[Fraction], costs: list[Fraction]
) -> tuple[Fraction, list[Fraction]] | None:
    m, columns = len(a), len(costs)
    column_data = [[a[i][j] for i in range(m)] for j in range(columns)]
    best: tuple[Fraction, list[Fraction]] | None = None
    for basis in itertools.combinations(range(columns), m):
        x_basis = _solve_square([column_data[j] for j in basis], b)
        if x_basis is None or any(v < 0 for v in x_basis):
            continue
        value = sum((costs[j] * v for j, v in zip(basis, x_basis)), Fraction(0))
        if best is None or value < best[0]:
            x = [Fraction(0)] * columns
            for j, v in zip(basis, x_basis):
                x[j] = v
            best = (value, x)
    return best


class _ExactTableau:
    """Full rational tableau for the two-phase Bland simplex."""

    def __init__(self, a: list[list[Fraction]], b: list[Fraction]):
        m, n = len(a), len(a[0])
        self.columns = n
        self.rows = []
        for i in range(m):
            row, rhs = a[i][:], b[i]
            if rhs < 0:
                row, rhs = [-v for v in row], -rhs
            unit = [Fraction(0)] * m
            unit[i] = Fraction(1)
            self.rows.append(row + unit + [rhs])
        self.basis = list(range(n, n + m))

    def reduced_costs(self, costs: list[Fraction]) -> list[Fraction]:
        width = len(self.rows[0]) - 1
        full = costs + [Fraction(0)] * (width - len(costs))
        return [
            full[j] - sum((full[k] * row[j] for k, row in zip(self.basis, self.rows)), Fraction(0))
            for j in range(width)
        ]

    def pivot(self, r: int, j: int):
        factor = self.rows[r][j]
        self.rows[r] = [v / factor for v in self.rows[r]]
        for i, row in enumerate(self.rows):
            if i != r and row[j] != 0:
                scale = row[j]
                self.rows[i] = [v - scale * w for v, w in zip(row, self.rows[r])]
        self.basis[r] = j

    def iterate(self, costs: list[Fraction], eligible: int) -> LpStatus:
        while True:
            reduced = self.reduced_costs(costs)
            entering = next((j for j in range(eligible) if reduced[j] < 0), None)
            if entering is None:
                return LpStatus.optimal
            candidates = [
                (row[-1] / row[entering], self.basis[i], i)
                for i, row in enumerate(self.rows)
                if row[entering] > 0
            ]
            if not candidates:
                return LpStatus.unbounded
            _, _, r = min(candidates)
            self.pivot(r, entering)

    def value(self, costs: list[Fraction]) -> Fraction:
        full = costs + [Fraction(0)] * (len(self.rows[0]) - 1 - len(costs))
        return sum((full[k] * row[-1] for k, row in zip(self.basis, self.rows)), Fraction(0))

    def primal(self) -> list[Fraction]:
        x = [Fraction(0)] * self.columns
        for k, row in zip(self.basis, self.rows):
            if k < self.columns:
                x[k] = row[-1]
        return x


def _simplex(
    a: list[list[Fraction]], b: list[Fraction], costs: list[Fraction]
) -> tuple[LpStatus, tuple[Fraction, list[Fraction]] | None]:
    tableau = _ExactTableau(a, b)
    n, m = tableau.columns, len(a)
    phase_one = [Fraction(0)] * n + [Fraction(1)] * m
    tableau.iterate(phase_one, eligible=n)
    if tableau.value(phase_one) > 0:
        return LpStatus.infeasible, None

    # rows have full rank, so every basic artificial can be pivoted out
    for r, k in enumerate(tableau.basis):
        if k >= n:
            j = next(j for j in range(n) if tableau.rows[r][j] != 0)
            tableau.pivot(r, j)
    tableau.rows = [row[:n] + row[-1:] for row in tableau.rows]

    status = tableau.iterate(costs, eligible=n)
    if status is LpStatus.unbounded:
        return status, None
    return status, (tableau.value(costs), tableau.primal())


def vertex_enumerate(
    problem: LpProblem | ExactProblem, enumeration_limit: int = ENUMERATION_LIMIT
) -> ExactSolution:
    """Exact optimum of a stratum-polytope LP.

    Instances with at most `enumeration_limit` candidate bases are solved by
    checking every basis; larger ones by an exact Bland simplex. The value is
    reported in the problem's own sense.

    Raises:
        InstanceTooLarge: beyond 24 variables or 14 constraint rows.
    """
    if isinstance(problem, LpProblem):
        problem = ExactProblem.from_problem(problem)
    if problem.num_variables > MAX_VARIABLES or problem.num_rows > MAX_ROWS:
        raise InstanceTooLarge(
            f"Exact oracle handles at most {MAX_VARIABLES} variables and {MAX_ROWS} rows, "
            f"got {problem.num_variables} and {problem.num_rows}."
        )

    a, b, costs = _standard_form(problem)
    sign = -1 if problem.maximize else 1
    n = problem.num_variables

    if not a:
        if any(c < 0 for c in costs):
            return ExactSolution(LpStatus.unbounded)
        return ExactSolution(LpStatus.optimal, Fraction(0), RationalVector((0,) * n))

    reduced = _row_reduce(a, b)
    if reduced is None:
        return ExactSolution(LpStatus.infeasible)
    a, b = reduced

    if not a:
        # every row was redundant; only x >= 0 remains
        if any(c < 0 for c in costs):
            return ExactSolution(LpStatus.unbounded)
        return ExactSolution(LpStatus.optimal, Fraction(0), RationalVector((0,) * n))

    if math.comb(len(costs), len(a)) <= enumeration_limit:
        best = _enumerate(a, b, costs)
        if best is None:
            return ExactSolution(LpStatus.infeasible)
        value, x = best
        return ExactSolution(LpStatus.optimal, sign * value, RationalVector(x[:n]))

    status, result = _simplex(a, b, costs)
    if result is None:
        return ExactSolution(status, method="simplex")
    value, x = result
    return ExactSolution(status, sign * value, RationalVector(x[:n]), method="simplex")


def exact_feasible(draw: FiducialDraw, assumptions: AssumptionSet) -> bool:
    """Rational-arithmetic version of the acceptance test."""
    problem = StratumPolytope.from_draw(draw, assumptions).linear_problem(np.zeros(NUM_STRATA))
    return vertex_enumerate(problem).status is not LpStatus.infeasible


def exact_cells(counts: CountsTable) -> tuple[Fraction, ...]:
    """q_hat as exact fractions n_zay / n_z."""
    counts.require_both_arms()
    n_z = counts.n_z
    return tuple(Fraction(int(c), n_z[i // 4]) for i, c in enumerate(counts.n.reshape(8)))


def observable_in_feasible_set(
    cells: CountsTable | Sequence[Fraction], assumptions: AssumptionSet
) -> bool:
    """Exactly decide whether some stratum vector reproduces q (q in F)."""
    if isinstance(cells, CountsTable):
        cells = exact_cells(cells)
    cells = tuple(Fraction(c) for c in cells)
    placeholder = StratumPolytope(np.zeros(8), assumptions, equality=True)
    problem = ExactProblem.from_problem(placeholder.linear_problem(np.zeros(NUM_STRATA)))
    problem = problem.with_rhs(b_eq=(Fraction(1), *cells))
    return vertex_enumerate(problem).status is not LpStatus.infeasible


def exact_bound(
    polytope: StratumPolytope,
    target: Estimand,
    direction: Direction,
    cells: Sequence[Fraction] | None = None,
) -> tuple[Fraction, bool]:
    """Exact optimum of the estimand over the polytope, with the degeneracy flag.

    `cells` replaces the polytope's float cells with exact values (used for
    q_hat = n / n_z). Fractional estimands follow the same floor rule as the
    float kernel.

    Raises:
        InfeasibleDraw: if the polytope is empty.
    """
    if cells is not None:
        cells = tuple(Fraction(c) for c in cells)

    def with_cells(problem: ExactProblem, homogenized: bool) -> ExactProblem:
        if cells is None:
            return problem
        if not homogenized:
            if polytope.equality:
                return problem.with_rhs(b_eq=(Fraction(1), *cells))
            return problem.with_rhs(b_ge=cells)
        # Charnes-Cooper rows G y - cells t carry -cells in the last column
        a_eq, a_ge = list(problem.a_eq), list(problem.a_ge)
        rows, start = (a_eq, 2) if polytope.equality else (a_ge, 0)
        for i, cell in enumerate(cells):
            rows[start + i] = rows[start + i][:-1] + (-cell,)
        return ExactProblem(
            problem.objective, tuple(a_eq), problem.b_eq, tuple(a_ge), problem.b_ge, problem.maximize
        )

    def linear(objective: np.ndarray, maximize: bool) -> Fraction:
        problem = ExactProblem.from_problem(polytope.linear_problem(objective, maximize))
        solution = vertex_enumerate(with_cells(problem, homogenized=False))
        if not solution.is_optimal:
            raise InfeasibleDraw("The polytope admits no stratum vector.")
        return solution.value

    if target.is_linear:
        return linear(target.numerator, direction.maximize), False

    polytope.assumptions.check_estimand(target)
    floor = Fraction(DENOMINATOR_FLOOR)
    vacuous = Fraction(1 if direction.maximize else -1), True
    degenerate = linear(target.denominator, maximize=False) <= floor
    if degenerate and linear(target.denominator, maximize=True) <= floor:
        return vacuous
    problem = polytope.charnes_cooper_problem(target.numerator, target.denominator, direction.maximize)
    solution = vertex_enumerate(with_cells(ExactProblem.from_problem(problem), homogenized=True))
    if not solution.is_optimal:
        return vacuous
    return min(max(solution.value, Fraction(-1)), Fraction(1)), degenerate


def plug_in_bounds(
    data: CountsTable | ObservableDist, target: Estimand, assumptions: AssumptionSet
) -> tuple[float, float]:
    """g(q_hat): bounds of the estimand over {p : G p = q_hat} under the assumptions.

    Raises:
        InfeasibleAtPlugIn: if q_hat lies outside the feasible set F.
    """
    q = empirical_proportions(data) if isinstance(data, CountsTable) else data
    assumptions.check_estimand(target)
    polytope = StratumPolytope.from_observable(q, assumptions)
    try:
        lower = polytope.optimize(target, Direction.min).value
        upper = polytope.optimize(target, Direction.max).value
    except InfeasibleDraw:
        logger.warning(
            f"The observed proportions are incompatible with the "
            f"'{assumptions.label.value}' assumptions."
        )
        raise InfeasibleAtPlugIn(
            f"q_hat = {q.flat.tolist()} admits no stratum vector under "
            f"'{assumptions.label.value}'; the IV assumptions are violated at the plug-in point."
        ) from None
    assert lower - upper <= ORDER_TOLERANCE, (
        f"Plug-in lower bound {lower} exceeds upper bound {upper} by more than {ORDER_TOLERANCE}."
    )
    if lower > upper:
        lower = upper = 0.5 * (lower + upper)
    return lower, upper


def exact_plug_in_bounds(
    counts: CountsTable, target: Estimand, assumptions: AssumptionSet
) -> tuple[Fraction, Fraction]:
    """Plug-in bounds in exact arithmetic with q_hat = n / n_z.

    Raises:
        InfeasibleAtPlugIn: if q_hat lies outside F.
    """
    cells = exact_cells(counts)
    polytope = StratumPolytope.from_observable(empirical_proportions(counts), assumptions)
    try:
        lower, _ = exact_bound(polytope, target, Direction.min, cells)
        upper, _ = exact_bound(polytope, target, Direction.max, cells)
    except InfeasibleDraw:
        raise InfeasibleAtPlugIn(
            f"Counts {counts.n.ravel().tolist()} are incompatible with "
            f"'{assumptions.label.value}'."
        ) from None
    return lower, upper


def monotone_cace_closed_form(q: ObservableDist) -> float:
    """Complier effect under monotonicity, identified by a Wald-type ratio.

    numerator   q000 - q110 - q100 + q010
    denominator (q000 + q110 + q001 + q111 - q100 - q010 - q101 - q011) / 2

    The denominator equals P(A=1 | Z=1) - P(A=1 | Z=0), the complier share.

    Raises:
        ZeroComplianceMass: if the instrument does not move treatment uptake.
    """
    numerator = q[0, 0, 0] - q[1, 1, 0] - q[1, 0, 0] + q[0, 1, 0]
    denominator = (
        q[0, 0, 0] + q[1, 1, 0] + q[0, 0, 1] + q[1, 1, 1]
        - q[1, 0, 0] - q[0, 1, 0] - q[1, 0, 1] - q[0, 1, 1]
    ) / 2.0
    if abs(denominator) <= 1e-12:
        raise ZeroComplianceMass(
            "P(A=1 | Z=1) equals P(A=1 | Z=0); the complier share is zero."
        )
    return numerator / denominator
