import numpy as np
import pytest

from fidbound.engine.sampler import RngStream, propose
from fidbound.errors import InfeasibleDraw
from fidbound.model.data import CountsTable, empirical_proportions
from fidbound.model.draws import FiducialDraw
from fidbound.model.strata import OBSERVABLE_MATRIX, EstimandKind, assumption_set, estimand
from fidbound.optim.bounds import (
    DENOMINATOR_FLOOR,
    ORDER_TOLERANCE,
    Direction,
    StratumPolytope,
    bound,
    bound_fractional,
    bound_linear,
    feasible,
)
from fidbound.optim.simplex import solve

from ..model.data_builder import StrataBuilder

empty_draw = FiducialDraw.from_cells([0.0] * 8)
# arm 0 puts 0.6 on Y_0 = 0, arm 1 puts 0.6 on Y_0 = 1
disjoint_draw = FiducialDraw.from_cells([0.6, 0, 0, 0, 0, 0.6, 0, 0])


def test_empty_draw_gives_vacuous_ate():
    assumptions = assumption_set("core")
    assert bound_linear(empty_draw, estimand("ate"), assumptions, Direction.min) == pytest.approx(-1.0)
    assert bound_linear(empty_draw, estimand("ate"), assumptions, Direction.max) == pytest.approx(1.0)


def test_empty_draw_cace_is_degenerate():
    assumptions = assumption_set("core")
    lower = bound_fractional(empty_draw, estimand("cace"), assumptions, Direction.min)
    upper = bound_fractional(empty_draw, estimand("cace"), assumptions, Direction.max)
    assert lower.degenerate and upper.degenerate
    assert lower.value == pytest.approx(-1.0)
    assert upper.value == pytest.approx(1.0)


def test_disjoint_draw_is_infeasible():
    assumptions = assumption_set("core")
    assert not feasible(disjoint_draw, assumptions)
    with pytest.raises(InfeasibleDraw):
        bound(disjoint_draw, estimand("ate"), assumptions, Direction.min)


def test_vitamin_a_plug_in_ate(vitamin_a_counts: CountsTable):
    polytope = StratumPolytope.from_observable(
        empirical_proportions(vitamin_a_counts), assumption_set("core")
    )
    assert polytope.optimize(estimand("ate"), Direction.min).value == pytest.approx(-0.1946, abs=5e-4)
    assert polytope.optimize(estimand("ate"), Direction.max).value == pytest.approx(0.0054, abs=5e-4)


@pytest.mark.parametrize("kind", ["ate", "cace", "never-taker-ace"], ids=lambda kind: kind)
def test_stronger_assumptions_narrow_the_bounds(kind: str):
    builder = StrataBuilder(seed=4)
    target = estimand(kind)
    for _ in range(10):
        q = builder.observable_with_compliers(assumption_set("monotonicity"))
        draw = FiducialDraw.from_cells(0.95 * q.flat)
        core = StratumPolytope.from_draw(draw, assumption_set("core"))
        monotone = StratumPolytope.from_draw(draw, assumption_set("monotonicity"))
        for direction, sign in ((Direction.min, 1), (Direction.max, -1)):
            loose = core.optimize(target, direction).value
            tight = monotone.optimize(target, direction).value
            assert sign * (tight - loose) >= -1e-8


def test_smaller_cells_widen_the_bounds():
    builder = StrataBuilder(seed=5)
    assumptions = assumption_set("core")
    target = estimand("ate")
    for _ in range(10):
        q = builder.observable()
        loose = StratumPolytope.from_draw(FiducialDraw.from_cells(0.9 * q.flat), assumptions)
        tight = StratumPolytope.from_draw(FiducialDraw.from_cells(0.95 * q.flat), assumptions)
        assert loose.optimize(target, Direction.min).value <= tight.optimize(target, Direction.min).value + 1e-9
        assert loose.optimize(target, Direction.max).value >= tight.optimize(target, Direction.max).value - 1e-9


def test_lower_bound_below_upper_bound():
    builder = StrataBuilder(seed=6)
    assumptions = assumption_set("core")
    for kind in ("ate", "cace", "always-taker-ace", "nudge"):
        target = estimand(kind)
        for _ in range(5):
            draw = FiducialDraw.from_cells(0.97 * builder.observable().flat)
            lower = bound(draw, target, assumptions, Direction.min)
            upper = bound(draw, target, assumptions, Direction.max)
            assert -1.0 <= lower.value <= upper.value + 1e-9 <= 1.0 + 1e-9


def test_charnes_cooper_point_attains_the_ratio():
    builder = StrataBuilder(seed=7)
    assumptions = assumption_set("monotonicity")
    target = estimand("cace")
    for _ in range(10):
        q = builder.observable_with_compliers(assumptions, min_complier_mass=0.2)
        polytope = StratumPolytope.from_draw(FiducialDraw.from_cells(0.99 * q.flat), assumptions)
        for direction in Direction:
            problem, degenerate = polytope.problem_for(target, direction)
            assert not degenerate
            solution = solve(problem)
            p = polytope.recover_point(solution)
            assert p.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(OBSERVABLE_MATRIX @ p >= polytope.cells - 1e-9)
            assert target.evaluate(p) == pytest.approx(solution.value, abs=1e-8)
            assert target.denominator @ p >= DENOMINATOR_FLOOR


def test_problem_shapes():
    polytope = StratumPolytope.from_draw(empty_draw, assumption_set("new-drug"))
    linear, _ = polytope.problem_for(estimand("ate"), Direction.max)
    assert linear.num_variables == 8
    assert linear.num_rows == 9
    fractional, degenerate = polytope.problem_for(estimand("cace"), Direction.max)
    assert fractional.num_variables == 9
    assert fractional.names()[-1] == "t"
    # the complier share can vanish; no extra row is needed for it
    assert degenerate and fractional.num_rows == 10


fractional_kinds = [kind.value for kind in EstimandKind if kind is not EstimandKind.ate]


@pytest.mark.parametrize("kind", fractional_kinds, ids=lambda kind: kind)
def test_fractional_bounds_on_small_count_draws(kind: str):
    assumptions = assumption_set("core")
    target = estimand(kind)
    builder = StrataBuilder(seed=3)
    degenerate = 0
    for j, counts in enumerate(builder.assorted_counts(60)):
        draw = propose(counts, RngStream(3, j))
        if not feasible(draw, assumptions):
            continue
        lower = bound_fractional(draw, target, assumptions, Direction.min)
        upper = bound_fractional(draw, target, assumptions, Direction.max)
        assert -1.0 <= lower.value <= upper.value + ORDER_TOLERANCE, j
        assert upper.value <= 1.0, j
        assert lower.degenerate == upper.degenerate, j
        degenerate += lower.degenerate
    if kind == "cace":
        assert degenerate > 0


def test_always_taker_bounds_when_the_class_can_vanish():
    counts = CountsTable.from_arms((3, 3, 3, 1), (2, 2, 6, 0))
    draw = propose(counts, RngStream(3, 13))
    assumptions = assumption_set("core")
    target = estimand("always-taker-ace")
    lower = bound_fractional(draw, target, assumptions, Direction.min)
    upper = bound_fractional(draw, target, assumptions, Direction.max)
    assert lower.degenerate and upper.degenerate
    assert -1.0 <= lower.value <= upper.value <= 1.0


def test_denominator_below_floor_everywhere_is_vacuous():
    # never-takers hold at least 1 - 1e-10, leaving compliers below the floor
    cells = np.zeros(8)
    cells[4] = 1.0 - 1e-10
    polytope = StratumPolytope(cells, assumption_set("new-drug"))
    lower = polytope.optimize(estimand("cace"), Direction.min)
    upper = polytope.optimize(estimand("cace"), Direction.max)
    assert lower.degenerate and upper.degenerate
    assert (lower.value, upper.value) == (-1.0, 1.0)
