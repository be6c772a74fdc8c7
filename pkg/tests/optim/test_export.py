from pathlib import Path

import pytest

from fidbound.model.data import CountsTable, empirical_proportions
from fidbound.model.draws import FiducialDraw
from fidbound.model.strata import assumption_set, estimand
from fidbound.optim.bounds import Direction, StratumPolytope
from fidbound.optim.export import cross_solve, to_pulp, write_problem
from fidbound.optim.simplex import LpProblem, solve


def test_pulp_model_mirrors_the_problem():
    problem = LpProblem([1, 1], a_eq=[[1, 1]], b_eq=[1], a_ge=[[1, 0]], b_ge=[0.25])
    model, variables = to_pulp(problem)
    assert [v.name for v in variables] == ["x0", "x1"]
    assert set(model.constraints) == {"eq_0", "ge_0"}
    assert model.sense == 1  # pulp.LpMinimize


def test_write_problem(tmp_path: Path, vitamin_a_counts: CountsTable):
    polytope = StratumPolytope.from_draw(FiducialDraw.empirical(vitamin_a_counts), assumption_set("core"))
    problem, _ = polytope.problem_for(estimand("ate"), Direction.min)
    path = write_problem(problem, tmp_path / "ate_min.lp")
    text = path.read_text()
    assert text.index("Minimize") < text.index("Subject To")
    assert "eq_0" in text
    assert "ge_7" in text
    assert "p_01_01" in text


@pytest.mark.parametrize(
    ["kind", "direction"],
    [("ate", Direction.min), ("ate", Direction.max), ("cace", Direction.max)],
    ids=lambda value: str(getattr(value, "value", value)),
)
def test_cbc_agrees_with_the_simplex(vitamin_a_counts: CountsTable, kind: str, direction: Direction):
    polytope = StratumPolytope.from_observable(
        empirical_proportions(vitamin_a_counts), assumption_set("monotonicity")
    )
    problem, _ = polytope.problem_for(estimand(kind), direction)
    status, value = cross_solve(problem)
    assert status == "Optimal"
    assert value == pytest.approx(solve(problem).value, abs=1e-6)
