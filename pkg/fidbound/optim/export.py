from __future__ import annotations

from pathlib import Path

import pulp
from loguru import logger

from fidbound.optim.simplex import LpProblem


def to_pulp(problem: LpProblem, name: str = "stratum_polytope") -> tuple[pulp.LpProblem, list[pulp.LpVariable]]:
    """Build the equivalent PuLP model of an LpProblem.

    Variable names follow `problem.names()`; all variables are continuous
    with lower bound 0.
    """
    sense = pulp.LpMaximize if problem.maximize else pulp.LpMinimize
    model = pulp.LpProblem(name, sense)
    variables = [
        pulp.LpVariable(var_name, lowBound=0, cat=pulp.LpContinuous)
        for var_name in problem.names()
    ]

    model += pulp.lpSum(
        float(c) * x for c, x in zip(problem.objective, variables) if c != 0.0
    ), "objective"
    for i, (row, rhs) in enumerate(zip(problem.a_eq, problem.b_eq)):
        model += (
            pulp.lpSum(float(a) * x for a, x in zip(row, variables) if a != 0.0) == float(rhs),
            f"eq_{i}",
        )
    for i, (row, rhs) in enumerate(zip(problem.a_ge, problem.b_ge)):
        model += (
            pulp.lpSum(float(a) * x for a, x in zip(row, variables) if a != 0.0) >= float(rhs),
            f"ge_{i}",
        )
    return model, variables


def write_problem(problem: LpProblem, path: Path, name: str = "stratum_polytope") -> Path:
    """Write the problem in CPLEX LP text: objective row first, then constraint rows."""
    model, _ = to_pulp(problem, name)
    model.writeLP(str(path))
    logger.debug(f"Wrote LP '{name}' with {problem.num_rows} rows to {path}")
    return path


def cross_solve(problem: LpProblem, name: str = "stratum_polytope") -> tuple[str, float | None]:
    """Solve the problem with CBC through PuLP for external cross-checking.

    Returns:
        A tuple of the PuLP status string and the optimal value
        (None unless the status is "Optimal").
    """
    model, _ = to_pulp(problem, name)
    model.solve(pulp.PULP_CBC_CMD(msg=False))
    status = pulp.LpStatus[model.status]
    if status != "Optimal":
        logger.warning(f"CBC did not find an optimal solution for '{name}': {status}")
        return status, None
    return status, float(pulp.value(model.objective) or 0.0)
