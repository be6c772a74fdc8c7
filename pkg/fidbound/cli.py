from __future__ import annotations

import sys
from collections.abc import Sequence
from pathlib import Path

import click
from loguru import logger

from fidbound.config import RunConfig, load_config, parse_float_list, parse_int_list
from fidbound.engine.diagnostics import diagnose as run_diagnose
from fidbound.engine.fiducial_engine import (
    AnalysisResult,
    analyze_estimands,
    dumps_document,
    write_samples,
)
from fidbound.engine.sampler import RngStream, propose
from fidbound.errors import (
    AcceptanceStalled,
    AllDrawsInfeasible,
    DataError,
    FidboundError,
    InfeasibleAtPlugIn,
    InfeasibleDraw,
    InvalidConfig,
    NumericalFailure,
)
from fidbound.model.data import CountsTable, load_counts, summarize, write_counts, write_records
from fidbound.model.draws import FiducialDraw
from fidbound.model.strata import assumption_set, estimand
from fidbound.optim.bounds import Direction, StratumPolytope
from fidbound.optim.export import cross_solve, write_problem
from fidbound.optim.simplex import DEFAULT_SOLVER
from fidbound.oracle.exact import plug_in_bounds
from fidbound.simulation.coverage import (
    PRIORS,
    Method,
    bayesian_comparator,
    coverage_experiment,
    format_table,
    write_coverage,
)
from fidbound.simulation.scenarios import simulate as simulate_records

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_STALLED = 2
EXIT_NUMERICAL = 3

input_option = click.option(
    "--input",
    "input_path",
    type=click.Path(exists=True, dir_okay=False, allow_dash=True),
    required=True,
    help="Records CSV (z,a,y) or counts CSV (z,a,y,count); '-' reads stdin.",
)
output_option = click.option(
    "--output", type=Path, default=None, help="Write the document here instead of stdout."
)
config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None, help="key = value file; explicit flags override its values.",
)
seed_option = click.option(
    "--seed", type=int, default=None, envvar="FIDBOUND_SEED", show_envvar=True,
    help="Base seed (default 0).",
)
workers_option = click.option(
    "--workers", type=int, default=None, help="Worker processes (default: all cores; 1 runs in-process)."
)
assumptions_option = click.option(
    "--assumptions", type=str, default=None, help="core, monotonicity or new-drug (default core)."
)


def _list_option(parser):
    def callback(ctx: click.Context, param: click.Parameter, value: str | None):
        if value is None:
            return None
        try:
            return parser(value)
        except (ValueError, ZeroDivisionError):
            raise click.BadParameter(f"cannot parse {value!r} as a comma-separated list") from None

    return callback


def _config(subcommand: str, config_path: Path | None, **flags) -> RunConfig:
    file_values = load_config(config_path) if config_path is not None else {}
    config = RunConfig.from_sources(subcommand, file_values, flags)
    logger.info(f"Run configuration: {config}")
    return config


def _load(input_path: str) -> CountsTable:
    if input_path == "-":
        return load_counts(sys.stdin)
    return load_counts(Path(input_path))


def _emit(text: str, output: Path | None):
    if output is None:
        click.echo(text, nl=False)
    else:
        output.write_text(text)
        logger.info(f"Wrote {output}")


def _render(result: AnalysisResult) -> str:
    return (
        f"{result.estimand} under {result.assumptions} ({result.method}, level {result.level})\n"
        f"  accepted {result.accepted}/{result.attempts} "
        f"(acceptance rate {result.acceptance_rate:.4f})\n"
        f"  lower bound {result.lower_point:.4f}  CI ({result.lower_ci.low:.4f}, {result.lower_ci.high:.4f})\n"
        f"  upper bound {result.upper_point:.4f}  CI ({result.upper_ci.low:.4f}, {result.upper_ci.high:.4f})\n"
        f"  degenerate fraction {result.degenerate_fraction:.4f}\n"
    )


@click.group(help="Fiducial bounds for causal effects in binary instrumental-variable models.")
@click.option(
    "--log-level",
    type=click.Choice(["TRACE", "DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default="WARNING",
    help="Log messages at or above this level go to stderr.",
)
def cli(log_level: str):
    logger.remove()
    logger.add(sys.stderr, level=log_level.upper())


@cli.command()
@input_option
@click.option("--estimand", "estimands", type=str, multiple=True, help="Repeatable (default ate).")
@assumptions_option
@click.option("--n-mcmc", type=int, default=None, help="Accepted draws (default 1000).")
@seed_option
@click.option("--level", type=float, default=None, help="Interval level in (0, 1] (default 0.95).")
@click.option("--max-attempts", type=int, default=None, help="Attempt cap (default 1000 * n-mcmc).")
@click.option(
    "--method", type=click.Choice(["fiducial", "bayes", "bayes1", "bayes2"]), default=None,
    help="bayes uses --prior, bayes1 and bayes2 the two preset priors (default fiducial).",
)
@click.option(
    "--prior", type=str, default=None, callback=_list_option(parse_float_list),
    help="8 comma-separated Dirichlet concentrations, e.g. 1/2,1/2,0,0,1,1,1,1.",
)
@workers_option
@output_option
@click.option("--samples", "samples_path", type=Path, default=None, help="Also write j,l,u,degenerate CSV.")
@click.option("--table", is_flag=True, default=False, help="Human-readable summary instead of JSON.")
@config_option
def analyze(
    input_path: str,
    estimands: tuple[str, ...],
    assumptions: str | None,
    n_mcmc: int | None,
    seed: int | None,
    level: float | None,
    max_attempts: int | None,
    method: str | None,
    prior: list[float] | None,
    workers: int | None,
    output: Path | None,
    samples_path: Path | None,
    table: bool,
    config_path: Path | None,
):
    """Fiducial confidence intervals for the bounds of one or more estimands."""
    config = _config(
        "analyze",
        config_path,
        estimand=list(estimands) or None,
        assumptions=assumptions,
        n_mcmc=n_mcmc,
        seed=seed,
        level=level,
        max_attempts=max_attempts,
        method=method,
        prior=prior,
        workers=workers,
        output=output,
    )
    counts = _load(input_path)
    assumption = assumption_set(config.assumptions)

    if config.method == "fiducial":
        results = analyze_estimands(
            counts, config.estimand, assumption, config.n_mcmc, config.seed,
            config.level, config.max_attempts, config.resolved_workers,
        )
    else:
        preset = Method.bayes2 if config.method == "bayes2" else Method.bayes1
        prior_values = config.prior or list(PRIORS[preset])
        results = {}
        for kind in config.estimand:
            target = estimand(kind)
            results[target.kind.value] = bayesian_comparator(
                counts, prior_values, config.n_mcmc, config.seed, target, assumption,
                config.level, config.resolved_workers,
                method=config.method,
            )

    if samples_path is not None:
        for kind, result in results.items():
            path = samples_path
            if len(results) > 1:
                path = samples_path.with_name(f"{samples_path.stem}_{kind}{samples_path.suffix}")
            write_samples(result.samples, path)

    if table:
        _emit("".join(_render(r) for r in results.values()), config.output)
    elif len(results) == 1:
        _emit(dumps_document(next(iter(results.values())).to_document()), config.output)
    else:
        _emit(
            dumps_document({"results": {k: r.to_document() for k, r in results.items()}}),
            config.output,
        )


@cli.command()
@input_option
@click.option("--estimand", "estimands", type=str, multiple=True, help="Repeatable (default ate).")
@assumptions_option
@output_option
@config_option
def bounds(
    input_path: str,
    estimands: tuple[str, ...],
    assumptions: str | None,
    output: Path | None,
    config_path: Path | None,
):
    """Plug-in bounds at the observed proportions, without sampling."""
    config = _config(
        "bounds", config_path,
        estimand=list(estimands) or None, assumptions=assumptions, output=output,
    )
    counts = _load(input_path)
    assumption = assumption_set(config.assumptions)

    documents = {}
    for kind in config.estimand:
        target = estimand(kind)
        document = {"estimand": target.kind.value, "assumptions": assumption.label.value}
        try:
            lower, upper = plug_in_bounds(counts, target, assumption)
            document.update(feasible=True, lower=lower, upper=upper)
        except InfeasibleAtPlugIn:
            document.update(feasible=False, lower=None, upper=None)
        documents[target.kind.value] = document

    if len(documents) == 1:
        _emit(dumps_document(next(iter(documents.values()))), config.output)
    else:
        _emit(dumps_document({"results": documents}), config.output)


@cli.command()
@click.option("--scenario", type=click.IntRange(1, 2), default=None, help="1 or 2 (default 1).")
@click.option("--n", "n_records", type=click.IntRange(min=1), required=True, help="Number of records.")
@seed_option
@click.option("--counts", "as_counts", is_flag=True, default=False, help="Emit z,a,y,count instead of records.")
@output_option
@config_option
def simulate(
    scenario: int | None,
    n_records: int,
    seed: int | None,
    as_counts: bool,
    output: Path | None,
    config_path: Path | None,
):
    """Draw records from a simulation scenario as CSV."""
    config = _config("simulate", config_path, scenario=scenario, seed=seed, output=output)
    records = simulate_records(config.scenario, n_records, config.seed)
    target = config.output if config.output is not None else sys.stdout
    if as_counts:
        write_counts(summarize(records), target)
    else:
        write_records(records, target)


@cli.command()
@click.option("--scenario", type=click.IntRange(1, 2), default=None, help="1 or 2 (default 1).")
@click.option(
    "--n-list", type=str, default=None, callback=_list_option(parse_int_list),
    help="Comma-separated sample sizes (default 25,50,100).",
)
@click.option("--replications", type=int, default=None, help="Default 200.")
@click.option("--n-mcmc", type=int, default=None, help="Draws per replication (default 1000).")
@click.option("--level", type=float, default=None)
@click.option("--method", type=click.Choice([m.value for m in Method]), default=None)
@click.option("--estimand", "estimands", type=str, multiple=True, help="Default ate.")
@assumptions_option
@seed_option
@workers_option
@output_option
@config_option
def coverage(
    scenario: int | None,
    n_list: list[int] | None,
    replications: int | None,
    n_mcmc: int | None,
    level: float | None,
    method: str | None,
    estimands: tuple[str, ...],
    assumptions: str | None,
    seed: int | None,
    workers: int | None,
    output: Path | None,
    config_path: Path | None,
):
    """Error rates and widths of the bound intervals over simulated datasets.

    The aligned table goes to stdout; --output also writes it as CSV.
    """
    config = _config(
        "coverage",
        config_path,
        scenario=scenario,
        n_list=n_list,
        replications=replications,
        n_mcmc=n_mcmc,
        level=level,
        method=method,
        estimand=list(estimands) or None,
        assumptions=assumptions,
        seed=seed,
        workers=workers,
        output=output,
    )
    rows = []
    for kind in config.estimand:
        rows += coverage_experiment(
            config.scenario, config.n_list, config.replications, config.n_mcmc,
            config.level, config.method, kind, config.assumptions, config.seed,
            config.resolved_workers,
        )
    click.echo(format_table(rows))
    if config.output is not None:
        write_coverage(rows, config.output)


@cli.command()
@input_option
@assumptions_option
@click.option("--n-proposals", type=int, default=None, help="Proposals to test (default 1000).")
@seed_option
@workers_option
@output_option
@config_option
def diagnose(
    input_path: str,
    assumptions: str | None,
    n_proposals: int | None,
    seed: int | None,
    workers: int | None,
    output: Path | None,
    config_path: Path | None,
):
    """Acceptance-rate check of whether the data agree with the IV assumptions."""
    config = _config(
        "diagnose", config_path,
        assumptions=assumptions, n_proposals=n_proposals, seed=seed, workers=workers, output=output,
    )
    counts = _load(input_path)
    report = run_diagnose(
        counts, assumption_set(config.assumptions), config.n_proposals, config.seed,
        config.resolved_workers,
    )
    _emit(dumps_document(report.to_document()), config.output)


@cli.command("lp-dump")
@input_option
@click.option("--estimand", "estimand_kind", type=str, default=None, help="Default ate.")
@assumptions_option
@click.option("--direction", type=click.Choice(["min", "max"]), default=None, help="Default min.")
@click.option("--draw", "draw_kind", type=click.Choice(["empirical", "sampled"]), default="empirical")
@click.option("--iteration", type=click.IntRange(min=0), default=0, help="Stream index of a sampled draw.")
@seed_option
@click.option("--output", type=Path, required=True, help="Destination of the LP text.")
@click.option("--check", is_flag=True, default=False, help="Also solve with CBC and compare optima.")
@config_option
def lp_dump(
    input_path: str,
    estimand_kind: str | None,
    assumptions: str | None,
    direction: str | None,
    draw_kind: str,
    iteration: int,
    seed: int | None,
    output: Path,
    check: bool,
    config_path: Path | None,
):
    """Write one bound LP in CPLEX LP text for external cross-checking."""
    config = _config(
        "lp-dump", config_path,
        estimand=[estimand_kind] if estimand_kind else None, assumptions=assumptions,
        direction=direction, seed=seed, output=output,
    )
    if len(config.estimand) != 1:
        raise InvalidConfig(f"lp-dump writes one LP; got estimands {config.estimand}.")
    counts = _load(input_path)
    assumption = assumption_set(config.assumptions)
    target = estimand(config.estimand[0])
    if draw_kind == "empirical":
        draw = FiducialDraw.empirical(counts)
    else:
        draw = propose(counts, RngStream(config.seed, iteration))

    polytope = StratumPolytope.from_draw(draw, assumption)
    problem, degenerate = polytope.problem_for(target, Direction(config.direction))
    name = f"{target.kind.value}_{config.direction}"
    write_problem(problem, config.output, name=name)

    if check:
        solution = DEFAULT_SOLVER.solve(problem)
        status, value = cross_solve(problem, name=name)
        document = {
            "problem": name,
            "degenerate": degenerate,
            "simplex": {"status": solution.status.value,
                        "value": solution.value if solution.is_optimal else None},
            "cbc": {"status": status, "value": value},
        }
        click.echo(dumps_document(document), nl=False)


def main(argv: Sequence[str] | None = None) -> int:
    """Run the CLI and map outcomes to exit codes.

    0 success, 1 user error, 2 stalled or empty sampling, 3 numerical failure.
    """
    try:
        code = cli.main(args=list(argv) if argv is not None else None,
                        prog_name="fidbound", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted.", err=True)
        return EXIT_USER_ERROR
    except click.ClickException as e:
        e.show()
        return EXIT_USER_ERROR
    except AcceptanceStalled as e:
        click.echo(
            f"Error: {e}\n"
            f"attempts={e.attempts} accepted={e.accepted} requested={e.requested} "
            f"acceptance_rate={e.acceptance_rate:.6g}",
            err=True,
        )
        return EXIT_STALLED
    except AllDrawsInfeasible as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_STALLED
    except NumericalFailure as e:
        click.echo(f"Numerical failure: {e}", err=True)
        return EXIT_NUMERICAL
    except (DataError, InfeasibleDraw) as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_USER_ERROR
    except FidboundError as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_USER_ERROR
    return code if isinstance(code, int) else EXIT_OK


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
