import json
from pathlib import Path

import pytest
from pytest_mock import MockerFixture

from fidbound.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_STALLED, EXIT_USER_ERROR, main
from fidbound.engine.fiducial_engine import analyze_estimands, dumps_document
from fidbound.errors import NumericalFailure
from fidbound.model.data import CountsTable, summarize
from fidbound.model.strata import assumption_set
from fidbound.simulation.coverage import COVERAGE_COLUMNS
from fidbound.simulation.scenarios import simulate

from .conftest import write_counts_csv


def run_cli(capsys: pytest.CaptureFixture, *args: str) -> tuple[int, str, str]:
    code = main(list(args))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_bounds(capsys, tmp_path: Path, vitamin_a_counts: CountsTable):
    path = write_counts_csv(tmp_path, vitamin_a_counts)
    code, out, _ = run_cli(capsys, "bounds", "--input", str(path))
    assert code == EXIT_OK
    document = json.loads(out)
    assert document["feasible"] is True
    assert document["lower"] == pytest.approx(-0.1946, abs=5e-4)
    assert document["upper"] == pytest.approx(0.0054, abs=5e-4)


def test_bounds_outside_feasible_set(capsys, tmp_path: Path, infeasible_counts: CountsTable):
    path = write_counts_csv(tmp_path, infeasible_counts)
    code, out, err = run_cli(capsys, "bounds", "--input", str(path))
    assert code == EXIT_OK
    assert json.loads(out)["feasible"] is False
    assert err.count("incompatible with the 'core' assumptions") == 1


def test_analyze_is_deterministic(capsys, tmp_path: Path, always_feasible_counts: CountsTable):
    path = write_counts_csv(tmp_path, always_feasible_counts)
    args = ("analyze", "--input", str(path), "--n-mcmc", "20", "--seed", "4", "--workers", "1")
    first = run_cli(capsys, *args)
    second = run_cli(capsys, *args)
    assert first[0] == second[0] == EXIT_OK
    assert first[1] == second[1]
    document = json.loads(first[1])
    assert document["accepted"] == document["attempts"] == 20
    assert document["seed"] == 4


def test_several_estimands_and_samples(capsys, tmp_path: Path, always_feasible_counts: CountsTable):
    path = write_counts_csv(tmp_path, always_feasible_counts)
    samples = tmp_path / "samples.csv"
    code, out, _ = run_cli(
        capsys, "analyze", "--input", str(path), "--estimand", "ate", "--estimand", "cace",
        "--n-mcmc", "5", "--workers", "1", "--samples", str(samples),
    )
    assert code == EXIT_OK
    assert set(json.loads(out)["results"]) == {"ate", "cace"}
    lines = (tmp_path / "samples_cace.csv").read_text().splitlines()
    assert lines[0] == "j,l,u,degenerate"
    assert len(lines) == 6


def test_stalled_sampler_exit_code(capsys, tmp_path: Path, infeasible_counts: CountsTable):
    path = write_counts_csv(tmp_path, infeasible_counts)
    code, out, err = run_cli(
        capsys, "analyze", "--input", str(path), "--n-mcmc", "5", "--max-attempts", "50",
        "--workers", "1",
    )
    assert code == EXIT_STALLED
    assert out == ""
    assert "attempts=50 accepted=0 requested=5" in err


def test_numerical_failure_exit_code(
    capsys, mocker: MockerFixture, tmp_path: Path, vitamin_a_counts: CountsTable
):
    mocker.patch("fidbound.cli.analyze_estimands", side_effect=NumericalFailure("singular basis"))
    path = write_counts_csv(tmp_path, vitamin_a_counts)
    code, _, err = run_cli(capsys, "analyze", "--input", str(path), "--workers", "1")
    assert code == EXIT_NUMERICAL
    assert "singular basis" in err


@pytest.mark.parametrize(
    ["content", "extra"],
    [
        ("z,a,y\n0,0,0\n1,5,1\n", ()),
        ("z,a,y\n0,0,0\n1,1,1\n", ("--estimand", "att")),
        ("z,a,y\n0,0,0\n1,1,1\n", ("--assumptions", "exclusion")),
        ("z,a,y\n0,0,0\n1,1,1\n", ("--level", "1.5")),
        ("z,a,y\n0,0,0\n1,1,1\n", ("--prior", "1,x")),
    ],
    ids=["malformed-row", "unknown-estimand", "unknown-assumptions", "bad-level", "bad-prior"],
)
def test_user_errors(capsys, tmp_path: Path, content: str, extra: tuple[str, ...]):
    path = tmp_path / "records.csv"
    path.write_text(content)
    code, out, err = run_cli(
        capsys, "analyze", "--input", str(path), "--n-mcmc", "5", "--workers", "1", *extra
    )
    assert code == EXIT_USER_ERROR
    assert out == ""
    assert err


def test_simulate_then_analyze(capsys, tmp_path: Path):
    counts_path = tmp_path / "simulated.csv"
    code, _, _ = run_cli(
        capsys, "simulate", "--scenario", "2", "--n", "200", "--seed", "7", "--counts",
        "--output", str(counts_path),
    )
    assert code == EXIT_OK
    code, out, _ = run_cli(
        capsys, "analyze", "--input", str(counts_path), "--n-mcmc", "15", "--seed", "2",
        "--workers", "1",
    )
    assert code == EXIT_OK

    counts = summarize(simulate(2, 200, seed=7))
    expected = analyze_estimands(counts, ["ate"], assumption_set("core"), 15, seed=2)["ate"]
    assert out == dumps_document(expected.to_document())


def test_simulate_records_to_stdout(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--n", "10", "--seed", "1")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "z,a,y"
    assert len(lines) == 11


def test_diagnose(capsys, tmp_path: Path, always_feasible_counts: CountsTable):
    path = write_counts_csv(tmp_path, always_feasible_counts)
    code, out, _ = run_cli(
        capsys, "diagnose", "--input", str(path), "--n-proposals", "30", "--workers", "1"
    )
    assert code == EXIT_OK
    document = json.loads(out)
    assert document["acceptance_rate"] == 1.0
    assert document["q_hat_feasible"] is True


def test_lp_dump(capsys, tmp_path: Path, vitamin_a_counts: CountsTable):
    path = write_counts_csv(tmp_path, vitamin_a_counts)
    lp_path = tmp_path / "ate_max.lp"
    code, out, _ = run_cli(
        capsys, "lp-dump", "--input", str(path), "--direction", "max", "--output", str(lp_path), "--check",
    )
    assert code == EXIT_OK
    assert "Subject To" in lp_path.read_text()
    document = json.loads(out)
    assert document["simplex"]["status"] == "OPTIMAL"
    assert document["cbc"]["status"] == "Optimal"
    assert document["cbc"]["value"] == pytest.approx(document["simplex"]["value"], abs=1e-6)


def test_lp_dump_with_config(capsys, tmp_path: Path, vitamin_a_counts: CountsTable):
    path = write_counts_csv(tmp_path, vitamin_a_counts)
    config = tmp_path / "lp.conf"
    config.write_text("estimand = cace\ndirection = max\nassumptions = monotonicity\n")
    lp_path = tmp_path / "cace_max.lp"
    code, out, _ = run_cli(
        capsys, "lp-dump", "--input", str(path), "--config", str(config), "--output", str(lp_path),
        "--check",
    )
    assert code == EXIT_OK
    document = json.loads(out)
    assert document["problem"] == "cace_max"
    assert document["simplex"]["status"] == "OPTIMAL"
    assert "t" in lp_path.read_text()


@pytest.mark.parametrize(
    "content", ["estimand = ate, cace\n", "direction = up\n"], ids=["two-estimands", "bad-direction"]
)
def test_lp_dump_config_errors(capsys, tmp_path: Path, vitamin_a_counts: CountsTable, content: str):
    path = write_counts_csv(tmp_path, vitamin_a_counts)
    config = tmp_path / "lp.conf"
    config.write_text(content)
    code, out, err = run_cli(
        capsys, "lp-dump", "--input", str(path), "--config", str(config),
        "--output", str(tmp_path / "out.lp"),
    )
    assert code == EXIT_USER_ERROR
    assert out == ""
    assert err


def test_coverage_with_config(capsys, tmp_path: Path):
    config = tmp_path / "coverage.conf"
    config.write_text("scenario = 2\nn_list = 60\nreplications = 2\nn_mcmc = 5\nlevel = 1\n")
    csv_path = tmp_path / "coverage.csv"
    code, out, _ = run_cli(
        capsys, "coverage", "--config", str(config), "--workers", "1", "--output", str(csv_path)
    )
    assert code == EXIT_OK
    assert out.splitlines()[0].split() == COVERAGE_COLUMNS
    lines = csv_path.read_text().splitlines()
    assert lines[0] == ",".join(COVERAGE_COLUMNS)
    assert lines[1].startswith("2,lower,fiducial,60,2,0,0.0,0.0,")


def test_seed_from_environment(
    capsys, monkeypatch: pytest.MonkeyPatch, tmp_path: Path, always_feasible_counts: CountsTable
):
    monkeypatch.setenv("FIDBOUND_SEED", "13")
    path = write_counts_csv(tmp_path, always_feasible_counts)
    code, out, _ = run_cli(capsys, "analyze", "--input", str(path), "--n-mcmc", "3", "--workers", "1")
    assert code == EXIT_OK
    assert json.loads(out)["seed"] == 13
