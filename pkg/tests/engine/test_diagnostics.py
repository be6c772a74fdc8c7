import pytest

from fidbound.engine.diagnostics import PlausibilityReport, diagnose
from fidbound.model.data import CountsTable
from fidbound.model.strata import assumption_set
from fidbound.simulation.scenarios import true_q

from ..model.data_builder import expected_counts


def test_compatible_data_accepts_everything(always_feasible_counts: CountsTable):
    report = diagnose(always_feasible_counts, assumption_set("core"), n_proposals=200, seed=0)
    assert report.accepted == report.attempts == 200
    assert report.acceptance_rate == 1.0
    assert report.rate_ci_low > 0.95
    assert report.rate_ci_high == pytest.approx(1.0)
    assert report.q_hat_feasible


def test_incompatible_data_rarely_accepts(infeasible_counts: CountsTable):
    report = diagnose(infeasible_counts, assumption_set("core"), n_proposals=200, seed=0)
    assert report.acceptance_rate < 0.1
    assert report.rate_ci_low <= report.acceptance_rate <= report.rate_ci_high
    assert not report.q_hat_feasible
    assert "core" in report.interpretation


def test_diagnose_is_deterministic(vitamin_a_counts: CountsTable):
    first = diagnose(vitamin_a_counts, assumption_set("monotonicity"), n_proposals=50, seed=8)
    second = diagnose(vitamin_a_counts, assumption_set("monotonicity"), n_proposals=50, seed=8)
    assert first == second
    document = first.to_document()
    assert set(document) == set(PlausibilityReport.__dataclass_fields__)
    assert document["assumptions"] == "monotonicity"


def test_rate_grows_with_n_inside_the_feasible_set():
    q = true_q(2)
    rates = [
        diagnose(expected_counts(q, n // 2), assumption_set("core"), n_proposals=400, seed=3).acceptance_rate
        for n in (50, 500, 5000)
    ]
    assert rates == sorted(rates)
    assert rates[-1] > 0.95


def test_rate_vanishes_outside_the_feasible_set():
    counts = CountsTable.from_arms((2500, 0, 0, 0), (0, 2500, 0, 0))
    report = diagnose(counts, assumption_set("core"), n_proposals=400, seed=3)
    assert report.acceptance_rate < 0.05
