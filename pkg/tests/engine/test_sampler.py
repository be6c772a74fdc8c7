import numpy as np
import pytest
from scipy import stats

from fidbound.engine.sampler import RngStream, derive_seed, dirichlet_draw, propose
from fidbound.errors import AllZeroAlpha
from fidbound.model.data import CountsTable


def test_single_component():
    assert dirichlet_draw([5.0], RngStream(0, 0)).tolist() == [1.0]


def test_zero_concentration_is_exact_zero():
    for stream_id in range(100):
        draw = dirichlet_draw([1.0, 0.0, 3.0], RngStream(0, stream_id))
        assert draw[1] == 0.0
        assert draw[0] > 0 and draw[2] > 0
        assert draw.sum() == pytest.approx(1.0, abs=1e-15)


def test_all_zero_alpha():
    with pytest.raises(AllZeroAlpha):
        dirichlet_draw([0.0, 0.0], RngStream(0, 0))


def test_dirichlet_mean():
    alpha = np.array([1.0, 2.0, 3.0, 4.0])
    generator = RngStream(123, 0).generator()
    draws = np.array([dirichlet_draw(alpha, generator) for _ in range(100_000)])
    expected = alpha / alpha.sum()
    # Var of component i is m_i (1 - m_i) / (sum(alpha) + 1)
    standard_error = np.sqrt(expected * (1 - expected) / (alpha.sum() + 1) / len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - expected) < 4 * standard_error)


def test_streams_are_reproducible_and_distinct():
    counts = CountsTable.from_arms((3, 4, 5, 6), (6, 5, 4, 3))
    first = propose(counts, RngStream(42, 7))
    again = propose(counts, RngStream(42, 7))
    assert np.array_equal(first.v, again.v)
    assert np.array_equal(first.slack, again.slack)

    other_attempt = propose(counts, RngStream(42, 7).next_attempt())
    other_stream = propose(counts, RngStream(42, 8))
    assert not np.array_equal(first.v, other_attempt.v)
    assert not np.array_equal(first.v, other_stream.v)


def test_derive_seed():
    assert derive_seed(0, 25, 3) == derive_seed(0, 25, 3)
    assert derive_seed(0, 25, 3) != derive_seed(0, 25, 4)
    assert derive_seed(0, 25, 3) != derive_seed(1, 25, 3)
    assert 0 <= derive_seed(5, 1) < 2**63


def test_proposal_respects_empty_cells():
    counts = CountsTable.from_arms((1, 0, 0, 0), (0, 2, 0, 3))
    for stream_id in range(50):
        draw = propose(counts, RngStream(0, stream_id))
        assert draw.v[0, 1:].tolist() == [0.0, 0.0, 0.0]
        assert draw.slack[0] + draw.v[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert draw.v[1, 0] == 0.0 and draw.v[1, 2] == 0.0
        for z in (0, 1):
            assert draw.slack[z] + draw.v[z].sum() == pytest.approx(1.0, abs=1e-12)


def test_slack_mean():
    counts = CountsTable.from_arms((10, 5, 3, 2), (1, 1, 1, 1))
    slacks = np.array([propose(counts, RngStream(9, j)).slack for j in range(20_000)])
    for z, n_z in enumerate(counts.n_z):
        # slack ~ Beta(1, n_z)
        mean = 1 / (n_z + 1)
        variance = n_z / ((n_z + 1) ** 2 * (n_z + 2))
        assert abs(slacks[:, z].mean() - mean) < 4 * np.sqrt(variance / len(slacks))


@pytest.mark.slow
def test_cell_marginal_is_beta():
    counts = CountsTable.from_arms((7, 2, 0, 11), (3, 3, 3, 3))
    draws = np.array([propose(counts, RngStream(2024, j)).v[0, 0] for j in range(100_000)])
    n_cell, n_z = 7, counts.n_z[0]
    result = stats.kstest(draws, stats.beta(n_cell, 1 + n_z - n_cell).cdf)
    assert result.pvalue > 0.01
