import numpy as np
import pytest
from scipy import stats

from seqanchor.anchor_chain import (
    Anchor,
    ChainConfig,
    CoordinateStreams,
    mh_update,
    run_chain,
    sample_prior,
    write_chain_trace,
)
from seqanchor.errors import ConfigError, DimensionError
from seqanchor.objectives import GaussianPrior


class ScriptedStream:
    """Feeds fixed (z, u) pairs to mh_update."""

    def __init__(self, draws):
        self.draws = list(draws)

    def step_draws(self):
        z, u = self.draws.pop(0)
        return np.asarray(z, dtype=float), np.asarray(u, dtype=float)


def batch_means_se(x, batches=50):
    b = x[: len(x) // batches * batches].reshape(batches, -1).mean(axis=1)
    return b.std(ddof=1) / np.sqrt(batches)


@pytest.fixture(scope="module")
def long_chain():
    prior = GaussianPrior.isotropic(1)
    return run_chain(prior, 201_000, ChainConfig(0.1, seed=0))[1000:, 0]


def test_tiny_std_sample_hugs_mean(rng):
    prior = GaussianPrior(np.array([3.0, -2.0]), np.full(2, 1e-9))
    np.testing.assert_allclose(sample_prior(prior, rng), prior.mean, atol=1e-6)


def test_prior_sample_moments():
    prior = GaussianPrior.isotropic(100_000)
    s = sample_prior(prior, np.random.default_rng(7))
    assert abs(s.mean()) < 0.02
    assert abs(s.var() - 1) < 0.03


def test_prior_sample_deterministic():
    prior = GaussianPrior.isotropic(5)
    a = sample_prior(prior, CoordinateStreams(3, 5))
    b = sample_prior(prior, CoordinateStreams(3, 5))
    assert np.array_equal(a, b)


def test_move_towards_mode_always_accepted():
    prior = GaussianPrior.isotropic(1)
    anchor = Anchor(np.array([-5.0]), np.array([1.0]))
    cfg = ChainConfig(0.1)
    for z in (0.3, -1.2, 2.0):
        out = mh_update(prior, anchor, cfg, ScriptedStream([([z], [0.999999])]))
        assert out.theta[0] == pytest.approx(-5.0 + 0.1 * abs(z))
        assert out.direction[0] == 1.0


def test_scripted_accept_and_reject():
    prior = GaussianPrior.isotropic(2)
    anchor = Anchor(np.array([1.0, 1.0]), np.array([1.0, 1.0]))
    cfg = ChainConfig(1.0)
    # both propose y = 2: alpha = exp(-(4 - 1) / 2) ~ 0.2231
    alpha = np.exp(-1.5)
    out = mh_update(prior, anchor, cfg, ScriptedStream([([1.0, -1.0], [alpha - 1e-6, alpha + 1e-6])]))
    np.testing.assert_array_equal(out.theta, [2.0, 1.0])
    np.testing.assert_array_equal(out.direction, [1.0, -1.0])


def test_flip_iff_reject_on_random_chain():
    prior = GaussianPrior(np.array([0.0, 1.0, -2.0]), np.array([1.0, 0.5, 2.0]))
    streams = CoordinateStreams(11, 3)
    anchor = Anchor(sample_prior(prior, streams), streams.random_direction())
    cfg = ChainConfig(0.5)
    for _ in range(2000):
        new = mh_update(prior, anchor, cfg, streams)
        moved = new.theta != anchor.theta
        kept = new.direction == anchor.direction
        assert np.array_equal(moved, kept)
        anchor = new


def test_single_step_chain_is_prior_draw():
    prior = GaussianPrior(np.array([1.0, 2.0]), np.array([0.5, 3.0]))
    chain = run_chain(prior, 1, ChainConfig(seed=4))
    assert chain.shape == (1, 2)
    assert np.array_equal(chain[0], sample_prior(prior, CoordinateStreams(4, 2)))


def test_consecutive_steps_are_short():
    prior = GaussianPrior.isotropic(4)
    chain = run_chain(prior, 1000, ChainConfig(0.1, seed=2))
    assert np.all(np.abs(np.diff(chain, axis=0)).mean(axis=0) <= 2 * 0.1)


def test_lag_one_autocorrelation_high():
    chain = run_chain(GaussianPrior.isotropic(3), 5000, ChainConfig(0.1, seed=5))
    for j in range(3):
        assert np.corrcoef(chain[:-1, j], chain[1:, j])[0, 1] > 0.9


def test_stationarity_ks(long_chain):
    assert stats.kstest(long_chain, "norm").statistic < 0.01


def test_stationarity_mean_and_variance(long_chain):
    # standard error of the mean from batch means, since draws are autocorrelated
    assert abs(long_chain.mean()) < 3 * batch_means_se(long_chain)
    assert abs(long_chain.var() - 1.0) < 0.05


def test_determinism():
    prior = GaussianPrior.isotropic(3)
    a = run_chain(prior, 300, ChainConfig(0.1, seed=9))
    b = run_chain(prior, 300, ChainConfig(0.1, seed=9))
    c = run_chain(prior, 300, ChainConfig(0.1, seed=10))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_coordinates_do_not_interact():
    base = GaussianPrior(np.zeros(3), np.ones(3))
    edited = GaussianPrior(np.array([0.0, 4.0, 0.0]), np.array([1.0, 0.1, 1.0]))
    a = run_chain(base, 500, ChainConfig(0.1, seed=1))
    b = run_chain(edited, 500, ChainConfig(0.1, seed=1))
    assert np.array_equal(a[:, [0, 2]], b[:, [0, 2]])
    assert not np.array_equal(a[:, 1], b[:, 1])


def test_relative_and_absolute_steps():
    prior = GaussianPrior(np.zeros(2), np.array([1.0, 10.0]))
    np.testing.assert_allclose(ChainConfig(0.1).scales(prior), [0.1, 1.0])
    np.testing.assert_allclose(ChainConfig(0.1, relative=False).scales(prior), [0.1, 0.1])


def test_invalid_inputs():
    with pytest.raises(ConfigError):
        ChainConfig(0.0)
    with pytest.raises(ConfigError):
        Anchor(np.zeros(2), np.array([1.0, 0.5]))
    with pytest.raises(DimensionError):
        Anchor(np.zeros(2), np.ones(3))
    with pytest.raises(ConfigError):
        run_chain(GaussianPrior.isotropic(1), 0, ChainConfig())


def test_chain_trace_export(tmp_path):
    chain = run_chain(GaussianPrior.isotropic(2), 4, ChainConfig(seed=3))
    path = tmp_path / "chain.csv"
    write_chain_trace(path, chain)
    lines = path.read_text().splitlines()
    assert lines[0] == "step,theta_0,theta_1"
    back = np.loadtxt(path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(back[:, 0], np.arange(4))
    np.testing.assert_array_equal(back[:, 1:], chain)
