import numpy as np
import pytest

from linkcorr.gaussian import GaussianParams, sample_gaussian
from linkcorr.gibbs import (GibbsConfig, PosteriorChain, link_means, load_chain, posterior_mean_corr,
                            run_gibbs, save_chain)
from linkcorr.niw import default_prior
from linkcorr.observation import Observation

from conftest import random_spd
from helpers import random_observation


def _complete(X):
    n = X.shape[1]
    return [Observation(x, tuple((j,) for j in range(n)), n) for x in X]


@pytest.fixture(scope="module")
def small_problem():
    rng = np.random.default_rng(5)
    n = 4
    truth = GaussianParams(np.array([10.0, 12.0, 8.0, 15.0]), random_spd(rng, n) * 3)
    X = sample_gaussian(truth, rng, size=150)
    obs = [random_observation(rng, n, x=x, p_missing=0.2) for x in X[:100]] + _complete(X[100:])
    return truth, obs


def test_config_validation():
    with pytest.raises(ValueError):
        GibbsConfig(k1=-1)
    with pytest.raises(ValueError):
        GibbsConfig(k2=0)
    with pytest.raises(ValueError):
        GibbsConfig(thin=0)


def test_chain_shapes_and_validity(small_problem):
    _, obs = small_problem
    chain = run_gibbs(obs, config=GibbsConfig(k1=50, k2=60, seed=1, thin=2))
    assert len(chain) == 30
    assert chain.cov_samples.shape == (30, 4, 4)
    assert np.allclose(np.einsum("kii->ki", chain.corr_samples), 1.0)
    assert np.all(np.abs(chain.corr_samples) <= 1.0)
    for S in chain.cov_samples[::7]:
        assert np.all(np.linalg.eigvalsh(S) > 0)


def test_same_seed_is_bit_identical(small_problem):
    _, obs = small_problem
    cfg = GibbsConfig(k1=20, k2=20, seed=3)
    a, b = run_gibbs(obs, config=cfg), run_gibbs(obs, config=cfg)
    assert np.array_equal(a.cov_samples, b.cov_samples)
    assert np.array_equal(a.mean_samples, b.mean_samples)
    c = run_gibbs(obs, config=GibbsConfig(k1=20, k2=20, seed=3, workers=3))
    assert np.array_equal(a.cov_samples, c.cov_samples)


def test_recovers_truth_roughly(small_problem):
    truth, obs = small_problem
    chain = run_gibbs(obs, config=GibbsConfig(k1=300, k2=600, seed=2))
    est = chain.posterior_mean()
    se = np.sqrt(np.diag(truth.cov) / 100)
    assert np.all(np.abs(est.mean - truth.mean) < 5 * se)
    assert np.allclose(est.cov, truth.cov, rtol=0.5, atol=0.5 * np.abs(truth.cov).max())


def test_prior_object_untouched(small_problem):
    _, obs = small_problem
    prior = default_prior(4)
    before = prior.psi0.copy()
    chain = run_gibbs(obs, prior=prior, config=GibbsConfig(k1=5, k2=5))
    assert np.array_equal(prior.psi0, before)
    assert chain.prior is prior


def test_link_means_uses_singletons_then_ragged_share():
    obs = [Observation([10.0, 30.0], ((0,), (1, 2)), 3), Observation([12.0], ((0,),), 3)]
    means, singleton = link_means(obs, 3)
    assert means[0] == 11.0
    assert singleton.tolist() == [True, False, False]
    assert means[1] == pytest.approx(15.0) and means[2] == pytest.approx(15.0)


def test_save_load_round_trip(tmp_path, small_problem):
    _, obs = small_problem
    chain = run_gibbs(obs, config=GibbsConfig(k1=5, k2=8, seed=4))
    save_chain(chain, tmp_path / "c")
    back = load_chain(tmp_path / "c")
    assert np.array_equal(back.cov_samples, chain.cov_samples)
    assert np.array_equal(back.corr_samples, chain.corr_samples)
    assert back.config == chain.config
    assert np.array_equal(back.offset, chain.offset)
    pm = posterior_mean_corr(back)
    assert np.allclose(np.diag(pm), 1.0)


def test_mismatched_dimensions_rejected():
    with pytest.raises(ValueError):
        run_gibbs([Observation([1.0], ((0,),), 2), Observation([1.0], ((0,),), 3)],
                  config=GibbsConfig(k1=1, k2=1))


def test_single_retained_draw(small_problem):
    _, obs = small_problem
    chain = run_gibbs(obs, config=GibbsConfig(k1=0, k2=1, thin=1))
    assert len(chain) == 1 and chain.corr_samples.shape == (1, 4, 4)


def test_posterior_mean_corr_examples():
    C = np.array([[1.0, 0.3], [0.3, 1.0]])
    one = PosteriorChain(C[None], C[None], np.zeros((1, 2)))
    assert np.array_equal(posterior_mean_corr(one), C)
    neg = np.array([[1.0, -0.3], [-0.3, 1.0]])
    two = PosteriorChain(np.stack([C, neg]), np.stack([C, neg]), np.zeros((2, 2)))
    assert np.array_equal(posterior_mean_corr(two), np.eye(2))


def test_complete_data_mean_matches_conjugate_formula():
    rng = np.random.default_rng(8)
    n, m = 3, 25
    X = rng.normal([5.0, -2.0, 8.0], 1.5, (m, n))
    prior = default_prior(n)
    chain = run_gibbs(_complete(X), prior, GibbsConfig(k1=10, k2=4000, seed=8, center=False))
    expected = (prior.lambda0 * prior.mu0 + m * X.mean(0)) / (prior.lambda0 + m)
    se = chain.mean_samples.std(0) / np.sqrt(len(chain))
    assert np.all(np.abs(chain.mean_samples.mean(0) - expected) < 5 * se)
    # centred coordinates put the prior mean on the empirical link means instead
    centred = run_gibbs(_complete(X), prior, GibbsConfig(k1=10, k2=4000, seed=8))
    se = centred.mean_samples.std(0) / np.sqrt(len(centred))
    assert np.all(np.abs(centred.mean_samples.mean(0) - X.mean(0)) < 5 * se)


@pytest.mark.slow
def test_benchmark_correlation_within_tolerance_after_thresholding():
    from linkcorr.analytics import chain_decisions, threshold_display, threshold_truth
    from linkcorr.synthetic import benchmark_dataset
    ds = benchmark_dataset(0)
    chain = run_gibbs(ds.observations, config=GibbsConfig(k1=10000, k2=5000, seed=0))
    shown = threshold_display(posterior_mean_corr(chain), chain_decisions(chain.corr_samples))
    err = np.abs(shown - threshold_truth(ds.corr))
    assert err.max() <= 0.12, f"largest entrywise error {err.max():.3f}"
