import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcpo.data import CountStatistics, TransitionDataset, count_statistics
from bcpo.errors import ValidationError
from bcpo.posterior import (DirichletPrior, fit_posterior, reward_bonus,
                            sample_transition_model, transition_bonus)


def counts_from_nsas(n_sas, rewards=None):
    n_sas = np.asarray(n_sas, dtype=np.int64)
    n_sa = n_sas.sum(axis=2)
    r = np.zeros(n_sa.shape) if rewards is None else np.asarray(rewards, dtype=float)
    mean = np.divide(r, n_sa, out=np.zeros_like(r), where=n_sa > 0)
    return CountStatistics(n_sa, n_sas, r, mean, np.zeros(n_sas.shape[0], dtype=bool))


def test_symmetric_prior_no_data_is_uniform():
    c = counts_from_nsas(np.zeros((3, 2, 3)))
    m = fit_posterior(c, DirichletPrior(np.ones((3, 2, 3))), 0.1)
    np.testing.assert_allclose(m.posterior_mean, 1 / 3, atol=1e-15)
    np.testing.assert_allclose(m.empirical, 1 / 3, atol=1e-15)


def test_posterior_mean_direct_evaluation():
    n = np.zeros((2, 1, 2))
    n[0, 0] = (3, 1)
    m = fit_posterior(counts_from_nsas(n), DirichletPrior(np.ones((2, 1, 2))), 0.1)
    np.testing.assert_allclose(m.posterior_mean[0, 0], [4 / 6, 2 / 6], atol=1e-15)
    np.testing.assert_allclose(m.empirical[0, 0], [0.75, 0.25])
    np.testing.assert_allclose(m.posterior_mean.sum(axis=2), 1.0, atol=1e-12)


def test_reward_bonus_high_precision():
    mpmath.mp.dps = 30
    oracle = mpmath.sqrt(mpmath.log(mpmath.mpf(2 * 36 * 4) / mpmath.mpf("0.05")) / 2)
    value = reward_bonus(np.array([1]), 36, 4, 0.05)[0]
    assert value == pytest.approx(float(oracle), abs=1e-12)
    assert value == pytest.approx(2.080708, abs=1e-6)


def test_bonus_formulas_exact(rng):
    n_sas = rng.integers(0, 30, size=(4, 3, 4))
    c = counts_from_nsas(n_sas)
    prior = DirichletPrior(rng.uniform(0.1, 2.0, size=(4, 3, 4)))
    m = fit_posterior(c, prior, 0.2, reward_range=2.0)
    log_term = np.log(2 * 4 * 3 / 0.2)
    for s in range(4):
        for a in range(3):
            n = c.n_sa[s, a]
            assert m.b_r[s, a] == pytest.approx(2.0 * np.sqrt(log_term / (2 * max(1, n))),
                                                rel=1e-14)
            bp = min(1.0, np.sqrt(2 * log_term / (prior.alpha0[s, a].sum() + n)))
            assert m.b_P[s, a] == pytest.approx(bp, rel=1e-14)
            expected = (prior.alpha0[s, a] + n_sas[s, a]) / (prior.alpha0[s, a].sum() + n)
            np.testing.assert_allclose(m.posterior_mean[s, a], expected, rtol=1e-14)


def test_bonuses_shrink_with_counts():
    ns = np.array([0, 1, 10, 100, 10_000, 1_000_000])
    br = reward_bonus(ns, 36, 4, 0.05)
    bp = transition_bonus(ns, 1.0, 36, 4, 0.05)
    assert np.all(np.diff(br) <= 0) and np.all(np.diff(bp) <= 0)
    assert br[-1] < 0.003 and bp[-1] < 0.005
    assert np.all(bp <= 1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6), st.floats(1e-4, 0.99),
       st.floats(0.01, 10))
def test_bonus_monotone_property(n1, n2, delta, alpha_sum):
    lo, hi = sorted((n1, n2))
    assert reward_bonus(hi, 5, 2, delta) <= reward_bonus(lo, 5, 2, delta)
    assert transition_bonus(hi, alpha_sum, 5, 2, delta) <= transition_bonus(lo, alpha_sum, 5, 2, delta)


def test_posterior_mean_approaches_empirical():
    rng = np.random.default_rng(3)
    n_sas = rng.integers(1, 10, size=(3, 2, 3))
    prior = DirichletPrior.symmetric(3, 2, 3.0)
    small = fit_posterior(counts_from_nsas(n_sas), prior, 0.1)
    big = fit_posterior(counts_from_nsas(n_sas * 1000), prior, 0.1)
    gap_small = np.abs(small.posterior_mean - small.empirical).sum(axis=2).max()
    gap_big = np.abs(big.posterior_mean - big.empirical).sum(axis=2).max()
    assert gap_big < gap_small / 500
    np.testing.assert_allclose(big.empirical, small.empirical)


def test_validation_errors():
    c = counts_from_nsas(np.zeros((2, 1, 2)))
    for delta in (0.0, 1.0, -0.1):
        with pytest.raises(ValidationError):
            fit_posterior(c, None, delta)
    with pytest.raises(ValidationError):
        DirichletPrior(np.zeros((2, 1, 2)))


def test_sampling_concentration_limit():
    n = np.zeros((2, 1, 2))
    n[0, 0, 1] = 10**6
    m = fit_posterior(counts_from_nsas(n), None, 0.1)
    P = sample_transition_model(m, seed=0)
    assert abs(P[0, 0, 1] - 1.0) < 0.01
    np.testing.assert_allclose(P.sum(axis=2), 1.0, atol=1e-12)


def test_sampling_mean_matches_beta():
    # Dirichlet(1, 1) first coordinate is Beta(1, 1) with mean 1/2
    m = fit_posterior(counts_from_nsas(np.zeros((2, 1, 2))),
                      DirichletPrior(np.ones((2, 1, 2))), 0.1)
    draws = [sample_transition_model(m, seed)[0, 0, 0] for seed in range(10_000)]
    assert abs(np.mean(draws) - 0.5) <= 0.02


def test_sampling_deterministic():
    m = fit_posterior(counts_from_nsas(np.ones((3, 2, 3))), None, 0.1)
    np.testing.assert_array_equal(sample_transition_model(m, 99), sample_transition_model(m, 99))
    assert not np.array_equal(sample_transition_model(m, 1), sample_transition_model(m, 2))
    sample_transition_model(m, -1)


def test_statistical_calibration():
    # one-step pessimism fails in at most delta + 0.05 of resampled datasets
    from bcpo.theory import (calibration_instance, one_step_pessimism_holds,
                             random_dataset)
    from bcpo.mdp import exact_policy_evaluation
    mdp, behavior, target = calibration_instance()
    q = exact_policy_evaluation(mdp, target)
    rng = np.random.default_rng(101)
    fails = 0
    for _ in range(500):
        c = count_statistics(random_dataset(rng, mdp, behavior, 200))
        fails += not one_step_pessimism_holds(mdp, target, q, fit_posterior(c, delta=0.1), c)
    assert fails / 500 <= 0.1 + 0.05
