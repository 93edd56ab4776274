import math

import numpy as np
import pytest

from bcpo.data import count_statistics
from bcpo.errors import InfeasibleTrustRegionError, ValidationError
from bcpo.mdp import QTable, TabularPolicy, random_mdp, random_policy
from bcpo.policy import (BcpoConfig, bcpo_optimize, enforce_trust_region, expected_kl,
                         kl_divergence, mirror_descent_step, per_state_objective,
                         shift_certificate)
from bcpo.posterior import fit_posterior
from bcpo.theory import random_dataset


def small_problem(seed=0, n_s=5, n_a=3, gamma=0.5, n=1500):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, n_s, n_a, discount=gamma)
    counts = count_statistics(random_dataset(rng, mdp, random_policy(rng, n_s, n_a), n))
    return mdp, counts, fit_posterior(counts, delta=0.1)


def test_kl_cases():
    p = np.array([0.2, 0.3, 0.5])
    assert kl_divergence(p, p) == 0.0
    assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)
    assert kl_divergence([0.5, 0.5], [1, 0]) == math.inf


def test_mirror_step_eta_zero_constant_q(rng):
    pb = random_policy(rng, 4, 3)
    q = np.repeat(rng.normal(size=(4, 1)), 3, axis=1)
    out = mirror_descent_step(q, pb, random_policy(rng, 4, 3), 0.7, 0.0)
    np.testing.assert_allclose(out.probs, pb.probs, atol=1e-14)


def test_mirror_step_geometric_mean(rng):
    pb, po = random_policy(rng, 4, 3), random_policy(rng, 4, 3)
    out = mirror_descent_step(np.zeros((4, 3)), pb, po, 2.0, 2.0)
    g = np.sqrt(pb.probs * po.probs)
    np.testing.assert_allclose(out.probs, g / g.sum(axis=1, keepdims=True), atol=1e-14)


def test_mirror_step_two_actions_grid_search():
    half = TabularPolicy(np.array([[0.5, 0.5]]))
    q = np.array([[1.0, 0.0]])
    out = mirror_descent_step(q, half, half, 1.0, 1.0).probs[0]
    np.testing.assert_allclose(out, [0.62246, 0.37754], atol=1e-5)
    grid = np.linspace(0, 1, 10_000)
    values = [per_state_objective(np.array([p, 1 - p]), q[0], half.probs[0], half.probs[0],
                                  1.0, 1.0) for p in grid]
    assert abs(grid[int(np.argmax(values))] - out[0]) <= 1e-3


def test_mirror_step_validation():
    u = TabularPolicy.uniform(1, 2)
    with pytest.raises(ValidationError):
        mirror_descent_step(np.zeros((1, 2)), u, u, 0.0, 1.0)
    with pytest.raises(ValidationError):
        mirror_descent_step(np.zeros((1, 2)), u, u, 1.0, -1.0)
    with pytest.raises(ValidationError):
        mirror_descent_step(np.zeros((1, 2)), TabularPolicy(np.array([[1.0, 0.0]])), u, 1.0, 1.0)


def test_trust_region_inactive(rng):
    q = QTable(rng.normal(size=(4, 3)))
    pb, po = random_policy(rng, 4, 3), random_policy(rng, 4, 3)
    pol, eta = enforce_trust_region(q, pb, po, np.full(4, 0.25), 0.5, 1e6)
    assert eta == 0.0
    np.testing.assert_array_equal(pol.probs, mirror_descent_step(q, pb, po, 0.5, 0.0).probs)


def test_trust_region_binding_and_monotone_trace(rng):
    q = QTable(5 * rng.normal(size=(6, 4)))
    pb, po = random_policy(rng, 6, 4), random_policy(rng, 6, 4)
    nu = rng.dirichlet(np.ones(6))
    pol, eta = enforce_trust_region(q, pb, po, nu, 0.1, 1e-8)
    assert expected_kl(nu, pol, po) <= 1e-8
    assert eta > 0
    pol, eta, trace = enforce_trust_region(q, pb, po, nu, 0.1, 0.05, return_trace=True)
    assert expected_kl(nu, pol, po) <= 0.05
    ordered = sorted(trace)
    kls = [kl for _, kl in ordered]
    assert all(b <= a + 1e-12 for a, b in zip(kls, kls[1:]))


def test_trust_region_bad_bracket(rng):
    u = TabularPolicy.uniform(2, 2)
    with pytest.raises(ValidationError):
        enforce_trust_region(np.zeros((2, 2)), u, u, np.full(2, 0.5), 1.0, 0.1, (1.0, 0.5, 1e-6))


def test_trust_region_infeasible():
    u = TabularPolicy.uniform(1, 2)
    q = QTable(np.array([[1e30, 0.0]]))
    with pytest.raises(InfeasibleTrustRegionError):
        enforce_trust_region(q, u, u, np.ones(1), 1.0, 1e-12)


def test_shift_certificate():
    assert shift_certificate(0.0, 0.0, 10.0, 0.9) == 0.0
    assert shift_certificate(0.02, 0.02, 10.0, 0.9) == pytest.approx(40.0, abs=1e-12)
    with pytest.raises(ValidationError):
        shift_certificate(-1.0, 0.0, 1.0, 0.9)


def test_config_validation():
    with pytest.raises(ValidationError):
        BcpoConfig(alpha=0.0)
    with pytest.raises(ValidationError):
        BcpoConfig(gamma=1.0)
    with pytest.raises(ValidationError):
        BcpoConfig(q_max_mode="largest")


def test_huge_alpha_stays_at_behavior():
    mdp, counts, model = small_problem()
    cfg = BcpoConfig(alpha=1e6, gamma=0.5, n_outer_iters=10)
    result = bcpo_optimize(counts, model, cfg, mdp.initial_dist)
    assert np.abs(result.policy.probs - result.behavior.probs).sum(axis=1).max() <= 1e-3


def test_logs_deterministic_and_invariants():
    mdp, counts, model = small_problem(seed=3)
    cfg = BcpoConfig(alpha=0.1, trust_region_delta=0.05, gamma=0.5, n_outer_iters=15)
    a = bcpo_optimize(counts, model, cfg, mdp.initial_dist, oracle_mdp=mdp)
    b = bcpo_optimize(counts, model, cfg, mdp.initial_dist, oracle_mdp=mdp)
    assert [r.as_row() for r in a.logs] == [r.as_row() for r in b.logs]
    np.testing.assert_array_equal(a.policy.probs, b.policy.probs)
    assert len(a.logs) >= 2
    for prev, cur in zip(a.logs, a.logs[1:]):
        # surrogate gain dominates the growth of the behavior KL term
        assert cur.surrogate_gain >= cfg.alpha * (cur.kl_to_behavior - prev.kl_to_behavior) - 1e-9
        assert 0.0 <= cur.kl_to_previous <= cfg.trust_region_delta + 1e-9
        assert cur.kl_to_behavior >= 0.0 and cur.eta >= 0.0
        assert cur.shift_bound >= 0.0
        assert np.isfinite(cur.j_true)


def test_keep_history_lengths():
    mdp, counts, model = small_problem(seed=4)
    cfg = BcpoConfig(gamma=0.5, n_outer_iters=5, trust_region_delta=0.01)
    result = bcpo_optimize(counts, model, cfg, mdp.initial_dist, keep_history=True)
    assert len(result.policies) == len(result.critics) == len(result.logs)
    assert math.isnan(result.logs[-1].j_true)
