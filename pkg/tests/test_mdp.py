import numpy as np
import pytest

from bcpo.errors import ValidationError
from bcpo.mdp import (QTable, TabularMDP, TabularPolicy, discounted_occupancy,
                      exact_policy_evaluation, occupancy_return, performance_difference,
                      policy_return, random_mdp, random_policy, true_bellman_backup)


def self_loop(reward=1.0, gamma=0.5):
    return TabularMDP(np.ones((1, 1, 1)), np.array([[reward]]), gamma, np.array([1.0]))


def naive_backup(mdp, policy, q):
    n_s, n_a = q.shape
    out = np.zeros_like(q)
    for s in range(n_s):
        for a in range(n_a):
            total = mdp.mean_reward[s, a]
            for s2 in range(n_s):
                for a2 in range(n_a):
                    total += (mdp.discount * mdp.transition[s, a, s2]
                              * policy.probs[s2, a2] * q[s2, a2])
            out[s, a] = total
    return out


def test_geometric_series():
    mdp = self_loop()
    pi = TabularPolicy.uniform(1, 1)
    assert exact_policy_evaluation(mdp, pi).values[0, 0] == pytest.approx(2.0, abs=1e-12)
    assert policy_return(mdp, pi) == pytest.approx(2.0, abs=1e-12)


def test_zero_reward_gives_zero(rng):
    mdp = random_mdp(rng, 5, 3)
    mdp = TabularMDP(mdp.transition, np.zeros((5, 3)), 0.9, mdp.initial_dist)
    pi = random_policy(rng, 5, 3)
    assert np.all(exact_policy_evaluation(mdp, pi).values == 0.0)
    assert policy_return(mdp, pi) == 0.0


def test_gamma_zero_returns_reward(rng):
    mdp = random_mdp(rng, 4, 2, discount=0.0)
    q = exact_policy_evaluation(mdp, random_policy(rng, 4, 2))
    np.testing.assert_array_equal(q.values, mdp.mean_reward)


def test_evaluation_matches_linear_solve_oracle():
    rng = np.random.default_rng(42)
    mdp = random_mdp(rng, 4, 2, discount=0.9)
    pi = random_policy(rng, 4, 2)
    # oracle: solve for V on the full system, then Q = r + gamma P V
    P_pi = np.array([[sum(pi.probs[s, a] * mdp.transition[s, a, t] for a in range(2))
                      for t in range(4)] for s in range(4)])
    r_pi = np.array([pi.probs[s] @ mdp.mean_reward[s] for s in range(4)])
    v = np.linalg.solve(np.eye(4) - 0.9 * P_pi, r_pi)
    expected = mdp.mean_reward + 0.9 * np.einsum("sat,t->sa", mdp.transition, v)
    np.testing.assert_allclose(exact_policy_evaluation(mdp, pi).values, expected, atol=1e-8)


def test_evaluation_is_fixed_point(rng):
    mdp = random_mdp(rng, 6, 3, discount=0.95)
    pi = random_policy(rng, 6, 3)
    q = exact_policy_evaluation(mdp, pi)
    assert np.max(np.abs(true_bellman_backup(mdp, pi, q).values - q.values)) <= 1e-8


def test_backup_zero_q_and_constant_q(rng):
    mdp = random_mdp(rng, 5, 2, discount=0.97)
    pi = random_policy(rng, 5, 2)
    np.testing.assert_array_equal(true_bellman_backup(mdp, pi, np.zeros((5, 2))).values,
                                  mdp.mean_reward)
    out = true_bellman_backup(mdp, pi, np.full((5, 2), 3.0)).values
    np.testing.assert_allclose(out, mdp.mean_reward + 0.97 * 3.0, atol=1e-12)


def test_backup_matches_triple_loop(rng):
    mdp = random_mdp(rng, 4, 3, discount=0.8)
    pi = random_policy(rng, 4, 3)
    q = rng.normal(size=(4, 3))
    np.testing.assert_allclose(true_bellman_backup(mdp, pi, q).values,
                               naive_backup(mdp, pi, q), atol=1e-12)


def test_occupancy_two_state_cycle():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = P[1, 0, 0] = 1.0
    mdp = TabularMDP(P, np.zeros((2, 1)), 0.5, np.array([1.0, 0.0]))
    d_s, d_sa = discounted_occupancy(mdp, TabularPolicy.uniform(2, 1))
    # (1 - g) sum_{t even} g^t and (1 - g) sum_{t odd} g^t at g = 1/2
    even = 0.5 * sum(0.5 ** t for t in range(0, 200, 2))
    odd = 0.5 * sum(0.5 ** t for t in range(1, 200, 2))
    np.testing.assert_allclose(d_s, [even, odd], atol=1e-12)
    np.testing.assert_allclose(d_s, [2 / 3, 1 / 3], atol=1e-12)
    np.testing.assert_allclose(d_sa[:, 0], d_s)


def test_occupancy_absorbing_start():
    P = np.zeros((3, 2, 3))
    P[:, :, 0] = 1.0
    mdp = TabularMDP(P, np.zeros((3, 2)), 0.9, np.array([1.0, 0.0, 0.0]))
    d_s, _ = discounted_occupancy(mdp, TabularPolicy.uniform(3, 2))
    np.testing.assert_allclose(d_s, [1.0, 0.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("seed", range(100))
def test_return_dual_forms_and_pdl_corpus(seed):
    rng = np.random.default_rng(1000 + seed)
    n_s, n_a = int(rng.integers(1, 9)), int(rng.integers(1, 5))
    mdp = random_mdp(rng, n_s, n_a, discount=float(rng.uniform(0, 0.99)), reward_low=-1)
    pi, pi2 = random_policy(rng, n_s, n_a), random_policy(rng, n_s, n_a)
    d_s, d_sa = discounted_occupancy(mdp, pi)
    assert abs(d_s.sum() - 1) <= 1e-10 and abs(d_sa.sum() - 1) <= 1e-10
    assert policy_return(mdp, pi) == pytest.approx(occupancy_return(mdp, pi), abs=1e-8)
    lhs, rhs = performance_difference(mdp, pi2, pi)
    assert abs(lhs - rhs) <= 1e-8


def test_pdl_identical_policies(rng):
    mdp = random_mdp(rng, 4, 2)
    pi = random_policy(rng, 4, 2)
    lhs, rhs = performance_difference(mdp, pi, pi)
    assert lhs == 0.0
    assert abs(rhs) <= 1e-12


def test_pdl_greedy_improvement(rng):
    mdp = random_mdp(rng, 6, 3, discount=0.9)
    pi = random_policy(rng, 6, 3)
    q = exact_policy_evaluation(mdp, pi).values
    greedy = TabularPolicy.deterministic(q.argmax(axis=1), 3)
    lhs, rhs = performance_difference(mdp, greedy, pi)
    assert rhs >= 0
    assert lhs == pytest.approx(rhs, abs=1e-8)


def test_terminal_states_have_zero_value():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 1] = 1.0
    mdp = TabularMDP(P, np.array([[1.0], [0.0]]), 0.9, np.array([1.0, 0.0]),
                     np.array([False, True]))
    q = exact_policy_evaluation(mdp, TabularPolicy.uniform(2, 1)).values
    assert q[1, 0] == 0.0
    assert q[0, 0] == 1.0


def test_validation():
    with pytest.raises(ValidationError):
        TabularMDP(np.full((1, 1, 1), 0.5), np.zeros((1, 1)), 0.9, np.ones(1))
    with pytest.raises(ValidationError):
        TabularMDP(np.ones((1, 1, 1)), np.zeros((1, 1)), 1.0, np.ones(1))
    with pytest.raises(ValidationError):
        TabularPolicy(np.array([[0.7, 0.7]]))
    with pytest.raises(ValidationError):
        # terminal state must be absorbing with zero reward
        TabularMDP(np.ones((1, 1, 1)), np.ones((1, 1)), 0.9, np.zeros(1) + 1, np.array([True]))
