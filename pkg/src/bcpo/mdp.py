"""Exact finite-MDP machinery.

Everything here is computed from the ground-truth model and serves as the
oracle that the data-driven estimators are checked against.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError

PROB_TOL = 1e-10
VALUE_TOL = 1e-8

# Above this many state-action pairs evaluation switches to value iteration.
_LINEAR_SOLVE_LIMIT = 10_000


def _check_stochastic(arr, name, tol=1e-12):
    if np.any(~np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    if np.any(arr < 0):
        raise ValidationError(f"{name} has negative entries")
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise ValidationError(
            f"{name} rows must sum to 1 (max error {np.max(np.abs(sums - 1.0)):.3g})")


@dataclass(frozen=True)
class TabularMDP:
    """Finite discounted MDP with absorbing zero-reward terminal states.

    ``transition[s, a, s']`` is P(s' | s, a); ``mean_reward[s, a]`` is the
    expected one-step reward.
    """

    transition: np.ndarray
    mean_reward: np.ndarray
    discount: float
    initial_dist: np.ndarray
    terminal_mask: np.ndarray = None

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        r = np.asarray(self.mean_reward, dtype=float)
        rho = np.asarray(self.initial_dist, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValidationError(f"transition must have shape (S, A, S), got {P.shape}")
        n_s, n_a = P.shape[:2]
        if r.shape != (n_s, n_a):
            raise ValidationError(f"mean_reward must have shape {(n_s, n_a)}, got {r.shape}")
        if rho.shape != (n_s,):
            raise ValidationError(f"initial_dist must have shape ({n_s},)")
        if not 0.0 <= self.discount < 1.0:
            raise ValidationError(f"discount must lie in [0, 1), got {self.discount}")
        if self.terminal_mask is None:
            term = np.zeros(n_s, dtype=bool)
        else:
            term = np.asarray(self.terminal_mask, dtype=bool)
            if term.shape != (n_s,):
                raise ValidationError("terminal_mask must have one entry per state")
        _check_stochastic(P, "transition")
        _check_stochastic(rho, "initial_dist")
        if not np.all(np.isfinite(r)):
            raise ValidationError("mean_reward contains non-finite entries")
        for s in np.flatnonzero(term):
            if np.any(P[s, :, s] != 1.0) or np.any(r[s] != 0.0):
                raise ValidationError(f"terminal state {s} must be absorbing with zero reward")
            if rho[s] != 0.0:
                raise ValidationError(f"initial_dist puts mass on terminal state {s}")
        for name, value in (("transition", P), ("mean_reward", r),
                            ("initial_dist", rho), ("terminal_mask", term)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_states(self):
        return self.transition.shape[0]

    @property
    def n_actions(self):
        return self.transition.shape[1]


@dataclass(frozen=True)
class TabularPolicy:
    """Row-stochastic matrix ``probs[s, a] = pi(a | s)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 2:
            raise ValidationError("policy probs must be a 2-d (S, A) matrix")
        _check_stochastic(p, "policy")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions, n_actions):
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.size, n_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return cls(probs)

    @property
    def n_states(self):
        return self.probs.shape[0]

    @property
    def n_actions(self):
        return self.probs.shape[1]


@dataclass(frozen=True)
class QTable:
    values: np.ndarray

    def __post_init__(self):
        q = np.array(self.values, dtype=float)
        if q.ndim != 2:
            raise ValidationError("Q table must be 2-d (S, A)")
        if not np.all(np.isfinite(q)):
            raise NumericalError("Q table contains non-finite entries")
        q.setflags(write=False)
        object.__setattr__(self, "values", q)

    def state_values(self, policy):
        return np.einsum("sa,sa->s", policy.probs, self.values)


def _as_values(q):
    return q.values if isinstance(q, QTable) else np.asarray(q, dtype=float)


def _check_policy(mdp, policy):
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValidationError(
            f"policy shape {policy.probs.shape} does not match MDP "
            f"({mdp.n_states}, {mdp.n_actions})")


def policy_transition(mdp, policy):
    """State-to-state matrix P_pi[s, s'] = sum_a pi(a|s) P(s'|s,a)."""
    return np.einsum("sa,sat->st", policy.probs, mdp.transition)


def true_bellman_backup(mdp, policy, q):
    """One application of the true policy Bellman operator."""
    _check_policy(mdp, policy)
    values = _as_values(q)
    if not np.all(np.isfinite(values)):
        raise NumericalError("non-finite Q passed to Bellman backup")
    v = np.einsum("sa,sa->s", policy.probs, values)
    return QTable(mdp.mean_reward + mdp.discount * mdp.transition @ v)


def exact_policy_evaluation(mdp, policy, tol=VALUE_TOL):
    """Return Q^pi, the fixed point of the true Bellman operator.

    Solves (I - gamma P_pi) V = r_pi directly for small problems and falls
    back to value iteration otherwise.
    """
    _check_policy(mdp, policy)
    if tol <= 0:
        raise ValidationError("tol must be positive")
    gamma = mdp.discount
    if mdp.n_states * mdp.n_actions <= _LINEAR_SOLVE_LIMIT:
        # terminal values are exactly zero; solve over the live states only
        live = ~mdp.terminal_mask
        r_pi = np.einsum("sa,sa->s", policy.probs, mdp.mean_reward)[live]
        p_pi = policy_transition(mdp, policy)[np.ix_(live, live)]
        v = np.zeros(mdp.n_states)
        try:
            v[live] = np.linalg.solve(np.eye(p_pi.shape[0]) - gamma * p_pi, r_pi)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular evaluation system: {exc}") from exc
        q = mdp.mean_reward + gamma * mdp.transition @ v
    else:
        q = np.zeros((mdp.n_states, mdp.n_actions))
        # sup-norm contraction: stop once the a-posteriori bound is below tol
        while True:
            new = true_bellman_backup(mdp, policy, q).values
            gap = np.max(np.abs(new - q))
            q = new
            if gap * gamma / (1.0 - gamma) <= tol or gap == 0.0:
                break
    if not np.all(np.isfinite(q)):
        raise NumericalError("policy evaluation produced non-finite values")
    return QTable(q)


def discounted_occupancy(mdp, policy):
    """Normalized discounted visitation d^pi(s) and d^pi(s, a)."""
    _check_policy(mdp, policy)
    gamma = mdp.discount
    lhs = np.eye(mdp.n_states) - gamma * policy_transition(mdp, policy).T
    try:
        d_s = (1.0 - gamma) * np.linalg.solve(lhs, mdp.initial_dist)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular occupancy system: {exc}") from exc
    if not np.all(np.isfinite(d_s)):
        raise NumericalError("occupancy measure is not finite")
    # tiny negative round-off from the solve
    d_s = np.clip(d_s, 0.0, None)
    d_s = d_s / d_s.sum()
    return d_s, d_s[:, None] * policy.probs


def policy_return(mdp, policy):
    """J(pi) = E_{s0 ~ rho0, a ~ pi}[Q^pi(s0, a)]."""
    q = exact_policy_evaluation(mdp, policy)
    return float(mdp.initial_dist @ q.state_values(policy))


def occupancy_return(mdp, policy):
    """J(pi) through the occupancy measure; independent of policy_return."""
    _, d_sa = discounted_occupancy(mdp, policy)
    return float(np.sum(d_sa * mdp.mean_reward) / (1.0 - mdp.discount))


def performance_difference(mdp, pi_prime, pi):
    """Both sides of the performance difference identity.

    Returns ``(J(pi') - J(pi), E_{d^{pi'}}[A^pi] / (1 - gamma))``.
    """
    lhs = policy_return(mdp, pi_prime) - policy_return(mdp, pi)
    q = exact_policy_evaluation(mdp, pi).values
    adv = q - np.einsum("sa,sa->s", pi.probs, q)[:, None]
    _, d_sa = discounted_occupancy(mdp, pi_prime)
    rhs = float(np.sum(d_sa * adv) / (1.0 - mdp.discount))
    return lhs, rhs


def optimal_q(mdp, tol=1e-12, max_iters=100_000):
    """Optimal Q* by value iteration (used as an oracle for baselines)."""
    q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(max_iters):
        new = mdp.mean_reward + mdp.discount * mdp.transition @ q.max(axis=1)
        gap = np.max(np.abs(new - q))
        q = new
        if gap <= tol:
            break
    return QTable(q)


def random_mdp(rng, n_states, n_actions, discount=0.9, reward_low=0.0,
               reward_high=1.0, sparsity=0.0):
    """Random dense MDP for property tests.  ``rng`` is a numpy Generator."""
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    if sparsity > 0:
        mask = rng.random(P.shape) < sparsity
        # keep at least one successor per row
        mask[np.arange(n_states)[:, None], np.arange(n_actions)[None, :],
             np.argmax(P, axis=-1)] = False
        P = np.where(mask, 0.0, P)
        P /= P.sum(axis=-1, keepdims=True)
    r = rng.uniform(reward_low, reward_high, size=(n_states, n_actions))
    rho = rng.dirichlet(np.ones(n_states))
    return TabularMDP(P, r, discount, rho)


def random_policy(rng, n_states, n_actions, concentration=1.0):
    return TabularPolicy(rng.dirichlet(np.full(n_actions, concentration), size=n_states))
