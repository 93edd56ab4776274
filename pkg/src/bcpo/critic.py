"""Pessimistic Bellman operator and its Picard fixed point."""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, NumericalError, ValidationError
from .mdp import QTable, TabularPolicy

# consecutive non-decreasing residuals tolerated when the contraction
# factor bound is >= 1
STALL_PATIENCE = 50


@dataclass(frozen=True)
class PessimisticCritic:
    q_lcb: QTable
    v_lcb: np.ndarray
    policy_ref: TabularPolicy
    iterations_used: int
    final_residual: float
    residuals: tuple = field(default=(), repr=False)


def _values(q):
    return q.values if isinstance(q, QTable) else np.asarray(q, dtype=float)


def lipschitz_bound(model, gamma, penalty_scale=1.0):
    """Sup-norm Lipschitz constant gamma * (1 + max b_P) of the operator."""
    return gamma * (1.0 + penalty_scale * float(np.max(model.b_P)))


def pessimistic_backup(q, policy, model, counts, gamma, penalty_scale=1.0):
    """Apply the pessimistic operator once.

    (T Q)(s,a) = r_hat - b_r + gamma * P_bar V - gamma * b_P * ||V||_inf,
    with V = sum_a pi(a|.) Q(., a).  Rows of states flagged terminal in
    ``counts`` are pinned to zero (absorbing, zero reward).
    ``penalty_scale`` multiplies b_P; 1.0 is the certified operator.
    """
    values = _values(q)
    if not np.all(np.isfinite(values)):
        raise NumericalError("non-finite Q passed to pessimistic backup")
    if values.shape != (model.n_states, model.n_actions) or policy.probs.shape != values.shape:
        raise ValidationError("Q, policy and model shapes disagree")
    term = counts.terminal_mask
    v = np.einsum("sa,sa->s", policy.probs, values)
    v = np.where(term, 0.0, v)
    v_sup = np.max(np.abs(v))
    out = (counts.reward_mean - model.b_r
           + gamma * (model.posterior_mean @ v)
           - gamma * penalty_scale * model.b_P * v_sup)
    out[term] = 0.0
    if not np.all(np.isfinite(out)):
        raise NumericalError("pessimistic backup overflowed")
    return QTable(out)


def solve_pessimistic_fixed_point(policy, model, counts, gamma, tol=1e-8,
                                  max_iters=5000, penalty_scale=1.0, q0=None):
    """Picard iteration Q_{k+1} = T Q_k from Q_0 = 0 (or ``q0``).

    Returns the first iterate whose one-step residual is within ``tol``.
    Raises ConvergenceError after ``max_iters`` or when the residuals stall
    while the Lipschitz bound is not below one.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    q = np.zeros((model.n_states, model.n_actions)) if q0 is None else _values(q0).copy()
    contractive = lipschitz_bound(model, gamma, penalty_scale) < 1.0
    residuals = []
    best = np.inf
    stall = 0
    for it in range(max_iters + 1):
        new = pessimistic_backup(q, policy, model, counts, gamma, penalty_scale).values
        res = float(np.max(np.abs(new - q)))
        residuals.append(res)
        if res <= tol:
            q_out = QTable(q)
            return PessimisticCritic(q_out, q_out.state_values(policy), policy, it, res,
                                     tuple(residuals))
        if not contractive:
            if res < best:
                best, stall = res, 0
            else:
                stall += 1
                if stall >= STALL_PATIENCE:
                    raise ConvergenceError(
                        f"pessimistic iteration stalled at residual {res:.3g} "
                        f"after {it} iterations", residual=res, iterations=it)
        q = new
    raise ConvergenceError(
        f"pessimistic iteration did not reach tol={tol:g} in {max_iters} iterations "
        f"(residual {residuals[-1]:.3g})", residual=residuals[-1], iterations=max_iters)


def pessimistic_return(critic, policy, initial_dist):
    """J_LCB(pi) = E_{s0 ~ rho0} sum_a pi(a|s0) Q_LCB(s0, a)."""
    v = np.einsum("sa,sa->s", policy.probs, critic.q_lcb.values)
    return float(np.asarray(initial_dist) @ v)


def pessimistic_advantage(critic, policy):
    q = critic.q_lcb.values
    return q - np.einsum("sa,sa->s", policy.probs, q)[:, None]
