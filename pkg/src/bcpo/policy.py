"""KL-regularized mirror-descent policy improvement and the BCPO outer loop."""
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .critic import pessimistic_return, solve_pessimistic_fixed_point
from .data import behavior_cloning, state_marginal
from .errors import InfeasibleTrustRegionError, ValidationError
from .mdp import TabularPolicy, policy_return

logger = logging.getLogger(__name__)

POLICY_FLOOR = 1e-12
ETA_CAP = 1e12
LOG_COLUMNS = ("iter", "eta", "surrogate_gain", "kl_behavior", "kl_prev",
               "j_lcb", "j_true", "shift_bound")


def kl_divergence(p, q):
    """KL(p || q) for discrete distributions; ``math.inf`` if p is not << q."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValidationError("KL arguments must share a support")
    support = p > 0
    if np.any(q[support] <= 0):
        return math.inf
    return max(0.0, float(np.sum(p[support] * np.log(p[support] / q[support]))))


def kl_rows(P, Q):
    """Row-wise KL(P[s] || Q[s]); rows of Q must be strictly positive where P is."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * (np.log(P) - np.log(Q)), 0.0)
    return np.maximum(terms.sum(axis=1), 0.0)


def floor_policy(policy, floor=POLICY_FLOOR):
    """Mix every row with the uniform distribution at weight ``floor``."""
    probs = policy.probs if isinstance(policy, TabularPolicy) else np.asarray(policy)
    mixed = (1.0 - floor) * probs + floor / probs.shape[1]
    return TabularPolicy(mixed / mixed.sum(axis=1, keepdims=True))


def mirror_descent_logits(q_lcb, pi_b, pi_old, alpha, eta):
    """Unnormalized log-probabilities of the closed-form KL-regularized update."""
    q = q_lcb.values if hasattr(q_lcb, "values") else np.asarray(q_lcb, dtype=float)
    pb = pi_b.probs if isinstance(pi_b, TabularPolicy) else np.asarray(pi_b, dtype=float)
    po = pi_old.probs if isinstance(pi_old, TabularPolicy) else np.asarray(pi_old, dtype=float)
    if alpha <= 0 or eta < 0:
        raise ValidationError("need alpha > 0 and eta >= 0")
    if np.any(pb <= 0) or np.any(po <= 0):
        raise ValidationError("reference policies must be strictly positive")
    scale = alpha + eta
    return (alpha * np.log(pb) + eta * np.log(po) + q) / scale


def mirror_descent_step(q_lcb, pi_b, pi_old, alpha, eta):
    """Per-state maximizer of  pi.Q - alpha KL(pi||pi_b) - eta KL(pi||pi_old).

    pi_new ∝ pi_b^(alpha/(alpha+eta)) * pi_old^(eta/(alpha+eta)) * exp(Q/(alpha+eta))
    """
    logits = mirror_descent_logits(q_lcb, pi_b, pi_old, alpha, eta)
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return TabularPolicy(w / w.sum(axis=1, keepdims=True))


def per_state_objective(pi_row, q_row, pb_row, po_row, alpha, eta):
    return (float(pi_row @ q_row) - alpha * kl_divergence(pi_row, pb_row)
            - eta * kl_divergence(pi_row, po_row))


def expected_kl(nu, P, Q):
    return float(np.asarray(nu) @ kl_rows(P.probs, Q.probs))


def enforce_trust_region(q_lcb, pi_b, pi_old, nu_hat, alpha, delta_tr,
                         bisect=(0.0, 1e4, 1e-6), return_trace=False):
    """Smallest multiplier eta whose update satisfies E_nu KL(new||old) <= delta_tr.

    Returns ``(policy, eta)``, plus the list of ``(eta, kl)`` evaluations
    when ``return_trace`` is set.
    """
    lo, hi, tol = bisect
    if lo < 0 or hi <= lo or tol <= 0:
        raise ValidationError(f"bad bisection bracket {bisect}")
    if delta_tr < 0:
        raise ValidationError("trust-region radius must be nonnegative")
    trace = []

    def step(eta):
        pol = mirror_descent_step(q_lcb, pi_b, pi_old, alpha, eta)
        kl = expected_kl(nu_hat, pol, pi_old)
        trace.append((eta, kl))
        return pol, kl

    def done(pol, eta):
        return (pol, eta, trace) if return_trace else (pol, eta)

    pol, kl = step(lo)
    if kl <= delta_tr:
        return done(pol, lo)
    hi_pol, hi_kl = step(hi)
    while hi_kl > delta_tr:
        if hi >= ETA_CAP:
            raise InfeasibleTrustRegionError(
                f"E KL(new||old) = {hi_kl:.3g} > {delta_tr:g} even at eta = {hi:g}")
        lo = hi
        hi = min(hi * 10.0, ETA_CAP)
        hi_pol, hi_kl = step(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        mid_pol, mid_kl = step(mid)
        if mid_kl <= delta_tr:
            hi, hi_pol = mid, mid_pol
        else:
            lo = mid
    return done(hi_pol, hi)


def shift_certificate(kl_to_behavior, delta_tr, q_max, gamma):
    """Upper bound on the per-iteration decrease of the pessimistic return."""
    if min(kl_to_behavior, delta_tr, q_max) < 0 or not 0 < gamma < 1:
        raise ValidationError("shift certificate needs nonnegative inputs and gamma in (0, 1)")
    return (2.0 * q_max / (1.0 - gamma)) * (
        math.sqrt(kl_to_behavior / 2.0) + math.sqrt(delta_tr / 2.0))


@dataclass(frozen=True)
class BcpoConfig:
    alpha: float = 0.05
    trust_region_delta: float = 0.5
    confidence_delta: float = 0.05
    gamma: float = 0.97
    n_outer_iters: int = 30
    critic_tol: float = 1e-8
    critic_max_iters: int = 20_000
    eta_lo: float = 0.0
    eta_hi: float = 1e4
    eta_tol: float = 1e-6
    q_max_mode: str = "reward-range-bound"
    seed: int = 0
    prior_total: float = 1.0
    reward_range: float = 1.0
    penalty_scale: float = 1.0
    early_stop_kl: float = 1e-8

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValidationError("alpha must be positive")
        if self.trust_region_delta <= 0:
            raise ValidationError("trust_region_delta must be positive")
        if not 0 < self.confidence_delta < 1:
            raise ValidationError("confidence_delta must lie in (0, 1)")
        if not 0 < self.gamma < 1:
            raise ValidationError("gamma must lie in (0, 1)")
        if self.n_outer_iters < 0 or self.critic_max_iters < 1:
            raise ValidationError("iteration counts must be positive")
        if self.critic_tol <= 0 or self.eta_tol <= 0:
            raise ValidationError("tolerances must be positive")
        if self.eta_lo < 0 or self.eta_hi <= self.eta_lo:
            raise ValidationError("need 0 <= eta_lo < eta_hi")
        if self.q_max_mode not in ("reward-range-bound", "observed-max"):
            raise ValidationError(f"unknown q_max_mode {self.q_max_mode!r}")
        if self.prior_total <= 0 or self.reward_range <= 0 or self.penalty_scale < 0:
            raise ValidationError("prior_total and reward_range must be positive, "
                                  "penalty_scale nonnegative")

    @property
    def eta_bisection(self):
        return (self.eta_lo, self.eta_hi, self.eta_tol)


@dataclass(frozen=True)
class IterationLog:
    iteration: int
    eta: float
    surrogate_gain: float
    kl_to_behavior: float
    kl_to_previous: float
    j_lcb: float
    j_true: float
    shift_bound: float

    def as_row(self):
        return (self.iteration, self.eta, self.surrogate_gain, self.kl_to_behavior,
                self.kl_to_previous, self.j_lcb, self.j_true, self.shift_bound)


@dataclass
class BcpoResult:
    policy: TabularPolicy
    logs: list
    critic: object
    behavior: TabularPolicy
    policies: list = field(default_factory=list)
    critics: list = field(default_factory=list)


def bcpo_objective(policy, q_lcb, pi_b, nu, alpha):
    """E_nu[ E_pi Q_LCB ] - alpha E_nu[ KL(pi || pi_b) ]."""
    gain = np.einsum("sa,sa->s", policy.probs, q_lcb.values)
    return float(nu @ gain) - alpha * expected_kl(nu, policy, pi_b)


def q_max_bound(config, model, critic):
    if config.q_max_mode == "observed-max":
        return float(np.max(np.abs(critic.q_lcb.values)))
    return (config.reward_range + float(np.max(model.b_r))) / (1.0 - config.gamma)


def bcpo_optimize(counts, model, config, initial_dist, oracle_mdp=None,
                  keep_history=False):
    """Alternate pessimistic evaluation and trust-region mirror-descent steps.

    Row 0 of the log describes the starting policy (the floored behavior
    clone); row k describes pi_k.  ``j_true`` is NaN without an oracle MDP.
    """
    nu = state_marginal(counts)
    pi_b = floor_policy(behavior_cloning(counts))
    rho = np.asarray(initial_dist, dtype=float)

    def evaluate(pol):
        critic = solve_pessimistic_fixed_point(
            pol, model, counts, config.gamma, tol=config.critic_tol,
            max_iters=config.critic_max_iters, penalty_scale=config.penalty_scale)
        j_true = policy_return(oracle_mdp, pol) if oracle_mdp is not None else math.nan
        return critic, pessimistic_return(critic, pol, rho), j_true

    policy = pi_b
    critic, j_lcb, j_true = evaluate(policy)
    logs = [IterationLog(0, 0.0, 0.0, expected_kl(nu, policy, pi_b), 0.0,
                         j_lcb, j_true, 0.0)]
    policies, critics = [policy], [critic]
    for k in range(1, config.n_outer_iters + 1):
        new_policy, eta = enforce_trust_region(
            critic.q_lcb, pi_b, policy, nu, config.alpha,
            config.trust_region_delta, config.eta_bisection)
        new_policy = floor_policy(new_policy)
        q = critic.q_lcb
        before = bcpo_objective(policy, q, pi_b, nu, config.alpha)
        after = bcpo_objective(new_policy, q, pi_b, nu, config.alpha)
        slack = 1e-9 * max(1.0, abs(before))
        assert after >= before - slack, (
            f"BCPO objective decreased at iteration {k}: {before!r} -> {after!r}")
        surrogate_gain = float(nu @ np.einsum("sa,sa->s", new_policy.probs - policy.probs,
                                              q.values))
        kl_b = expected_kl(nu, new_policy, pi_b)
        kl_prev = expected_kl(nu, new_policy, policy)
        shift = shift_certificate(kl_b, config.trust_region_delta,
                                  q_max_bound(config, model, critic), config.gamma)
        policy = new_policy
        critic, j_lcb, j_true = evaluate(policy)
        logs.append(IterationLog(k, eta, surrogate_gain, kl_b, kl_prev, j_lcb,
                                 j_true, shift))
        logger.debug("bcpo iter %d: eta=%.4g gain=%.4g j_lcb=%.4f", k, eta,
                     surrogate_gain, j_lcb)
        if keep_history:
            policies.append(policy)
            critics.append(critic)
        if kl_prev < config.early_stop_kl:
            break
    return BcpoResult(policy, logs, critic, pi_b,
                      policies if keep_history else [policy],
                      critics if keep_history else [critic])
