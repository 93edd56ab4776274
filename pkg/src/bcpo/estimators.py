"""scikit-learn style estimators wrapping the tabular algorithms.

All estimators take transitions as either a :class:`TransitionDataset` or an
``(N, 5)`` array with columns ``s, a, r, s_next, terminal``.  ``predict``
maps state indices to actions and ``predict_proba`` to action distributions.
"""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .baselines import greedy_policy, naive_fqi
from .data import TransitionDataset, behavior_cloning, count_statistics, state_marginal
from .errors import ValidationError
from .policy import BcpoConfig, bcpo_optimize
from .posterior import DirichletPrior, fit_posterior


def check_transitions(X, n_states, n_actions):
    """Validate transitions and return a TransitionDataset."""
    if isinstance(X, TransitionDataset):
        if (X.n_states, X.n_actions) != (n_states, n_actions):
            raise ValidationError(
                f"dataset is ({X.n_states}, {X.n_actions}), estimator expects "
                f"({n_states}, {n_actions})")
        return X
    X = check_array(X, dtype=np.float64, ensure_min_samples=0)
    for col in (0, 1, 3):
        if not np.all(X[:, col] == np.round(X[:, col])):
            raise ValidationError("state and action columns must hold integers")
    return TransitionDataset.from_array(X, n_states, n_actions)


def check_states(states, n_states):
    states = check_array(np.asarray(states).reshape(-1, 1), dtype=np.int64,
                         ensure_2d=True).ravel()
    if states.size and (states.min() < 0 or states.max() >= n_states):
        raise ValidationError(f"state index out of range [0, {n_states})")
    return states


class _TabularPolicyMixin:
    """predict / predict_proba over a fitted ``policy_``."""

    def predict_proba(self, states):
        check_is_fitted(self, "policy_")
        return self.policy_.probs[check_states(states, self.n_states)]

    def predict(self, states):
        # ties toward the lowest action index
        return np.argmax(self.predict_proba(states), axis=1)


class BehaviorCloning(_TabularPolicyMixin, BaseEstimator):
    """Maximum-likelihood behavior policy."""

    def __init__(self, n_states, n_actions):
        self.n_states = n_states
        self.n_actions = n_actions

    def fit(self, X, y=None):
        dataset = check_transitions(X, self.n_states, self.n_actions)
        self.counts_ = count_statistics(dataset)
        self.policy_ = behavior_cloning(self.counts_)
        return self


class NaiveFQI(_TabularPolicyMixin, BaseEstimator):
    """Fitted Q-iteration on the empirical model, greedy in the final Q."""

    def __init__(self, n_states, n_actions, gamma=0.97, n_iter=500):
        self.n_states = n_states
        self.n_actions = n_actions
        self.gamma = gamma
        self.n_iter = n_iter

    def fit(self, X, y=None):
        dataset = check_transitions(X, self.n_states, self.n_actions)
        self.counts_ = count_statistics(dataset)
        self.empirical_ = fit_posterior(self.counts_).empirical
        self.result_ = naive_fqi(self.counts_, self.empirical_, self.gamma, self.n_iter)
        self.q_ = self.result_.q.values
        self.policy_ = greedy_policy(self.result_.q)
        return self

    def state_values(self):
        check_is_fitted(self, "q_")
        return self.q_.max(axis=1)


class BCPO(_TabularPolicyMixin, BaseEstimator):
    """Bayesian conservative policy optimization on a finite MDP.

    Fits a Dirichlet transition posterior, then alternates pessimistic
    policy evaluation with KL-regularized trust-region policy updates
    anchored at the behavior clone.

    Parameters
    ----------
    alpha : float
        Weight of the KL penalty towards the behavior clone.
    trust_region_delta : float
        Bound on the state-averaged KL between consecutive policies.
    confidence_delta : float
        Failure probability of the confidence bonuses.
    penalty_scale : float
        Multiplier on the transition bonus; 1.0 gives the certified operator.
    prior_total : float
        Total symmetric Dirichlet concentration per state-action pair.

    Attributes
    ----------
    policy_ : TabularPolicy
    q_lcb_ : ndarray of shape (n_states, n_actions)
    logs_ : list of IterationLog
    """

    def __init__(self, n_states, n_actions, alpha=0.05, trust_region_delta=0.5,
                 confidence_delta=0.05, gamma=0.97, n_outer_iters=30,
                 critic_tol=1e-8, critic_max_iters=20_000, eta_lo=0.0, eta_hi=1e4,
                 eta_tol=1e-6, q_max_mode="reward-range-bound", prior_total=1.0,
                 reward_range=1.0, penalty_scale=1.0, random_state=0):
        self.n_states = n_states
        self.n_actions = n_actions
        self.alpha = alpha
        self.trust_region_delta = trust_region_delta
        self.confidence_delta = confidence_delta
        self.gamma = gamma
        self.n_outer_iters = n_outer_iters
        self.critic_tol = critic_tol
        self.critic_max_iters = critic_max_iters
        self.eta_lo = eta_lo
        self.eta_hi = eta_hi
        self.eta_tol = eta_tol
        self.q_max_mode = q_max_mode
        self.prior_total = prior_total
        self.reward_range = reward_range
        self.penalty_scale = penalty_scale
        self.random_state = random_state

    def config(self):
        return BcpoConfig(
            alpha=self.alpha, trust_region_delta=self.trust_region_delta,
            confidence_delta=self.confidence_delta, gamma=self.gamma,
            n_outer_iters=self.n_outer_iters, critic_tol=self.critic_tol,
            critic_max_iters=self.critic_max_iters, eta_lo=self.eta_lo,
            eta_hi=self.eta_hi, eta_tol=self.eta_tol, q_max_mode=self.q_max_mode,
            seed=self.random_state, prior_total=self.prior_total,
            reward_range=self.reward_range, penalty_scale=self.penalty_scale)

    def fit(self, X, y=None, initial_dist=None, oracle_mdp=None):
        """Fit on logged transitions.

        ``initial_dist`` defaults to the empirical state marginal.  With an
        ``oracle_mdp`` the logs also carry the exact return of each iterate.
        """
        config = self.config()
        dataset = check_transitions(X, self.n_states, self.n_actions)
        counts = count_statistics(dataset)
        prior = DirichletPrior.symmetric(self.n_states, self.n_actions, self.prior_total)
        model = fit_posterior(counts, prior, self.confidence_delta, self.reward_range)
        if initial_dist is None:
            initial_dist = state_marginal(counts)
        result = bcpo_optimize(counts, model, config, initial_dist, oracle_mdp,
                               keep_history=True)
        self.counts_ = counts
        self.posterior_ = model
        self.result_ = result
        self.behavior_policy_ = result.behavior
        self.policy_ = result.policy
        self.critic_ = result.critic
        self.q_lcb_ = result.critic.q_lcb.values
        self.logs_ = result.logs
        return self

    def greedy_policy(self):
        check_is_fitted(self, "policy_")
        return greedy_policy(self.policy_.probs)

    def state_values(self):
        check_is_fitted(self, "critic_")
        return self.critic_.v_lcb
