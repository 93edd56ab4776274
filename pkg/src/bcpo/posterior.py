"""Dirichlet transition posterior and lower-confidence-bound radii."""
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class DirichletPrior:
    alpha0: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha0, dtype=float)
        if a.ndim != 3:
            raise ValidationError("alpha0 must have shape (S, A, S)")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValidationError("alpha0 must be finite and nonnegative")
        if np.any(a.sum(axis=2) <= 0):
            raise ValidationError("improper prior: some alpha0(s, a) sums to zero")
        a.setflags(write=False)
        object.__setattr__(self, "alpha0", a)

    @property
    def alpha0_sum(self):
        return self.alpha0.sum(axis=2)

    @classmethod
    def symmetric(cls, n_states, n_actions, total=1.0):
        """Symmetric prior whose concentrations sum to ``total`` per (s, a)."""
        return cls(np.full((n_states, n_actions, n_states), total / n_states))


def log_union_term(n_states, n_actions, delta):
    return np.log(2.0 * n_states * n_actions / delta)


def reward_bonus(n_sa, n_states, n_actions, delta, reward_range=1.0):
    """Hoeffding radius for the mean reward, widened by the reward range."""
    n = np.maximum(1, np.asarray(n_sa))
    return reward_range * np.sqrt(log_union_term(n_states, n_actions, delta) / (2.0 * n))


def transition_bonus(n_sa, alpha0_sum, n_states, n_actions, delta):
    """L1 radius of the Dirichlet posterior mean, clipped to [0, 1]."""
    radius = np.sqrt(2.0 * log_union_term(n_states, n_actions, delta)
                     / (np.asarray(alpha0_sum) + np.asarray(n_sa)))
    return np.minimum(1.0, radius)


@dataclass(frozen=True)
class PosteriorModel:
    posterior_mean: np.ndarray
    empirical: np.ndarray
    b_r: np.ndarray
    b_P: np.ndarray
    confidence: float
    concentration: np.ndarray

    @property
    def n_states(self):
        return self.posterior_mean.shape[0]

    @property
    def n_actions(self):
        return self.posterior_mean.shape[1]


def empirical_transitions(counts):
    """n(s,a,s')/n(s,a), with uniform rows where (s, a) was never seen."""
    n_sa = counts.n_sa[:, :, None]
    uniform = np.full(counts.n_sas.shape, 1.0 / counts.n_states)
    return np.divide(counts.n_sas, n_sa, out=uniform, where=n_sa > 0)


def fit_posterior(counts, prior=None, delta=0.05, reward_range=1.0):
    """Posterior-mean model and bonus tables from visit counts.

    ``reward_range`` scales the reward radius for rewards outside [0, 1].
    """
    if not 0.0 < delta < 1.0:
        raise ValidationError(f"delta must lie in (0, 1), got {delta}")
    if reward_range <= 0:
        raise ValidationError("reward_range must be positive")
    n_s, n_a = counts.n_states, counts.n_actions
    if prior is None:
        prior = DirichletPrior.symmetric(n_s, n_a)
    if prior.alpha0.shape != counts.n_sas.shape:
        raise ValidationError(
            f"prior shape {prior.alpha0.shape} does not match counts {counts.n_sas.shape}")
    concentration = prior.alpha0 + counts.n_sas
    posterior_mean = concentration / concentration.sum(axis=2, keepdims=True)
    model = PosteriorModel(
        posterior_mean=posterior_mean,
        empirical=empirical_transitions(counts),
        b_r=reward_bonus(counts.n_sa, n_s, n_a, delta, reward_range),
        b_P=transition_bonus(counts.n_sa, prior.alpha0_sum, n_s, n_a, delta),
        confidence=float(delta),
        concentration=concentration,
    )
    for arr in (model.posterior_mean, model.empirical, model.b_r, model.b_P,
                model.concentration):
        arr.setflags(write=False)
    return model


def sample_transition_model(model, seed):
    """Draw P(.|s,a) ~ Dirichlet(alpha0 + n) independently for every (s, a)."""
    rng = np.random.default_rng(int(seed) % 2**64)
    g = rng.standard_gamma(model.concentration)
    sums = g.sum(axis=2, keepdims=True)
    # all-underflow rows: fall back to the posterior mean
    bad = sums[..., 0] <= 0
    if np.any(bad):
        g[bad] = model.posterior_mean[bad]
        sums = g.sum(axis=2, keepdims=True)
    return g / sums
