"""Comparison methods: naive fitted Q-iteration and greedy extraction.

Behavior cloning lives in :mod:`bcpo.data`.
"""
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .mdp import QTable, TabularPolicy


@dataclass(frozen=True)
class FqiResult:
    q: QTable
    iterations: int
    residual_history: tuple
    # Q after every 10th iteration, for learning curves
    checkpoints: tuple = ()


def naive_fqi(counts, empirical, gamma, iters=500, checkpoint_every=10):
    """Optimality backups on the empirical model, no pessimism.

    Q_{k+1} = r_hat + gamma * P_hat max_a' Q_k, starting from zero; states
    flagged terminal in ``counts`` contribute no continuation value.
    """
    if iters < 1:
        raise ValidationError("iters must be >= 1")
    if not 0 <= gamma < 1:
        raise ValidationError("gamma must lie in [0, 1)")
    live = ~counts.terminal_mask
    q = np.zeros(counts.n_sa.shape)
    history = []
    checkpoints = []
    for k in range(1, iters + 1):
        v = np.where(live, q.max(axis=1), 0.0)
        new = counts.reward_mean + gamma * (empirical @ v)
        if not np.all(np.isfinite(new)):
            raise NumericalError(f"naive FQI diverged at iteration {k}")
        history.append(float(np.max(np.abs(new - q))))
        q = new
        if checkpoint_every and k % checkpoint_every == 0:
            checkpoints.append((k, q.copy()))
    return FqiResult(QTable(q), iters, tuple(history), tuple(checkpoints))


def greedy_policy(q):
    """Deterministic argmax policy; ties go to the lowest action index."""
    values = q.values if isinstance(q, QTable) else np.asarray(q, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NumericalError("greedy policy of non-finite Q")
    return TabularPolicy.deterministic(np.argmax(values, axis=1), values.shape[1])
