"""Logged transitions, their sufficient statistics, and the CSV format."""
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyDatasetError, ValidationError
from .mdp import TabularPolicy

CSV_HEADER = ("s", "a", "r", "s_next", "terminal")


@dataclass(frozen=True)
class TransitionDataset:
    """Immutable columnar store of (s, a, r, s', terminal) records."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    n_states: int
    n_actions: int

    def __post_init__(self):
        cols = {
            "states": np.asarray(self.states, dtype=np.int64).reshape(-1),
            "actions": np.asarray(self.actions, dtype=np.int64).reshape(-1),
            "rewards": np.asarray(self.rewards, dtype=float).reshape(-1),
            "next_states": np.asarray(self.next_states, dtype=np.int64).reshape(-1),
            "terminals": np.asarray(self.terminals, dtype=bool).reshape(-1),
        }
        sizes = {v.size for v in cols.values()}
        if len(sizes) != 1:
            raise ValidationError("dataset columns have different lengths")
        if self.n_states < 1 or self.n_actions < 1:
            raise ValidationError("n_states and n_actions must be positive")
        for name, hi in (("states", self.n_states), ("next_states", self.n_states),
                         ("actions", self.n_actions)):
            v = cols[name]
            if v.size and (v.min() < 0 or v.max() >= hi):
                raise ValidationError(f"{name} index out of range [0, {hi})")
        if not np.all(np.isfinite(cols["rewards"])):
            raise ValidationError("rewards must be finite")
        for name, v in cols.items():
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    def __len__(self):
        return self.states.size

    @classmethod
    def from_records(cls, records, n_states, n_actions):
        records = list(records)
        if not records:
            empty = np.zeros(0)
            return cls(empty, empty, empty, empty, empty, n_states, n_actions)
        s, a, r, s2, t = zip(*records)
        return cls(s, a, r, s2, t, n_states, n_actions)

    @classmethod
    def from_array(cls, X, n_states, n_actions):
        """Build from an (N, 4) or (N, 5) array laid out like the CSV columns."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] not in (4, 5):
            raise ValidationError("expected an (N, 4) or (N, 5) transition array")
        terminals = X[:, 4] if X.shape[1] == 5 else np.zeros(len(X))
        return cls(X[:, 0], X[:, 1], X[:, 2], X[:, 3], terminals, n_states, n_actions)

    def records(self):
        for i in range(len(self)):
            yield (int(self.states[i]), int(self.actions[i]), float(self.rewards[i]),
                   int(self.next_states[i]), bool(self.terminals[i]))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for s, a, r, s2, t in self.records():
                writer.writerow((s, a, repr(r), s2, int(t)))

    @classmethod
    def from_csv(cls, path, n_states, n_actions):
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
                raise ValidationError(f"{path}: expected header {','.join(CSV_HEADER)}")
            records = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    s, a, r, s2, t = row
                    t = int(t)
                    if t not in (0, 1):
                        raise ValueError("terminal must be 0 or 1")
                    records.append((int(s), int(a), float(r), int(s2), bool(t)))
                except ValueError as exc:
                    raise ValidationError(f"{path}:{lineno}: {exc}") from exc
        return cls.from_records(records, n_states, n_actions)


@dataclass(frozen=True)
class CountStatistics:
    """Integer visit counts and empirical mean rewards.

    ``terminal_mask`` flags states that were entered by a terminal
    transition; estimators treat them as absorbing with zero value.
    """

    n_sa: np.ndarray
    n_sas: np.ndarray
    reward_sum: np.ndarray
    reward_mean: np.ndarray
    terminal_mask: np.ndarray

    @property
    def n_states(self):
        return self.n_sa.shape[0]

    @property
    def n_actions(self):
        return self.n_sa.shape[1]

    @property
    def total(self):
        return int(self.n_sa.sum())

    def scaled(self, factor):
        """Counts multiplied by an integer factor (same empirical frequencies)."""
        factor = int(factor)
        return CountStatistics(self.n_sa * factor, self.n_sas * factor,
                               self.reward_sum * factor, self.reward_mean.copy(),
                               self.terminal_mask.copy())


def count_statistics(dataset):
    n_s, n_a = dataset.n_states, dataset.n_actions
    n_sas = np.zeros((n_s, n_a, n_s), dtype=np.int64)
    np.add.at(n_sas, (dataset.states, dataset.actions, dataset.next_states), 1)
    n_sa = n_sas.sum(axis=2)
    reward_sum = np.zeros((n_s, n_a))
    np.add.at(reward_sum, (dataset.states, dataset.actions), dataset.rewards)
    reward_mean = np.divide(reward_sum, n_sa, out=np.zeros_like(reward_sum),
                            where=n_sa > 0)
    terminal_mask = np.zeros(n_s, dtype=bool)
    terminal_mask[dataset.next_states[dataset.terminals]] = True
    return CountStatistics(n_sa, n_sas, reward_sum, reward_mean, terminal_mask)


def behavior_cloning(counts):
    """Maximum-likelihood categorical policy; unvisited states get uniform rows."""
    n_s = counts.n_sa.sum(axis=1, keepdims=True)
    uniform = np.full(counts.n_sa.shape, 1.0 / counts.n_actions)
    probs = np.divide(counts.n_sa, n_s, out=uniform, where=n_s > 0)
    return TabularPolicy(probs)


def state_marginal(counts):
    """Empirical state marginal nu_D(s) = n(s) / N."""
    total = counts.total
    if total == 0:
        raise EmptyDatasetError("state marginal of an empty dataset is undefined")
    return counts.n_sa.sum(axis=1) / total
