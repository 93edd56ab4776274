"""Stochastic gridworld benchmark: MDP, behavior policy, data, rollouts."""
from dataclasses import dataclass

import numpy as np

from .data import TransitionDataset
from .errors import ValidationError
from .mdp import TabularMDP, TabularPolicy

UP, RIGHT, DOWN, LEFT = range(4)
ACTION_NAMES = ("up", "right", "down", "left")
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))
# actions at right angles to each action
PERPENDICULAR = ((LEFT, RIGHT), (UP, DOWN), (LEFT, RIGHT), (UP, DOWN))


@dataclass(frozen=True)
class GridSpec:
    width: int = 6
    height: int = 6
    goal_cell: tuple = (5, 5)
    trap_cell: tuple = (2, 3)
    start_cell: tuple = (0, 0)
    slip_prob: float = 0.10
    step_penalty: float = -0.01
    goal_reward: float = 1.0
    trap_reward: float = -1.0
    gamma: float = 0.97
    max_episode_steps: int = 200
    slip_mode: str = "perpendicular"
    penalty_on_terminal: bool = True

    def __post_init__(self):
        object.__setattr__(self, "goal_cell", tuple(int(c) for c in self.goal_cell))
        object.__setattr__(self, "trap_cell", tuple(int(c) for c in self.trap_cell))
        object.__setattr__(self, "start_cell", tuple(int(c) for c in self.start_cell))
        if self.width < 1 or self.height < 1:
            raise ValidationError("grid dimensions must be positive")
        cells = (self.goal_cell, self.trap_cell, self.start_cell)
        for cell in cells:
            if len(cell) != 2 or not (0 <= cell[0] < self.height and 0 <= cell[1] < self.width):
                raise ValidationError(f"cell {cell} outside the {self.height}x{self.width} grid")
        if len(set(cells)) != 3:
            raise ValidationError("goal, trap and start cells must be distinct")
        if not 0 <= self.slip_prob < 1:
            raise ValidationError("slip_prob must lie in [0, 1)")
        if not 0 < self.gamma < 1:
            raise ValidationError("gamma must lie in (0, 1)")
        if self.max_episode_steps < 1:
            raise ValidationError("max_episode_steps must be positive")
        if self.slip_mode not in ("perpendicular", "uniform"):
            raise ValidationError(f"unknown slip_mode {self.slip_mode!r}")

    @property
    def n_states(self):
        return self.width * self.height

    def index(self, cell):
        return cell[0] * self.width + cell[1]

    def cell(self, index):
        return divmod(int(index), self.width)

    @property
    def goal(self):
        return self.index(self.goal_cell)

    @property
    def trap(self):
        return self.index(self.trap_cell)

    @property
    def start(self):
        return self.index(self.start_cell)

    def entry_reward(self, state):
        """Reward for a step that lands in ``state``."""
        pen = self.step_penalty
        if state == self.goal:
            return self.goal_reward + (pen if self.penalty_on_terminal else 0.0)
        if state == self.trap:
            return self.trap_reward + (pen if self.penalty_on_terminal else 0.0)
        return pen

    @property
    def reward_bounds(self):
        rewards = [self.entry_reward(s) for s in (self.goal, self.trap, self.start)]
        return min(rewards), max(rewards)

    @property
    def reward_range(self):
        lo, hi = self.reward_bounds
        return hi - lo


def _move(spec, cell, action):
    r = cell[0] + MOVES[action][0]
    c = cell[1] + MOVES[action][1]
    if 0 <= r < spec.height and 0 <= c < spec.width:
        return (r, c)
    return cell


def _action_outcomes(spec, action):
    """(effective action, probability) pairs under the slip model."""
    p = spec.slip_prob
    if p == 0:
        return [(action, 1.0)]
    if spec.slip_mode == "perpendicular":
        a, b = PERPENDICULAR[action]
        return [(action, 1.0 - p), (a, p / 2.0), (b, p / 2.0)]
    # uniform: with prob p the move is replaced by a uniformly random action
    return [(x, (1.0 - p if x == action else 0.0) + p / 4.0) for x in range(4)]


def build_mdp(spec):
    n_s = spec.n_states
    P = np.zeros((n_s, 4, n_s))
    R = np.zeros((n_s, 4))
    terminal = np.zeros(n_s, dtype=bool)
    terminal[[spec.goal, spec.trap]] = True
    for s in range(n_s):
        if terminal[s]:
            P[s, :, s] = 1.0
            continue
        cell = spec.cell(s)
        for a in range(4):
            for eff, prob in _action_outcomes(spec, a):
                P[s, a, spec.index(_move(spec, cell, eff))] += prob
            R[s, a] = sum(P[s, a, t] * spec.entry_reward(t) for t in np.flatnonzero(P[s, a]))
    rho = np.zeros(n_s)
    rho[spec.start] = 1.0
    return TabularMDP(P, R, spec.gamma, rho, terminal)


def greedy_to_goal_actions(spec):
    """Action along a shortest Manhattan path to the goal (trap ignored).

    Of the actions that reduce the distance, the lowest index wins.
    """
    actions = np.zeros(spec.n_states, dtype=int)
    gr, gc = spec.goal_cell
    for s in range(spec.n_states):
        r, c = spec.cell(s)
        good = []
        if r > gr:
            good.append(UP)
        if c < gc:
            good.append(RIGHT)
        if r < gr:
            good.append(DOWN)
        if c > gc:
            good.append(LEFT)
        actions[s] = min(good) if good else UP
    return actions


def make_behavior_policy(mdp, spec, epsilon=0.5):
    """(1 - epsilon) * greedy-to-goal + epsilon * uniform."""
    if not 0 <= epsilon <= 1:
        raise ValidationError("epsilon must lie in [0, 1]")
    greedy = TabularPolicy.deterministic(greedy_to_goal_actions(spec), mdp.n_actions).probs
    return TabularPolicy((1.0 - epsilon) * greedy + epsilon / mdp.n_actions)


def generate_dataset(mdp, policy, n_transitions, max_episode_steps, seed,
                     reward_fn=None):
    """Roll out episodes from the initial distribution until ``n_transitions`` are logged.

    ``reward_fn(s, a, s')`` gives the realized reward; by default it is the
    mean reward of (s, a).  Step-cap truncation is not flagged terminal.
    """
    if n_transitions < 1:
        raise ValidationError("n_transitions must be >= 1")
    rng = np.random.default_rng(int(seed) % 2**64)
    P, pi = mdp.transition, policy.probs
    cdf_P = np.cumsum(P, axis=2)
    cdf_pi = np.cumsum(pi, axis=1)
    cdf_rho = np.cumsum(mdp.initial_dist)
    rows = []
    while len(rows) < n_transitions:
        s = _draw(cdf_rho, rng)
        for _ in range(max_episode_steps):
            a = _draw(cdf_pi[s], rng)
            s2 = _draw(cdf_P[s, a], rng)
            r = reward_fn(s, a, s2) if reward_fn else mdp.mean_reward[s, a]
            done = bool(mdp.terminal_mask[s2])
            rows.append((s, a, r, s2, done))
            s = s2
            if done or len(rows) >= n_transitions:
                break
    return TransitionDataset.from_records(rows, mdp.n_states, mdp.n_actions)


def _draw(cdf, rng):
    # searchsorted on the cumulative sum; clamp guards against round-off
    return min(int(np.searchsorted(cdf, rng.random(), side="right")), cdf.size - 1)


def gridworld_dataset(spec, policy, n_transitions, seed, mdp=None):
    mdp = build_mdp(spec) if mdp is None else mdp
    return generate_dataset(mdp, policy, n_transitions, spec.max_episode_steps, seed,
                            reward_fn=lambda s, a, s2: spec.entry_reward(s2))


def rollout_evaluate(mdp, policy, n_episodes, max_episode_steps, seed,
                     reward_fn=None, discounted=False):
    """Monte Carlo (mean return, std return, mean length) over seeded episodes.

    Returns are undiscounted sums unless ``discounted`` is set.
    """
    if n_episodes < 1:
        raise ValidationError("n_episodes must be >= 1")
    rng = np.random.default_rng(int(seed) % 2**64)
    cdf_P = np.cumsum(mdp.transition, axis=2)
    cdf_pi = np.cumsum(policy.probs, axis=1)
    cdf_rho = np.cumsum(mdp.initial_dist)
    gamma = mdp.discount
    returns = np.zeros(n_episodes)
    lengths = np.zeros(n_episodes)
    for ep in range(n_episodes):
        s = _draw(cdf_rho, rng)
        total, weight, t = 0.0, 1.0, 0
        while t < max_episode_steps and not mdp.terminal_mask[s]:
            a = _draw(cdf_pi[s], rng)
            s2 = _draw(cdf_P[s, a], rng)
            r = reward_fn(s, a, s2) if reward_fn else mdp.mean_reward[s, a]
            total += weight * r
            if discounted:
                weight *= gamma
            s = s2
            t += 1
        returns[ep] = total
        lengths[ep] = t
    return float(returns.mean()), float(returns.std()), float(lengths.mean())


def gridworld_rollout(spec, policy, n_episodes, seed, mdp=None):
    mdp = build_mdp(spec) if mdp is None else mdp
    return rollout_evaluate(mdp, policy, n_episodes, spec.max_episode_steps, seed,
                            reward_fn=lambda s, a, s2: spec.entry_reward(s2))
