"""End-to-end gridworld experiment: data, BC / FQI / BCPO, evaluation, CSVs."""
import csv
import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .baselines import greedy_policy
from .data import TransitionDataset, behavior_cloning, count_statistics
from .errors import ValidationError
from .estimators import BCPO, BehaviorCloning, NaiveFQI
from .gridworld import GridSpec, build_mdp, gridworld_dataset, gridworld_rollout, make_behavior_policy
from .mdp import TabularPolicy
from .policy import LOG_COLUMNS, BcpoConfig
from .posterior import DirichletPrior, fit_posterior

logger = logging.getLogger(__name__)

METHODS = ("bcpo", "bc", "fqi")
OUTPUT_FILES = (
    "summary.csv", "learning_curve.csv", "coverage_uncertainty.csv",
    "value_map_bcpo.csv", "value_map_fqi.csv", "policy_map_bcpo.csv",
    "policy_map_fqi.csv", "bcpo_iterations.csv", "dataset.csv",
)


def _default_bcpo():
    spec = GridSpec()
    # transition penalty scaled so gamma * (1 + scale) < 1 on the benchmark
    return BcpoConfig(gamma=spec.gamma, reward_range=spec.reward_range,
                      penalty_scale=0.02)


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    behavior_epsilon: float = 0.5
    n_transitions: int = 15_000
    bcpo: BcpoConfig = field(default_factory=_default_bcpo)
    fqi_iters: int = 500
    eval_episodes: int = 1000
    eval_seed: int = 12345
    curve_episodes: int = 200
    output_dir: str = "out"
    dataset_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.behavior_epsilon <= 1:
            raise ValidationError("behavior_epsilon must lie in [0, 1]")
        for name in ("n_transitions", "fqi_iters", "eval_episodes", "curve_episodes"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")

    def with_seed(self, seed):
        return replace(self, dataset_seed=int(seed),
                       bcpo=replace(self.bcpo, seed=int(seed)))


@dataclass(frozen=True)
class SummaryRow:
    method: str
    return_mean: float
    return_std: float
    episode_length_mean: float

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")


# ---------------------------------------------------------------- config file

def _coerce(raw, like, key):
    if isinstance(like, bool):
        low = raw.lower()
        if low in ("1", "true", "yes"):
            return True
        if low in ("0", "false", "no"):
            return False
        raise ValidationError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(like, tuple):
        parts = [p.strip() for p in raw.strip("()").split(",")]
        try:
            return tuple(int(p) for p in parts)
        except ValueError:
            raise ValidationError(f"{key}: expected a cell like 5,5, got {raw!r}") from None
    try:
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
    except ValueError:
        raise ValidationError(f"{key}: cannot parse {raw!r}") from None
    return raw


def parse_config(text, base=None):
    """Parse ``key=value`` lines (``#`` comments) into an ExperimentConfig.

    Nested settings use dotted prefixes such as ``grid.slip_prob`` or
    ``bcpo.alpha``.  Unknown keys are rejected.
    """
    base = base or ExperimentConfig()
    sections = {"grid": {}, "bcpo": {}}
    top = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key=value")
        key, raw = (part.strip() for part in line.split("=", 1))
        prefix, _, name = key.rpartition(".")
        if prefix:
            if prefix not in sections:
                raise ValidationError(f"config line {lineno}: unknown section {prefix!r}")
            target = getattr(base, prefix)
            if name not in {f.name for f in fields(target)}:
                raise ValidationError(f"config line {lineno}: unknown key {key!r}")
            sections[prefix][name] = _coerce(raw, getattr(target, name), key)
        else:
            if name not in {f.name for f in fields(base)} or name in sections:
                raise ValidationError(f"config line {lineno}: unknown key {key!r}")
            top[name] = _coerce(raw, getattr(base, name), key)
    grid = replace(base.grid, **sections["grid"])
    bcpo_overrides = dict(sections["bcpo"])
    # the benchmark discount and reward range follow the grid unless set explicitly
    if "gamma" in sections["grid"] and "gamma" not in bcpo_overrides:
        bcpo_overrides["gamma"] = grid.gamma
    if "reward_range" not in bcpo_overrides:
        bcpo_overrides["reward_range"] = grid.reward_range
    bcpo = replace(base.bcpo, **bcpo_overrides)
    return replace(base, grid=grid, bcpo=bcpo, **top)


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def format_config(config):
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name in ("grid", "bcpo"):
            for g in fields(value):
                v = getattr(value, g.name)
                if isinstance(v, tuple):
                    v = ",".join(str(x) for x in v)
                lines.append(f"{f.name}.{g.name}={v}")
        else:
            lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- CSV output

def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def write_csv(path, header, rows):
    """Write via a ``.partial`` file renamed into place on success."""
    path = Path(path)
    partial = path.with_name(path.name + ".partial")
    with open(partial, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    os.replace(partial, path)


def write_policy(path, policy):
    rows = ((s, a, policy.probs[s, a]) for s in range(policy.n_states)
            for a in range(policy.n_actions))
    write_csv(path, ("s", "a", "prob"), rows)


def read_policy(path, n_states, n_actions):
    probs = np.zeros((n_states, n_actions))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["s", "a", "prob"]:
            raise ValidationError(f"{path}: expected header s,a,prob")
        for row in reader:
            if row:
                s, a, p = int(row[0]), int(row[1]), float(row[2])
                if not (0 <= s < n_states and 0 <= a < n_actions):
                    raise ValidationError(f"{path}: index ({s}, {a}) out of range")
                probs[s, a] = p
    return TabularPolicy(probs)


# ---------------------------------------------------------------- pipeline

def make_dataset(config, mdp=None):
    spec = config.grid
    mdp = build_mdp(spec) if mdp is None else mdp
    behavior = make_behavior_policy(mdp, spec, config.behavior_epsilon)
    return gridworld_dataset(spec, behavior, config.n_transitions, config.dataset_seed, mdp)


def make_estimator(method, config):
    spec = config.grid
    n_s, n_a = spec.n_states, 4
    if method == "bc":
        return BehaviorCloning(n_s, n_a)
    if method == "fqi":
        return NaiveFQI(n_s, n_a, gamma=spec.gamma, n_iter=config.fqi_iters)
    if method == "bcpo":
        c = config.bcpo
        return BCPO(n_s, n_a, alpha=c.alpha, trust_region_delta=c.trust_region_delta,
                    confidence_delta=c.confidence_delta, gamma=c.gamma,
                    n_outer_iters=c.n_outer_iters, critic_tol=c.critic_tol,
                    critic_max_iters=c.critic_max_iters, eta_lo=c.eta_lo,
                    eta_hi=c.eta_hi, eta_tol=c.eta_tol, q_max_mode=c.q_max_mode,
                    prior_total=c.prior_total, reward_range=c.reward_range,
                    penalty_scale=c.penalty_scale, random_state=c.seed)
    raise ValidationError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def fit_method(method, config, dataset, mdp=None):
    est = make_estimator(method, config)
    if method == "bcpo":
        mdp = build_mdp(config.grid) if mdp is None else mdp
        est.fit(dataset, initial_dist=mdp.initial_dist, oracle_mdp=mdp)
    else:
        est.fit(dataset)
    return est


def evaluation_policy(method, estimator):
    """Policy actually rolled out: stochastic for BC, greedy otherwise."""
    if method == "bc":
        return estimator.policy_
    if method == "bcpo":
        return estimator.greedy_policy()
    return estimator.policy_


def evaluate(config, policy, mdp=None, n_episodes=None, seed=None):
    return gridworld_rollout(config.grid, policy,
                             n_episodes or config.eval_episodes,
                             config.eval_seed if seed is None else seed, mdp)


def _grid_rows(spec, per_state):
    for s in range(spec.n_states):
        r, c = spec.cell(s)
        yield (r, c, per_state[s])


def run_experiment(config, output_dir=None):
    """Run all three methods and write the CSV artifacts; returns summary rows."""
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = config.grid
    written = []

    def emit(name, header, rows):
        write_csv(out / name, header, rows)
        written.append(out / name)

    stage = "data"
    try:
        mdp = build_mdp(spec)
        dataset = make_dataset(config, mdp)
        dataset.to_csv(out / "dataset.csv")
        written.append(out / "dataset.csv")
        counts = count_statistics(dataset)
        terminal = mdp.terminal_mask

        fitted = {}
        for stage in METHODS:
            logger.info("training %s", stage)
            fitted[stage] = fit_method(stage, config, dataset, mdp)

        stage = "eval"
        summary = []
        for method in METHODS:
            stats = evaluate(config, evaluation_policy(method, fitted[method]), mdp)
            summary.append(SummaryRow(method, *stats))
        emit("summary.csv", ("method", "return_mean", "return_std", "episode_length_mean"),
             [(r.method, r.return_mean, r.return_std, r.episode_length_mean) for r in summary])

        stage = "diagnostics"
        curve = []
        for k, q in fitted["fqi"].result_.checkpoints:
            m, sd, _ = evaluate(config, greedy_policy(q), mdp, config.curve_episodes)
            curve.append(("fqi", k, m, sd))
        for k, pol in enumerate(fitted["bcpo"].result_.policies):
            m, sd, _ = evaluate(config, greedy_policy(pol.probs), mdp, config.curve_episodes)
            curve.append(("bcpo", k, m, sd))
        emit("learning_curve.csv", ("method", "step", "return_mean", "return_std"), curve)

        model = fitted["bcpo"].posterior_
        emit("coverage_uncertainty.csv", ("s", "a", "n", "b_p", "b_r"),
             [(s, a, counts.n_sa[s, a], model.b_P[s, a], model.b_r[s, a])
              for s in range(spec.n_states) for a in range(4)])

        values = {"bcpo": fitted["bcpo"].state_values(), "fqi": fitted["fqi"].state_values()}
        for method in ("bcpo", "fqi"):
            v = np.where(terminal, 0.0, values[method])
            emit(f"value_map_{method}.csv", ("row", "col", "value"), _grid_rows(spec, v))
            actions = evaluation_policy(method, fitted[method]).probs.argmax(axis=1)
            actions = np.where(terminal, -1, actions)
            emit(f"policy_map_{method}.csv", ("row", "col", "action"), _grid_rows(spec, actions))

        emit("bcpo_iterations.csv", LOG_COLUMNS,
             [log.as_row() for log in fitted["bcpo"].logs_])
    except Exception as exc:
        for path in written:
            path.unlink(missing_ok=True)
        for partial in out.glob("*.partial"):
            partial.unlink()
        raise StageError(stage, exc) from exc
    return summary
