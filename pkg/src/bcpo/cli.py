"""Command-line interface: ``bcpo {gen-data,train,eval,run,verify}``.

Exit codes: 0 success, 1 validation error, 2 numerical or convergence
failure (including failed verification checks), 3 I/O failure.
"""
import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .data import TransitionDataset
from .errors import NumericalError, ValidationError
from .experiment import (METHODS, ExperimentConfig, StageError, evaluate,
                         evaluation_policy, fit_method, load_config, make_dataset,
                         read_policy, run_experiment, write_csv, write_policy)
from .gridworld import build_mdp
from .policy import LOG_COLUMNS

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", type=Path, help="key=value experiment config file")
    p.add_argument("--seed", type=int, help="dataset / BCPO seed override")
    p.add_argument("--out", type=Path, help="output directory")


def build_parser():
    parser = _Parser(prog="bcpo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen-data", help="generate the offline gridworld dataset")
    _common(p)

    p = sub.add_parser("train", help="train one method and save its policy")
    p.add_argument("method", choices=METHODS)
    p.add_argument("--data", type=Path, help="dataset CSV (generated when omitted)")
    _common(p)

    p = sub.add_parser("eval", help="roll out a saved policy")
    p.add_argument("--policy", type=Path, required=True, help="policy CSV (s,a,prob)")
    p.add_argument("--episodes", type=int, help="number of evaluation episodes")
    _common(p)

    p = sub.add_parser("run", help="full experiment with all artifacts")
    _common(p)

    p = sub.add_parser("verify", help="run the theorem / acceptance check suite")
    p.add_argument("--check", action="append", dest="checks",
                   help="run only this check (repeatable)")
    return parser


def _load(args):
    config = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        config = config.with_seed(args.seed)
    if getattr(args, "out", None) is not None:
        config = replace(config, output_dir=str(args.out))
    return config


def _cmd_gen_data(args):
    config = _load(args)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = make_dataset(config)
    dataset.to_csv(out / "dataset.csv")
    print(f"wrote {len(dataset)} transitions to {out / 'dataset.csv'}")


def _cmd_train(args):
    config = _load(args)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = config.grid
    if args.data:
        dataset = TransitionDataset.from_csv(args.data, spec.n_states, 4)
    else:
        dataset = make_dataset(config)
    est = fit_method(args.method, config, dataset)
    path = out / f"policy_{args.method}.csv"
    write_policy(path, evaluation_policy(args.method, est))
    if args.method == "bcpo":
        write_csv(out / "bcpo_iterations.csv", LOG_COLUMNS,
                  [log.as_row() for log in est.logs_])
    print(f"wrote {path}")


def _cmd_eval(args):
    config = _load(args)
    policy = read_policy(args.policy, config.grid.n_states, 4)
    mean, std, length = evaluate(config, policy, n_episodes=args.episodes)
    print(f"return_mean={mean!r} return_std={std!r} episode_length_mean={length!r}")


def _cmd_run(args):
    config = _load(args)
    rows = run_experiment(config)
    for row in rows:
        print(f"{row.method:5s} return {row.return_mean:+.3f} ± {row.return_std:.3f} "
              f"length {row.episode_length_mean:.1f}")
    print(f"artifacts in {config.output_dir}")


def _cmd_verify(args):
    from .theory import CHECKS, run_checks
    names = args.checks
    if names:
        unknown = [n for n in names if n not in CHECKS]
        if unknown:
            raise ValidationError(f"unknown check(s) {unknown}; choose from {list(CHECKS)}")
    results = []
    for result in run_checks(names):
        print(result.line(), flush=True)
        results.append(result)
    failed = [r for r in results if not r.passed and not r.informational]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed or informational")
    return EXIT_NUMERICAL if failed else EXIT_OK


COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "run": _cmd_run,
    "verify": _cmd_verify,
}


def _exit_code(exc):
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, (NumericalError, FloatingPointError)):
        return EXIT_NUMERICAL
    if isinstance(exc, OSError):
        return EXIT_IO
    return None


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args) or EXIT_OK
    except Exception as exc:
        code = _exit_code(exc)
        if code is None:
            raise
        if isinstance(exc, OSError) and getattr(exc, "filename", None):
            print(f"error: {exc.strerror or exc}: {exc.filename}", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
