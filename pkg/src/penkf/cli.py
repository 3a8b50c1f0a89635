"""Command line: ``penkf run``, ``penkf variance-recovery`` and ``penkf validate``.

Exit codes: 0 on success, 2 for an invalid configuration, 3 for I/O errors.
"""

import argparse
import json
import sys

from .maxdet import SolverOptions
from .runner import ConfigError, ExperimentConfig, load_config, run_experiment, \
    run_variance_recovery

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


def _u64(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _sizes(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("sizes must be comma-separated integers") from None


def build_parser():
    p = argparse.ArgumentParser(prog="penkf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a twin experiment from a JSON config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=_u64, help="override master_seed")
    run.add_argument("--repeats", type=int, help="override repeats")
    run.add_argument("--out", default="results.csv")
    run.add_argument("--threads", type=int, default=1, help="worker processes, 0 = all CPUs")

    vr = sub.add_parser("variance-recovery", help="fitted vs sample covariance study")
    vr.add_argument("--config", help="JSON with keys n, sample_sizes, trials, master_seed, solver")
    vr.add_argument("--n", type=int)
    vr.add_argument("--sizes", type=_sizes, help="comma-separated sample sizes")
    vr.add_argument("--trials", type=int)
    vr.add_argument("--seed", type=_u64)
    vr.add_argument("--out", default="variance_recovery.csv")
    vr.add_argument("--threads", type=int, default=1)

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("--config", required=True)
    return p


def _experiment_config(args):
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.repeats is not None:
        changes["repeats"] = args.repeats
    return cfg.replace(**changes) if changes else cfg


def _recovery_args(args):
    spec = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            try:
                spec = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None
        unknown = set(spec) - {"n", "sample_sizes", "trials", "master_seed", "solver"}
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}")
    n = args.n if args.n is not None else spec.get("n")
    sizes = args.sizes if args.sizes is not None else spec.get("sample_sizes")
    trials = args.trials if args.trials is not None else spec.get("trials", 200)
    seed = args.seed if args.seed is not None else spec.get("master_seed", 0)
    if n is None or not sizes:
        raise ConfigError("variance-recovery needs n and sample sizes")
    try:
        options = SolverOptions.from_dict(spec.get("solver"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return int(n), list(sizes), int(trials), int(seed), options


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        elif args.command == "run":
            cfg = _experiment_config(args)
            rows = run_experiment(cfg, args.out, args.threads)
            print(f"wrote {len(rows)} rows to {args.out}")
        else:
            n, sizes, trials, seed, options = _recovery_args(args)
            rows = run_variance_recovery(n, sizes, trials, seed, args.out, options,
                                         args.threads)
            print(f"wrote {len(rows)} rows to {args.out}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
