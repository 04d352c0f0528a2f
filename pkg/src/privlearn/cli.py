"""Command line entry point: ``privlearn {release,eval,verify,params}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import Database, InsufficientDatabaseError
from .harness.config import ConfigError, load_config, thread_count
from .harness.experiment import derived_params, rescore, run_experiment, write_error_table
from .harness.verify import SUITES, run_suites
from .reduction import Synopsis


def _print(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def cmd_release(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.output_dir or cfg.output_dir
    result = run_experiment(cfg, out)
    rep = result.report
    print(
        f"{rep.synopsis_variant} synopsis; {rep.mode} scoring over {rep.num_queries} queries; "
        f"bad mass {rep.bad_mass:.4f} (gamma {rep.gamma}); max error {rep.max_error:.4f}; "
        f"{'PASS' if rep.passed else 'FAIL'}"
    )
    if out is not None:
        print(f"artifacts written to {out}")
    return 0 if rep.passed else 1


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    S = Synopsis.load(args.synopsis)
    D = Database.from_csv(args.database, cfg.d) if args.database else None
    rep, table, released, err = rescore(cfg, S, D)
    if args.errors:
        write_error_table(args.errors, table, released, err)
    _print(rep.to_dict())
    return 0 if rep.passed else 1


def cmd_verify(args) -> int:
    threads = args.threads or thread_count()
    results = run_suites(args.suite, seed=args.seed, threads=threads)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} ({r.seconds:.2f}s) {json.dumps(r.details, sort_keys=True)}")
    return 0 if all(r.passed for r in results) else 1


def cmd_params(args) -> int:
    cfg = load_config(args.config)
    _print(derived_params(cfg).to_dict())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privlearn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("release", help="run a private release and score it")
    p.add_argument("config", type=Path)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--output-dir", type=Path, default=None)
    p.set_defaults(func=cmd_release)

    p = sub.add_parser("eval", help="re-score a saved synopsis")
    p.add_argument("config", type=Path)
    p.add_argument("synopsis", type=Path)
    p.add_argument("--database", type=Path, default=None, help="CSV database (default: regenerate from config)")
    p.add_argument("--errors", type=Path, default=None, help="write the per-query error table here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the property-verifier suites")
    p.add_argument("--suite", action="append", choices=sorted(SUITES), help="repeatable; default all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="default: PRIVLEARN_THREADS or 1")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("params", help="print derived parameters for a config")
    p.add_argument("config", type=Path)
    p.set_defaults(func=cmd_params)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for field, msg in exc.problems:
            print(f"config error: {field}: {msg}", file=sys.stderr)
        return 2
    except InsufficientDatabaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
