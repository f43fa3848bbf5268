"""Command-line entry point: ``run``, ``sweep`` and ``check``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import warnings

from .harness import ConfigError, emit, load_spec, run_experiment

EXIT_OK, EXIT_TRIAL_ERROR, EXIT_CONFIG_ERROR = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="star-rsma",
                                 description="Max-min energy efficiency of STAR-RIS aided "
                                             "rate splitting with finite blocklengths.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="flat JSON experiment config")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, help="parallel trial workers")
        p.add_argument("--trials", type=int, help="override the trial count")
        p.add_argument("--timing", action="store_true", help="record wall time per row")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("run", help="run the experiment defined by a config"))
    sw = sub.add_parser("sweep", help="run a config over a parameter sweep")
    common(sw)
    sw.add_argument("--var", required=True, choices=("P_C", "n", "eps", "P"))
    sw.add_argument("--values", required=True, help="comma-separated increasing values")
    sub.add_parser("check", help="run the fast oracle checks and print a table")
    return ap


def _spec(args):
    spec = load_spec(args.config)
    changes = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be non-negative")
        spec = dataclasses.replace(spec, base=spec.base.replace(seed=args.seed))
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.timing:
        changes["timing"] = True
    if getattr(args, "var", None):
        try:
            values = tuple(float(v) for v in args.values.split(","))
        except ValueError as err:
            raise ConfigError(f"bad --values: {err}") from err
        changes.update(sweep_var=args.var, sweep_values=values)
    return dataclasses.replace(spec, **changes)


def _check() -> int:
    from .checks import run_checks
    results = run_checks()
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_TRIAL_ERROR


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.filterwarnings("ignore", module="cvxpy")
    if args.command == "check":
        return _check()
    try:
        spec = _spec(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    rows = run_experiment(spec)
    text = emit(rows, args.out, args.format, K=spec.base.K)
    if args.out is None:
        sys.stdout.write(text)
    failed = [r for r in rows if r.status.startswith("error")]
    for r in failed:
        print(f"trial {r.trial} {r.scheme}/{r.ris_mode} at {r.sweep_var}={r.sweep_value}: "
              f"{r.status}", file=sys.stderr)
    return EXIT_TRIAL_ERROR if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
