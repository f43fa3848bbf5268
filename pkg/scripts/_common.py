"""Shared plumbing for the experiment scripts."""
import argparse
import dataclasses
import sys
import warnings
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from star_rsma.harness import ExperimentSpec, emit, load_spec, run_experiment  # noqa: E402

warnings.filterwarnings("ignore", module="cvxpy")
DEFAULT_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "default.json"


def parser(description):
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--config", default=str(DEFAULT_CONFIG))
    ap.add_argument("--trials", type=int)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", help="CSV path (default: print a summary only)")
    return ap


def base_spec(args, **changes) -> ExperimentSpec:
    spec = load_spec(args.config)
    if args.trials:
        changes["trials"] = args.trials
    return dataclasses.replace(spec, workers=args.workers, **changes)


def summarize(spec: ExperimentSpec, rows, out=None):
    if out:
        emit(rows, out, K=spec.base.K)
    print(f"{spec.sweep_var:>8} " + " ".join(f"{s}/{m:>7}" for s in spec.schemes
                                              for m in spec.ris_modes))
    for v in spec.values:
        means = []
        for s in spec.schemes:
            for m in spec.ris_modes:
                ee = [r.min_ee_bits for r in rows
                      if r.sweep_value == v and r.scheme == s and r.ris_mode == m]
                means.append(f"{np.nanmean(ee):>{len(s) + 8}.4f}")
        print(f"{v:>8g} " + " ".join(means))


def run_sweep(var, values, description):
    args = parser(description).parse_args()
    spec = base_spec(args, sweep_var=var, sweep_values=tuple(values))
    rows = run_experiment(spec)
    print("mean max-min EE in bits per channel use per watt")
    summarize(spec, rows, args.out)
