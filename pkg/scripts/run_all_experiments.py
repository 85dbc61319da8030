#!/usr/bin/env python3
"""Run every bundled scenario config and collect results under results/.

Usage:
    python scripts/run_all_experiments.py [--trials N] [--workers N]

Each experiment writes results/<name>/results.csv (per-trial SINR rows)
and results/<name>/summary.json (medians, 90%-guaranteed SINR, failure
rates, CDF support points). Pass --trials to shorten the runs; the full
2000-trial defaults take a few minutes in total.
"""

import argparse
import sys
from pathlib import Path

from dmimo.cli import main as dmimo_main

EXPERIMENTS = [
    "full_coordination_k5",
    "distributed_k5",
    "distributed_k10",
    "estimation_error_sweep_k5",
    "estimation_error_sweep_k10",
    "clustering_k10",
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--out", default="results")
    args = parser.parse_args()

    root = Path(__file__).resolve().parent.parent
    for name in EXPERIMENTS:
        config = root / "configs" / f"{name}.yaml"
        out = Path(args.out) / name
        print(f"=== {name} ===")
        cli_args = ["simulate", "--config", str(config), "--out", str(out)]
        if args.trials is not None:
            cli_args += ["--trials", str(args.trials)]
        if args.workers is not None:
            cli_args += ["--workers", str(args.workers)]
        code = dmimo_main(cli_args)
        if code != 0:
            print(f"experiment {name} failed with exit code {code}", file=sys.stderr)
            return code
    print(f"\nall experiments done; results under {args.out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
