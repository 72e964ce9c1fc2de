#!/usr/bin/env python3
"""Sweep soliton tail fits over (n, beta) and print the fitted constants.

Writes a standard sweep run directory (jobs + summary.csv) under the
given output root, exercising the same CLI machinery as
`yamabeflow --config ... --out ...`.
"""

import argparse
import json
from pathlib import Path

from yamabeflow.cli import parse_config, run_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/soliton_sweep")
    ap.add_argument("--parallel", type=int, default=2)
    args = ap.parse_args()

    jobs = [{"command": "soliton", "n": n, "beta": beta, "lambda": 1.0,
             "kind": "steady", "s_end": 120.0}
            for n in (3, 4, 5, 6, 8) for beta in (0.5, 1.0, 2.0)]
    cfg = parse_config(json.dumps({"command": "sweep", "jobs": jobs}))
    run_sweep(cfg, args.out, parallel=args.parallel)
    print(Path(args.out) / "summary.csv")


if __name__ == "__main__":
    main()
