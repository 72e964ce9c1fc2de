#!/usr/bin/env python3
"""Produce one run of each figure-bearing kind and render the figures.

Requires the yamabeflow-plots package (see plots/ at the repository root).
"""

import argparse
import json
from pathlib import Path

from yamabeflow.cli import main as yamabeflow_main


def run(cfg, out):
    out = Path(out)
    cfg_path = out.with_suffix(".json")
    cfg_path.parent.mkdir(parents=True, exist_ok=True)
    cfg_path.write_text(json.dumps(cfg, indent=2))
    assert yamabeflow_main(["--config", str(cfg_path), "--out", str(out)]) == 0
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/figures")
    args = ap.parse_args()
    from yamabeflow_plots import plot_convergence, plot_tail_fit, plot_trace

    root = Path(args.out)
    soliton = run({"command": "soliton", "n": 3, "beta": 1.0, "lambda": 1.0,
                   "kind": "steady", "s_end": 120.0}, root / "soliton")
    contraction = run(
        {"command": "contraction", "n": 3, "beta": 1.0, "horizon": 3.0,
         "nodes": 700,
         "data_a": {"kind": "soliton_perturbed", "beta": 1.0,
                    "amplitude": 0.4, "support": [0.5, 2.5]},
         "data_b": {"kind": "soliton_perturbed", "beta": 1.0,
                    "amplitude": -0.3, "support": [1.0, 3.5]}},
        root / "contraction")
    singularity = run({"command": "singularity-finite", "T": 1.0, "C": 0.3},
                      root / "singularity")

    for p in plot_tail_fit(soliton, root / "fig_tail_fit"):
        print(p)
    for p in plot_convergence([contraction], root / "fig_contraction"):
        print(p)
    for p in plot_trace(singularity, root / "fig_trace"):
        print(p)


if __name__ == "__main__":
    main()
