#!/usr/bin/env python3
"""Run the type I / type II dichotomy experiments and print the verdicts.

Full-scale runs take a few minutes; pass --scale 0.7 for a faster (less
certifiable) pass.
"""

import argparse

import numpy as np

from yamabeflow.experiments import (
    run_cylinder_control,
    run_finite_time_type2,
    run_infinite_time_type2,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scale", type=float, default=1.0)
    args = ap.parse_args()

    sc = lambda nodes: max(600, int(nodes * args.scale))

    cyl = run_cylinder_control()
    d = cyl.diagnostic()
    print(f"cylinder control: d(t) in [{d.min():.4f}, {d.max():.4f}] (type I)")

    fin = run_finite_time_type2(resolutions=(sc(2200), sc(3000)))
    print(f"finite-time capped cylinder: {fin.classification.verdict.value}, "
          f"growth {[round(f, 1) for f in fin.classification.growth_factors]}, "
          f"extinction at {fin.extinction_estimate:.4f}")

    inf = run_infinite_time_type2(resolutions=(sc(1600), sc(2200)))
    print(f"infinite-time slow tail: {inf.classification.verdict.value}, "
          f"growth {[round(f, 1) for f in inf.classification.growth_factors]}")


if __name__ == "__main__":
    main()
