"""Script entry: figure kind, run dir(s), output path."""

from __future__ import annotations

import argparse
import sys

from .figures import MissingArtifacts, plot_convergence, plot_tail_fit, plot_trace

KINDS = ("tail_fit", "trace", "convergence", "contraction")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="yamabeflow-plot",
        description="Render figures from yamabeflow run directories")
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("run_dirs", nargs="+", help="run director(ies)")
    ap.add_argument("out", help="output path stem (.png and .svg are written)")
    args = ap.parse_args(argv)

    try:
        if args.kind == "tail_fit":
            outs = plot_tail_fit(args.run_dirs[0], args.out)
        elif args.kind == "trace":
            outs = plot_trace(args.run_dirs[0], args.out)
        else:
            outs = plot_convergence(args.run_dirs, args.out)
    except (MissingArtifacts, ValueError) as e:
        print(str(e), file=sys.stderr)
        return 1
    for p in outs:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
