"""Figures from yamabeflow run directories.

Reads only the documented CSV/JSON artifacts (profile.csv, fit.json,
distances.csv, trace_*.csv, report.json, manifest.json); never touches
solver internals.  Rendering is deterministic: fixed style, no embedded
timestamps, so re-plotting identical inputs is byte-identical.
"""

from .figures import plot_convergence, plot_tail_fit, plot_trace

__all__ = ["plot_tail_fit", "plot_trace", "plot_convergence"]
__version__ = "0.1.0"
