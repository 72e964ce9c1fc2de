"""The three figure kinds: tail fit, curvature trace, distance decay."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "yamabeflow"

import matplotlib.pyplot as plt
import numpy as np


class MissingArtifacts(FileNotFoundError):
    pass


def _require(run_dir: Path, names: list[str]) -> None:
    missing = [n for n in names if not (run_dir / n).exists()]
    if missing:
        raise MissingArtifacts(
            f"{run_dir}: missing {missing}; expected artifacts {names}")


def _read_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(x) if x not in ("", "nan") else math.nan for x in row]
                for row in reader]
    data = np.asarray(rows, dtype=float)
    return {name: data[:, j] for j, name in enumerate(header)}


def _read_json(path: Path) -> dict:
    with open(path) as f:
        return json.load(f)


def _save(fig, out_path: str | Path) -> list[Path]:
    """Emit PNG and SVG next to each other, timestamp-free."""
    out_path = Path(out_path)
    outs = []
    for suffix in (".png", ".svg"):
        p = out_path.with_suffix(suffix)
        fig.savefig(p, dpi=150, metadata={"Date": None} if suffix == ".svg"
                    else {"Software": None})
        outs.append(p)
    plt.close(fig)
    return outs


def plot_tail_fit(run_dir: str | Path, out_path: str | Path) -> list[Path]:
    """w(s) - A s against 1/s with the fitted K + C3/s line overlaid."""
    run_dir = Path(run_dir)
    _require(run_dir, ["profile.csv", "fit.json"])
    prof = _read_csv(run_dir / "profile.csv")
    fit = _read_json(run_dir / "fit.json")
    if "s" not in prof:
        raise ValueError(f"{run_dir}: tail-fit figure needs an s-profile")
    s = prof["s"]
    w = prof["value"]
    mask = s >= 2.0
    x = 1.0 / s[mask]
    y = w[mask] - fit["A"] * s[mask]

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot(x, y, lw=1.2, color="#1f77b4", label="w(s) - A s")
    xs = np.linspace(0, x.max(), 200)
    ax.plot(xs, fit["K"] + fit["C3"] * xs, "--", color="#d62728",
            label="K + C3/s")
    band = fit.get("residual", 0.0)
    ax.fill_between(xs, fit["K"] + fit["C3"] * xs - band,
                    fit["K"] + fit["C3"] * xs + band,
                    color="#d62728", alpha=0.15, lw=0)
    ax.set_xlabel("1/s")
    ax.set_ylabel("w - A s")
    ax.annotate(f"K = {fit['K']:.6g}\nC3 = {fit['C3']:.6g}\n"
                f"residual = {fit.get('residual', float('nan')):.2e}",
                xy=(0.03, 0.97), xycoords="axes fraction", va="top",
                fontsize=9,
                bbox=dict(boxstyle="round", fc="white", ec="0.7"))
    ax.legend(loc="lower right", fontsize=9)
    fig.tight_layout()
    return _save(fig, out_path)


def plot_trace(run_dir: str | Path, out_path: str | Path,
               mode: str = "auto") -> list[Path]:
    """Log-scale diagnostic traces with the verdict annotated.

    Plots every trace_res*.csv of a singularity run together (plus the
    control, when present); single-resolution input gets an "unverified"
    watermark.
    """
    run_dir = Path(run_dir)
    _require(run_dir, ["report.json"])
    report = _read_json(run_dir / "report.json")
    traces = sorted(run_dir.glob("trace_res*.csv"))
    if not traces:
        raise MissingArtifacts(
            f"{run_dir}: no trace_res*.csv; expected singularity artifacts")
    finite = (report.get("extinction_estimate") is not None
              if mode == "auto" else mode == "finite")
    col = "diagnostic" if finite else "max_R"

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for i, path in enumerate(traces):
        tr = _read_csv(path)
        ax.semilogy(tr["t"], tr[col], lw=1.2,
                    label=f"resolution {i}")
    control = run_dir / "trace_control.csv"
    if control.exists():
        tr = _read_csv(control)
        ax.semilogy(tr["t"], tr[col], lw=1.0, ls=":", color="0.4",
                    label="control")
    for w in report.get("windows", []):
        ax.axvspan(w[0], w[1], color="0.9", zorder=0)
    ax.set_xlabel("t")
    ax.set_ylabel("max R (T - t)" if finite else "max R")
    verdict = report.get("verdict", "?")
    factors = report.get("growth_factors", [])
    ax.set_title(f"verdict: {verdict}"
                 + (f", growth {[round(f, 1) for f in factors]}" if factors else ""),
                 fontsize=10)
    if len(traces) < 2:
        ax.text(0.5, 0.5, "unverified\n(single resolution)",
                transform=ax.transAxes, ha="center", va="center",
                fontsize=22, color="0.8", rotation=20, zorder=5)
    ax.legend(fontsize=9, loc="upper left")
    fig.tight_layout()
    return _save(fig, out_path)


def plot_convergence(run_dirs: list[str | Path],
                     out_path: str | Path) -> list[Path]:
    """Semilog distance decay with the e^((gamma - n beta) t) reference."""
    run_dirs = [Path(d) for d in run_dirs]
    betas = set()
    series = []
    for d in run_dirs:
        _require(d, ["distances.csv", "report.json"])
        rep = _read_json(d / "report.json")
        dist = _read_csv(d / "distances.csv")
        beta = rep.get("beta")
        betas.add(beta)
        col = "l1_gap" if "l1_gap" in dist else "l1_ball"
        series.append((d.name, dist["t"], dist[col], rep))
    if len(betas) > 1:
        raise ValueError(f"mismatched beta across inputs: {sorted(betas)}")

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    rate = None
    for name, t, y, rep in series:
        pos = y > 0
        ax.semilogy(t[pos], y[pos], marker="o", ms=3, lw=1.1, label=name)
        if rate is None and "predicted_exponent" in rep:
            rate = rep["predicted_exponent"]
    if rate is not None:
        t0 = series[0][1]
        y0 = series[0][2][0]
        ax.semilogy(t0, y0 * np.exp(rate * t0), "--", color="0.4",
                    label=f"e^({rate:g} t) reference")
    ax.set_xlabel("t")
    ax.set_ylabel("L1 distance")
    ax.legend(fontsize=9)
    fig.tight_layout()
    return _save(fig, out_path)
