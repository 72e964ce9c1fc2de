"""Command-line entry point: config-driven runs with reproducible artifacts.

Each run reads a JSON config, writes CSV/JSON artifacts plus a manifest
with content digests into its own directory, and returns a CI-friendly
exit code: 0 ok, 2 config error, 3 solver failure, 4 inconclusive verdict
under --strict.  Identical configs produce byte-identical data artifacts;
wall-clock timing lives only in the manifest.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, artifacts, experiments, flow, solitons
from .artifacts import (
    SCHEMA_VERSION,
    file_digest,
    read_json,
    save_profile,
    write_csv,
    write_json,
)
from .experiments import (
    DataKind,
    InitialDataSpec,
    Verdict,
    drifting_bc_for,
    make_initial_data,
    run_contraction,
    run_convergence,
    run_finite_time_type2,
    run_infinite_time_type2,
    verify_barrier,
)
from .flow import TimeController, evolve, graded_grid, scalar_curvature
from .solitons import (
    SolitonKind,
    derive_params,
    fit_shrinker_tail,
    fit_steady_asymptotics,
    integrate_radial,
    integrate_steady_cylindrical,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INCONCLUSIVE = 4

COMMANDS = ("soliton", "evolve", "converge", "contraction", "barrier",
            "singularity-finite", "singularity-infinite", "sweep")


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class ExperimentConfig:
    command: str
    params: dict
    ladder: list # resolutions, command-dependent meaning
    jobs: list = field(default_factory=list)  # sweep only

    def describe(self) -> dict:
        out = {"command": self.command, **self.params}
        if self.ladder:
            out["ladder"] = self.ladder
        if self.jobs:
            out["jobs"] = self.jobs
        return out


_SCHEMAS = {
    "soliton": {
        "n": (int, lambda v: v >= 3, "integer >= 3"),
        "beta": (float, lambda v: v > 0, "positive"),
        "lambda": (float, lambda v: v > 0, "positive"),
        "kind": (str, lambda v: v in ("steady", "shrinker"),
                 "one of steady|shrinker"),
        "s_end?": (float, lambda v: v > 1, "> 1"),
        "r_max?": (float, lambda v: v > 1, "> 1"),
        "tol?": (float, lambda v: 0 < v < 1e-2, "in (0, 1e-2)"),
    },
    "evolve": {
        "n": (int, lambda v: v >= 3, "integer >= 3"),
        "data": (dict, lambda v: True, "initial data spec"),
        "horizon": (float, lambda v: v > 0, "positive"),
        "nodes?": (int, lambda v: v >= 32, ">= 32"),
        "r_max?": (float, lambda v: v > 1, "> 1"),
        "snapshots?": (list, lambda v: all(t > 0 for t in v), "positive times"),
        "target_rel_change?": (float, lambda v: v > 0, "positive"),
    },
    "converge": {
        "n": (int, lambda v: v >= 3, "integer >= 3"),
        "beta": (float, lambda v: v > 0, "positive"),
        "data": (dict, lambda v: True, "initial data spec"),
        "horizon": (float, lambda v: v > 0, "positive"),
        "ball_radius?": (float, lambda v: v > 0, "positive"),
        "nodes?": (int, lambda v: v >= 64, ">= 64"),
    },
    "contraction": {
        "n": (int, lambda v: v >= 3, "integer >= 3"),
        "beta": (float, lambda v: v > 0, "positive"),
        "data_a": (dict, lambda v: True, "initial data spec"),
        "data_b": (dict, lambda v: True, "initial data spec"),
        "horizon": (float, lambda v: v > 0, "positive"),
        "ball_radius?": (float, lambda v: v > 0, "positive"),
        "nodes?": (int, lambda v: v >= 64, ">= 64"),
    },
    "barrier": {
        "n": (int, lambda v: v >= 3, "integer >= 3"),
        "beta": (float, lambda v: v > 0, "positive"),
        "lambda": (float, lambda v: v > 0, "positive"),
        "h": (float, lambda v: v > 0, "positive"),
    },
    "singularity-finite": {
        "n?": (int, lambda v: v >= 3, "integer >= 3"),
        "T": (float, lambda v: v > 0, "positive"),
        "C": (float, lambda v: v > 0, "positive"),
    },
    "singularity-infinite": {
        "n?": (int, lambda v: v >= 3, "integer >= 3"),
        "horizon": (float, lambda v: v > 0, "positive"),
    },
    "sweep": {},
}

_DATA_KINDS = {k.value for k in DataKind}


def _validate_data_spec(d: dict, where: str, errors: list):
    if not isinstance(d, dict):
        errors.append(f"{where}: must be an object")
        return
    kind = d.get("kind")
    if kind not in _DATA_KINDS:
        errors.append(f"{where}.kind: must be one of {sorted(_DATA_KINDS)}")


def parse_config(text: str) -> ExperimentConfig:
    """Validate a JSON config; reports every schema error, not just the first."""
    errors = []
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([f"malformed JSON: {e}"])
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be an object"])
    command = raw.get("command")
    if command not in COMMANDS:
        raise ConfigError(
            [f"command: must be one of {COMMANDS}, got {command!r}"])
    schema = _SCHEMAS[command]
    params = {}
    ladder = raw.get("ladder", [])
    if ladder and (not isinstance(ladder, list)
                   or not all(isinstance(x, int) and x >= 32 for x in ladder)):
        errors.append("ladder: must be a list of integers >= 32")
    known = {k.rstrip("?") for k in schema} | {"command", "ladder"}
    jobs = []
    if command == "sweep":
        jobs = raw.get("jobs")
        known |= {"jobs"}
        if not isinstance(jobs, list) or not jobs:
            errors.append("sweep.jobs: must be a nonempty list of configs")
            jobs = []
        else:
            for i, job in enumerate(jobs):
                try:
                    parse_config(json.dumps(job))
                except ConfigError as e:
                    errors.extend(f"jobs[{i}].{msg}" for msg in e.errors)
    for key in raw:
        if key not in known:
            errors.append(f"unknown key {key!r} for command {command}")
    for key, (typ, pred, desc) in schema.items():
        optional = key.endswith("?")
        name = key.rstrip("?")
        if name not in raw:
            if not optional:
                errors.append(f"{name}: required for command {command}")
            continue
        val = raw[name]
        if typ is float and isinstance(val, int) and not isinstance(val, bool):
            val = float(val)
        if not isinstance(val, typ) or isinstance(val, bool):
            errors.append(f"{name}: expected {typ.__name__}, got {val!r}")
            continue
        if not pred(val):
            errors.append(f"{name}: must be {desc}, got {val!r}")
            continue
        params[name] = val
    for dkey in ("data", "data_a", "data_b"):
        if dkey in params:
            _validate_data_spec(params[dkey], dkey, errors)
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(command=command, params=params,
                            ladder=list(ladder), jobs=jobs or [])


def _data_spec_from_dict(n: int, d: dict) -> InitialDataSpec:
    kind = DataKind(d["kind"])
    kw = {k: v for k, v in d.items() if k != "kind"}
    if kind is DataKind.SOLITON_PERTURBED:
        return experiments.soliton_perturbed(
            n, kw["beta"], kw.get("lambda", 1.0), kw.get("amplitude", 0.0),
            tuple(kw.get("support", (0.5, 3.0))))
    if kind is DataKind.LOG_TAIL:
        return experiments.log_tail(n, kw["beta"], kw["K"],
                                    kw.get("r_cap", math.e ** 2))
    if kind is DataKind.SLOW_LOG_TAIL:
        return experiments.slow_log_tail(n, kw.get("r_cap", math.e))
    if kind is DataKind.CYLINDER_CAPPED:
        return experiments.cylinder_capped(n, kw["T"], kw["C"],
                                           kw.get("r_cap", math.e ** 2))
    if kind is DataKind.CYLINDRICAL_END:
        return experiments.cylindrical_end(n, kw["beta"], kw.get("lambda", 1.0),
                                           kw["center"], kw["width"])
    raise ConfigError([f"data kind {kind} not runnable from the CLI"])


def _scaled(nodes: int, scale: float) -> int:
    return max(64, int(round(nodes * scale)))


# ---------------------------------------------------------------------------
# Command implementations (each returns a dict summary + writes artifacts)


def _cmd_soliton(cfg, out, scale):
    p = derive_params(cfg.params["n"], cfg.params["beta"],
                      cfg.params["lambda"], SolitonKind(cfg.params["kind"]))
    tol = cfg.params.get("tol", 1e-11)
    summary = {}
    if p.kind is SolitonKind.STEADY:
        s_end = cfg.params.get("s_end", 120.0)
        prof = integrate_steady_cylindrical(p, s_end=s_end, tol=tol)
        fit = fit_steady_asymptotics(prof)
        fit_out = {"A": fit.A, "K": fit.K, "C3": fit.C3,
                   "residual": fit.residual,
                   "normalized_tail_constant": fit.normalized_tail_constant,
                   "window": list(fit.fit_window)}
        summary["fit"] = fit_out
    else:
        r_max = cfg.params.get("r_max", math.exp(40.0))
        prof = integrate_radial(p, r_max=r_max, tol=tol)
        fit = fit_shrinker_tail(prof)
        fit_out = {"B": fit.B, "gamma_decay": fit.gamma_decay,
                   "residual": fit.residual, "window": list(fit.fit_window)}
        summary["fit"] = fit_out
    save_profile(prof, out / "profile.csv")
    write_json(out / "fit.json", {"schema": SCHEMA_VERSION, **fit_out})
    return summary


def _write_snapshots(out, traj, grid):
    ts, rs, us, Rs = [], [], [], []
    for s in traj.states:
        R = scalar_curvature(s)
        ts.append(np.full(grid.size, s.t))
        rs.append(grid.r)
        us.append(s.u)
        Rs.append(R.values)
    write_csv(out / "snapshots.csv", ["t", "r", "u", "R"],
              [np.concatenate(ts), np.concatenate(rs),
               np.concatenate(us), np.concatenate(Rs)])
    write_csv(out / "trace.csv", ["t", "max_R", "argmax_r", "max_u", "dt"],
              [traj.step_times, traj.step_max_R,
               traj.step_argmax_r if traj.step_argmax_r is not None
               else np.full(len(traj.step_times), np.nan),
               traj.step_max_u, traj.step_dt])


def _cmd_evolve(cfg, out, scale):
    n = cfg.params["n"]
    spec = _data_spec_from_dict(n, cfg.params["data"])
    r_max = cfg.params.get("r_max", math.exp(12.0))
    nodes = _scaled(cfg.params.get("nodes", 2048), scale)
    bc = drifting_bc_for(spec, r_max)
    grid = graded_grid(n, r_max=r_max, nodes=nodes, bc_outer=bc)
    state = make_initial_data(spec, grid)
    ctrl = TimeController(
        target_rel_change=cfg.params.get("target_rel_change", 1e-3))
    horizon = cfg.params["horizon"]
    snaps = cfg.params.get("snapshots", list(np.linspace(horizon / 4, horizon, 4)))
    traj = evolve(state, horizon, ctrl, snapshot_times=snaps)
    _write_snapshots(out, traj, grid)
    summary = {"extinction_time": traj.extinction_time,
               "tail_extinct_time": traj.tail_extinct_time,
               "steps": int(len(traj.step_times)),
               "grid": {"nodes": int(grid.size), "r_max": float(grid.r[-1]),
                        "bc_outer": type(grid.bc_outer).__name__},
               "controller": {"target_rel_change": ctrl.target_rel_change,
                              "newton_tol": ctrl.newton_tol,
                              "extinction_floor": ctrl.extinction_floor}}
    write_json(out / "report.json", {"schema": SCHEMA_VERSION, **summary})
    return summary


def _cmd_converge(cfg, out, scale):
    n = cfg.params["n"]
    spec = _data_spec_from_dict(n, cfg.params["data"])
    rep = run_convergence(spec, beta=cfg.params["beta"],
                          horizon=cfg.params["horizon"],
                          ball_radius=cfg.params.get("ball_radius", 5.0),
                          nodes=_scaled(cfg.params.get("nodes", 1600), scale))
    write_csv(out / "distances.csv", ["t", "l1_ball", "sup_ball"],
              [rep.times, rep.l1_ball, rep.sup_ball])
    summary = {"monotone": rep.monotone,
               "reduction_factor": rep.reduction_factor,
               "target_lambda": rep.target_lam,
               "ball_radius": rep.ball_radius,
               "beta": cfg.params["beta"]}
    write_json(out / "report.json", {"schema": SCHEMA_VERSION, **summary})
    return summary


def _cmd_contraction(cfg, out, scale):
    n = cfg.params["n"]
    spec_a = _data_spec_from_dict(n, cfg.params["data_a"])
    spec_b = _data_spec_from_dict(n, cfg.params["data_b"])
    rep = run_contraction(spec_a, spec_b, beta=cfg.params["beta"],
                          horizon=cfg.params["horizon"],
                          ball_radius=cfg.params.get("ball_radius", 12.0),
                          nodes=_scaled(cfg.params.get("nodes", 900), scale))
    write_csv(out / "distances.csv", ["t", "l1_gap", "envelope"],
              [rep.times, rep.gaps, rep.envelope])
    summary = {"within_envelope": rep.within_envelope,
               "decay_exponent_fit": rep.decay_exponent_fit,
               "predicted_exponent": rep.predicted_exponent,
               "beta": cfg.params["beta"]}
    write_json(out / "report.json", {"schema": SCHEMA_VERSION, **summary})
    return summary


def _cmd_barrier(cfg, out, scale):
    p = derive_params(cfg.params["n"], cfg.params["beta"],
                      cfg.params["lambda"], SolitonKind.STEADY)
    rep = verify_barrier(p, cfg.params["h"])
    summary = {"h": rep.h, "window": list(rep.window),
               "super_violations": rep.super_violations,
               "sub_violations": rep.sub_violations,
               "sub_collar_delta": rep.sub_collar_delta,
               "working_bound_ok": rep.working_bound_ok,
               "min_certifying_h": rep.min_certifying_h}
    write_json(out / "report.json", {"schema": SCHEMA_VERSION, **summary})
    return summary


def _trace_csv(out, name, trace):
    write_csv(out / name, ["t", "max_R", "diagnostic"],
              [trace.times, trace.max_R, trace.diagnostic()])


def _cmd_singularity(cfg, out, scale, mode):
    if mode == "finite":
        ladder = tuple(cfg.ladder) if cfg.ladder else (2200, 3000)
        ladder = tuple(_scaled(x, scale) for x in ladder)
        rep = run_finite_time_type2(T=cfg.params["T"], C=cfg.params["C"],
                                    n=cfg.params.get("n", 3),
                                    resolutions=ladder)
    else:
        ladder = tuple(cfg.ladder) if cfg.ladder else (1600, 2200)
        ladder = tuple(_scaled(x, scale) for x in ladder)
        rep = run_infinite_time_type2(horizon=cfg.params["horizon"],
                                      n=cfg.params.get("n", 3),
                                      resolutions=ladder)
    for i, tr in enumerate(rep.traces):
        _trace_csv(out, f"trace_res{i}.csv", tr)
    if rep.control_trace is not None:
        _trace_csv(out, "trace_control.csv", rep.control_trace)
    cls = rep.classification
    summary = {"verdict": cls.verdict.value,
               "growth_factors": list(cls.growth_factors),
               "windows": [list(w) for w in cls.windows],
               "monotone": list(cls.monotone),
               "resolution_consistent": cls.resolution_consistent,
               "extinction_estimate": rep.extinction_estimate,
               "control_ok": rep.control_ok,
               "lower_bound_ok": rep.lower_bound_ok,
               "ladder": list(ladder)}
    write_json(out / "report.json", {"schema": SCHEMA_VERSION, **summary})
    return summary


def run_job(config: ExperimentConfig, out_dir: str | Path,
            resolution_scale: float = 1.0) -> dict:
    """Execute one config into out_dir; returns the summary dict.

    The manifest is written last: its presence marks a complete run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    dispatch = {
        "soliton": _cmd_soliton,
        "evolve": _cmd_evolve,
        "converge": _cmd_converge,
        "contraction": _cmd_contraction,
        "barrier": _cmd_barrier,
        "singularity-finite": lambda c, o, s: _cmd_singularity(c, o, s, "finite"),
        "singularity-infinite": lambda c, o, s: _cmd_singularity(c, o, s, "infinite"),
    }
    summary = dispatch[config.command](config, out, resolution_scale)
    files = sorted(p.name for p in out.iterdir()
                   if p.is_file() and p.name != "manifest.json")
    manifest = {
        "schema": SCHEMA_VERSION,
        "tool_version": __version__,
        "config": config.describe(),
        "wall_clock_s": time.time() - t0,
        "files": {name: file_digest(out / name) for name in files},
        "summary": summary,
    }
    write_json(out / "manifest.json", manifest)
    return summary


def _sweep_worker(args):
    job_json, job_dir, scale = args
    cfg = parse_config(job_json)
    summary = run_job(cfg, job_dir, scale)
    return job_dir, summary


def run_sweep(config: ExperimentConfig, out_dir: str | Path,
              parallel: int = 1, resolution_scale: float = 1.0) -> list:
    """Run sweep jobs in jobs/NNN subdirectories plus a merged summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(json.dumps(job), str(out / "jobs" / f"{i:03d}"), resolution_scale)
             for i, job in enumerate(config.jobs)]
    results = []
    if parallel > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=parallel) as ex:
            results = list(ex.map(_sweep_worker, tasks))
    else:
        results = [_sweep_worker(t) for t in tasks]
    table, corrupt = merge_sweep([d for d, _ in results],
                                 out / "summary.csv")
    manifest = {
        "schema": SCHEMA_VERSION,
        "tool_version": __version__,
        "config": config.describe(),
        "files": {"summary.csv": file_digest(out / "summary.csv")},
        "jobs": [str(Path(d).relative_to(out)) for d, _ in results],
        "corrupt": corrupt,
    }
    write_json(out / "manifest.json", manifest)
    return results, corrupt


_SUMMARY_KEYS = ("n", "beta", "lambda", "K", "C3", "A", "residual",
                 "B", "gamma_decay", "verdict", "reduction_factor",
                 "within_envelope", "monotone")


def merge_sweep(dirs, out_path: str | Path):
    """Merge run directories into one summary table.

    Runs without a manifest are incomplete and listed as corrupt; digest
    mismatches likewise.  Returns (rows, corrupt_list).
    """
    rows = []
    corrupt = []
    for d in dirs:
        d = Path(d)
        man_path = d / "manifest.json"
        if not man_path.exists():
            corrupt.append((str(d), "missing manifest"))
            continue
        man = read_json(man_path)
        bad = False
        for name, digest in man.get("files", {}).items():
            p = d / name
            if not p.exists() or file_digest(p) != digest:
                corrupt.append((str(d), f"digest mismatch: {name}"))
                bad = True
                break
        if bad:
            continue
        cfg = man.get("config", {})
        summary = man.get("summary", {})
        flat = {**cfg, **summary, **summary.get("fit", {})}
        row = {"dir": str(d), "command": cfg.get("command", "")}
        for key in _SUMMARY_KEYS:
            if key in flat:
                row[key] = flat[key]
        rows.append(row)
    out_path = Path(out_path)
    keys = ["dir", "command"] + [k for k in _SUMMARY_KEYS
                                 if any(k in r for r in rows)]
    cols = [np.array([str(r.get(k, "")) for r in rows], dtype=object)
            for k in keys]
    if rows:
        write_csv(out_path, keys, cols)
    else:
        with open(out_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(",".join(["dir", "command"]) + "\n")
    return rows, corrupt


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="yamabeflow",
        description="Config-driven numerical experiments on the "
                    "conformally flat Yamabe flow")
    ap.add_argument("--config", required=True, help="JSON config path")
    ap.add_argument("--out", required=True, help="output run directory")
    ap.add_argument("--parallel", type=int, default=1,
                    help="sweep worker count")
    ap.add_argument("--strict", action="store_true",
                    help="exit 4 on an Inconclusive verdict")
    ap.add_argument("--resolution-scale", type=float, default=1.0,
                    help="scale factor applied to node counts")
    args = ap.parse_args(argv)

    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as e:
        print(f"config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
    except ConfigError as e:
        for msg in e.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if cfg.command == "sweep":
            _, corrupt = run_sweep(cfg, args.out, parallel=args.parallel,
                                   resolution_scale=args.resolution_scale)
            if corrupt:
                for d, why in corrupt:
                    print(f"corrupt run {d}: {why}", file=sys.stderr)
                return EXIT_SOLVER
            summary = {}
        else:
            summary = run_job(cfg, args.out,
                              resolution_scale=args.resolution_scale)
    except (solitons.DomainError, ConfigError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (flow.SolverError, solitons.IntegrationError, solitons.FitError) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER

    if args.strict and summary.get("verdict") == Verdict.INCONCLUSIVE.value:
        print("inconclusive verdict under --strict", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
