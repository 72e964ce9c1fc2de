"""Deterministic CSV/JSON artifact formats shared by the CLI and tests.

CSV: comma separated, '.' decimal point, one header row, LF endings,
floats rendered with shortest round-trip repr so identical inputs give
byte-identical files.  JSON: UTF-8, sorted keys, no NaN (fields are
dropped instead).
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .solitons import RadialProfile, SolitonParams, SolitonKind, derive_params

SCHEMA_VERSION = "1"


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path: str | Path, header: list[str], columns: list[np.ndarray]) -> Path:
    path = Path(path)
    if len(columns) != len(header):
        raise ValueError("header/column count mismatch")
    rows = zip(*columns)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(x) for x in row) + "\n")
    return path


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip().split(",")
        data = np.loadtxt(f, delimiter=",", ndmin=2, dtype=object)
    cols = np.empty((data.shape[1], data.shape[0]), dtype=object)
    for j in range(data.shape[1]):
        col = data[:, j]
        try:
            cols[j] = col.astype(float)
        except ValueError:
            cols[j] = col
    return header, cols


def _strip_non_finite(obj):
    if isinstance(obj, dict):
        return {k: _strip_non_finite(v) for k, v in obj.items()
                if not (v is None or (isinstance(v, float) and not math.isfinite(v)))}
    if isinstance(obj, (list, tuple)):
        return [_strip_non_finite(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_strip_non_finite(v) for v in obj.tolist()]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: str | Path, obj: dict) -> Path:
    path = Path(path)
    payload = _strip_non_finite(obj)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")
    return path


def read_json(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def params_to_dict(params: SolitonParams) -> dict:
    return {"n": params.n, "beta": params.beta, "lambda": params.lam,
            "kind": params.kind.value, "gamma": params.gamma, "m": params.m}


def params_from_dict(d: dict) -> SolitonParams:
    return derive_params(d["n"], d["beta"], d["lambda"], SolitonKind(d["kind"]))


def save_profile(profile: RadialProfile, csv_path: str | Path) -> tuple[Path, Path]:
    """Write a profile as coord,value,deriv CSV plus a params sidecar.

    The header names the coordinate kind (r or s) in its first column.
    """
    csv_path = Path(csv_path)
    write_csv(csv_path, [profile.coord_kind, "value", "deriv"],
              [profile.coords, profile.values, profile.deriv])
    sidecar = csv_path.with_suffix(".params.json")
    write_json(sidecar, params_to_dict(profile.params))
    return csv_path, sidecar


def load_profile(csv_path: str | Path) -> RadialProfile:
    csv_path = Path(csv_path)
    header, cols = read_csv(csv_path)
    if header[1:] != ["value", "deriv"] or header[0] not in ("r", "s"):
        raise ValueError(f"unrecognized profile header {header}")
    params = params_from_dict(read_json(csv_path.with_suffix(".params.json")))
    return RadialProfile(coords=cols[0].astype(float),
                         values=cols[1].astype(float),
                         deriv=cols[2].astype(float),
                         params=params, coord_kind=header[0])
