"""Artifact writers: field dumps, tables, summaries and run manifests.

CSV files carry only deterministic data (no timings) so that identical
inputs give byte-identical tables; wall times live in the JSON summaries
and the manifest.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from .errors import UsageError
from .grid import CELL, FACE, Field, dump_field, field_from_csv, field_to_csv, load_field

MANIFEST = "manifest.json"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, header, rows) -> Path:
    """CSV with a header row; floats via ``repr`` for exact round trips."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_table(path) -> dict:
    """Columns of a numeric CSV table as float arrays."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


def write_fields(out_dir, fields: dict, formats=("csv",)) -> list:
    """Write ``name -> Field`` as ``name.csv`` and/or ``name.bin``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, fld in fields.items():
        if "csv" in formats:
            written.append(field_to_csv(fld, out_dir / f"{name}.csv"))
        if "bin" in formats:
            written.append(dump_field(fld, out_dir / f"{name}.bin"))
    return written


def read_field(directory, name, kind, d=1) -> Field:
    """Load ``name.bin`` if present, else ``name.csv``."""
    directory = Path(directory)
    binary, text = directory / f"{name}.bin", directory / f"{name}.csv"
    if binary.is_file():
        fld = load_field(binary)
        if fld.kind != kind:
            raise UsageError(f"{binary}: expected a {kind} field, found {fld.kind}")
        return fld
    if text.is_file():
        return field_from_csv(text, kind, d)
    raise UsageError(f"no {name}.bin or {name}.csv in {directory}")


def read_solution(directory, d=1):
    """(u, m, w, du or None) from a solution directory; grids must agree."""
    u = read_field(directory, "u", CELL, d)
    m = read_field(directory, "m", CELL, d)
    w = read_field(directory, "w", FACE, d)
    du = None
    if (Path(directory) / "du.csv").is_file() or (Path(directory) / "du.bin").is_file():
        du = read_field(directory, "du", FACE, d)
    grids = {f.grid for f in (u, m, w, du) if f is not None}
    if len(grids) != 1:
        sizes = sorted({g.n for g in grids})
        raise UsageError(f"solution files in {directory} live on different grids (n = {sizes})")
    return u, m, w, du


def sweep_rows(ergodic):
    header = ["epsilon", "lambda_est", "gap", "relative_gap", "m_change_l1", "u_change_sup",
              "eps_integral_u", "h1_norm_m", "iterations"]
    rows = [[r.epsilon, r.lambda_estimate, r.gap, r.relative_gap, r.m_change_l1, r.u_change_sup,
             r.eps_integral_u, r.h1_norm_m, r.iterations] for r in ergodic.sweep]
    return header, rows


def write_sweep_table(path, ergodic) -> Path:
    return write_table(path, *sweep_rows(ergodic))


def write_mask(path, grid, mask) -> Path:
    """Cell coordinates plus a 0/1 column."""
    x = grid.cell_centers().reshape(-1, grid.d)
    flags = np.asarray(mask, bool).reshape(-1).astype(int)
    names = ["x", "y"][: grid.d]
    return write_table(path, names + ["mask"], [list(xy) + [f] for xy, f in zip(x, flags)])


def versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"python": sys.version.split()[0], "numpy": np.__version__, "scipy": scipy.__version__,
            "discount_mfg": pkg, "platform": platform.platform()}


def write_manifest(out_dir, config, command, wall_time, files=(), extra=None) -> Path:
    """``manifest.json`` with the config hash, library versions and wall time."""
    out_dir = Path(out_dir)
    data = {
        "command": command,
        "config_hash": config.config_hash(),
        "config": config.to_dict(),
        "versions": versions(),
        "wall_time": wall_time,
        "files": sorted(Path(f).name for f in files),
    }
    if extra:
        data.update(extra)
    return write_json(out_dir / MANIFEST, data)
