"""Diff-stable artifact writers: fixed 17-significant-digit numbers everywhere."""

import json
from pathlib import Path

import numpy as np

from .field_model import GridDomain


def fmt(value) -> str:
    """Canonical text for a number: 17 significant digits for floats."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    raise TypeError(f"not a number: {value!r}")


def dump_json(obj) -> str:
    """Serialize to JSON with fixed float formatting and stable key order."""
    return _json_value(obj, indent=0) + "\n"


def _json_value(obj, indent: int) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_, int, np.integer, float, np.floating)):
        return fmt(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(k))}: {_json_value(v, indent + 1)}" for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        flat = all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq)
        if flat:
            return "[" + ", ".join(_json_value(v, indent + 1) for v in seq) + "]"
        items = [f"{inner}{_json_value(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj)}")


def write_csv(path, header: list[str], rows):
    """CSV with canonical numeric formatting; strings pass through."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_grid_csv(path, domain: GridDomain, values):
    """Row-major per-cell grid dump with an x,y,value header."""
    centers = domain.cell_centers
    values = np.asarray(values)
    rows = ((centers[i, 0], centers[i, 1], values[i]) for i in range(domain.n_cells))
    write_csv(path, ["x", "y", "value"], rows)


def write_pgm(path, grid: np.ndarray, lo: float | None = None, hi: float | None = None):
    """ASCII PGM (P2) of a 2D grid, linearly scaled to [0, 255]."""
    grid = np.asarray(grid, dtype=float)
    lo = float(np.min(grid)) if lo is None else lo
    hi = float(np.max(grid)) if hi is None else hi
    if hi <= lo:
        scaled = np.zeros_like(grid, dtype=int)
    else:
        scaled = np.clip(np.rint((grid - lo) / (hi - lo) * 255.0), 0, 255).astype(int)
    h, w = scaled.shape
    lines = ["P2", f"{w} {h}", "255"]
    lines.extend(" ".join(str(v) for v in row) for row in scaled)
    Path(path).write_text("\n".join(lines) + "\n")
