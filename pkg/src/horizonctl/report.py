"""Delimited report files and plain-text field dumps.

Every CSV starts with the fixed header
``run_id,check_or_metric,value,threshold,status,condition`` and all floats
are printed with 17 significant digits so repeated runs with the same seed
are byte-identical and dumped values round-trip exactly.
"""

from __future__ import annotations

import math
import os

import numpy as np

CSV_HEADER = "run_id,check_or_metric,value,threshold,status,condition"


def fmt(value) -> str:
    """17-significant-digit text for floats; plain text otherwise."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return ""
        return f"{v:.17g}"
    return str(value)


def rows_to_csv(run_id: str, rows) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join([run_id, r.name, fmt(r.value), fmt(r.threshold),
                               r.status, r.condition]))
    return "\n".join(lines) + "\n"


def metrics_to_rows(pairs, condition: str):
    """Build metric-style rows from (name, value) pairs."""
    from .verify import CheckRow
    return [CheckRow(name, float(value), np.nan, "metric", condition)
            for name, value in pairs]


def write_csv(path: str, run_id: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(rows_to_csv(run_id, rows))


def write_field_dump(path: str, grid, tg, quantity: str, values) -> None:
    """Node-value table with the 4-line header: grid dims, T, M, quantity."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    shape = "x".join(str(s) for s in grid.shape)
    extents = "x".join(fmt(e) for e in grid.extents)
    with open(path, "w") as fh:
        fh.write(f"# grid: dim={grid.dim} shape={shape} extents={extents}\n")
        fh.write(f"# T: {fmt(tg.T)}\n")
        fh.write(f"# M: {tg.M}\n")
        fh.write(f"# quantity: {quantity}\n")
        for row in values:
            fh.write(" ".join(fmt(v) for v in row) + "\n")


def read_field_dump(path: str) -> np.ndarray:
    """Read back the value table of a field dump (header ignored)."""
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            rows.append([float(tok) for tok in line.split()])
    return np.asarray(rows)


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
