"""CSV and key=value file formats. Every writer is atomic (temp file + rename)."""

from __future__ import annotations

import csv
import io
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .grid import Field, UniformGrid

SNAPSHOT_RE = re.compile(r"^snap_(\d+)_t([0-9.]+)\.csv$")


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return atomic_write(path, buf.getvalue())


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    return rows[0], rows[1:]


# --- snapshots --------------------------------------------------------------

def snapshot_name(index: int, t: float) -> str:
    return f"snap_{index:05d}_t{t:.6f}.csv"


def write_snapshot(path, field: Field) -> Path:
    """Header ``i[,j],x[,y],u``, one row per cell in lexicographic order."""
    grid = field.grid
    if grid.ndim == 1:
        x = grid.centers(0)
        rows = ((i, x[i], field.values[i]) for i in range(grid.n[0]))
        return write_csv(path, ["i", "x", "u"], rows)
    x, y = grid.centers(0), grid.centers(1)
    rows = ((i, j, x[i], y[j], field.values[i, j])
            for i in range(grid.n[0]) for j in range(grid.n[1]))
    return write_csv(path, ["i", "j", "x", "y", "u"], rows)


def read_snapshot(path, grid: UniformGrid) -> Field:
    header, rows = read_csv(path)
    expected = ["i", "x", "u"] if grid.ndim == 1 else ["i", "j", "x", "y", "u"]
    if header != expected:
        raise ValueError(f"{path}: header {header} does not match {expected}")
    if len(rows) != grid.size:
        raise ValueError(f"{path}: {len(rows)} rows for a grid of {grid.size} cells")
    values = np.empty(grid.shape)
    for row in rows:
        idx = tuple(int(v) for v in row[: grid.ndim])
        values[idx] = float(row[-1])
    return Field(grid, values)


def read_snapshot_values(path) -> np.ndarray:
    """Values of a snapshot file shaped by its index columns, without a grid."""
    header, rows = read_csv(path)
    ndim = 1 if header == ["i", "x", "u"] else 2
    idx = np.array([[int(v) for v in r[:ndim]] for r in rows])
    shape = tuple(idx.max(axis=0) + 1)
    values = np.empty(shape)
    values[tuple(idx.T)] = [float(r[-1]) for r in rows]
    return values


def list_snapshots(directory) -> list[tuple[int, float, Path]]:
    out = []
    for p in Path(directory).iterdir():
        m = SNAPSHOT_RE.match(p.name)
        if m:
            out.append((int(m.group(1)), float(m.group(2)), p))
    return sorted(out)


# --- logs and reports -------------------------------------------------------

STEP_LOG_HEADER = ["step", "t", "dt", "min", "max", "mass"]
RESIDUAL_HEADER = ["functional", "k", "delta", "value", "limit", "tol", "verdict"]


def write_step_log(path, log: np.ndarray) -> Path:
    rows = ((int(r[0]), *r[1:]) for r in log)
    return write_csv(path, STEP_LOG_HEADER, rows)


def write_residuals(path, reports) -> Path:
    return write_csv(path, RESIDUAL_HEADER, (row for r in reports for row in r.rows()))


# --- key = value metadata ---------------------------------------------------

def _kv(v) -> str:
    # shortest round-tripping repr keeps metadata readable
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_kv(items: dict) -> str:
    lines = []
    for key, value in items.items():
        if isinstance(value, (list, tuple)):
            value = ", ".join(_kv(v) for v in value)
        lines.append(f"{key} = {_kv(value)}")
    return "\n".join(lines) + "\n"
