"""Deterministic JSON / CSV writers and readers (floats at 17 significant digits)."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .basis import EigenBasis
from .errors import ValidationError
from .galerkin import SpectralTrajectory, TimeGrid

FLOAT_FMT = "%.17g"


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = FLOAT_FMT % x
    if not any(c in s for c in ".eEn"):
        s += ".0"
    return s


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with sorted keys and every float printed with 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in sorted(obj.items())
        ]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        return "[" + ", ".join(dumps(v, indent, _level + 1) for v in seq) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if obj is None:
        return "null"
    return json.dumps(obj)


def write_json(path: Path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def write_matrix_csv(path: Path, header, rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.atleast_2d(rows):
            w.writerow([_fmt_float(float(v)) for v in row])


def read_matrix_csv(path: Path, header: bool = True) -> tuple[list[str] | None, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head = rows.pop(0) if header else None
    data = np.array([[float(v) for v in r] for r in rows if r], dtype=float)
    return head, data


def write_trajectory_csv(path: Path, traj: SpectralTrajectory) -> None:
    """Columns ``t, u_1, ..., u_N``; one row per time node."""
    n = traj.coeffs.shape[0]
    header = ["t"] + [f"u_{j}" for j in range(1, n + 1)]
    write_matrix_csv(path, header, np.column_stack([traj.times, traj.coeffs.T]))


def read_trajectory_csv(path: Path, basis: EigenBasis, time_grid: TimeGrid) -> SpectralTrajectory:
    header, data = read_matrix_csv(path)
    if header[0] != "t" or data.shape[1] != basis.n_modes + 1:
        raise ValidationError(f"{path} is not a trajectory CSV for {basis.n_modes} modes")
    start = time_grid.index_of(data[0, 0])
    return SpectralTrajectory(data[:, 1:].T.copy(), basis, time_grid, start)


def write_field_csv(path: Path, x: np.ndarray, t: np.ndarray, values: np.ndarray) -> None:
    """Long format ``x, t, u`` with x varying fastest."""
    xx, tt = np.meshgrid(x, t, indexing="ij")
    rows = np.column_stack([xx.T.reshape(-1), tt.T.reshape(-1), values.T.reshape(-1)])
    write_matrix_csv(path, ["x", "t", "u"], rows)
