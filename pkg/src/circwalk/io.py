"""Trajectory CSV files and atomic output writes.

Schema: a header row with ``t``, ``y`` (heading), ``d`` (step length) and,
per target ``<name>``, a pair of columns ``x_<name>`` (bearing) and
``z_<name>`` (weight). Optional ``easting``/``northing`` columns hold the
positions at the start of each step; optional ``state`` holds a 1-based true
state label. Angles are radians unless the degrees flag is set; headings are
written in [0, 2 pi).
"""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .circular import TWO_PI
from .errors import DataError
from .model import Trajectory


@contextmanager
def atomic_write(path, mode: str = "w"):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    with atomic_write(path) as fh:
        json.dump(obj, fh, indent=2, allow_nan=True)
        fh.write("\n")


def write_text(path, text: str) -> None:
    with atomic_write(path) as fh:
        fh.write(text if text.endswith("\n") else text + "\n")


def write_rows(path, header, rows) -> None:
    with atomic_write(path) as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


@dataclass
class TrajectoryData:
    trajectory: Trajectory
    states: Optional[np.ndarray] = None
    positions: Optional[np.ndarray] = None


def _read_table(path):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty file")
            header = [h.strip() for h in header]
            rows = [r for r in reader if any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names")
    for i, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}: row {i} has {len(r)} fields, expected {len(header)}")
    return header, rows


def _column(path, header, rows, name, required=True):
    if name not in header:
        if required:
            raise DataError(f"{path}: missing required column '{name}'")
        return None
    j = header.index(name)
    out = np.empty(len(rows))
    for i, r in enumerate(rows):
        cell = r[j].strip()
        try:
            out[i] = float(cell)
        except ValueError:
            raise DataError(f"{path}: row {i + 2}, column '{name}': not a number ({cell!r})") from None
        if not math.isfinite(out[i]):
            raise DataError(f"{path}: row {i + 2}, column '{name}': missing or non-finite value")
    return out


def target_names_in(header) -> list:
    xs = [h[2:] for h in header if h.startswith("x_")]
    zs = [h[2:] for h in header if h.startswith("z_")]
    if sorted(xs) != sorted(zs):
        raise DataError(f"unpaired target columns: x_ for {sorted(xs)}, z_ for {sorted(zs)}")
    return xs


def ingest(path, units: str = "radians", derive_from_positions: bool = False) -> TrajectoryData:
    """Read and validate a trajectory CSV.

    With ``derive_from_positions``, y and d come from consecutive
    easting/northing rows (the last position closes the last step) and any
    y/d columns are ignored.
    """
    if units not in ("radians", "degrees"):
        raise ValueError(f"units must be 'radians' or 'degrees', not {units!r}")
    header, rows = _read_table(path)
    if not rows:
        raise DataError(f"{path}: no data rows")
    scale = math.pi / 180.0 if units == "degrees" else 1.0
    t = _column(path, header, rows, "t")
    bad = np.nonzero(np.diff(t) <= 0)[0]
    if bad.size:
        raise DataError(f"{path}: column 't' must be strictly increasing (row {bad[0] + 3})")
    names = target_names_in(header)
    x = np.column_stack([_column(path, header, rows, f"x_{n}") * scale for n in names]) if names else np.zeros((len(rows), 0))
    z = np.column_stack([_column(path, header, rows, f"z_{n}") for n in names]) if names else np.zeros((len(rows), 0))
    east = _column(path, header, rows, "easting", required=False)
    north = _column(path, header, rows, "northing", required=False)
    positions = None if east is None or north is None else np.column_stack([east, north])
    states = _column(path, header, rows, "state", required=False)
    if derive_from_positions:
        if positions is None:
            raise DataError(f"{path}: easting and northing columns are required to derive steps")
        if len(rows) < 3:
            raise DataError(f"{path}: at least 3 positions are required")
        delta = np.diff(positions, axis=0)
        y = np.arctan2(delta[:, 1], delta[:, 0])
        d = np.hypot(delta[:, 0], delta[:, 1])
        x, z = x[:-1], z[:-1]
        states = None if states is None else states[:-1]
    else:
        y = _column(path, header, rows, "y") * scale
        d = _column(path, header, rows, "d")
        if len(rows) < 2:
            raise DataError(f"{path}: at least 2 rows are required")
    neg = np.nonzero(d < 0)[0]
    if neg.size:
        raise DataError(f"{path}: negative distance at row {neg[0] + 2}")
    if states is not None:
        states = states.astype(int)
    return TrajectoryData(Trajectory(y, d, x, z, tuple(names)), states, positions)


def export_trajectory(path, traj: Trajectory, states=None, positions=None, units: str = "radians") -> None:
    """Write a trajectory in the ingest schema (``states`` 0-based, written 1-based).

    ``positions`` may hold T+1 start points or T+2 points including the end
    of the last step; only the start points are written.
    """
    scale = 180.0 / math.pi if units == "degrees" else 1.0
    n = traj.y.size
    header = ["t", "y", "d"]
    for name in traj.target_names:
        header += [f"x_{name}", f"z_{name}"]
    if positions is not None:
        header += ["easting", "northing"]
    if states is not None:
        header.append("state")
    y = np.mod(traj.y, TWO_PI)
    y = np.where(y >= TWO_PI, 0.0, y)
    rows = []
    for i in range(n):
        row = [i, y[i] * scale, traj.d[i]]
        for j in range(traj.p):
            row += [traj.x[i, j] * scale, traj.z[i, j]]
        if positions is not None:
            row += [positions[i][0], positions[i][1]]
        if states is not None:
            row.append(int(states[i]) + 1)
        rows.append(row)
    write_rows(path, header, rows)
