"""File formats: CSV time series, TDF1 binary field snapshots, JSON reports.

TDF1 layout: the 4 bytes ``b"TDF1"``, three little-endian u32 dimensions
``(d1, d2, components)``, then ``d1 * d2 * components`` little-endian float64
values in row-major order over ``[i1][i2][component]``.
"""

import csv
import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TDF1"
_HEADER = struct.Struct("<4sIII")


class FormatError(ValueError):
    """A file does not follow the expected layout."""


# ---------------------------------------------------------------------------
# TDF1
# ---------------------------------------------------------------------------


def write_tdf1(path, values):
    """Write an array of shape ``(d1, d2)`` or ``(d1, d2, components)``."""
    a = np.asarray(values, dtype="<f8")
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise FormatError(f"TDF1 holds 2-D or 3-D arrays, got shape {a.shape}")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, *a.shape))
        fh.write(np.ascontiguousarray(a).tobytes(order="C"))
    return path


def read_tdf1(path):
    """Inverse of :func:`write_tdf1`; always returns shape ``(d1, d2, components)``."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, d1, d2, nc = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    n = d1 * d2 * nc
    if len(data) != _HEADER.size + 8 * n:
        raise FormatError(f"{path}: payload has {len(data) - _HEADER.size} bytes, expected {8 * n}")
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(d1, d2, nc).astype(float)


def field_to_tdf1_layout(field):
    """Package layout ``(components, d1, d2)`` or ``(d1, d2)`` to ``(d1, d2, components)``."""
    a = np.asarray(field, dtype=float)
    return a[:, :, None] if a.ndim == 2 else np.moveaxis(a, 0, -1)


def tdf1_to_field(a):
    a = np.asarray(a)
    return a[:, :, 0] if a.shape[-1] == 1 else np.moveaxis(a, -1, 0)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _fmt(x):
    # repr of a Python float is the shortest string that round-trips exactly
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return repr(float(x))


def write_csv(path, columns):
    """``columns`` is an ordered mapping name -> 1-D sequence (time first)."""
    names = list(columns)
    cols = [np.asarray(columns[n]) for n in names]
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise FormatError(f"columns have different lengths {sorted(lengths)}")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """Columns as float arrays, keyed by header name."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file")
    head, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(head)}


def trajectory_columns(traj):
    """Per-step scalar channels with time first."""
    cols = {"time": traj.step_times}
    cols.update(traj.channels)
    return cols


def export_trajectory(traj, directory, stem, domain=None, csv_=True, binary=True):
    """Write the channel CSV and, when states are stored, final-state TDF1 files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    if csv_:
        written.append(write_csv(directory / f"{stem}.csv", trajectory_columns(traj)))
    if binary and traj.u is not None:
        written.append(write_tdf1(directory / f"{stem}_u_modal.tdf", field_to_tdf1_layout(traj.u[-1])))
        written.append(write_tdf1(directory / f"{stem}_zhat.tdf", field_to_tdf1_layout(traj.zhat[-1])))
        if domain is not None:
            from .grid import synthesize

            written.append(write_tdf1(directory / f"{stem}_u_nodal.tdf",
                                      field_to_tdf1_layout(synthesize(traj.u[-1], domain))))
    return written


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def _default(o):
    if dataclasses.is_dataclass(o) and not isinstance(o, type):
        if hasattr(o, "to_dict"):
            return o.to_dict()
        return dataclasses.asdict(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def to_jsonable(obj):
    return json.loads(json.dumps(obj, default=_default))


def write_json(path, obj):
    path = Path(path)
    # float('inf') is written as Infinity, which Python's json reads back
    path.write_text(json.dumps(obj, default=_default, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())
