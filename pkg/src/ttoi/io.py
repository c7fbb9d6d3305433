"""Tensor files, trajectory files and CSV output.

Tensor file layout (all little-endian)::

    offset 0   8 bytes   magic b"TTOITNSR"
    offset 8   uint32    version (1)
    offset 12  uint32    order d
    offset 16  d uint64  dims p_1..p_d
    then       float64   p_1*...*p_d entries in vec order (first mode fastest)

Trajectory files are UTF-8 text with one 1-based state per line; blank
lines are ignored. CSV files use a header row, commas, LF line endings and
17 significant digits for floats.
"""

from __future__ import annotations

import csv
import math
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .markov import Trajectory
from .tensor_core import DenseTensor, checked_prod

MAGIC = b"TTOITNSR"
VERSION = 1
_HEAD = struct.Struct("<8sII")


class FormatError(ValueError):
    """Malformed input file; ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int, expected=None, actual=None):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset
        self.expected = expected
        self.actual = actual


def tensor_bytes(t: DenseTensor) -> bytes:
    head = _HEAD.pack(MAGIC, VERSION, t.order)
    dims = struct.pack(f"<{t.order}Q", *t.dims)
    return head + dims + t.data.astype("<f8", copy=False).tobytes()


def write_tensor(path, t: DenseTensor) -> None:
    Path(path).write_bytes(tensor_bytes(t))


def parse_tensor(buf: bytes) -> DenseTensor:
    n = len(buf)
    if n < _HEAD.size:
        raise FormatError(
            f"truncated header: expected {_HEAD.size} bytes, got {n}", n, _HEAD.size, n
        )
    magic, version, order = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0, MAGIC, magic)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 8, VERSION, version)
    if order < 1:
        raise FormatError("order must be at least 1", 12, ">= 1", order)
    dims_end = _HEAD.size + 8 * order
    if n < dims_end:
        raise FormatError(
            f"truncated dimension list: expected {dims_end} bytes, got {n}", n, dims_end, n
        )
    dims = struct.unpack_from(f"<{order}Q", buf, _HEAD.size)
    for k, p in enumerate(dims):
        if p < 1:
            raise FormatError(f"dimension {k + 1} is zero", _HEAD.size + 8 * k, ">= 1", p)
    try:
        count = checked_prod(dims)
    except OverflowError:
        raise FormatError(f"dimension product of {dims} overflows", _HEAD.size, None, dims) from None
    expected = dims_end + 8 * count
    if n != expected:
        raise FormatError(
            f"payload length mismatch: expected {expected} bytes in total for dims {dims}, got {n}",
            min(n, expected),
            expected,
            n,
        )
    data = np.frombuffer(buf, dtype="<f8", count=count, offset=dims_end)
    return DenseTensor(dims, data.astype(np.float64))


def read_tensor(path) -> DenseTensor:
    return parse_tensor(Path(path).read_bytes())


def parse_trajectory(text: str, p: int | None = None) -> Trajectory:
    """1-based states, one per line. ``p`` defaults to the largest label."""
    labels = []
    offset = 0
    for line in text.splitlines(keepends=True):
        token = line.strip()
        if token:
            try:
                value = int(token)
            except ValueError:
                raise FormatError(f"not an integer state: {token!r}", offset) from None
            if value < 1 or (p is not None and value > p):
                bound = f"[1, {p}]" if p is not None else ">= 1"
                raise FormatError(f"state {value} outside {bound}", offset, bound, value)
            labels.append(value)
        offset += len(line.encode("utf-8"))
    if not labels:
        raise FormatError("trajectory file holds no states", offset)
    return Trajectory.from_labels(labels, p if p is not None else max(labels))


def read_trajectory(path, p: int | None = None) -> Trajectory:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("trajectory file is not UTF-8", exc.start) from None
    return parse_trajectory(text, p)


def write_trajectory(path, traj: Trajectory) -> None:
    Path(path).write_text("".join(f"{s}\n" for s in traj.labels()), encoding="utf-8")


def fmt(value) -> str:
    """CSV cell text: floats at 17 significant digits, ``None`` as empty."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def write_csv(stream, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def trace_rows(objective_trace: Sequence[float]):
    """``t, objective, increment`` rows for an objective trace."""
    rows = []
    for t, obj in enumerate(objective_trace):
        inc = None if t == 0 else objective_trace[t - 1] - obj
        rows.append((t, obj, inc))
    return rows


TRACE_HEADER = ("t", "objective", "increment")


def record_rows(records, timing: bool = True):
    """Long-format rows: one per (record, replication).

    Columns are ``digest, method``, the cell parameters in record order,
    then ``replication, error, wall_ms``. With ``timing`` off the wall-time
    column is left empty so that output depends only on seeds.
    """
    records = list(records)
    if not records:
        return ("digest", "method", "replication", "error", "wall_ms"), []
    keys = list(records[0].cell)
    for rec in records:
        if list(rec.cell) != keys:
            raise ValueError("records in one table must share their cell columns")
    header = ("digest", "method", *keys, "replication", "error", "wall_ms")
    rows = []
    for rec in records:
        for rep, (err, ms) in enumerate(zip(rec.errors, rec.wall_ms)):
            wall = ms if timing and not math.isnan(ms) else None
            rows.append((rec.digest, rec.method, *rec.cell.values(), rep, err, wall))
    return header, rows


def summary_rows(records):
    """One row per record: ``digest, method``, cell, ``n, mean, sd, failed``."""
    records = list(records)
    keys = list(records[0].cell) if records else []
    header = ("digest", "method", *keys, "n", "mean", "sd", "failed")
    rows = [
        (r.digest, r.method, *r.cell.values(), len(r.errors), r.mean, r.sd, len(r.failures))
        for r in records
    ]
    return header, rows


def selection_rows(records, timing: bool = True):
    """One row per replication of a rank-selection sweep."""
    records = list(records)
    keys = list(records[0].cell) if records else []
    header = ("digest", *keys, "true_ranks", "replication", "selected", "hit", "wall_ms")
    rows = []
    for rec in records:
        truth = ",".join(map(str, rec.true_ranks))
        for rep, (sel, ms) in enumerate(zip(rec.selected, rec.wall_ms)):
            chosen = None if sel is None else ",".join(map(str, sel))
            wall = ms if timing and not math.isnan(ms) else None
            rows.append((rec.digest, *rec.cell.values(), truth, rep, chosen, sel == rec.true_ranks, wall))
    return header, rows
