"""Binary field checkpoints and diagnostics CSV files.

Checkpoint layout (all little-endian)::

    8 bytes   magic b"VFLOWCKP"
    u32       format version
    u32       dimension d
    d x u32   resolution per axis
    d x f64   box length per axis
    u64       model-parameter hash
    f64       t
    u64       step counter
    u32       1 if a previous time level follows (imex_bdf2), else 0
    f64[...]  phi, then u_1 .. u_d, each in C (axis-major) order
    f64[...]  previous phi and u_1 .. u_d, if flagged
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .diagnostics import DiagnosticsRecord
from .dynamics import SimState
from .energy import ModelParams
from .spectral import Grid

MAGIC = b"VFLOWCKP"
CHECKPOINT_VERSION = 1
CSV_VERSION = 1
CSV_MARKER = "# vesicleflow diagnostics"
_F64 = np.dtype("<f8")


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint."""


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class ParamsHashMismatch(CheckpointError):
    pass


class ParamsHashWarning(UserWarning):
    pass


class CSVFormatError(ValueError):
    pass


def params_hash(p: ModelParams) -> int:
    """64-bit digest of the exact parameter values."""
    text = json.dumps({k: float(v).hex() for k, v in p.as_dict().items()}, sort_keys=True)
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


@dataclass(frozen=True)
class CheckpointHeader:
    version: int
    grid: Grid
    params_hash: int
    t: float
    step: int
    has_prev: bool


def save_checkpoint(state: SimState, path, grid: Grid, params: ModelParams) -> Path:
    path = Path(path)
    grid.check_scalar(state.phi, "phi")
    grid.check_vector(state.u, "u")
    has_prev = state.prev is not None
    head = [MAGIC, struct.pack("<II", CHECKPOINT_VERSION, grid.dim),
            struct.pack(f"<{grid.dim}I", *grid.resolution), struct.pack(f"<{grid.dim}d", *grid.box_length),
            struct.pack("<QdQI", params_hash(params), float(state.t), int(state.step), int(has_prev))]
    levels = [(state.phi, state.u)]
    if has_prev:
        levels.append((state.prev[1], state.prev[0]))
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(b"".join(head))
        for phi, u in levels:
            fh.write(np.ascontiguousarray(phi, dtype=_F64).tobytes())
            for comp in u:
                fh.write(np.ascontiguousarray(comp, dtype=_F64).tobytes())
    tmp.replace(path)
    return path


def _take(buf: memoryview, pos: int, n: int, what: str):
    if pos + n > len(buf):
        raise CheckpointTruncatedError(f"checkpoint truncated while reading {what} "
                                       f"(need {pos + n} bytes, file has {len(buf)})")
    return buf[pos:pos + n], pos + n


def read_checkpoint_header(data: bytes):
    buf = memoryview(data)
    magic, pos = _take(buf, 0, 8, "magic")
    if bytes(magic) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic bytes)")
    raw, pos = _take(buf, pos, 8, "version")
    version, dim = struct.unpack("<II", raw)
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version}, expected {CHECKPOINT_VERSION}")
    if dim not in (2, 3):
        raise CheckpointError(f"invalid dimension {dim}")
    raw, pos = _take(buf, pos, 4 * dim, "resolution")
    res = struct.unpack(f"<{dim}I", raw)
    raw, pos = _take(buf, pos, 8 * dim, "box length")
    box = struct.unpack(f"<{dim}d", raw)
    raw, pos = _take(buf, pos, 28, "header")
    h, t, step, has_prev = struct.unpack("<QdQI", raw)
    try:
        grid = Grid(dim, res, box)
    except ValueError as exc:
        raise CheckpointError(f"invalid grid in header: {exc}") from None
    return CheckpointHeader(version, grid, h, t, step, bool(has_prev)), pos


def load_checkpoint(path, params: Optional[ModelParams] = None, on_mismatch: str = "warn",
                    with_header: bool = False):
    """Read a checkpoint written by :func:`save_checkpoint`.

    With ``params`` given, a differing parameter hash warns
    (``on_mismatch="warn"``) or raises :class:`ParamsHashMismatch` (``"fail"``).
    """
    if on_mismatch not in ("warn", "fail"):
        raise ValueError("on_mismatch must be 'warn' or 'fail'")
    data = Path(path).read_bytes()
    header, pos = read_checkpoint_header(data)
    g = header.grid
    n = int(np.prod(g.shape))
    levels = []
    buf = memoryview(data)
    for level in range(2 if header.has_prev else 1):
        arrays = []
        for c in range(g.dim + 1):
            raw, pos = _take(buf, pos, 8 * n, f"field {c} of level {level}")
            arrays.append(np.frombuffer(raw, dtype=_F64).reshape(g.shape).astype(float))
        levels.append((arrays[0], np.stack(arrays[1:])))
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} unexpected trailing bytes")
    if params is not None and params_hash(params) != header.params_hash:
        msg = "checkpoint was written with different model parameters"
        if on_mismatch == "fail":
            raise ParamsHashMismatch(msg)
        warnings.warn(msg, ParamsHashWarning, stacklevel=2)
    phi, u = levels[0]
    prev = (levels[1][1], levels[1][0]) if header.has_prev else None
    state = SimState(u, phi, header.t, header.step, prev)
    return (state, header) if with_header else state


# diagnostics CSV -----------------------------------------------------------


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


class DiagnosticsWriter:
    """Streams records to CSV: a version comment, a header row, then one row per record."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        self.columns: Optional[list] = None
        if append and self.path.exists():
            self.columns = read_csv_columns(self.path)[0]
            self._fh = open(self.path, "a", newline="")
        else:
            self._fh = open(self.path, "w", newline="")
            self._fh.write(f"{CSV_MARKER} v{CSV_VERSION}\n")
        self._w = csv.writer(self._fh, lineterminator="\n")

    def write(self, rec: DiagnosticsRecord) -> None:
        row = rec.flat()
        if self.columns is None:
            self.columns = list(row)
            self._w.writerow(self.columns)
        elif list(row) != self.columns:
            raise CSVFormatError("record columns differ from the file header")
        self._w.writerow([_fmt(row[c]) for c in self.columns])
        self._fh.flush()

    __call__ = write

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _read_rows(path):
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith(CSV_MARKER):
            raise CSVFormatError(f"{path}: missing diagnostics CSV marker line")
        version = first[len(CSV_MARKER):].strip()
        if version != f"v{CSV_VERSION}":
            raise CSVFormatError(f"{path}: CSV format {version}, expected v{CSV_VERSION}")
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CSVFormatError(f"{path}: no header row")
        return header, [r for r in reader if r]


def read_csv_columns(path):
    """``(column names, {name: float array})`` of a diagnostics CSV."""
    header, rows = _read_rows(path)
    data = np.array([[float(x) for x in r] for r in rows], dtype=float).reshape(len(rows), len(header))
    return header, {h: data[:, i] for i, h in enumerate(header)}


def read_diagnostics(path) -> list:
    header, rows = _read_rows(path)
    return [DiagnosticsRecord.from_flat(dict(zip(header, r))) for r in rows]


def write_columns(path, columns: dict) -> Path:
    """Plain CSV of equal-length columns (plot-ready output)."""
    path = Path(path)
    keys = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in zip(*(columns[k] for k in keys)):
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    return path
