"""Exponential last passage percolation on a finite grid.

Lattice points are 1-based ``(row, col)`` pairs; ``(1, 1)`` is the start
corner and ``(rows, cols)`` the end corner.  The anti-diagonal index of a
point is ``t = row + col`` and runs over ``2 .. rows + cols``.
"""
from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, rng
from .errors import DimensionError, OrderingError, RangeError, SchemaError


@dataclass(frozen=True)
class WeightField:
    weights: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64, order="C")
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise DimensionError(f"weights must be a non-empty 2-d array, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]

    def __getitem__(self, point):
        r, c = point
        return float(self.weights[r - 1, c - 1])

    def __eq__(self, other):
        if not isinstance(other, WeightField):
            return NotImplemented
        return self.seed == other.seed and np.array_equal(self.weights, other.weights)

    __hash__ = None


@dataclass(frozen=True)
class PassageStat:
    value: float
    truncated_value: float
    endpoints: tuple


@dataclass(frozen=True)
class GeodesicRecord:
    path: list
    weight: float
    profile: np.ndarray = field(repr=False)
    max_fluct: int

    @property
    def t_values(self) -> np.ndarray:
        """Anti-diagonal indices matching ``profile``."""
        r0, c0 = self.path[0]
        return np.arange(r0 + c0, r0 + c0 + len(self.path))


def sample_weight_field(rows: int, cols: int, seed: int) -> WeightField:
    """I.i.d. Exp(1) field.

    The weight at ``(r, c)`` is the ``c``-th draw of the Philox stream keyed
    by ``seed`` with counter word ``r``, so a vertex's weight does not depend
    on the size of the field it sits in.
    """
    if rows < 1 or cols < 1:
        raise DimensionError(f"field dimensions must be positive, got {rows}x{cols}")
    seed = rng.check_seed(seed)
    key_rows = np.empty((rows, cols))
    for r in range(rows):
        key_rows[r] = rng.philox(seed, rng.FIELD, counter_word=r + 1).random(cols)
    return WeightField(rng.exp_from_uniform(key_rows), seed)


def _check_points(field: WeightField, u, v):
    for p in (u, v):
        if not (1 <= p[0] <= field.rows and 1 <= p[1] <= field.cols):
            raise RangeError(f"point {tuple(p)} outside {field.rows}x{field.cols} field")
    if u[0] > v[0] or u[1] > v[1]:
        raise OrderingError(f"{tuple(u)} is not below {tuple(v)} componentwise")


def _block(field: WeightField, u, v) -> np.ndarray:
    return field.weights[u[0] - 1 : v[0], u[1] - 1 : v[1]]


def last_passage(field: WeightField, u=(1, 1), v=None) -> PassageStat:
    if v is None:
        v = (field.rows, field.cols)
    u, v = tuple(u), tuple(v)
    _check_points(field, u, v)
    value = float(_kernels.passage_value(np.ascontiguousarray(_block(field, u, v))))
    return PassageStat(value, value - field[v], (u, v))


def transversal_profile(path) -> tuple[np.ndarray, int]:
    """``|x - y|`` along the path, one entry per anti-diagonal it meets."""
    if len(path) == 0:
        raise ValueError("empty path")
    pts = np.asarray(path, dtype=np.int64)
    prof = np.abs(pts[:, 0] - pts[:, 1])
    return prof, int(prof.max())


def geodesic(field: WeightField, u=(1, 1), v=None) -> GeodesicRecord:
    if v is None:
        v = (field.rows, field.cols)
    u, v = tuple(u), tuple(v)
    _check_points(field, u, v)
    block = np.ascontiguousarray(_block(field, u, v))
    F = _kernels.forward_table(block)
    pi, pj = _kernels.backtrack(F)
    path = [(int(a) + u[0], int(b) + u[1]) for a, b in zip(pi, pj)]
    prof, dmax = transversal_profile(path)
    return GeodesicRecord(path, float(F[-1, -1]), prof, dmax)


def passage_through(field: WeightField, v) -> float:
    """Best weight among monotone paths from (1,1) to (rows,cols) through ``v``."""
    v = tuple(v)
    if not (1 <= v[0] <= field.rows and 1 <= v[1] <= field.cols):
        raise RangeError(f"point {v} outside {field.rows}x{field.cols} field")
    end = (field.rows, field.cols)
    a = last_passage(field, (1, 1), v).value
    b = last_passage(field, v, end).value
    return a + b - field[v]


def passage_through_all(field: WeightField) -> np.ndarray:
    """``passage_through`` for every vertex at once (0-based array)."""
    X = field.weights
    return _kernels.forward_table(X) + _kernels.backward_table(X) - X


def path_weight(field: WeightField, path) -> float:
    return float(sum(field[p] for p in path))


def is_monotone_path(path) -> bool:
    for (r0, c0), (r1, c1) in zip(path, path[1:]):
        if (r1 - r0, c1 - c0) not in ((1, 0), (0, 1)):
            return False
    return True


# -- persistence -------------------------------------------------------------

_MAGIC = b"LPPFIELD"
_HEADER = struct.Struct("<8sQQ?Q")


def field_to_bytes(field: WeightField) -> bytes:
    """Flat binary layout: header (magic, rows, cols, has_seed, seed) + row-major float64."""
    seed = field.seed if field.seed is not None else 0
    head = _HEADER.pack(_MAGIC, field.rows, field.cols, field.seed is not None, seed)
    return head + field.weights.astype("<f8").tobytes()


def field_from_bytes(data: bytes) -> WeightField:
    if len(data) < _HEADER.size:
        raise SchemaError("truncated field header")
    magic, rows, cols, has_seed, seed = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise SchemaError("not a weight-field file")
    payload = data[_HEADER.size :]
    if len(payload) != 8 * rows * cols:
        raise SchemaError(f"payload has {len(payload)} bytes, expected {8 * rows * cols}")
    w = np.frombuffer(payload, dtype="<f8").reshape(rows, cols)
    return WeightField(w.astype(np.float64), seed if has_seed else None)


def save_field(field: WeightField, path) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        path.write_text(field_to_csv(field), encoding="utf-8")
    else:
        path.write_bytes(field_to_bytes(field))


def load_field(path) -> WeightField:
    path = Path(path)
    if path.suffix == ".csv":
        return field_from_csv(path.read_text(encoding="utf-8"))
    return field_from_bytes(path.read_bytes())


def field_to_csv(field: WeightField) -> str:
    buf = io.StringIO()
    if field.seed is not None:
        buf.write(f"# seed={field.seed}\n")
    writer = csv.writer(buf, lineterminator="\n")
    for row in field.weights:
        writer.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def field_from_csv(text: str) -> WeightField:
    seed = None
    rows = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "seed":
                seed = int(val)
            continue
        if line.strip():
            rows.append([float(x) for x in next(csv.reader([line]))])
    if not rows or len({len(r) for r in rows}) != 1:
        raise SchemaError("CSV field must be a non-empty rectangular table")
    return WeightField(np.array(rows), seed)
