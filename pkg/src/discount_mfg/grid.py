"""Uniform periodic staggered grid on the d-torus.

Cell-centred scalars (u, m) live on an ``(n,)*d`` array.  Face vectors (w)
store one normal component per face per axis in a ``(d, n, ..., n)`` array,
where ``w[k][i]`` sits on the face between cell ``i`` and cell ``i + e_k``
(periodic).  With this convention the forward difference and the backward
difference are exact negative adjoints under the ``h^d``-weighted inner
product.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import UsageError

CELL = "cell_scalar"
FACE = "face_vector"
NODE = "node_scalar"
KINDS = (CELL, FACE, NODE)

_MAGIC = b"MFGF"
_VERSION = 1
_KIND_CODES = {CELL: 0, FACE: 1, NODE: 2}
_HEADER = struct.Struct("<4sHBBI")


@dataclass(frozen=True)
class TorusGrid:
    """Periodic grid with ``n`` cells per axis on ``[0, 1)^d``."""

    n: int
    d: int = 1

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise UsageError(f"n must be a positive integer, got {self.n!r}")
        if self.d not in (1, 2):
            raise UsageError(f"d must be 1 or 2, got {self.d!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def face_shape(self) -> tuple:
        return (self.d,) + self.shape

    @property
    def size(self) -> int:
        return self.n**self.d

    def shape_for(self, kind: str) -> tuple:
        if kind == FACE:
            return self.face_shape
        if kind in (CELL, NODE):
            return self.shape
        raise UsageError(f"unknown field kind {kind!r}")

    def _mesh(self, offsets):
        axes = [(np.arange(self.n) + off) * self.h for off in offsets]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def cell_centers(self) -> np.ndarray:
        """Coordinates with shape ``shape + (d,)``."""
        return self._mesh([0.5] * self.d)

    def node_coordinates(self) -> np.ndarray:
        return self._mesh([0.0] * self.d)

    def face_centers(self, axis: int) -> np.ndarray:
        """Centres of the faces normal to ``axis`` (face i sits at cell i + h/2)."""
        offsets = [0.5] * self.d
        offsets[axis] = 1.0
        return self._mesh(offsets) % 1.0

    def coordinates_for(self, kind: str, axis: int = 0) -> np.ndarray:
        if kind == CELL:
            return self.cell_centers()
        if kind == NODE:
            return self.node_coordinates()
        return self.face_centers(axis)

    # constructors
    def field(self, kind, values) -> "Field":
        return Field(kind, values, self)

    def cell(self, values) -> "Field":
        return Field(CELL, values, self)

    def face(self, values) -> "Field":
        return Field(FACE, values, self)

    def zeros(self, kind=CELL) -> "Field":
        return Field(kind, np.zeros(self.shape_for(kind)), self)

    def constant(self, value, kind=CELL) -> "Field":
        return Field(kind, np.full(self.shape_for(kind), float(value)), self)

    def sample(self, func, kind=CELL) -> "Field":
        """Evaluate ``func(x)`` (x of shape ``(..., d)``) at the field's locations.

        For 1-D grids ``func`` receives the squeezed coordinate array.
        """
        if kind == FACE:
            vals = np.stack([self._call(func, self.face_centers(k)) for k in range(self.d)])
        else:
            vals = self._call(func, self.coordinates_for(kind))
        return Field(kind, vals, self)

    def _call(self, func, x):
        arg = x[..., 0] if self.d == 1 else x
        return np.broadcast_to(np.asarray(func(arg), dtype=float), self.shape)


class Field:
    """Immutable grid function of a given kind."""

    __slots__ = ("kind", "values", "grid")
    __array_priority__ = 100

    def __init__(self, kind: str, values, grid: TorusGrid):
        if kind not in KINDS:
            raise UsageError(f"unknown field kind {kind!r}")
        arr = np.array(values, dtype=float)
        expected = grid.shape_for(kind)
        if arr.shape != expected:
            if arr.size == int(np.prod(expected)):
                arr = arr.reshape(expected)
            else:
                raise UsageError(
                    f"{kind} on n={grid.n}, d={grid.d} needs shape {expected}, got {arr.shape}"
                )
        arr.setflags(write=False)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "grid", grid)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    def __repr__(self):
        return f"Field({self.kind}, n={self.grid.n}, d={self.grid.d})"

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def with_values(self, values) -> "Field":
        return Field(self.kind, values, self.grid)

    def _coerce(self, other):
        if isinstance(other, Field):
            if other.kind != self.kind or other.grid != self.grid:
                raise UsageError(
                    f"cannot combine {other.kind} on {other.grid} with {self.kind} on {self.grid}"
                )
            return other.values
        return other

    def _binary(self, other, op):
        return Field(self.kind, op(self.values, self._coerce(other)), self.grid)

    def __add__(self, other):
        return self._binary(other, np.add)

    def __radd__(self, other):
        return self._binary(other, lambda a, b: b + a)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    def __rmul__(self, other):
        return self._binary(other, lambda a, b: b * a)

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return Field(self.kind, -self.values, self.grid)

    def __eq__(self, other):
        return (
            isinstance(other, Field)
            and other.kind == self.kind
            and other.grid == self.grid
            and np.array_equal(other.values, self.values)
        )

    __hash__ = None

    def max(self) -> float:
        return float(self.values.max())

    def min(self) -> float:
        return float(self.values.min())


# ---------------------------------------------------------------------------
# raw-array stencils (used inside the solvers)


def forward_difference(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(a, -1, axis=axis) - a) / h


def backward_difference(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (a - np.roll(a, 1, axis=axis)) / h


def gradient_array(a: np.ndarray, h: float) -> np.ndarray:
    return np.stack([forward_difference(a, k, h) for k in range(a.ndim)])


def one_sided_differences(a: np.ndarray, h: float):
    """Backward and forward quotients at every cell, each of shape ``(d,) + shape``."""
    fwd = gradient_array(a, h)
    bwd = np.stack([np.roll(fwd[k], 1, axis=k) for k in range(a.ndim)])
    return bwd, fwd


def divergence_array(w: np.ndarray, h: float) -> np.ndarray:
    return sum(backward_difference(w[k], k, h) for k in range(w.shape[0]))


def face_average(a: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the two cells adjacent to each face."""
    return np.stack([0.5 * (a + np.roll(a, -1, axis=k)) for k in range(a.ndim)])


def laplacian_symbol(grid: TorusGrid) -> np.ndarray:
    """Eigenvalues of ``-div grad`` on the ``rfftn`` frequency lattice."""
    n, h = grid.n, grid.h
    full = (2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(n) / n)) / h**2
    half = full[: n // 2 + 1]
    axes = [full] * (grid.d - 1) + [half]
    return sum(np.meshgrid(*axes, indexing="ij"))


# ---------------------------------------------------------------------------
# field-level operations


def _require(field, kind, name):
    if not isinstance(field, Field) or field.kind != kind:
        got = field.kind if isinstance(field, Field) else type(field).__name__
        raise UsageError(f"{name} expects a {kind}, got {got}")


def discrete_gradient(phi: Field) -> Field:
    """Forward difference ``(phi[i+1] - phi[i]) / h`` on the face after cell i."""
    _require(phi, CELL, "discrete_gradient")
    return Field(FACE, gradient_array(phi.values, phi.grid.h), phi.grid)


def discrete_divergence(w: Field) -> Field:
    """Backward difference ``(w[i] - w[i-1]) / h``; the negative adjoint of the gradient."""
    _require(w, FACE, "discrete_divergence")
    return Field(CELL, divergence_array(w.values, w.grid.h), w.grid)


def inner(a: Field, b: Field) -> float:
    """``h^d``-weighted inner product between same-kind fields."""
    if isinstance(b, Field):
        a._coerce(b)
    return float(a.grid.cell_volume * np.sum(np.asarray(a) * np.asarray(b)))


def integrate(phi: Field) -> float:
    _require(phi, CELL, "integrate")
    return float(phi.grid.cell_volume * np.sum(phi.values))


def mean_zero(phi: Field) -> Field:
    return phi - integrate(phi)


def l1_norm(phi: Field) -> float:
    return float(phi.grid.cell_volume * np.sum(np.abs(phi.values)))


def l2_norm(phi: Field) -> float:
    return float(np.sqrt(phi.grid.cell_volume * np.sum(phi.values**2)))


def sup_norm(phi: Field) -> float:
    return float(np.max(np.abs(phi.values)))


def sobolev_h1_seminorm(m: Field) -> float:
    """``(sum over faces of h^d |grad m|^2)^(1/2)``."""
    return l2_norm(discrete_gradient(m))


def sobolev_h1_norm(m: Field) -> float:
    return float(np.hypot(l2_norm(m), sobolev_h1_seminorm(m)))


def l1_distance_to_function(field: Field, func, subcells: int = 32) -> float:
    """L1 distance on the torus between ``field`` read as a piecewise-constant
    function on cells and the continuum function ``func``.

    Each cell is split into ``subcells`` midpoint panels per axis.
    """
    _require(field, CELL, "l1_distance_to_function")
    grid = field.grid
    offs = (np.arange(subcells) + 0.5) / subcells - 0.5
    total = 0.0
    centers = grid.cell_centers()
    for shift in np.stack(np.meshgrid(*[offs] * grid.d, indexing="ij"), -1).reshape(-1, grid.d):
        x = (centers + shift * grid.h) % 1.0
        ref = grid._call(func, x)
        total += np.sum(np.abs(field.values - ref))
    return float(total * grid.cell_volume / subcells**grid.d)


# ---------------------------------------------------------------------------
# export


def _index_rows(grid: TorusGrid, kind: str):
    for axis in range(grid.d if kind == FACE else 1):
        coords = grid.coordinates_for(kind, axis).reshape(-1, grid.d)
        for flat, idx in enumerate(np.ndindex(*grid.shape)):
            yield axis, idx, coords[flat]


def field_to_csv(field: Field, path) -> Path:
    """Write ``index, coordinates, value`` rows (plus the axis for face fields)."""
    path = Path(path)
    grid = field.grid
    idx_names = ["i", "j"][: grid.d]
    crd_names = ["x", "y"][: grid.d]
    header = (["axis"] if field.kind == FACE else []) + idx_names + crd_names + ["value"]
    values = field.values.reshape(-1)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for flat, (axis, idx, xy) in enumerate(_index_rows(grid, field.kind)):
            row = ([axis] if field.kind == FACE else []) + list(idx)
            row += [repr(float(c)) for c in xy] + [repr(float(values[flat]))]
            writer.writerow(row)
    return path


def field_from_csv(path, kind: str = CELL, d: int = 1) -> Field:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise UsageError(f"{path}: empty field file")
    if kind == FACE and "axis" not in rows[0]:
        raise UsageError(f"{path}: face file lacks an axis column")
    count = len(rows) // (d if kind == FACE else 1)
    n = int(round(count ** (1.0 / d)))
    if n**d != count:
        raise UsageError(f"{path}: {len(rows)} rows do not form a {d}-D grid")
    grid = TorusGrid(n, d)
    return Field(kind, np.array([float(r["value"]) for r in rows]), grid)


def dump_field(field: Field, path) -> Path:
    """Binary dump: header ``<4sHBBI`` (magic, version, kind, d, n) then float64 LE."""
    path = Path(path)
    header = _HEADER.pack(_MAGIC, _VERSION, _KIND_CODES[field.kind], field.grid.d, field.grid.n)
    path.write_bytes(header + field.values.astype("<f8").tobytes())
    return path


def load_field(path) -> Field:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise UsageError(f"{path}: truncated header")
    magic, version, code, d, n = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise UsageError(f"{path}: not a field dump (magic {magic!r}, version {version})")
    kind = {v: k for k, v in _KIND_CODES.items()}.get(code)
    if kind is None:
        raise UsageError(f"{path}: unknown kind code {code}")
    grid = TorusGrid(n, d)
    payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if payload.size != int(np.prod(grid.shape_for(kind))):
        raise UsageError(f"{path}: payload size {payload.size} does not match header")
    return Field(kind, payload, grid)
