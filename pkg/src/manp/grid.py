"""Uniform periodic staggered mesh, field containers and discrete inner products.

Storage convention (0-based, interior only)::

    CellField.values[i, j]   ->  cell center ((i + 1/2) h, (j + 1/2) h)
    EdgeField.x[i, j]        ->  x-face (i + 1, j + 1/2) h, between cells (i, j) and (i + 1, j)
    EdgeField.y[i, j]        ->  y-face (i + 1/2, j + 1) h, between cells (i, j) and (i, j + 1)
    VertexField.values[i, j] ->  vertex ((i + 1) h, (j + 1) h)

all offset by the grid origin ``(x0, y0)``.  In the 1-based notation with
``x_i = (i - 1/2) h`` this is ``values[i - 1, j - 1] = phi_{i,j}``,
``x[i - 1, j - 1] = f_{i+1/2,j}`` and so on.  Ghost indices are never stored;
they are resolved by periodic wrapping on access.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class GridMismatchError(ValueError):
    """Raised when fields living on different grids are combined."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic mesh on ``[x0, x0 + lx] x [y0, y0 + ly]``."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("grid sizes must be integers")
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid must be at least 4x4, got {self.nx}x{self.ny}")
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError("domain lengths must be positive")
        hx, hy = self.lx / self.nx, self.ly / self.ny
        if not math.isclose(hx, hy, rel_tol=1e-12, abs_tol=0.0):
            raise ValueError(f"unequal spacings hx={hx!r}, hy={hy!r}")

    @property
    def h(self) -> float:
        return self.lx / self.nx

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @classmethod
    def square(cls, n: int, lower: float = 0.0, upper: float = 1.0) -> "Grid":
        """``n x n`` grid on ``[lower, upper]^2``."""
        return cls(n, n, upper - lower, upper - lower, lower, lower)

    def _axes(self, sx: float, sy: float):
        h = self.h
        x = self.x0 + (np.arange(self.nx) + sx) * h
        y = self.y0 + (np.arange(self.ny) + sy) * h
        return np.meshgrid(x, y, indexing="ij")

    def cell_centers(self):
        return self._axes(0.5, 0.5)

    def xface_centers(self):
        return self._axes(1.0, 0.5)

    def yface_centers(self):
        return self._axes(0.5, 1.0)

    def vertices(self):
        return self._axes(1.0, 1.0)

    def cell(self, values) -> "CellField":
        return CellField(self, values)

    def zeros_cell(self) -> "CellField":
        return CellField(self, np.zeros(self.shape))

    def ones_cell(self) -> "CellField":
        return CellField(self, np.ones(self.shape))

    def zeros_edge(self) -> "EdgeField":
        return EdgeField(self, np.zeros(self.shape), np.zeros(self.shape))

    def sample_cell(self, func) -> "CellField":
        """Evaluate ``func(x, y)`` at cell centers."""
        X, Y = self.cell_centers()
        return CellField(self, np.broadcast_to(func(X, Y), self.shape))

    def sample_edge(self, fx, fy=None) -> "EdgeField":
        """Evaluate ``fx`` on x-faces and ``fy`` (default ``fx``) on y-faces."""
        fy = fx if fy is None else fy
        Xx, Yx = self.xface_centers()
        Xy, Yy = self.yface_centers()
        return EdgeField(
            self,
            np.broadcast_to(fx(Xx, Yx), self.shape),
            np.broadcast_to(fy(Xy, Yy), self.shape),
        )


def _as_values(grid: Grid, values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != grid.shape:
        raise ValueError(f"expected shape {grid.shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("field values must be finite")
    arr.flags.writeable = False
    return arr


def _check_same(a, b):
    if a.grid != b.grid:
        raise GridMismatchError(f"{a.grid} != {b.grid}")


class _Arithmetic:
    """Elementwise arithmetic shared by the field containers."""

    def _arrays(self):
        raise NotImplementedError

    def _build(self, *arrays):
        raise NotImplementedError

    def _binary(self, other, op):
        if isinstance(other, type(self)):
            _check_same(self, other)
            return self._build(*(op(a, b) for a, b in zip(self._arrays(), other._arrays())))
        if np.isscalar(other):
            return self._build(*(op(a, other) for a in self._arrays()))
        return NotImplemented

    def __add__(self, other):
        return self._binary(other, np.add)

    def __radd__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    def __rmul__(self, other):
        return self._binary(other, np.multiply)

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return self._build(*(-a for a in self._arrays()))


class CellField(_Arithmetic):
    """Scalar values at cell centers."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        self.grid = grid
        self.values = _as_values(grid, values)

    def _arrays(self):
        return (self.values,)

    def _build(self, values):
        return CellField(self.grid, values)

    def at(self, i: int, j: int) -> float:
        """Value at 1-based index ``(i, j)``; ghost indices wrap periodically."""
        return float(self.values[(i - 1) % self.grid.nx, (j - 1) % self.grid.ny])

    def mean(self) -> float:
        return float(self.values.mean())

    def __repr__(self):
        return f"CellField({self.grid.nx}x{self.grid.ny})"


class EdgeField(_Arithmetic):
    """Face-centered vector field: normal components on x-faces and y-faces."""

    __slots__ = ("grid", "x", "y")

    def __init__(self, grid: Grid, x, y):
        self.grid = grid
        self.x = _as_values(grid, x)
        self.y = _as_values(grid, y)

    def _arrays(self):
        return (self.x, self.y)

    def _build(self, x, y):
        return EdgeField(self.grid, x, y)

    def at_x(self, i: int, j: int) -> float:
        """``f_{i+1/2, j}`` in 1-based notation, periodic."""
        return float(self.x[(i - 1) % self.grid.nx, (j - 1) % self.grid.ny])

    def at_y(self, i: int, j: int) -> float:
        """``f_{i, j+1/2}`` in 1-based notation, periodic."""
        return float(self.y[(i - 1) % self.grid.nx, (j - 1) % self.grid.ny])

    def __repr__(self):
        return f"EdgeField({self.grid.nx}x{self.grid.ny})"


class VertexField(_Arithmetic):
    """Scalar values at cell corners."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: Grid, values):
        self.grid = grid
        self.values = _as_values(grid, values)

    def _arrays(self):
        return (self.values,)

    def _build(self, values):
        return VertexField(self.grid, values)

    def at(self, i: int, j: int) -> float:
        """Value at ``(i + 1/2, j + 1/2)`` in 1-based notation, periodic."""
        return float(self.values[(i - 1) % self.grid.nx, (j - 1) % self.grid.ny])


def inner_cell(a: CellField, b: CellField) -> float:
    """``(a, b) = h^2 sum a_ij b_ij``."""
    _check_same(a, b)
    h = a.grid.h
    return float(h * h * np.sum(a.values * b.values))


def inner_edge(f: EdgeField, g: EdgeField) -> float:
    """Averaged-face inner product ``[f^x, g^x]_x + [f^y, g^y]_y``.

    Under periodicity every face is visited twice with weight ``h^2 / 2``,
    so this is ``h^2`` times the sum over distinct faces.
    """
    _check_same(f, g)
    h = f.grid.h
    return float(h * h * (np.sum(f.x * g.x) + np.sum(f.y * g.y)))


def norm_cell(a: CellField, p=2) -> float:
    if p in (np.inf, "inf"):
        return float(np.max(np.abs(a.values)))
    if p not in (1, 2):
        raise ValueError(f"unsupported norm order {p!r}")
    h2 = a.grid.h ** 2
    return float((h2 * np.sum(np.abs(a.values) ** p)) ** (1.0 / p))


def norm_edge(f: EdgeField, p=2) -> float:
    if p in (np.inf, "inf"):
        return float(max(np.max(np.abs(f.x)), np.max(np.abs(f.y))))
    if p not in (1, 2):
        raise ValueError(f"unsupported norm order {p!r}")
    h2 = f.grid.h ** 2
    total = h2 * (np.sum(np.abs(f.x) ** p) + np.sum(np.abs(f.y) ** p))
    return float(total ** (1.0 / p))


# -- snapshots ---------------------------------------------------------------

def _header(kind: str, grid: Grid) -> str:
    return f"{kind} {grid.nx} {grid.ny} {grid.h!r} {grid.x0!r} {grid.y0!r}"


def write_snapshot(path, field) -> None:
    """Write a field as a header line plus one value per line, row-major.

    ``CELLFIELD nx ny h x0 y0`` is followed by ``nx * ny`` values of
    ``values[i, j]`` with ``j`` varying fastest.  ``EDGEFIELD`` is followed by
    the x-family block and then the y-family block, each in the same order.
    """
    grid = field.grid
    if isinstance(field, CellField):
        head, data = _header("CELLFIELD", grid), field.values.ravel()
    elif isinstance(field, EdgeField):
        head, data = _header("EDGEFIELD", grid), np.concatenate([field.x.ravel(), field.y.ravel()])
    elif isinstance(field, VertexField):
        head, data = _header("VERTEXFIELD", grid), field.values.ravel()
    else:
        raise TypeError(f"cannot snapshot {type(field).__name__}")
    np.savetxt(Path(path), data, fmt="%.17g", header=head, comments="")


def read_snapshot(path):
    """Inverse of :func:`write_snapshot`."""
    path = Path(path)
    with path.open() as fh:
        kind, nx, ny, h, x0, y0 = fh.readline().split()
    nx, ny, h, x0, y0 = int(nx), int(ny), float(h), float(x0), float(y0)
    grid = Grid(nx, ny, nx * h, ny * h, x0, y0)
    data = np.loadtxt(path, skiprows=1, ndmin=1)
    if kind == "CELLFIELD":
        return CellField(grid, data.reshape(nx, ny))
    if kind == "VERTEXFIELD":
        return VertexField(grid, data.reshape(nx, ny))
    if kind == "EDGEFIELD":
        n = nx * ny
        return EdgeField(grid, data[:n].reshape(nx, ny), data[n:].reshape(nx, ny))
    raise ValueError(f"unknown snapshot kind {kind!r}")
