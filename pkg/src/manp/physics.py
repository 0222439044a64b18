"""Constitutive pieces of the Maxwell-Ampere Nernst-Planck model.

Scharfetter-Gummel fluxes use the Bernoulli function ``B(z) = z / (e^z - 1)``
of the potential increment across each face, so that on a face between cells
``a`` (left/below) and ``b``::

    J_ab = -(kappa / h) [B(-dg_ab) c_b - B(dg_ab) c_a]

with ``dg_ab = -h q D_ab / eps_ab + mu_b - mu_a``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import math

import numba
import numpy as np

from .grid import CellField, EdgeField, Grid
from .operators import divergence_arrays

_B_CUT = 1e-5
_B_OVERFLOW = 700.0


class StericOverflowError(ValueError):
    """Solvent concentration is nonpositive somewhere (sum v c >= 1)."""

    def __init__(self, cells):
        self.cells = cells
        super().__init__(f"nonpositive solvent concentration at {len(cells)} cell(s), first {cells[:5]}")


@dataclass(frozen=True)
class SpeciesParams:
    q: int
    v: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        if self.v <= 0 or self.a <= 0:
            raise ValueError("ion volume and Born radius must be positive")


@dataclass(frozen=True)
class ModelParams:
    """Physical constants and static coefficient fields.

    ``steric`` and ``born`` switch the two parts of the excess chemical
    potential; with both off the model is plain MANP with ``mu_cr = 0``.
    """

    kappa: float
    species: tuple[SpeciesParams, ...]
    eps_cell: CellField
    eps_edge: EdgeField
    rho_f: CellField
    lam: float = 2.0
    chi: float = 0.0
    v0: float = 1.0
    steric: bool = False
    born: bool = False

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.lam < 0:
            raise ValueError("stabilizer must be nonnegative")
        if self.v0 <= 0:
            raise ValueError("solvent volume must be positive")
        if not self.species:
            raise ValueError("at least one species is required")
        eps_min = min(self.eps_cell.values.min(), self.eps_edge.x.min(), self.eps_edge.y.min())
        if eps_min <= 0:
            raise ValueError("dielectric coefficient must be positive")
        grids = {self.eps_cell.grid, self.eps_edge.grid, self.rho_f.grid}
        if len(grids) != 1:
            raise ValueError("coefficient fields live on different grids")

    @property
    def grid(self) -> Grid:
        return self.eps_cell.grid

    @property
    def charges(self) -> np.ndarray:
        return np.array([s.q for s in self.species], dtype=float)

    @property
    def has_excess(self) -> bool:
        return self.steric or self.born


@dataclass
class SimState:
    """Solver state at time level ``n``."""

    t: float
    c: list[CellField]
    D: EdgeField
    theta: EdgeField
    last_dstar: EdgeField | None = None
    step: int = 0
    info: dict = field(default_factory=dict)


@numba.njit(cache=True)
def _bern(z):
    az = abs(z)
    if az < _B_CUT:
        return 1.0 - z / 2.0 + z * z / 12.0 - z ** 4 / 720.0
    if z > _B_OVERFLOW:
        return z * math.exp(-z)
    return z / math.expm1(z)


@numba.vectorize(["float64(float64)"], cache=True)
def _bernoulli_scalar(z):
    return _bern(z)


@numba.njit(cache=True)
def _sg_weights(gx, gy):
    """``B(dg)``, ``B(-dg)`` on both face families and ``max |dg|`` in one pass."""
    bpx = np.empty_like(gx)
    bmx = np.empty_like(gx)
    bpy = np.empty_like(gy)
    bmy = np.empty_like(gy)
    amax = 0.0
    for i in range(gx.shape[0]):
        for j in range(gx.shape[1]):
            zx = gx[i, j]
            zy = gy[i, j]
            bpx[i, j] = _bern(zx)
            bmx[i, j] = _bern(-zx)
            bpy[i, j] = _bern(zy)
            bmy[i, j] = _bern(-zy)
            amax = max(amax, abs(zx), abs(zy))
    return bpx, bmx, bpy, bmy, amax


def bernoulli(z):
    """``B(z) = z / (e^z - 1)``, ``B(0) = 1``; overflow-safe for large ``|z|``."""
    out = _bernoulli_scalar(np.asarray(z, dtype=float))
    return float(out) if np.ndim(z) == 0 else out


def solvent_concentration(c: Sequence[CellField], params: ModelParams) -> CellField:
    """``c0 = (1 - sum_l v_l c_l) / v0``; may be nonpositive, see :func:`check_solvent`."""
    occupied = sum(s.v * ci.values for s, ci in zip(params.species, c))
    return CellField(params.grid, (1.0 - occupied) / params.v0)


def check_solvent(c0: CellField) -> None:
    bad = np.argwhere(c0.values <= 0)
    if bad.size:
        raise StericOverflowError([tuple(map(int, b)) for b in bad])


def born_potential(ell: int, params: ModelParams) -> np.ndarray:
    s = params.species[ell]
    return params.chi * s.q ** 2 / s.a * (1.0 / params.eps_cell.values - 1.0)


def excess_potential(ell: int, c: Sequence[CellField], params: ModelParams, c0: CellField | None = None) -> CellField:
    """Steric plus Born excess chemical potential of species ``ell`` (0-based)."""
    mu = np.zeros(params.grid.shape)
    if params.steric:
        if c0 is None:
            c0 = solvent_concentration(c, params)
        check_solvent(c0)
        mu = mu - params.species[ell].v / params.v0 * np.log(params.v0 * c0.values)
    if params.born:
        mu = mu + born_potential(ell, params)
    return CellField(params.grid, mu)


def dg_arrays(q: float, Dx, Dy, ex, ey, mu, h):
    gx = -h * q * Dx / ex
    gy = -h * q * Dy / ey
    if mu is not None:
        gx = gx + (np.roll(mu, -1, axis=0) - mu)
        gy = gy + (np.roll(mu, -1, axis=1) - mu)
    return gx, gy


def dg_edges(ell: int, D: EdgeField, mucr: CellField | None, params: ModelParams) -> EdgeField:
    """Potential increment across each face for species ``ell``."""
    q = params.species[ell].q
    mu = None if mucr is None else mucr.values
    gx, gy = dg_arrays(q, D.x, D.y, params.eps_edge.x, params.eps_edge.y, mu, D.grid.h)
    return EdgeField(D.grid, gx, gy)


@numba.njit(cache=True)
def _sg_apply(c, bpx, bmx, bpy, bmy, k, h):
    nx, ny = c.shape
    out = np.empty_like(c)
    for i in range(nx):
        ip = i + 1 if i + 1 < nx else 0
        im = i - 1 if i > 0 else nx - 1
        for j in range(ny):
            jp = j + 1 if j + 1 < ny else 0
            jm = j - 1 if j > 0 else ny - 1
            # M c = -div J with J = -k (B(-dg) c_right - B(dg) c_left)
            east = bmx[i, j] * c[ip, j] - bpx[i, j] * c[i, j]
            west = bmx[im, j] * c[i, j] - bpx[im, j] * c[im, j]
            north = bmy[i, j] * c[i, jp] - bpy[i, j] * c[i, j]
            south = bmy[i, jm] * c[i, j] - bpy[i, jm] * c[i, jm]
            out[i, j] = k * (east - west + north - south) / h
    return out


@numba.njit(cache=True)
def _sg_flux(c, bpx, bmx, bpy, bmy, k):
    nx, ny = c.shape
    jx = np.empty_like(c)
    jy = np.empty_like(c)
    for i in range(nx):
        ip = i + 1 if i + 1 < nx else 0
        for j in range(ny):
            jp = j + 1 if j + 1 < ny else 0
            jx[i, j] = -k * (bmx[i, j] * c[ip, j] - bpx[i, j] * c[i, j])
            jy[i, j] = -k * (bmy[i, j] * c[i, jp] - bpy[i, j] * c[i, j])
    return jx, jy


class ConvectionOperator:
    """``M f = -div J(dg, f)`` with Bernoulli weights precomputed for fixed ``dg``.

    An optional face source ``gsrc`` adds ``-kappa * gsrc`` to every flux,
    which makes the operator affine.
    """

    def __init__(self, dg: EdgeField, kappa: float, gsrc: EdgeField | None = None):
        self.grid = dg.grid
        self.kappa = float(kappa)
        self.h = dg.grid.h
        self.bpx, self.bmx, self.bpy, self.bmy, amax = _sg_weights(dg.x, dg.y)
        self.max_abs_dg = float(amax)
        if gsrc is None:
            self._src = None
        else:
            self._src = (-self.kappa * gsrc.x, -self.kappa * gsrc.y)
        self._src_div = None if gsrc is None else divergence_arrays(*self._src, self.h)

    def flux_arrays(self, c: np.ndarray):
        jx, jy = _sg_flux(np.asarray(c, dtype=float), self.bpx, self.bmx, self.bpy, self.bmy, self.kappa / self.h)
        if self._src is not None:
            jx = jx + self._src[0]
            jy = jy + self._src[1]
        return jx, jy

    def apply_array(self, c: np.ndarray) -> np.ndarray:
        c = np.ascontiguousarray(c, dtype=float)
        out = _sg_apply(c, self.bpx, self.bmx, self.bpy, self.bmy, self.kappa / self.h, self.h)
        if self._src_div is not None:
            out -= self._src_div
        return out

    def flux(self, c: CellField) -> EdgeField:
        return EdgeField(self.grid, *self.flux_arrays(c.values))

    def __call__(self, c: CellField) -> CellField:
        return CellField(self.grid, self.apply_array(c.values))


def flux(dg: EdgeField, c: CellField, kappa: float, gsrc: EdgeField | None = None) -> EdgeField:
    """Scharfetter-Gummel face flux ``J(dg, c)``."""
    return ConvectionOperator(dg, kappa, gsrc).flux(c)


def apply_convection(dg: EdgeField, phi: CellField, kappa: float, gsrc: EdgeField | None = None) -> CellField:
    """``M phi = -div J(dg, phi)``."""
    return ConvectionOperator(dg, kappa, gsrc)(phi)


def max_abs_dg(dgs) -> float:
    if isinstance(dgs, EdgeField):
        dgs = [dgs]
    return max(float(max(np.max(np.abs(g.x)), np.max(np.abs(g.y)))) for g in dgs)


def convection_norm_bound(dgs, kappa: float, h: float) -> float:
    """Upper bound ``(8 kappa / h^2) B(-max |dg|)`` on ``||M||_inf``."""
    return 8.0 * kappa / h ** 2 * bernoulli(-max_abs_dg(dgs))
