"""Implicit ETD1 update of the concentrations.

Each species solves the linear fixed-point problem

    c^{n+1} = c^n + dt f_e(dt L_h) M^n c^{n+1}

by Picard iteration, with ``f_e(dt L_h)`` applied in Fourier space and
``M^n`` the Scharfetter-Gummel convection operator frozen at ``t^n``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .grid import CellField, EdgeField
from .physics import (
    ConvectionOperator,
    ModelParams,
    SimState,
    bernoulli,
    dg_edges,
    excess_potential,
    max_abs_dg,
    solvent_concentration,
)
from .spectral import SpectralMultipliers

logger = logging.getLogger(__name__)


class PicardError(RuntimeError):
    """Picard iteration failed to converge or produced non-finite values."""

    def __init__(self, message, iterations=0, last_update=np.nan):
        super().__init__(message)
        self.iterations = iterations
        self.last_update = last_update


class ContractionError(PicardError):
    """The sufficient contraction condition fails and was not overridden."""


class PositivityError(RuntimeError):
    def __init__(self, species, location, value):
        self.species = species
        self.location = location
        self.value = value
        super().__init__(f"species {species} lost positivity at cell {location}: {value:.3e}")


@dataclass
class PicardResult:
    c: CellField
    iterations: int
    # last iterate fed into M: c = c^n + dt f_e(dt L) M forcing holds to rounding
    forcing: np.ndarray
    m_forcing: np.ndarray
    updates: list[float] = field(default_factory=list)

    @property
    def contraction_ratios(self) -> list[float]:
        u = self.updates
        return [u[k + 1] / u[k] for k in range(len(u) - 1) if u[k] > 0]


def contraction_check(dgs, dt: float, h: float, kappa: float):
    """Sufficient solvability condition ``dt / h^2 < 1 / (16 kappa B(-max|dg|))``.

    Returns ``(ok, margin)`` with ``margin`` the ratio of the left side to
    the right side, so ``ok`` is ``margin < 1``.
    """
    margin = 16.0 * kappa * bernoulli(-max_abs_dg(dgs)) * dt / h ** 2
    return margin < 1.0, float(margin)


@numba.njit(cache=True)
def _update_norms(new, old):
    """``(max |new - old|, max |old|)`` in one pass."""
    d = 0.0
    a = 0.0
    for i in range(new.shape[0]):
        for j in range(new.shape[1]):
            v = abs(new[i, j] - old[i, j])
            if v > d or v != v:
                d = v
            w = abs(old[i, j])
            if w > a:
                a = w
    return d, a


def _picard(c_n: np.ndarray, op: ConvectionOperator, dt: float, m: SpectralMultipliers,
            tol: float, max_iter: int) -> PicardResult:
    ck = c_n
    updates = []
    for k in range(1, max_iter + 1):
        mc = op.apply_array(ck)
        c_next = c_n + m.apply("f_e", dt, mc, scale=dt)
        diff, size = _update_norms(c_next, ck)
        updates.append(diff)
        if not np.isfinite(diff):
            raise PicardError("non-finite Picard iterate", k, diff)
        if diff <= tol * (1.0 + size):
            return PicardResult(CellField(m.grid, c_next), k, ck, mc, updates)
        ck = c_next
    raise PicardError(
        f"Picard iteration did not converge in {max_iter} iterations (last update {diff:.3e})",
        max_iter, diff)


def picard_solve(c_n: CellField, dg: EdgeField, dt: float, m: SpectralMultipliers,
                 tol: float = 1e-12, max_iter: int = 100, gsrc: EdgeField | None = None,
                 enforce_contraction: bool = True) -> PicardResult:
    """Solve the implicit ETD1 equation for one species.

    Iterates ``c_{k+1} = c^n + dt f_e(dt L_h) M c_k`` from ``c_0 = c^n`` until
    ``||c_{k+1} - c_k||_inf <= tol (1 + ||c_k||_inf)``.  With
    ``enforce_contraction`` the sufficient contraction condition is checked
    first and :class:`ContractionError` raised if it fails.
    """
    if dt <= 0:
        raise ValueError("time step must be positive")
    if enforce_contraction:
        ok, margin = contraction_check(dg, dt, dg.grid.h, m.kappa)
        if not ok:
            raise ContractionError(f"contraction condition violated (margin {margin:.3g})")
    op = ConvectionOperator(dg, m.kappa, gsrc)
    return _picard(c_n.values, op, dt, m, tol, max_iter)


@dataclass
class PositivityReport:
    evaluated: bool
    alpha_min: float = np.nan
    lhs: float = np.nan
    rhs: float = np.nan
    holds: bool | None = None

    def __str__(self):
        if not self.evaluated:
            return "not evaluated (dense-only diagnostic)"
        return f"alpha_min={self.alpha_min:.4g} lhs={self.lhs:.4g} rhs={self.rhs:.4g} holds={self.holds}"


def convection_matrix(dg: EdgeField, kappa: float) -> np.ndarray:
    """Dense matrix of ``M`` acting on row-major flattened cell arrays."""
    op = ConvectionOperator(dg, kappa)
    n = dg.grid.nx * dg.grid.ny
    eye = np.eye(n).reshape(n, *dg.grid.shape)
    return np.stack([op.apply_array(e).ravel() for e in eye], axis=1)


def positivity_condition_check(dgs, dt: float, h: float, kappa: float, lam: float,
                               dense_grid_limit: int = 10) -> PositivityReport:
    """Sufficient positivity condition ``(4 kappa / h^2 + lam / 4) dt < a / (4 + 2 a)``.

    ``a`` is the smallest entry of ``(I - dt M)^{-1}`` over all species, found
    by dense inversion; grids larger than ``dense_grid_limit`` in either
    direction are skipped.
    """
    if isinstance(dgs, EdgeField):
        dgs = [dgs]
    grid = dgs[0].grid
    if max(grid.nx, grid.ny) > dense_grid_limit:
        return PositivityReport(False)
    n = grid.nx * grid.ny
    alpha = np.inf
    for dg in dgs:
        inv = np.linalg.inv(np.eye(n) - dt * convection_matrix(dg, kappa))
        alpha = min(alpha, float(inv.min()))
    lhs = (4.0 * kappa / h ** 2 + lam / 4.0) * dt
    rhs = alpha / (4.0 + 2.0 * alpha)
    return PositivityReport(True, alpha, lhs, rhs, bool(alpha > 0 and lhs < rhs))


@dataclass
class ConcentrationStep:
    c: list[CellField]
    dg: list[EdgeField]
    ops: list[ConvectionOperator]
    forcing: list[np.ndarray]
    m_forcing: list[np.ndarray]
    iterations: list[int]
    contraction_ratios: list[list[float]]

    def fluxes(self) -> list[EdgeField]:
        """``J(dg^n, c_*)`` at the Picard forcing iterate, one per species."""
        return [EdgeField(op.grid, *op.flux_arrays(f)) for op, f in zip(self.ops, self.forcing)]


def step_concentrations(state: SimState, params: ModelParams, dt: float, m: SpectralMultipliers,
                        mode: str = "implicit", tol: float = 1e-12, max_iter: int = 100,
                        sources: Sequence[EdgeField | None] | None = None,
                        enforce_contraction: bool = False) -> ConcentrationStep:
    """Advance all species by one ETD1 step with ``dg`` frozen at ``t^n``.

    ``sources`` holds optional per-species face source fields (manufactured
    solutions).  Raises :class:`PositivityError` if any new concentration is
    nonpositive.
    """
    if mode not in ("implicit", "explicit"):
        raise ValueError(f"unknown mode {mode!r}")
    nspec = len(params.species)
    sources = sources or [None] * nspec
    c0 = solvent_concentration(state.c, params) if params.steric else None
    out = ConcentrationStep([], [], [], [], [], [], [])
    for ell in range(nspec):
        mu = excess_potential(ell, state.c, params, c0) if params.has_excess else None
        dg = dg_edges(ell, state.D, mu, params)
        op = ConvectionOperator(dg, params.kappa, sources[ell])
        c_n = state.c[ell].values
        if mode == "implicit":
            if enforce_contraction:
                ok, margin = contraction_check(dg, dt, dg.grid.h, params.kappa)
                if not ok:
                    raise ContractionError(f"contraction condition violated (margin {margin:.3g})")
            res = _picard(c_n, op, dt, m, tol, max_iter)
            c_new, forcing, mf = res.c, res.forcing, res.m_forcing
            iters, ratios = res.iterations, res.contraction_ratios
        else:
            mf = op.apply_array(c_n)
            c_new = CellField(m.grid, c_n + m.apply("f_e", dt, mf, scale=dt))
            forcing, iters, ratios = c_n, 0, []
        bad = np.argmin(c_new.values)
        if c_new.values.flat[bad] <= 0:
            loc = np.unravel_index(bad, c_new.values.shape)
            raise PositivityError(ell, tuple(map(int, loc)), float(c_new.values.flat[bad]))
        out.c.append(c_new)
        out.dg.append(dg)
        out.ops.append(op)
        out.forcing.append(forcing)
        out.m_forcing.append(mf)
        out.iterations.append(iters)
        out.contraction_ratios.append(ratios)
    return out
