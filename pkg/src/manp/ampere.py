"""Maxwell-Ampere predictor for the displacement field.

Integrating the ETD1 ansatz ``c~(t_n + s) = c^n + L^{-1} (I - e^{-L s}) M c_*``
over one step gives

    int c~ dt = dt c^n + dt^2 phi2(dt L) M c_*,

where ``c_*`` is the vector the convection operator acted on
(``c^{n+1} = c^n + dt f_e(dt L) M c_*``).  From that identity

    kappa Lap (int c~ - dt c^n) + dt M c_* = (c^{n+1} - c^n) + lam (int c~ - dt c^n),

so the Gauss-law correction must cancel ``sum_l q_l lam (int c~ - dt c^n)``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .grid import CellField, EdgeField
from .operators import divergence_arrays, gradient_arrays
from .physics import ConvectionOperator, ModelParams
from .spectral import SpectralMultipliers, poisson_solve_array


class GaussLawError(RuntimeError):
    def __init__(self, residual, tolerance):
        self.residual = residual
        self.tolerance = tolerance
        super().__init__(f"Gauss-law residual {residual:.3e} exceeds {tolerance:.3e}")


def excess_time_integral(m_forcing: np.ndarray, dt: float, m: SpectralMultipliers) -> np.ndarray:
    """``int c~ dt - dt c^n = dt^2 phi2(dt L) M c_*`` on raw arrays (batched)."""
    return m.apply("phi2", dt, m_forcing, scale=dt * dt)


def time_integral_concentration(c_n: CellField, c_star: CellField, dg: EdgeField, dt: float,
                                m: SpectralMultipliers, gsrc: EdgeField | None = None) -> CellField:
    """Exact time integral of the ETD1 interpolant over ``[t_n, t_n + dt]``.

    ``c_star`` is the argument of ``M`` in the ETD1 equation: the converged
    ``c^{n+1}``, or the last Picard iterate to make the Gauss identity hold
    to rounding.
    """
    mc = ConvectionOperator(dg, m.kappa, gsrc).apply_array(c_star.values)
    return CellField(c_n.grid, dt * c_n.values + excess_time_integral(mc, dt, m))


def correction_rhs(excess: Sequence[np.ndarray], params: ModelParams) -> np.ndarray:
    rhs = np.zeros(params.grid.shape)
    for s, e in zip(params.species, excess):
        rhs += s.q * e
    return params.lam * rhs


def gauss_correction(time_integrals: Sequence[CellField], c_n: Sequence[CellField], dt: float,
                     params: ModelParams, tol_mean: float | None = None) -> EdgeField:
    """Gauss-law correction ``F = grad psi`` with ``-Lap psi = sum_l q_l lam (int c~ - dt c^n)``.

    A nonzero mean of the right-hand side raises
    :class:`manp.spectral.CompatibilityError`.
    """
    excess = [ti.values - dt * cn.values for ti, cn in zip(time_integrals, c_n)]
    return _correction_from_excess(excess, params, tol_mean)


def _correction_from_excess(excess, params, tol_mean=None, residual=None) -> EdgeField:
    """``F = grad psi``; a given Gauss residual ``rho^n - 2 kappa^2 div D^n`` is removed as well.

    The residual vanishes in exact arithmetic.  Feeding it back keeps rounding
    errors from accumulating in the Gauss law over many steps.
    """
    grid = params.grid
    rhs = correction_rhs(excess, params)
    if residual is not None:
        # the mean of the residual is rounding noise, not a compatibility defect
        rhs = rhs - (residual - residual.mean())
    psi = poisson_solve_array(rhs, grid, tol_mean)
    return EdgeField(grid, *gradient_arrays(psi, grid.h))


def predictor_rhs(J: Sequence[EdgeField], excess: Sequence[np.ndarray], F: EdgeField,
                  theta: EdgeField, dt: float, params: ModelParams, source: EdgeField | None = None):
    """Right-hand side of ``2 kappa^2 (D* - D^n) = ...`` as two face arrays."""
    h, kappa = params.grid.h, params.kappa
    rx = F.x + dt * theta.x
    ry = F.y + dt * theta.y
    for s, j, e in zip(params.species, J, excess):
        gx, gy = gradient_arrays(e, h)
        rx = rx + s.q * (kappa * gx - dt * j.x)
        ry = ry + s.q * (kappa * gy - dt * j.y)
    if source is not None:
        rx = rx + source.x
        ry = ry + source.y
    return rx, ry


def predict_displacement(D_n: EdgeField, theta: EdgeField, J: Sequence[EdgeField],
                         time_integrals: Sequence[CellField], c_n: Sequence[CellField],
                         F: EdgeField, dt: float, params: ModelParams,
                         source: EdgeField | None = None) -> EdgeField:
    """Displacement predictor ``D*`` solved facewise.

    ``2 kappa^2 (D* - D^n) = sum_l q_l (kappa grad int c~ - dt J_l - kappa dt grad c^n)
    + F + dt Theta (+ source)``.  ``J`` must be the fluxes of the ETD1 forcing
    iterate for the discrete Gauss law to carry over exactly.
    """
    excess = [ti.values - dt * cn.values for ti, cn in zip(time_integrals, c_n)]
    rx, ry = predictor_rhs(J, excess, F, theta, dt, params, source)
    k2 = 2.0 * params.kappa ** 2
    return EdgeField(D_n.grid, D_n.x + rx / k2, D_n.y + ry / k2)


def theta_update(theta_prev: EdgeField, D_relaxed: EdgeField, D_star: EdgeField,
                 dt: float, kappa: float) -> EdgeField:
    """``Theta^n = Theta^{n-1} + (2 kappa^2 / dt) (D^n - D*^n)``.

    Both displacements satisfy the same Gauss law, so the increment is
    divergence-free.
    """
    k = 2.0 * kappa ** 2 / dt
    return EdgeField(theta_prev.grid,
                     theta_prev.x + k * (D_relaxed.x - D_star.x),
                     theta_prev.y + k * (D_relaxed.y - D_star.y))


def divergence_residual(f: EdgeField) -> float:
    return float(np.max(np.abs(divergence_arrays(f.x, f.y, f.grid.h))))
