"""Structure-preservation observables: energy, mass, positivity, Gauss and curl residuals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import CellField, EdgeField
from .operators import curl_arrays, divergence_arrays
from .physics import ModelParams, SimState, born_potential, excess_potential, max_abs_dg, solvent_concentration


def _entropy(c: np.ndarray) -> float:
    if np.any(c <= 0):
        raise ValueError("energy requires strictly positive concentrations")
    return float(np.sum(c * np.log(c)))


def discrete_energy(state: SimState, params: ModelParams, weighted: bool = False) -> float:
    """Discrete free energy ``sum_l (c log c + mu_cr, 1) + kappa^2 (|D|^2 / eps, 1)``.

    With ``weighted=True`` the excess term is ``(c_l mu_cr_l, 1)`` instead.
    """
    h2 = params.grid.h ** 2
    total = sum(_entropy(ci.values) for ci in state.c)
    if params.has_excess:
        c0 = solvent_concentration(state.c, params) if params.steric else None
        for ell, ci in enumerate(state.c):
            mu = excess_potential(ell, state.c, params, c0).values
            total += float(np.sum(ci.values * mu)) if weighted else float(np.sum(mu))
    D, eps = state.D, params.eps_edge
    field_part = params.kappa ** 2 * (np.sum(D.x ** 2 / eps.x) + np.sum(D.y ** 2 / eps.y))
    return float(h2 * (total + field_part))


def free_energy(state: SimState, params: ModelParams) -> float:
    """Free energy whose variational derivative is ``log c + mu_cr``.

    ``sum_l (c log c, 1) + (c0 log(v0 c0) - c0, 1) + sum_l (c_l mu_born_l, 1)
    + kappa^2 (|D|^2 / eps, 1)``, with the solvent term present only when
    steric effects are on.
    """
    h2 = params.grid.h ** 2
    total = sum(_entropy(ci.values) for ci in state.c)
    if params.steric:
        c0 = solvent_concentration(state.c, params).values
        if np.any(c0 <= 0):
            raise ValueError("energy requires a positive solvent concentration")
        total += float(np.sum(c0 * np.log(params.v0 * c0) - c0))
    if params.born:
        for ell, ci in enumerate(state.c):
            total += float(np.sum(ci.values * born_potential(ell, params)))
    D, eps = state.D, params.eps_edge
    field_part = params.kappa ** 2 * (np.sum(D.x ** 2 / eps.x) + np.sum(D.y ** 2 / eps.y))
    return float(h2 * (total + field_part))


def total_mass(c: CellField) -> float:
    """``(c, 1)``."""
    return float(c.grid.h ** 2 * np.sum(c.values))


def min_concentration(state: SimState, params: ModelParams) -> float:
    """Smallest ion concentration, including the solvent when steric effects are on."""
    low = min(float(ci.values.min()) for ci in state.c)
    if params.steric:
        low = min(low, float(solvent_concentration(state.c, params).values.min()))
    return low


def charge_density(c: Sequence[CellField], rho_f: CellField, charges) -> np.ndarray:
    rho = np.array(rho_f.values)
    for q, ci in zip(charges, c):
        rho += q * ci.values
    return rho


def gauss_defect(D: EdgeField, c: Sequence[CellField], rho_f: CellField, kappa: float, charges,
                 rho: np.ndarray | None = None) -> np.ndarray:
    """``2 kappa^2 div D - sum q c - rho_f`` at cell centres; ``rho`` may be passed precomputed."""
    div = divergence_arrays(D.x, D.y, D.grid.h)
    if rho is None:
        rho = charge_density(c, rho_f, charges)
    return 2.0 * kappa ** 2 * div - rho


def gauss_residual(D: EdgeField, c: Sequence[CellField], rho_f: CellField, kappa: float, charges) -> float:
    """``|| 2 kappa^2 div D - sum q c - rho_f ||_inf``."""
    return float(np.max(np.abs(gauss_defect(D, c, rho_f, kappa, charges))))


def curl_residual(D: EdgeField, eps_edge: EdgeField) -> float:
    """``|| curl_h (D / eps) ||_inf`` over vertices."""
    return float(np.max(np.abs(curl_arrays(D.x / eps_edge.x, D.y / eps_edge.y, D.grid.h))))


@dataclass
class EnergyConditionReport:
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def energy_condition_check(state: SimState, dgs, dt: float, h: float,
                           params: ModelParams) -> EnergyConditionReport:
    """Sufficient step condition for discrete energy decay (diagnostic only).

    ``dt + 8 kappa dt / (lam h^2) <= 2 eps_min^3 kappa exp(-max|dg|) / (c_max eps_max^2 sum q^2)``
    with the extrema of ``eps`` over faces and ``c_max`` over all cells and
    species of ``state``.
    """
    eps = params.eps_edge
    eps_min = min(eps.x.min(), eps.y.min())
    eps_max = max(eps.x.max(), eps.y.max())
    c_max = max(float(ci.values.max()) for ci in state.c)
    q2 = float(np.sum(params.charges ** 2))
    lam = params.lam
    lhs = dt + (8.0 * params.kappa * dt / (lam * h * h) if lam > 0 else np.inf)
    rhs = 2.0 * eps_min ** 3 * params.kappa / (c_max * eps_max ** 2 * q2) * np.exp(-max_abs_dg(dgs))
    return EnergyConditionReport(float(lhs), float(rhs))


def normalized_energy(trace: Sequence[float]) -> np.ndarray:
    """``(F_n - F_final) / (F_0 - F_final)`` for plotting energy decay."""
    e = np.asarray(trace, dtype=float)
    span = e[0] - e[-1]
    return (e - e[-1]) / span if span != 0 else np.zeros_like(e)
