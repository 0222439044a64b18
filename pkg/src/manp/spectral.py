"""Scalar phi-functions and FFT application of functions of ``L_h = -kappa Lap_h + lam I``.

On a periodic grid the five-point Laplacian is diagonalised by the discrete
Fourier transform, with symbol

    -(4 / h^2) (sin^2(k pi / nx) + sin^2(l pi / ny)),

so any function of ``L_h`` is a per-mode multiplication.
"""

from __future__ import annotations

import functools
import math

import numpy as np
import scipy.fft

from .grid import CellField, Grid

_FE_CUT = 1e-5
# phi2 loses ~2 eps/x relative accuracy through cancellation; use the
# alternating series sum_k (-x)^k / (k+2)! below x = 1 (20 terms -> < 1e-20).
_PHI2_CUT = 1.0
_PHI2_COEF = np.array([1.0 / math.factorial(k + 2) for k in range(20)])


class CompatibilityError(ValueError):
    """Right-hand side of a periodic Poisson problem has nonzero mean."""


def _nonneg(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("argument must be nonnegative")
    return x


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


def f_e(x):
    """``(1 - exp(-x)) / x``, with ``f_e(0) = 1``."""
    xa = _nonneg(x)
    out = np.empty_like(xa)
    small = xa < _FE_CUT
    xs = xa[small]
    out[small] = 1.0 - xs / 2.0 + xs * xs / 6.0 - xs ** 3 / 24.0
    xl = xa[~small]
    out[~small] = -np.expm1(-xl) / xl
    return _scalar_or_array(x, out)


def phi2(x):
    """``(x - 1 + exp(-x)) / x^2``, with ``phi2(0) = 1/2``."""
    xa = _nonneg(x)
    out = np.empty_like(xa)
    small = xa < _PHI2_CUT
    out[small] = np.polynomial.polynomial.polyval(-xa[small], _PHI2_COEF)
    xl = xa[~small]
    out[~small] = (xl + np.expm1(-xl)) / (xl * xl)
    return _scalar_or_array(x, out)


def _inverse(x):
    x = np.asarray(x, dtype=float)
    if np.any(x == 0):
        raise ZeroDivisionError("inverse multiplier has a zero mode")
    return 1.0 / x


SCALAR_FUNCTIONS = {
    "f_e": f_e,
    "phi2": phi2,
    "exp_neg": lambda x: np.exp(-np.asarray(x, dtype=float)),
    "inverse": _inverse,
}


@functools.lru_cache(maxsize=32)
def laplacian_symbol(grid: Grid) -> np.ndarray:
    """Symbol of ``-Lap_h`` on the full ``(nx, ny)`` wavenumber array (>= 0)."""
    h = grid.h
    sx = np.sin(np.pi * np.arange(grid.nx) / grid.nx) ** 2
    sy = np.sin(np.pi * np.arange(grid.ny) / grid.ny) ** 2
    return (4.0 / h ** 2) * (sx[:, None] + sy[None, :])


def _workers(grid: Grid) -> int:
    # threading only pays off on large meshes
    return -1 if grid.nx * grid.ny >= 128 * 128 else 1


def _half(arr: np.ndarray, ny: int) -> np.ndarray:
    return arr[:, : ny // 2 + 1]


class SpectralMultipliers:
    """Eigenvalues of ``L_h`` for a fixed ``(grid, kappa, lam)``.

    ``eig`` and ``lap`` hold the full ``(nx, ny)`` tables; the real-to-complex
    transforms use their first ``ny // 2 + 1`` columns.  Multiplier arrays
    ``g(dt * eig)`` are cached per ``(g, dt)``.
    """

    def __init__(self, grid: Grid, kappa: float, lam: float):
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        if lam < 0:
            raise ValueError("stabilizer must be nonnegative")
        self.grid = grid
        self.kappa = float(kappa)
        self.lam = float(lam)
        self.lap = laplacian_symbol(grid)
        self.eig = self.kappa * self.lap + self.lam
        self.eig[0, 0] = self.lam
        self.lap.flags.writeable = False
        self.eig.flags.writeable = False
        self._eig_half = _half(self.eig, grid.ny)
        self._cache: dict = {}

    def multiplier(self, name: str, dt: float) -> np.ndarray:
        key = (name, float(dt))
        mult = self._cache.get(key)
        if mult is None:
            if dt <= 0:
                raise ValueError("time step must be positive")
            if name not in SCALAR_FUNCTIONS:
                raise KeyError(f"unknown scalar function {name!r}")
            if name == "inverse" and self.lam == 0:
                raise ZeroDivisionError("L_h is singular when the stabilizer is zero")
            mult = SCALAR_FUNCTIONS[name](dt * self._eig_half)
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = mult
        return mult

    def apply(self, name: str, dt: float, values: np.ndarray, scale: float = 1.0) -> np.ndarray:
        """Array-level ``scale * g(dt L_h) values``; leading axes are batched."""
        if scale == 1.0:
            mult = self.multiplier(name, dt)
        else:
            key = (name, float(dt), float(scale))
            mult = self._cache.get(key)
            if mult is None:
                mult = scale * self.multiplier(name, dt)
                self._cache[key] = mult
        w = _workers(self.grid)
        hat = scipy.fft.rfft2(values, axes=(-2, -1), workers=w)
        hat *= mult
        return scipy.fft.irfft2(hat, s=self.grid.shape, axes=(-2, -1), workers=w)


def apply_multiplier(m: SpectralMultipliers, g: str, dt: float, phi: CellField) -> CellField:
    """Return ``g(dt L_h) phi`` for ``g`` in ``{"f_e", "phi2", "inverse", "exp_neg"}``."""
    if phi.grid != m.grid:
        raise ValueError("field and multipliers live on different grids")
    return CellField(m.grid, m.apply(g, dt, phi.values))


def poisson_solve_array(rhs: np.ndarray, grid: Grid, tol_mean: float | None = None) -> np.ndarray:
    """Zero-mean solution of ``-Lap_h psi = rhs`` on raw arrays."""
    mean = float(rhs.mean())
    if tol_mean is None:
        tol_mean = 1e-10 * float(np.max(np.abs(rhs), initial=0.0))
    if abs(mean) > tol_mean:
        raise CompatibilityError(f"right-hand side mean {mean:.3e} exceeds {tol_mean:.3e}")
    sym = _half(laplacian_symbol(grid), grid.ny).copy()
    sym[0, 0] = 1.0
    hat = scipy.fft.rfft2(rhs)
    hat /= sym
    hat[0, 0] = 0.0
    return scipy.fft.irfft2(hat, s=grid.shape)


def poisson_solve(rhs: CellField, tol_mean: float | None = None) -> CellField:
    """Solve ``-Lap_h psi = rhs - mean(rhs)`` with ``mean(psi) = 0``.

    Raises :class:`CompatibilityError` if ``|mean(rhs)|`` exceeds ``tol_mean``
    (default ``1e-10 * ||rhs||_inf``): a nonzero mean means mass was lost
    somewhere upstream.
    """
    return CellField(rhs.grid, poisson_solve_array(rhs.values, rhs.grid, tol_mean))
