"""Central-difference operators on the periodic staggered mesh.

The ``*_arrays`` kernels work on raw ``(nx, ny)`` arrays and are what the
solver loops call; the field-level functions wrap them.
"""

from __future__ import annotations

import numba
import numpy as np

from .grid import CellField, EdgeField, VertexField


# explicit periodic loops: same arithmetic as shifted-array differences, without the temporaries
@numba.njit(cache=True)
def _gradient(phi, h):
    nx, ny = phi.shape
    gx = np.empty_like(phi)
    gy = np.empty_like(phi)
    for i in range(nx):
        ip = i + 1 if i + 1 < nx else 0
        for j in range(ny):
            jp = j + 1 if j + 1 < ny else 0
            gx[i, j] = (phi[ip, j] - phi[i, j]) / h
            gy[i, j] = (phi[i, jp] - phi[i, j]) / h
    return gx, gy


@numba.njit(cache=True)
def _divergence(fx, fy, h):
    nx, ny = fx.shape
    out = np.empty_like(fx)
    for i in range(nx):
        im = i - 1 if i > 0 else nx - 1
        for j in range(ny):
            jm = j - 1 if j > 0 else ny - 1
            out[i, j] = ((fx[i, j] - fx[im, j]) + (fy[i, j] - fy[i, jm])) / h
    return out


@numba.njit(cache=True)
def _curl(fx, fy, h):
    nx, ny = fx.shape
    out = np.empty_like(fx)
    for i in range(nx):
        ip = i + 1 if i + 1 < nx else 0
        for j in range(ny):
            jp = j + 1 if j + 1 < ny else 0
            out[i, j] = ((fy[ip, j] - fy[i, j]) - (fx[i, jp] - fx[i, j])) / h
    return out


def _f(a):
    return np.asarray(a, dtype=float)


def gradient_arrays(phi: np.ndarray, h: float):
    return _gradient(_f(phi), float(h))


def divergence_arrays(fx: np.ndarray, fy: np.ndarray, h: float) -> np.ndarray:
    return _divergence(_f(fx), _f(fy), float(h))


def laplacian_arrays(phi: np.ndarray, h: float) -> np.ndarray:
    return divergence_arrays(*gradient_arrays(phi, h), h)


def curl_arrays(fx: np.ndarray, fy: np.ndarray, h: float) -> np.ndarray:
    # vertex (i+1/2, j+1/2): d_x f^y - d_y f^x around the loop
    return _curl(_f(fx), _f(fy), float(h))


def divergence(f: EdgeField) -> CellField:
    """Discrete divergence ``d_x f^x + d_y f^y`` at cell centers."""
    return CellField(f.grid, divergence_arrays(f.x, f.y, f.grid.h))


def gradient(phi: CellField) -> EdgeField:
    """Discrete gradient ``(D_x phi, D_y phi)`` on faces."""
    return EdgeField(phi.grid, *gradient_arrays(phi.values, phi.grid.h))


def laplacian(phi: CellField) -> CellField:
    """Five-point Laplacian, identical to ``divergence(gradient(phi))``."""
    return CellField(phi.grid, laplacian_arrays(phi.values, phi.grid.h))


def curl2d(f: EdgeField) -> VertexField:
    """Scalar 2-D curl of a face field, located at vertices."""
    return VertexField(f.grid, curl_arrays(f.x, f.y, f.grid.h))


def edge_laplacian(f: EdgeField) -> EdgeField:
    """Componentwise five-point Laplacian of each face family."""
    h = f.grid.h
    return EdgeField(f.grid, laplacian_arrays(f.x, h), laplacian_arrays(f.y, h))
