"""Ready-made configurations and the manufactured-solution problem.

The manufactured solution on ``[-1, 1]^2`` with ``kappa = 1``, ``eps = 1/2``
and charges ``(+1, -1)`` is

    c_l = A e^{-t} C + 2,   A = pi^2 / 5,   C = cos(pi x) cos(pi y)
    D   = (pi e^{-t} / 2) (sin(pi x) cos(pi y), cos(pi x) sin(pi y)) = -(e^{-t} / 2) grad C.

Both species carry the same flux ``J = -(A e^{-t} / (2 pi^2)) grad C``,
whose divergence is ``-dc/dt``.  Solving ``J = -kappa (grad c - q c D / eps + g)``
for the face source gives

    g_l = q_l c D / eps + W,   W = A e^{-t} (2 pi^2 - 1 / kappa) / (2 pi) (sin cos, cos sin),

and since ``J^1 = J^2`` the displacement source is ``S = 2 kappa^2 dD/dt``
(with ``Theta = 0``).  Over one step the scheme receives the exact time
integral ``2 kappa^2 (D(t_{n+1}) - D(t_n))`` sampled at faces.
"""

from __future__ import annotations

import math

import numpy as np

from ..grid import CellField, EdgeField, Grid
from .config import EpsConfig, RhoConfig, RunConfig, SpeciesConfig

MMS_A = math.pi ** 2 / 5.0


class MMSProblem:
    """Exact fields and source terms of the manufactured solution."""

    def __init__(self, kappa: float = 1.0, eps: float = 0.5, charges=(1, -1), amplitude: float = MMS_A):
        self.kappa = float(kappa)
        self.eps = float(eps)
        self.charges = tuple(charges)
        self.amplitude = float(amplitude)

    def concentration(self, x, y, t):
        return self.amplitude * math.exp(-t) * np.cos(np.pi * x) * np.cos(np.pi * y) + 2.0

    def displacement(self, x, y, t):
        s = math.pi * math.exp(-t) / 2.0
        return (s * np.sin(np.pi * x) * np.cos(np.pi * y),
                s * np.cos(np.pi * x) * np.sin(np.pi * y))

    def flux(self, x, y, t):
        s = self.amplitude * math.exp(-t) / (2.0 * math.pi)
        return (s * np.sin(np.pi * x) * np.cos(np.pi * y),
                s * np.cos(np.pi * x) * np.sin(np.pi * y))

    def g(self, ell: int, x, y, t, component: int):
        """Component ``0`` (x) or ``1`` (y) of ``g_ell`` at points ``(x, y)``."""
        q = self.charges[ell]
        d = self.displacement(x, y, t)[component]
        w = self.amplitude * math.exp(-t) * (2 * math.pi ** 2 - 1.0 / self.kappa) / (2 * math.pi)
        trig = (np.sin(np.pi * x) * np.cos(np.pi * y) if component == 0
                else np.cos(np.pi * x) * np.sin(np.pi * y))
        return q * self.concentration(x, y, t) * d / self.eps + w * trig

    # discrete samples
    def exact_c(self, grid: Grid, t: float) -> CellField:
        return grid.sample_cell(lambda x, y: self.concentration(x, y, t))

    def exact_D(self, grid: Grid, t: float) -> EdgeField:
        return grid.sample_edge(lambda x, y: self.displacement(x, y, t)[0],
                                lambda x, y: self.displacement(x, y, t)[1])

    def g_edge(self, grid: Grid, ell: int, t: float) -> EdgeField:
        return grid.sample_edge(lambda x, y: self.g(ell, x, y, t, 0),
                                lambda x, y: self.g(ell, x, y, t, 1))

    def sources(self, grid: Grid, t: float) -> list[EdgeField]:
        return [self.g_edge(grid, ell, t) for ell in range(len(self.charges))]

    def s_integral(self, grid: Grid, t0: float, t1: float) -> EdgeField:
        """``int_{t0}^{t1} S dt = 2 kappa^2 (D(t1) - D(t0))`` at faces."""
        d0, d1 = self.exact_D(grid, t0), self.exact_D(grid, t1)
        k = 2.0 * self.kappa ** 2
        return EdgeField(grid, k * (d1.x - d0.x), k * (d1.y - d0.y))


def _janus_species(c0: float = 0.1):
    return [SpeciesConfig(q=1, v=0.716 ** 3, value=c0), SpeciesConfig(q=-1, v=0.676 ** 3, value=c0)]


def janus_config(example: int = 1, n: int = 64, dt: float = 1e-4, t_final: float = 0.1, **overrides) -> RunConfig:
    """Janus-ring charge dynamics with steric and Born terms.

    Example 1 has uniform ``eps = 1``; examples 2 and 3 use the tanh profile
    between 1 inside and 78 outside, with ``kappa = 0.01`` for example 3.
    """
    if example not in (1, 2, 3):
        raise ValueError("example must be 1, 2 or 3")
    eps = EpsConfig(kind="constant", value=1.0) if example == 1 else EpsConfig(kind="tanh", eps_w=78.0, eps_m=1.0)
    kw = dict(
        kappa=0.01 if example == 3 else 0.02,
        species=_janus_species(),
        nx=n, lx=2.0, x0=-1.0, dt=dt, t_final=t_final,
        lam=2.0, chi=198.9437, v0=0.275 ** 3, steric=True, born=True,
        eps=eps, rho_f=RhoConfig(kind="janus-ring"),
        # the Born barrier makes Picard contract slowly in the variable-eps cases
        picard_max_iter=100 if example == 1 else 2000,
    )
    kw.update(overrides)
    return RunConfig(**kw)


def cauchy_config(levels=(16, 32, 64, 128, 256), init: str = "trig-periodic", **overrides) -> RunConfig:
    """Refinement study with trigonometric data and variable ``eps`` on the unit square.

    The default data ``0.4 sin(2 pi x) sin(2 pi y) + 0.5`` is smooth on the
    periodic unit square.  ``init="trig"`` selects ``0.4 sin(pi x) sin(pi y) + 0.5``,
    whose periodic extension has a derivative jump along ``x = 0`` and
    ``y = 0`` that slows the observed ell-inf convergence on coarse meshes.
    """
    kw = dict(
        kappa=0.02,
        species=[SpeciesConfig(q=1, init=init), SpeciesConfig(q=-1, init=init)],
        nx=levels[0], lx=1.0, x0=0.0, dt_factor=0.1, t_final=0.1,
        eps=EpsConfig(kind="expression", name="cauchy"),
        experiment="converge-cauchy", levels=list(levels),
    )
    kw.update(overrides)
    return RunConfig(**kw)


def mms_config(levels=(16, 32, 64, 128), **overrides) -> RunConfig:
    """Manufactured-solution study on ``[-1, 1]^2``."""
    kw = dict(
        kappa=1.0,
        species=[SpeciesConfig(q=1, init="mms"), SpeciesConfig(q=-1, init="mms")],
        nx=levels[0], lx=2.0, x0=-1.0, dt_factor=0.1, t_final=0.1,
        eps=EpsConfig(kind="constant", value=0.5),
        experiment="converge-mms", levels=list(levels),
    )
    kw.update(overrides)
    return RunConfig(**kw)
