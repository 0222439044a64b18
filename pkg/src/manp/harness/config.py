"""Run configuration: YAML loading, validation and construction of model fields."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..grid import CellField, EdgeField, Grid
from ..physics import ModelParams, SpeciesParams


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


# Named coefficient profiles, referenced from configs by tag.
def _eps_cauchy(x, y):
    return 0.1 * np.cos(np.pi * x) * np.cos(np.pi * y) + 0.2


def _init_trig(x, y):
    return 0.4 * np.sin(np.pi * x) * np.sin(np.pi * y) + 0.5


def _init_trig_periodic(x, y):
    # smooth on the unit torus, unlike "trig" whose derivative jumps at x, y = 0
    return 0.4 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y) + 0.5


def _init_mms(x, y):
    return np.pi ** 2 * np.cos(np.pi * x) * np.cos(np.pi * y) / 5.0 + 2.0


EPS_EXPRESSIONS = {"cauchy": _eps_cauchy}
INITIAL_EXPRESSIONS = {"trig": _init_trig, "trig-periodic": _init_trig_periodic, "mms": _init_mms}
EPS_KINDS = ("constant", "tanh", "expression")
RHO_KINDS = ("zero", "janus-ring")
INIT_KINDS = ("uniform", "expression")
EXPERIMENTS = ("run", "converge-cauchy", "converge-mms")


@dataclass
class SpeciesConfig:
    q: int
    v: float = 1.0
    a: float | None = None
    init: str = "uniform"
    value: float = 0.1

    def __post_init__(self):
        if self.init not in INIT_KINDS and self.init not in INITIAL_EXPRESSIONS:
            raise ConfigError(f"unknown initial condition {self.init!r}")
        if self.v <= 0:
            raise ConfigError("species volume must be positive")

    @property
    def born_radius(self) -> float:
        # radius of a sphere with the ion's volume unless given explicitly
        return self.a if self.a is not None else (3.0 * self.v / (4.0 * math.pi)) ** (1.0 / 3.0)

    def initial(self, grid: Grid) -> CellField:
        if self.init == "uniform":
            return CellField(grid, np.full(grid.shape, float(self.value)))
        return grid.sample_cell(INITIAL_EXPRESSIONS[self.init])


@dataclass
class EpsConfig:
    kind: str = "constant"
    value: float = 1.0
    eps_w: float = 78.0
    eps_m: float = 1.0
    slope: float = 50.0
    radius: float = 0.5
    name: str = ""

    def __post_init__(self):
        if self.kind not in EPS_KINDS:
            raise ConfigError(f"unknown eps kind {self.kind!r}; expected one of {EPS_KINDS}")
        if self.kind == "expression" and self.name not in EPS_EXPRESSIONS:
            raise ConfigError(f"unknown eps expression {self.name!r}")

    def function(self):
        if self.kind == "constant":
            return lambda x, y: np.full(np.shape(x), float(self.value))
        if self.kind == "tanh":
            amp = (self.eps_w - self.eps_m) / 2.0

            def profile(x, y):
                r = np.sqrt(x * x + y * y)
                return amp * (np.tanh(self.slope * (r - self.radius)) + 1.0) + self.eps_m

            return profile
        return EPS_EXPRESSIONS[self.name]


@dataclass
class RhoConfig:
    kind: str = "zero"
    r2_low: float = 0.24
    r2_high: float = 0.26
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in RHO_KINDS:
            raise ConfigError(f"unknown rho_f kind {self.kind!r}; expected one of {RHO_KINDS}")

    def sample(self, grid: Grid) -> CellField:
        if self.kind == "zero":
            return grid.zeros_cell()
        X, Y = grid.cell_centers()
        r2 = X * X + Y * Y
        ring = (r2 >= self.r2_low) & (r2 <= self.r2_high)
        # theta in (0, pi] is the upper half plane, including the negative x-axis
        theta = np.arctan2(Y, X)
        upper = (theta > 0) | ((Y == 0) & (X < 0))
        return CellField(grid, self.value * ring * np.where(upper, 1.0, -1.0))


@dataclass
class RunConfig:
    """Everything needed to set up and run one simulation or refinement study.

    ``dt`` fixes the time step; otherwise ``dt_factor * h^2`` is used, which
    is how refinement studies scale the step with the mesh.
    """

    kappa: float
    species: list
    nx: int = 64
    ny: int | None = None
    lx: float = 1.0
    ly: float | None = None
    x0: float = 0.0
    y0: float | None = None
    dt: float | None = None
    dt_factor: float | None = None
    t_final: float = 0.1
    mode: str = "implicit"
    lam: float = 2.0
    chi: float = 0.0
    v0: float = 1.0
    steric: bool = False
    born: bool = False
    eps: Any = field(default_factory=EpsConfig)
    rho_f: Any = field(default_factory=RhoConfig)
    picard_tol: float = 1e-12
    picard_max_iter: int = 100
    tol_eta: float = 1e-10
    max_sweeps: int = 10000
    tol_mean: float | None = None
    enforce_contraction: bool = False
    energy_weighted_mucr: bool = True
    output_dir: str = "output"
    snapshots: int = 10
    experiment: str = "run"
    levels: list = field(default_factory=lambda: [16, 32, 64, 128])
    mms_source_time: str = "old"

    def __post_init__(self):
        self.species = [s if isinstance(s, SpeciesConfig) else _build(SpeciesConfig, s, f"species[{k}]")
                        for k, s in enumerate(self.species)]
        if not self.species:
            raise ConfigError("at least one species is required")
        if not isinstance(self.eps, EpsConfig):
            self.eps = _build(EpsConfig, self.eps, "eps")
        if not isinstance(self.rho_f, RhoConfig):
            self.rho_f = _build(RhoConfig, self.rho_f, "rho_f")
        self.ny = self.nx if self.ny is None else self.ny
        self.ly = self.lx if self.ly is None else self.ly
        self.y0 = self.x0 if self.y0 is None else self.y0
        if self.mode not in ("implicit", "explicit"):
            raise ConfigError(f"mode must be implicit or explicit, got {self.mode!r}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.mms_source_time not in ("old", "new"):
            raise ConfigError("mms_source_time must be 'old' or 'new'")
        if (self.dt is None) == (self.dt_factor is None):
            raise ConfigError("give exactly one of dt and dt_factor")
        if self.dt is not None and self.dt <= 0 or self.dt_factor is not None and self.dt_factor <= 0:
            raise ConfigError("time step must be positive")
        if self.kappa <= 0:
            raise ConfigError("kappa must be positive")
        if self.snapshots < 0:
            raise ConfigError("snapshots must be nonnegative")
        if self.t_final < self.time_step():
            raise ConfigError("t_final must be at least one time step")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return _build(cls, dict(data), "config")

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh)
        return cls.from_dict(data or {})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def with_mesh(self, n: int) -> "RunConfig":
        """Copy on an ``n x n`` mesh of the same domain."""
        return dataclasses.replace(self, nx=n, ny=n)

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)

    def grid(self) -> Grid:
        try:
            return Grid(self.nx, self.ny, self.lx, self.ly, self.x0, self.y0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def time_step(self) -> float:
        if self.dt is not None:
            return float(self.dt)
        h = self.lx / self.nx
        return float(self.dt_factor * h * h)

    def n_steps(self) -> int:
        # tolerate rounding in t_final / dt
        return max(1, int(math.ceil(self.t_final / self.time_step() - 1e-9)))

    def model_params(self, grid: Grid | None = None) -> ModelParams:
        grid = grid or self.grid()
        f = self.eps.function()
        species = tuple(SpeciesParams(int(s.q), float(s.v), float(s.born_radius)) for s in self.species)
        return ModelParams(
            kappa=self.kappa,
            species=species,
            eps_cell=grid.sample_cell(f),
            eps_edge=grid.sample_edge(f),
            rho_f=self.rho_f.sample(grid),
            lam=self.lam,
            chi=self.chi,
            v0=self.v0,
            steric=self.steric,
            born=self.born,
        )

    def initial_concentrations(self, grid: Grid | None = None) -> list[CellField]:
        grid = grid or self.grid()
        return [s.initial(grid) for s in self.species]
