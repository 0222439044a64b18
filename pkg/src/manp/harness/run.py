"""Initialization and the time-stepping loop.

One step advances the concentrations by implicit ETD1, builds the
displacement predictor from the exact time integral of the ETD interpolant
plus a Gauss-law correction, relaxes it to a curl-free field and updates the
divergence-free extrapolation ``Theta``.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import diagnostics as diag
from ..ampere import GaussLawError, _correction_from_excess, excess_time_integral, predictor_rhs, theta_update
from ..curlfree import RelaxationError, relax
from ..etd import ContractionError, PicardError, PositivityError, step_concentrations
from ..grid import CellField, EdgeField, Grid, write_snapshot
from ..operators import divergence_arrays, gradient_arrays
from ..physics import SimState, StericOverflowError, check_solvent, solvent_concentration
from ..spectral import CompatibilityError, SpectralMultipliers, poisson_solve_array
from .config import ConfigError, RunConfig
from .setups import MMSProblem

logger = logging.getLogger(__name__)

# Exit codes by failure category.
EXIT_CODES = {
    "ok": 0,
    "config": 2,
    "picard": 3,
    "contraction": 3,
    "positivity": 4,
    "relaxation": 5,
    "gauss": 6,
    "compatibility": 7,
    "steric": 8,
    "initial": 9,
}

GAUSS_ABORT_TOL = 1e-8


class InitialDataError(ValueError):
    """Initial concentrations are not admissible."""


def failure_category(exc: BaseException) -> str:
    for cls, name in ((ContractionError, "contraction"), (PicardError, "picard"),
                      (PositivityError, "positivity"), (RelaxationError, "relaxation"),
                      (GaussLawError, "gauss"), (CompatibilityError, "compatibility"),
                      (StericOverflowError, "steric"), (InitialDataError, "initial"),
                      (ConfigError, "config")):
        if isinstance(exc, cls):
            return name
    raise exc


def diagnostics_header(n_species: int) -> list[str]:
    return (["step", "t", "energy", "energy_weighted"]
            + [f"mass_{k + 1}" for k in range(n_species)]
            + ["c_min", "gauss_res", "curl_res", "picard_iters", "relax_sweeps", "eta_max"])


@dataclass
class StepRecord:
    step: int
    t: float
    energy: float
    energy_weighted: float
    masses: list[float]
    c_min: float
    gauss_res: float
    curl_res: float
    picard_iters: int
    relax_sweeps: int
    eta_max: float
    # not part of the CSV
    free_energy: float = 0.0
    relax_gauss_change: float = 0.0
    relax_energy_rise: float = 0.0
    picard_ratio_max: float = 0.0
    rho_max: float = 0.0

    def row(self) -> list:
        return ([self.step, repr(self.t), repr(self.energy), repr(self.energy_weighted)]
                + [repr(m) for m in self.masses]
                + [repr(self.c_min), repr(self.gauss_res), repr(self.curl_res),
                   self.picard_iters, self.relax_sweeps, repr(self.eta_max)])


@dataclass
class RunReport:
    status: str
    steps: int
    t: float
    message: str = ""
    failure: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def to_dict(self) -> dict:
        return asdict(self)


def initial_displacement(c: list[CellField], rho_f: np.ndarray, params, tol_eta=1e-10,
                         max_sweeps=10000) -> tuple[EdgeField, int]:
    """Gauss-consistent, curl-free ``D^0``.

    Solves ``2 kappa^2 Lap psi = -rho^0`` spectrally, takes ``D = -grad psi``
    and relaxes it so that ``D / eps`` is curl free as well.
    """
    grid = params.grid
    rho = diag.charge_density(c, CellField(grid, rho_f), params.charges)
    # 2 kappa^2 Lap psi = -rho
    psi = poisson_solve_array(rho / (2.0 * params.kappa ** 2), grid)
    gx, gy = gradient_arrays(psi, grid.h)
    D = EdgeField(grid, -gx, -gy)
    res = relax(D, params.eps_edge, params.kappa, tol_eta, max_sweeps)
    return res.D, res.sweeps


class Simulation:
    """Stateful driver for one run of the scheme.

    ``mms`` switches on the manufactured-solution sources; the fixed charge
    then evolves as ``rho_f^{n+1} = rho_f^n + div int S`` so that the
    exact solution is Gauss-consistent.  With ``diagnostics=False`` the
    per-step energy and residual evaluations are skipped (refinement
    studies only need the final state).
    """

    def __init__(self, config: RunConfig, grid: Grid | None = None, mms: MMSProblem | None = None,
                 diagnostics: bool = True):
        self.config = config
        self.diagnostics = diagnostics
        self.grid = grid or config.grid()
        self.params = config.model_params(self.grid)
        self.dt = config.time_step()
        self.multipliers = SpectralMultipliers(self.grid, self.params.kappa, self.params.lam)
        self.mms = mms
        self._defect = None
        self.records: list[StepRecord] = []
        self.state = self._init_state()
        self.records.append(self._record(self.state, 0, 0, 0.0))

    def _init_state(self) -> SimState:
        cfg, grid, params = self.config, self.grid, self.params
        c = cfg.initial_concentrations(grid)
        for k, ci in enumerate(c):
            if ci.values.min() <= 0:
                raise InitialDataError(f"species {k + 1} initial concentration is not positive")
        if params.steric:
            check_solvent(solvent_concentration(c, params))
        if self.mms is not None:
            D = self.mms.exact_D(grid, 0.0)
            div = divergence_arrays(D.x, D.y, grid.h)
            rho = 2.0 * params.kappa ** 2 * div - diag.charge_density(c, grid.zeros_cell(), params.charges)
            self.rho_f = rho
            sweeps = 0
        else:
            self.rho_f = np.array(params.rho_f.values)
            try:
                D, sweeps = initial_displacement(c, self.rho_f, params, cfg.tol_eta, cfg.max_sweeps)
            except CompatibilityError as exc:
                raise InitialDataError(f"initial charge is not neutral: {exc}") from None
        self._init_sweeps = sweeps
        return SimState(t=0.0, c=c, D=D, theta=grid.zeros_edge())

    def rho_field(self) -> CellField:
        return CellField(self.grid, self.rho_f)

    def _gauss(self, state):
        """Charge density and Gauss defect of ``state``; the defect is kept for the next step."""
        p = self.params
        rho = diag.charge_density(state.c, self.rho_field(), p.charges)
        defect = diag.gauss_defect(state.D, state.c, None, p.kappa, p.charges, rho=rho)
        self._defect = (state.D, state.c, defect)
        return rho, defect

    def _record(self, state, picard_iters, sweeps, eta, extra=None) -> StepRecord:
        p = self.params
        weighted = diag.discrete_energy(state, p, weighted=True) if self.config.energy_weighted_mucr else np.nan
        rho, defect = self._gauss(state)
        rec = StepRecord(
            step=state.step, t=state.t,
            energy=diag.discrete_energy(state, p),
            energy_weighted=weighted,
            masses=[diag.total_mass(ci) for ci in state.c],
            c_min=diag.min_concentration(state, p),
            gauss_res=float(np.max(np.abs(defect))),
            curl_res=diag.curl_residual(state.D, p.eps_edge),
            picard_iters=picard_iters, relax_sweeps=sweeps, eta_max=eta,
            rho_max=float(np.max(np.abs(rho))),
            free_energy=diag.free_energy(state, p),
        )
        for k, v in (extra or {}).items():
            setattr(rec, k, v)
        return rec

    def step(self) -> StepRecord:
        """Advance one time step, update ``self.state`` and return its diagnostics."""
        cfg, p, m, dt = self.config, self.params, self.multipliers, self.dt
        state = self.state
        t0, t1 = state.t, state.t + dt
        sources = None
        if self.mms is not None:
            sources = self.mms.sources(self.grid, t0 if cfg.mms_source_time == "old" else t1)
        cs = step_concentrations(state, p, dt, m, mode=cfg.mode, tol=cfg.picard_tol,
                                 max_iter=cfg.picard_max_iter, sources=sources,
                                 enforce_contraction=cfg.enforce_contraction)
        excess = list(excess_time_integral(np.stack(cs.m_forcing), dt, m))
        k2 = 2.0 * p.kappa ** 2
        cached = self._defect
        if cached is not None and cached[0] is state.D and cached[1] is state.c:
            defect = cached[2]
        else:
            defect = self._gauss(state)[1]
        F = _correction_from_excess(excess, p, cfg.tol_mean, residual=-defect)
        s_int = self.mms.s_integral(self.grid, t0, t1) if self.mms is not None else None
        rx, ry = predictor_rhs(cs.fluxes(), excess, F, state.theta, dt, p, s_int)
        d_star = EdgeField(self.grid, state.D.x + rx / k2, state.D.y + ry / k2)
        if s_int is not None:
            self.rho_f = self.rho_f + divergence_arrays(s_int.x, s_int.y, self.grid.h)

        rel = relax(d_star, p.eps_edge, p.kappa, cfg.tol_eta, cfg.max_sweeps)
        theta = theta_update(state.theta, rel.D, d_star, dt, p.kappa)

        new = SimState(t=t1, c=cs.c, D=rel.D, theta=theta, last_dstar=d_star, step=state.step + 1)
        ratios = [r for rs in cs.contraction_ratios for r in rs]
        gauss_change = k2 * float(np.max(np.abs(divergence_arrays(rel.D.x - d_star.x, rel.D.y - d_star.y,
                                                                  self.grid.h))))
        extra = {
            "relax_gauss_change": gauss_change,
            # largest F_pot increase between sweeps, relative to F_pot before relaxing
            "relax_energy_rise": (float(max(np.diff(rel.energy_trace), default=0.0))
                                  / max(rel.energy_trace[0], 1e-300)),
            "picard_ratio_max": max(ratios, default=0.0),
        }
        if self.diagnostics:
            rec = self._record(new, max(cs.iterations), rel.sweeps, rel.max_eta, extra)
        else:
            # residuals only; energies are skipped to keep refinement studies cheap
            rho, defect = self._gauss(new)
            rec = StepRecord(new.step, t1, np.nan, np.nan, [], diag.min_concentration(new, p),
                             float(np.max(np.abs(defect))),
                             diag.curl_residual(new.D, p.eps_edge),
                             max(cs.iterations), rel.sweeps, rel.max_eta,
                             rho_max=float(np.max(np.abs(rho))), **extra)
        if rec.gauss_res > GAUSS_ABORT_TOL * (1.0 + rec.rho_max):
            raise GaussLawError(rec.gauss_res, GAUSS_ABORT_TOL * (1.0 + rec.rho_max))
        self.state = new
        self.records.append(rec)
        return rec

    def run(self, n_steps: int | None = None, out_dir: Path | str | None = None) -> RunReport:
        """Step to ``t_final`` (or ``n_steps``), writing outputs if ``out_dir`` is given.

        Solver failures are caught and returned as a report; the diagnostics
        CSV always holds every completed step.
        """
        n_steps = self.config.n_steps() if n_steps is None else n_steps
        out = Path(out_dir) if out_dir is not None else None
        writer = None
        start = time.perf_counter()
        cadence = max(1, n_steps // self.config.snapshots) if self.config.snapshots else 0
        fh = None
        try:
            if out is not None:
                out.mkdir(parents=True, exist_ok=True)
                fh = open(out / "diagnostics.csv", "w", newline="")
                writer = csv.writer(fh)
                writer.writerow(diagnostics_header(len(self.state.c)))
                writer.writerow(self.records[0].row())
                self.write_fields(out, "snap_000000")
            report = RunReport("ok", 0, self.state.t)
            for _ in range(n_steps):
                try:
                    rec = self.step()
                except (PicardError, PositivityError, RelaxationError, GaussLawError,
                        CompatibilityError, StericOverflowError) as exc:
                    report = RunReport(failure_category(exc), self.state.step, self.state.t, str(exc), {
                        "step": self.state.step + 1,
                        "reason": type(exc).__name__,
                        "last_gauss_res": self.records[-1].gauss_res,
                        "last_curl_res": self.records[-1].curl_res,
                        "last_c_min": self.records[-1].c_min,
                    })
                    logger.error("step %d failed: %s", self.state.step + 1, exc)
                    break
                if writer is not None:
                    writer.writerow(rec.row())
                    if cadence and rec.step % cadence == 0 and rec.step < n_steps:
                        self.write_fields(out, f"snap_{rec.step:06d}")
            else:
                report = RunReport("ok", self.state.step, self.state.t)
        finally:
            if fh is not None:
                fh.close()
        report.wall_time = time.perf_counter() - start
        if out is not None:
            self.write_fields(out, "final")
            (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
        return report

    def write_fields(self, out: Path, stem: str) -> None:
        for k, ci in enumerate(self.state.c):
            write_snapshot(out / f"{stem}_c{k + 1}.txt", ci)
        write_snapshot(out / f"{stem}_D.txt", self.state.D)
        if stem == "final":
            write_snapshot(out / f"{stem}_theta.txt", self.state.theta)


def init_state(config: RunConfig) -> SimState:
    return Simulation(config).state


def run(config: RunConfig, out_dir=None) -> RunReport:
    sim = Simulation(config)
    return sim.run(out_dir=out_dir if out_dir is not None else config.output_path)
