"""Mesh-refinement studies: Cauchy differences and manufactured-solution errors."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..grid import CellField, Grid
from .config import RunConfig
from .run import Simulation
from .setups import MMSProblem


class SolverFailure(RuntimeError):
    """A run inside a refinement study did not reach the final time."""

    def __init__(self, n, report):
        self.n = n
        self.report = report
        super().__init__(f"{n}x{n} run failed ({report.status}): {report.message}")


def restrict_fine_to_coarse(phi: CellField) -> CellField:
    """Average each 2x2 block of fine cells onto the coarse cell containing it."""
    g = phi.grid
    if g.nx % 2 or g.ny % 2:
        raise ValueError(f"fine grid {g.nx}x{g.ny} is not a 2x refinement of any grid")
    coarse = Grid(g.nx // 2, g.ny // 2, g.lx, g.ly, g.x0, g.y0)
    v = phi.values.reshape(coarse.nx, 2, coarse.ny, 2).mean(axis=(1, 3))
    return CellField(coarse, v)


def _norms(err: np.ndarray, h: float) -> tuple[float, float]:
    return float(np.max(np.abs(err))), float(math.sqrt(h * h * np.sum(err * err)))


def _order(prev: float, cur: float) -> float:
    if prev is None or prev <= 0 or cur <= 0:
        return math.nan
    return math.log2(prev / cur)


@dataclass
class TableRow:
    h: float
    err_inf: float
    order_inf: float
    err_2: float
    order_2: float
    label: str = ""


def _rows(hs, errs, labels=None) -> list[TableRow]:
    rows, prev = [], (None, None)
    for k, (h, (e_inf, e_2)) in enumerate(zip(hs, errs)):
        rows.append(TableRow(h, e_inf, _order(prev[0], e_inf), e_2, _order(prev[1], e_2),
                             labels[k] if labels else ""))
        prev = (e_inf, e_2)
    return rows


def write_table(path, rows: list[TableRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "err_inf", "order_inf", "err_2", "order_2"])
        for r in rows:
            w.writerow([repr(r.h), repr(r.err_inf), repr(r.order_inf), repr(r.err_2), repr(r.order_2)])


def format_table(rows: list[TableRow], title: str = "") -> str:
    lines = [title] if title else []
    lines.append(f"{'':>10} {'h':>10} {'err_inf':>12} {'order':>8} {'err_2':>12} {'order':>8}")
    for r in rows:
        lines.append(f"{r.label:>10} {r.h:10.6f} {r.err_inf:12.4E} {r.order_inf:8.4f} {r.err_2:12.4E} {r.order_2:8.4f}")
    return "\n".join(lines)


@dataclass
class LevelSummary:
    """Worst per-step solver observables of one refinement level."""

    n: int
    steps: int
    gauss_rel: float
    gauss_change: float
    gauss_change_rel: float
    curl_res: float
    energy_rise: float
    picard_iters: int
    picard_ratio: float
    c_min: float
    wall_time: float


def _summarize(n: int, sim: Simulation, wall: float) -> LevelSummary:
    recs = sim.records[1:]
    return LevelSummary(
        n=n, steps=len(recs),
        gauss_rel=max(r.gauss_res / (1.0 + r.rho_max) for r in recs),
        gauss_change=max(r.relax_gauss_change for r in recs),
        gauss_change_rel=max(r.relax_gauss_change / (1.0 + r.rho_max) for r in recs),
        curl_res=max(r.curl_res for r in recs),
        energy_rise=max(r.relax_energy_rise for r in recs),
        picard_iters=max(r.picard_iters for r in recs),
        picard_ratio=max(r.picard_ratio_max for r in recs),
        c_min=min(r.c_min for r in recs),
        wall_time=wall,
    )


def _final_concentrations(config: RunConfig, n: int, mms: bool):
    cfg = config.with_mesh(n)
    problem = MMSProblem(kappa=cfg.kappa, eps=cfg.eps.value,
                         charges=[s.q for s in cfg.species]) if mms else None
    sim = Simulation(cfg, mms=problem, diagnostics=False)
    report = sim.run()
    if report.status != "ok":
        raise SolverFailure(n, report)
    return [np.array(c.values) for c in sim.state.c], _summarize(n, sim, report.wall_time)


def _run_levels(config: RunConfig, mms: bool, workers: int, summaries: list | None):
    levels = list(config.levels)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_final_concentrations, config, n, mms) for n in levels]
            results = [f.result() for f in futures]
    else:
        results = [_final_concentrations(config, n, mms) for n in levels]
    if summaries is not None:
        summaries.extend(r[1] for r in results)
    return levels, [r[0] for r in results]


def converge_cauchy(config: RunConfig, species: int = 0, workers: int = 1,
                    summaries: list | None = None) -> list[TableRow]:
    """Cauchy differences ``c_coarse - restrict(c_fine)`` for consecutive mesh pairs.

    Each row is labelled by the pair and carries the coarse spacing.  If
    ``summaries`` is a list, one :class:`LevelSummary` per mesh is appended.
    """
    levels, finals = _run_levels(config, mms=False, workers=workers, summaries=summaries)
    hs, errs, labels = [], [], []
    for (nc, cc), (nf, cf) in zip(zip(levels, finals), zip(levels[1:], finals[1:])):
        if nf != 2 * nc:
            raise ValueError(f"levels {nc} and {nf} are not a 2x refinement")
        gf = config.with_mesh(nf).grid()
        coarse = restrict_fine_to_coarse(CellField(gf, cf[species]))
        h = config.lx / nc
        hs.append(h)
        errs.append(_norms(cc[species] - coarse.values, h))
        labels.append(f"{nc}-{nf}")
    return _rows(hs, errs, labels)


def converge_mms(config: RunConfig, workers: int = 1,
                 summaries: list | None = None) -> dict[int, list[TableRow]]:
    """Errors against the manufactured solution at ``t_final`` for every species."""
    levels, finals = _run_levels(config, mms=True, workers=workers, summaries=summaries)
    problem = MMSProblem(kappa=config.kappa, eps=config.eps.value, charges=[s.q for s in config.species])
    tables = {}
    for ell in range(len(config.species)):
        hs, errs = [], []
        for n, cs in zip(levels, finals):
            cfg = config.with_mesh(n)
            grid = cfg.grid()
            t_end = cfg.n_steps() * cfg.time_step()
            exact = problem.exact_c(grid, t_end).values
            hs.append(grid.h)
            errs.append(_norms(cs[ell] - exact, grid.h))
        tables[ell] = _rows(hs, errs, [f"{n}" for n in levels])
    return tables


def write_outputs(out_dir, name: str, rows: list[TableRow]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    write_table(path, rows)
    return path
