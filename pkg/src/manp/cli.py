"""Command-line entry point: ``manp run|converge-cauchy|converge-mms|check <config>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import diagnostics as diag
from .curlfree import RelaxationError
from .etd import contraction_check, positivity_condition_check
from .harness.config import ConfigError, RunConfig
from .harness.convergence import SolverFailure, converge_cauchy, converge_mms, format_table, write_outputs
from .harness.run import EXIT_CODES, InitialDataError, Simulation, failure_category
from .physics import StericOverflowError, dg_edges, excess_potential, solvent_concentration

logger = logging.getLogger("manp")


def _load(path) -> RunConfig:
    try:
        return RunConfig.load(path)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out) if args.out else cfg.output_path


def cmd_run(args) -> int:
    cfg = _load(args.config)
    sim = Simulation(cfg)
    out = _out_dir(args, cfg)
    report = sim.run(n_steps=args.steps, out_dir=out)
    last = sim.records[-1]
    print(f"status={report.status} steps={report.steps} t={report.t:.6g} wall={report.wall_time:.1f}s")
    print(f"energy={last.energy:.10e} c_min={last.c_min:.4e} gauss_res={last.gauss_res:.2e} "
          f"curl_res={last.curl_res:.2e}")
    if report.status != "ok":
        print(f"failure: {json.dumps(report.failure)}", file=sys.stderr)
    print(f"outputs written to {out}")
    return report.exit_code


def cmd_converge_cauchy(args) -> int:
    cfg = _load(args.config)
    rows = converge_cauchy(cfg, workers=args.workers)
    print(format_table(rows, "Cauchy differences of c1"))
    path = write_outputs(_out_dir(args, cfg), "cauchy.csv", rows)
    print(f"table written to {path}")
    return 0


def cmd_converge_mms(args) -> int:
    cfg = _load(args.config)
    tables = converge_mms(cfg, workers=args.workers)
    out = _out_dir(args, cfg)
    for ell, rows in tables.items():
        print(format_table(rows, f"manufactured-solution errors of c{ell + 1}"))
        path = write_outputs(out, f"mms_c{ell + 1}.csv", rows)
        print(f"table written to {path}")
    return 0


def cmd_check(args) -> int:
    """Evaluate the sufficient step-size conditions on the initial state."""
    cfg = _load(args.config)
    sim = Simulation(cfg)
    p, st, h, dt = sim.params, sim.state, sim.grid.h, sim.dt
    c0 = solvent_concentration(st.c, p) if p.steric else None
    dgs = [dg_edges(ell, st.D, excess_potential(ell, st.c, p, c0) if p.has_excess else None, p)
           for ell in range(len(p.species))]
    ok, margin = contraction_check(dgs, dt, h, p.kappa)
    print(f"contraction: {'holds' if ok else 'violated'} (lhs/rhs = {margin:.4g})")
    pos = positivity_condition_check(dgs, dt, h, p.kappa, p.lam)
    print(f"positivity: {pos}")
    en = diag.energy_condition_check(st, dgs, dt, h, p)
    print(f"energy: {'holds' if en.holds else 'violated'} (lhs = {en.lhs:.4g}, rhs = {en.rhs:.4g})")
    rec = sim.records[0]
    print(f"initial gauss_res={rec.gauss_res:.2e} curl_res={rec.curl_res:.2e} c_min={rec.c_min:.4g} "
          f"relax_sweeps={sim._init_sweeps}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="time-step one configuration")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: output_dir from the config)")
    p.add_argument("--steps", type=int, help="stop after this many steps")
    p.set_defaults(func=cmd_run)

    for name, func in (("converge-cauchy", cmd_converge_cauchy), ("converge-mms", cmd_converge_mms)):
        p = sub.add_parser(name, help="mesh-refinement study over the configured levels")
        p.add_argument("config")
        p.add_argument("--out")
        p.add_argument("--workers", type=int, default=1, help="run meshes in parallel processes")
        p.set_defaults(func=func)

    p = sub.add_parser("check", help="evaluate step-size conditions on the initial state")
    p.add_argument("config")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return exc.report.exit_code
    except (InitialDataError, StericOverflowError, RelaxationError) as exc:
        print(f"initialization failed: {exc}", file=sys.stderr)
        return EXIT_CODES[failure_category(exc)]


if __name__ == "__main__":
    sys.exit(main())
