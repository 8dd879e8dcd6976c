"""Command-line entry point: simulate, equilibrium, certify, droop, sweep, montecarlo."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import sim
from .analysis import (EquilibriumError, LyapunovConfig, droop_slope, droop_slope_fd)
from .io.config import ConfigError, load_any, resolve
from .io.csvio import NORMALIZATIONS, export_csv, write_table
from .io.report import (_clean, build_report, certificates, determinant_summary,
                        equilibrium_summary, write_plot_script, write_report)
from .mathkit import DomainError
from .sim.core import ScenarioError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _load(args):
    doc = load_any(args.config, args.set)
    return resolve(doc)


def _out_dir(args, run) -> str:
    d = args.out or run.doc.output["directory"]
    os.makedirs(d, exist_ok=True)
    return d


def _dump(obj):
    print(json.dumps(_clean(obj), indent=2))


def cmd_simulate(args) -> int:
    run = _load(args)
    norm = args.normalization or run.doc.output["normalization"]
    t0 = time.perf_counter()
    traj = sim.integrate(run.scenario(), args.backend)
    wall = time.perf_counter() - t0
    out = _out_dir(args, run)
    name = run.doc.output["name"]
    csv_path = export_csv(traj, os.path.join(out, f"{name}.csv"), norm, run.eq)
    rep = build_report(run, traj, args.backend or sim.BACKEND)
    rep["normalization"] = norm
    rep_path = write_report(rep, os.path.join(out, f"{name}_report.json"))
    print(f"simulated {traj.times[-1]:.6g} s in {wall:.2f} s wall ({len(traj.times)} samples), "
          f"status {traj.status}")
    print(f"trajectory: {csv_path}")
    print(f"report:     {rep_path}")
    if run.doc.output["plot_script"]:
        script = write_plot_script(os.path.join(out, f"plot_{name}.py"), f"{name}.csv",
                                   traj.is_coi)
        print(f"plot:       {script}")
    if traj.status != "ok":
        print(f"error: {traj.diagnostic}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_equilibrium(args) -> int:
    run = _load(args)
    _dump({"equilibrium": equilibrium_summary(run.eq), "notes": run.notes})
    return EXIT_OK


def cmd_certify(args) -> int:
    run = _load(args)
    certs = certificates(run)
    det = determinant_summary(run)
    _dump({"certificates": certs, "determinant_test": det})
    ok = all(c["satisfied"] for c in certs.values()) and det["consistent"]
    return EXIT_FAIL if args.strict and not ok else EXIT_OK


def cmd_droop(args) -> int:
    run = _load(args)
    theta = run.hp.theta_r if args.theta is None else args.theta
    cp = run.grid if run.eq.is_coi else None
    a = droop_slope(run.pp, cp, run.hp, args.omega, theta)
    fd = droop_slope_fd(run.pp, run.hp, args.omega, theta)
    _dump({"omega": args.omega, "theta": theta, "analytic": a, "finite_difference": fd,
           "relative_difference": abs(a - fd) / max(abs(a), 1e-300)})
    return EXIT_OK


def cmd_sweep(args) -> int:
    run = _load(args)
    sw = run.doc.scenario["sweep"]
    if sw is None:
        raise ConfigError("no sweep block configured", "scenario.sweep")
    rows = sim.sweep(run.scenario(), sw["param"], sw["values"], args.workers,
                     sw["rocof_t0_s"], sw["rocof_horizon_s"], args.backend)
    header = ["value", "final_error", "max_current", "rocof", "settling_time", "status"]
    table = [[r.value, r.final_error, r.max_current, r.rocof, r.settling_time, r.status]
             for r in rows]
    path = write_table(os.path.join(_out_dir(args, run), f"{run.doc.output['name']}_sweep.csv"),
                       header, table)
    print(f"{sw['param']:>12s}  {'rocof':>12s}  {'max |i|':>12s}  {'final err':>10s}  status")
    for r in rows:
        print(f"{r.value:12.6g}  {r.rocof:12.6g}  {r.max_current:12.6g}  "
              f"{r.final_error:10.3g}  {r.status}")
    print(f"table: {path}")
    return EXIT_OK if all(r.status == "ok" for r in rows) else EXIT_FAIL


def cmd_montecarlo(args) -> int:
    run = _load(args)
    ref = "nearest" if run.hp.feedback_mode == "implicit_usw" else "stable"
    audit_cfg = None if args.no_audit else LyapunovConfig.build(run.pp, run.hp, run.eq,
                                                                angle_reference=ref)
    seed = run.doc.scenario["seed"] if args.seed is None else args.seed
    t0 = time.perf_counter()
    res = sim.montecarlo(run.scenario(), run.eq, args.n, args.spread, seed, tol=args.tol,
                         angle_tol=args.angle_tol, t_max=args.t_max, audit_cfg=audit_cfg,
                         workers=args.workers, backend_name=args.backend)
    wall = time.perf_counter() - t0
    header = ["index", "converged", "rel_error", "theta_error", "representative", "t_end",
              "status", "audit_violations", "switching_events"]
    table = [[o.index, int(o.converged), o.rel_error, o.theta_error, o.representative, o.t_end,
              o.status, "" if o.audit is None else len(o.audit.violation_times),
              o.switching_events] for o in res.outcomes]
    path = write_table(os.path.join(_out_dir(args, run),
                                    f"{run.doc.output['name']}_montecarlo.csv"), header, table)
    print(f"converged {res.n_converged}/{args.n} in {wall:.1f} s wall; "
          f"representatives {res.representatives}")
    if audit_cfg is not None:
        bad = sum(1 for o in res.outcomes if o.audit is not None and not o.audit.passed)
        print(f"lyapunov audit: {bad} trajectories with violations")
    print(f"table: {path}")
    return EXIT_OK if res.all_converged else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hacsim", description="Grid-forming converter simulation with hybrid angle control.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="YAML config file, or preset:<name> "
                        "(table1_ib, table1_coi, fault, rocof)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config field, e.g. control.eta_rad_sV=0")
    common.add_argument("--backend", choices=["cython", "python"], default=None,
                        help="integration kernel (default: compiled if available)")
    common.add_argument("--out", default=None, help="output directory (overrides config)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run one scenario, write CSV + report")
    p.add_argument("--normalization", choices=NORMALIZATIONS, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("equilibrium", parents=[common], help="print both equilibria")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("certify", parents=[common],
                       help="stability certificates and determinant sign test")
    p.add_argument("--strict", action="store_true", help="exit 1 if any check fails")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("droop", parents=[common], help="droop slope, analytic vs numeric")
    p.add_argument("--omega", type=float, required=True, help="frequency [rad/s]")
    p.add_argument("--theta", type=float, default=None, help="angle [rad], default theta_r")
    p.set_defaults(func=cmd_droop)

    p = sub.add_parser("sweep", parents=[common], help="run the configured parameter sweep")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("montecarlo", parents=[common], help="convergence from sampled states")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--spread", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--angle-tol", type=float, default=1e-2)
    p.add_argument("--t-max", type=float, default=60.0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--no-audit", action="store_true")
    p.set_defaults(func=cmd_montecarlo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ScenarioError, EquilibriumError, DomainError, ValueError, OSError,
            ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
