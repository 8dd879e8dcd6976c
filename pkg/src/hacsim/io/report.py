"""Run reports (JSON) and plot-script emission."""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict

import numpy as np
import yaml

from ..analysis import (EquilibriumPair, LyapunovConfig, jacobian_sign_test, lyapunov_audit,
                        stability_condition_coi, stability_condition_ib)
from ..sim import run_metrics
from .config import ResolvedRun, loads_config, resolve


def _clean(obj):
    """JSON-safe copy: numpy to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def equilibrium_summary(eq: EquilibriumPair) -> dict:
    return {"x_stable": eq.x_stable, "x_unstable": eq.x_unstable,
            "residual_stable": eq.residual_norm, "residual_unstable": eq.residual_unstable,
            "required_i_r": eq.required_i_r, "required_t_m": eq.required_t_m}


def certificates(run: ResolvedRun) -> dict:
    out = {"ib": asdict(stability_condition_ib(run.pp, run.hp, run.eq))}
    if run.eq.is_coi:
        out["coi"] = asdict(stability_condition_coi(run.pp, run.grid, run.hp, run.eq))
    return out


def determinant_summary(run: ResolvedRun) -> dict:
    return asdict(jacobian_sign_test(run.pp, run.hp, run.eq, run.lp))


def build_report(run: ResolvedRun, traj, backend: str = "") -> dict:
    eq = run.eq
    ref = "nearest" if run.hp.feedback_mode == "implicit_usw" else "stable"
    try:
        cfg = LyapunovConfig.build(run.pp, run.hp, eq, angle_reference=ref)
        a = lyapunov_audit(traj, eq, cfg)
        audit = {"passed": a.passed, "violations": len(a.violation_times),
                 "max_positive_increment": a.max_positive_increment, "tolerance": a.tolerance,
                 "first_violation_t": a.violation_times[0] if a.violation_times else None,
                 "lam": cfg.lam, "angle_reference": ref}
    except ValueError as exc:
        audit = {"passed": None, "error": str(exc)}
    sw = run.doc.scenario.get("sweep") or {}
    metrics = run_metrics(traj, sw.get("rocof_t0_s"), sw.get("rocof_horizon_s", 0.5))
    report = {
        "config": run.doc.to_dict(),
        "resolved": {"plant": run.pp.to_dict(), "control": run.hp.to_dict(),
                     "limiter": asdict(run.lp), "grid": asdict(run.grid),
                     "x0": run.x0, "notes": run.notes},
        "equilibrium": equilibrium_summary(eq),
        "certificates": certificates(run),
        "metrics": metrics,
        "audit": audit,
        "status": traj.status,
        "diagnostic": traj.diagnostic,
        "backend": backend,
        "n_samples": len(traj.times),
        "events": traj.events_log,
    }
    return _clean(report)


def write_report(report: dict, path) -> str:
    path = os.fspath(path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=False)
        fh.write("\n")
    return path


def run_from_report(report: dict) -> ResolvedRun:
    """Rebuild the resolved run from a report's configuration echo."""
    return resolve(loads_config(yaml.safe_dump(report["config"], sort_keys=False),
                                "report"))


PLOT_TEMPLATE = '''"""Plot a trajectory CSV written by hacsim. Needs matplotlib."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {csv_name!r}
with open(path, newline="") as fh:
    rows = list(csv.DictReader(fh))
t = [float(r["t"]) for r in rows]

panels = {panels!r}
fig, axes = plt.subplots(len(panels), 1, sharex=True, figsize=(8, 2.2 * len(panels)))
for ax, (title, names) in zip(axes, panels):
    for n in names:
        ax.plot(t, [float(r[n]) for r in rows], label=n)
    ax.set_ylabel(title)
    ax.legend(loc="upper right", fontsize="small")
axes[-1].set_xlabel("t [s]")
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


def write_plot_script(path, csv_name: str, coi: bool) -> str:
    panels = [("angle", ["theta"]), ("dc", ["v_dc"]), ("currents", ["i_d", "i_q"]),
              ("voltages", ["v_d", "v_q"]), ("V", ["V_lyap"])]
    if coi:
        panels.insert(1, ("omega", ["omega"]))
    path = os.fspath(path)
    with open(path, "w") as fh:
        fh.write(PLOT_TEMPLATE.format(csv_name=csv_name, panels=panels))
    return path
