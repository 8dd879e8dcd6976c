"""Initial-condition sampling, parameter sweeps and Monte-Carlo convergence runs."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..analysis import (AuditReport, EquilibriumPair, LyapunovConfig, angle_error_to_set,
                        lyapunov_audit, relative_error, rocof, settling_time, solve_equilibrium)
from ..mathkit import TWO_PI
from .core import Scenario, ScenarioError, Trajectory, concatenate, continue_run, integrate


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))


def _sample_scales(eq: EquilibriumPair) -> np.ndarray:
    x = eq.x_stable
    sc = np.abs(x).astype(float)
    for s in eq.euclid_slices():
        sc[s] = float(np.hypot(*x[s]))
    return sc


def sample_initial_conditions(eq: EquilibriumPair, spread: float, n: int, seed: int
                              ) -> list[np.ndarray]:
    """Uniform samples around the equilibrium's Euclidean part, uniform angle on [-2pi, 2pi].

    Components whose equilibrium value is exactly zero use the absolute window
    +-spread times the magnitude of their (d, q) pair, or 1 if that is zero too.
    """
    if not 0.0 <= spread <= 1.0:
        raise ValueError("spread must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    y = eq.x_stable[1:]
    scales = _sample_scales(eq)[1:]
    lo = np.minimum((1.0 - spread) * y, (1.0 + spread) * y)
    hi = np.maximum((1.0 - spread) * y, (1.0 + spread) * y)
    zero = y == 0.0
    win = spread * np.where(scales > 0.0, scales, 1.0)
    lo = np.where(zero, -win, lo)
    hi = np.where(zero, win, hi)
    out = []
    for _ in range(n):
        theta = rng.uniform(-TWO_PI, TWO_PI)
        ys = rng.uniform(lo, hi)
        out.append(np.concatenate([[theta], ys]))
    return out


class SweepPathError(ScenarioError):
    pass


_SECTIONS = {"pp", "hp", "lp", "grid"}


def set_param(sc: Scenario, path: str, value: float) -> Scenario:
    """Return a copy of ``sc`` with the scalar at ``path`` (e.g. ``hp.gamma``) replaced."""
    parts = path.split(".")
    if len(parts) == 1:
        if parts[0] not in ("t_end", "dt"):
            raise SweepPathError(f"unknown sweep path {path!r}")
        return sc.with_(**{parts[0]: float(value)})
    if len(parts) != 2 or parts[0] not in _SECTIONS:
        raise SweepPathError(f"unknown sweep path {path!r}")
    sec, name = parts
    obj = getattr(sc, sec)
    if not hasattr(obj, name) or name == "kind":
        raise SweepPathError(f"{type(obj).__name__} has no scalar field {name!r}")
    cur = getattr(obj, name)
    if isinstance(cur, (bool, str)) or not isinstance(cur, (int, float)):
        raise SweepPathError(f"{path!r} is not a scalar parameter")
    return sc.with_(**{sec: replace(obj, **{name: float(value)})})


@dataclass(frozen=True)
class SweepRow:
    value: float
    final_error: float
    max_current: float
    rocof: float
    settling_time: float
    status: str


def run_metrics(traj: Trajectory, rocof_t0: float | None = None, rocof_horizon: float = 0.5,
                settle_tol: float = 1e-3) -> dict:
    """Final error against the run's own equilibrium, peak current, RoCoF and settling time."""
    sc = traj.scenario
    try:
        eq = solve_equilibrium(sc.pp, sc.hp, sc.grid, enforce_reference=sc.hp.eta > 0.0)
        final_error = relative_error(traj.final_raw_state, eq)
    except (ArithmeticError, ValueError):
        final_error = math.nan
    r = math.nan
    if traj.is_coi and traj.status == "ok":
        t0 = rocof_t0
        if t0 is None:
            t0 = sc.events[0].t_start if sc.events else float(traj.times[0])
        try:
            r = rocof(traj, t0, rocof_horizon)
        except ValueError:
            r = math.nan
    y = traj.states[:, 1:]
    yf = y[-1]
    err = np.linalg.norm(y - yf, axis=1) / max(np.linalg.norm(yf), 1e-300)
    return {"final_error": final_error, "max_current": float(np.max(traj.current_magnitude())),
            "rocof": r, "settling_time": settling_time(traj.times, err, settle_tol)}


def sweep(base: Scenario, param_path: str, values: Sequence[float], workers: int | None = None,
          rocof_t0: float | None = None, rocof_horizon: float = 0.5,
          backend_name: str | None = None) -> list[SweepRow]:
    """One run per value, rows in the order given."""
    scenarios = [set_param(base, param_path, v) for v in values]

    def one(sc):
        tr = integrate(sc, backend_name)
        return run_metrics(tr, rocof_t0, rocof_horizon), tr.status

    with ThreadPoolExecutor(max_workers=workers or default_workers()) as ex:
        results = list(ex.map(one, scenarios))
    return [SweepRow(float(v), m["final_error"], m["max_current"], m["rocof"],
                     m["settling_time"], st) for v, (m, st) in zip(values, results)]


@dataclass
class SampleOutcome:
    index: int
    x0: np.ndarray
    converged: bool
    rel_error: float
    theta_error: float
    representative: str
    t_end: float
    status: str
    audit: AuditReport | None = None
    switching_events: int = 0


@dataclass
class MonteCarloResult:
    outcomes: list = field(default_factory=list)

    @property
    def n_converged(self) -> int:
        return sum(o.converged for o in self.outcomes)

    @property
    def representatives(self) -> dict:
        out = {}
        for o in self.outcomes:
            if o.converged:
                out[o.representative] = out.get(o.representative, 0) + 1
        return out

    @property
    def all_converged(self) -> bool:
        return all(o.converged for o in self.outcomes)


def _representative(theta_wrapped: float, theta_r: float) -> str:
    d = theta_wrapped - theta_r
    d = (d + TWO_PI) % (2 * TWO_PI) - TWO_PI
    return "theta_r" if abs(d) < math.pi else "theta_r+2pi"


def converge_one(base: Scenario, eq: EquilibriumPair, x0: np.ndarray, index: int = 0,
                 tol: float = 1e-3, angle_tol: float = 1e-2, chunk: float = 1.0,
                 t_max: float = 60.0, audit_cfg: LyapunovConfig | None = None,
                 backend_name: str | None = None) -> SampleOutcome:
    """Integrate in chunks until the convergence test passes or ``t_max`` is reached."""
    sc = base.with_(x0=tuple(x0), t_end=chunk, events=())
    parts = [integrate(sc, backend_name)]
    t = chunk
    theta_r = eq.hp.theta_r

    def done(tr):
        x = tr.final_raw_state
        return (relative_error(x, eq) < 0.1 * tol
                and angle_error_to_set(x[0], theta_r) < 0.1 * angle_tol)

    while parts[-1].status == "ok" and not done(parts[-1]) and t < t_max - 1e-12:
        step = min(chunk, t_max - t)
        parts.append(continue_run(parts[-1], step, backend_name))
        t += step
    traj = concatenate(parts) if len(parts) > 1 else parts[0]
    x = traj.final_raw_state
    rel = relative_error(x, eq)
    th_err = angle_error_to_set(x[0], theta_r)
    ok = traj.status == "ok" and rel < tol and th_err < angle_tol
    audit = lyapunov_audit(traj, eq, audit_cfg) if audit_cfg is not None else None
    n_sw = sum(1 for e in traj.events_log if e["kind"] == "switching_surface")
    return SampleOutcome(index, np.asarray(x0), ok, rel, th_err,
                         _representative(float(traj.states[-1, 0]), theta_r),
                         float(traj.times[-1]), traj.status, audit, n_sw)


def montecarlo(base: Scenario, eq: EquilibriumPair, n: int, spread: float, seed: int,
               tol: float = 1e-3, angle_tol: float = 1e-2, t_max: float = 60.0,
               chunk: float = 1.0, audit_cfg: LyapunovConfig | None = None,
               workers: int | None = None, backend_name: str | None = None
               ) -> MonteCarloResult:
    samples = sample_initial_conditions(eq, spread, n, seed)

    def one(item):
        k, x0 = item
        return converge_one(base, eq, x0, k, tol, angle_tol, chunk, t_max, audit_cfg,
                            backend_name)

    with ThreadPoolExecutor(max_workers=workers or default_workers()) as ex:
        outcomes = list(ex.map(one, enumerate(samples)))
    return MonteCarloResult(sorted(outcomes, key=lambda o: o.index))
