"""Scenarios, event timelines and the fixed-step integrator driver."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from ..analysis import EquilibriumError, LyapunovConfig, lyapunov_values, solve_equilibrium
from ..controller import LIMITER_OFF, HacParams, LimiterParams
from ..mathkit import FOUR_PI, TWO_PI
from ..plant import (COI_LABELS, IB_LABELS, NO_PERTURBATION, GridModel, InfiniteBus,
                     PlantParams, ShuntPerturbation, is_coi)
from . import backend
from ._layout import DIVERGED, pack_params
from .derived import compute_derived

EVENT_KINDS = ("fault", "load_step", "clear")
DEFAULT_FAULT = ShuntPerturbation(g_extra=1e3)
MAX_CROSSINGS = 4096


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class TimedEvent:
    """A network change at the filter-capacitor node.

    ``fault`` adds ``pert`` on [t_start, t_end); ``load_step`` makes ``pert``
    the persistent perturbation from t_start on; ``clear`` resets the
    persistent perturbation to nominal.  Simultaneously active admittances add.
    """

    kind: str
    t_start: float
    t_end: float | None = None
    pert: ShuntPerturbation = DEFAULT_FAULT

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ScenarioError(f"event kind must be one of {EVENT_KINDS}, got {self.kind!r}")
        if self.t_start < 0.0:
            raise ScenarioError("event t_start must be >= 0")
        if self.kind == "fault" and (self.t_end is None or not self.t_end > self.t_start):
            raise ScenarioError("fault events need t_end > t_start")


@dataclass(frozen=True)
class Scenario:
    pp: PlantParams
    hp: HacParams
    x0: tuple
    t_end: float
    grid: GridModel = field(default_factory=InfiniteBus)
    lp: LimiterParams = LIMITER_OFF
    dt: float = 20e-6
    events: tuple = ()
    record_stride: int = 10

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        object.__setattr__(self, "events", tuple(self.events))
        n = 10 if is_coi(self.grid) else 9
        if len(self.x0) != n:
            raise ScenarioError(f"x0 must have {n} entries for this grid, got {len(self.x0)}")
        if not all(math.isfinite(v) for v in self.x0):
            raise ScenarioError("x0 must be finite")
        if not 0.0 < self.dt <= 1e-3:
            raise ScenarioError(f"dt must lie in (0, 1e-3], got {self.dt!r}")
        if not self.t_end > 0.0:
            raise ScenarioError("t_end must be > 0")
        if self.record_stride < 1:
            raise ScenarioError("record_stride must be >= 1")
        starts = [e.t_start for e in self.events]
        if starts != sorted(starts):
            raise ScenarioError("events must be time-ordered")
        for e in self.events:
            if e.t_start > self.t_end or (e.t_end is not None and e.t_end > self.t_end):
                raise ScenarioError("event outside the simulated horizon")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))

    def with_(self, **kw) -> "Scenario":
        return replace(self, **kw)


def snap(t: float, dt: float) -> int:
    return int(round(t / dt))


def perturbation_timeline(sc: Scenario) -> list[tuple[int, int, ShuntPerturbation]]:
    """Piecewise-constant perturbation as (k_start, k_stop, pert) step ranges."""
    n = sc.n_steps
    marks = {0, n}
    for e in sc.events:
        marks.add(min(snap(e.t_start, sc.dt), n))
        if e.kind == "fault":
            marks.add(min(snap(e.t_end, sc.dt), n))
    marks = sorted(marks)
    out = []
    for ka, kb in zip(marks[:-1], marks[1:]):
        persistent = NO_PERTURBATION
        g, b = 0.0, 0.0
        for e in sc.events:
            ks = snap(e.t_start, sc.dt)
            if e.kind == "load_step" and ks <= ka:
                persistent = e.pert
            elif e.kind == "clear" and ks <= ka:
                persistent = NO_PERTURBATION
            elif e.kind == "fault" and ks <= ka < snap(e.t_end, sc.dt):
                g += e.pert.g_extra
                b += e.pert.b_extra
        pert = ShuntPerturbation(persistent.g_extra + g, persistent.b_extra + b)
        if out and out[-1][2] == pert:
            out[-1] = (out[-1][0], kb, pert)
        else:
            out.append((ka, kb, pert))
    return out


def guard_scales(sc: Scenario) -> np.ndarray:
    """Magnitudes used by the divergence guard."""
    pp, hp = sc.pp, sc.hp
    i_base = max(pp.current_base, abs(hp.i_r), 1.0)
    x0 = np.abs(np.asarray(sc.x0))
    head = [FOUR_PI, i_base, hp.v_dc_r]
    if is_coi(sc.grid):
        head.append(pp.omega_0)
    tail = [i_base] * 2 + [pp.v_r] * 2 + [i_base] * 2
    base = np.array(head + tail)
    sc_ = np.maximum(base, x0)
    return sc_


@dataclass
class Trajectory:
    """Recorded samples of one run.

    ``states`` carries the angle wrapped onto [-2*pi, 2*pi); ``theta_raw`` is
    the angle as integrated on the real line.
    """

    times: np.ndarray
    states: np.ndarray
    theta_raw: np.ndarray
    scenario: Scenario
    events_log: list = field(default_factory=list)
    status: str = "ok"
    diagnostic: str = ""

    @property
    def labels(self) -> tuple:
        return COI_LABELS if self.is_coi else IB_LABELS

    @property
    def is_coi(self) -> bool:
        return is_coi(self.scenario.grid)

    @property
    def final_raw_state(self) -> np.ndarray:
        x = self.states[-1].copy()
        x[0] = self.theta_raw[-1]
        return x

    def __len__(self):
        return len(self.times)

    @cached_property
    def derived(self) -> dict:
        sc = self.scenario
        d = compute_derived(self.states, sc.pp, sc.hp, sc.lp, sc.grid)
        d["V_lyap"] = self._lyapunov()
        return d

    def _lyapunov(self) -> np.ndarray:
        sc = self.scenario
        try:
            eq = solve_equilibrium(sc.pp, sc.hp, sc.grid, enforce_reference=sc.hp.eta > 0.0)
            ref = "nearest" if sc.hp.feedback_mode == "implicit_usw" else "stable"
            cfg = LyapunovConfig.build(sc.pp, sc.hp, eq, angle_reference=ref)
        except (EquilibriumError, ValueError, ArithmeticError):
            return np.full(len(self.times), math.nan)
        return lyapunov_values(self.states, eq, cfg)

    def column(self, name: str) -> np.ndarray:
        if name == "t":
            return self.times
        if name == "theta_raw":
            return self.theta_raw
        if name in self.labels:
            return self.states[:, self.labels.index(name)]
        if name in self.derived:
            return self.derived[name]
        raise KeyError(name)

    def current_magnitude(self) -> np.ndarray:
        o = 4 if self.is_coi else 3
        return np.hypot(self.states[:, o], self.states[:, o + 1])


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    w = np.fmod(theta + TWO_PI, FOUR_PI)
    w = np.where(w < 0.0, w + FOUR_PI, w)
    return w - TWO_PI


def substeps(sc: Scenario, pert: ShuntPerturbation) -> int:
    """Sub-steps per base step so that the shunt pole at the capacitor node stays
    well inside the RK4 stability region (|lambda| * h <= 1)."""
    y = math.hypot(sc.pp.g + pert.g_extra, pert.b_extra)
    return max(1, math.ceil(sc.dt * y / sc.pp.c))


def integrate(sc: Scenario, backend_name: str | None = None, t_offset: float = 0.0) -> Trajectory:
    """Fixed-step RK4 run of ``sc``.

    Perturbations switch on base-step boundaries.  Segments with a stiff
    shunt (a fault) are integrated with an integer number of sub-steps per
    base step; samples stay on the base recording grid.
    """
    ker = backend.get_kernel(backend_name)
    n_total = sc.n_steps
    stride = sc.record_stride
    n_rec = n_total // stride + 2
    x = np.array(sc.x0, dtype=float)
    rec = np.empty((n_rec, x.size))
    rec_k = np.zeros(n_rec, dtype=np.int_)
    times = np.empty(n_rec)
    rec[0] = x
    times[0] = t_offset
    pos = 1
    crossings = np.zeros(MAX_CROSSINGS, dtype=np.int_)
    cross_t = []
    n_cross = 0
    with np.errstate(over="ignore"):
        guard = 1e6 * guard_scales(sc)
    log = []
    status, diag = "ok", ""
    for ka, kb, pert in perturbation_timeline(sc):
        m = substeps(sc, pert)
        h = sc.dt / m
        if ka > 0 or pert != NO_PERTURBATION:
            log.append({"t": t_offset + ka * sc.dt, "kind": "network",
                        "g_extra": pert.g_extra, "b_extra": pert.b_extra, "substeps": m})
        p = pack_params(sc.pp, sc.hp, sc.lp, sc.grid, pert)
        pos0, c0 = pos, n_cross
        code, done, pos, n_cross = ker.run_segment(
            x, p, h, (kb - ka) * m, ka * m, stride * m, kb == n_total, guard, rec, rec_k,
            pos, crossings, n_cross)

        def to_time(k):
            return t_offset + (k // m) * sc.dt + (k % m) * h

        times[pos0:pos] = [to_time(int(k)) for k in rec_k[pos0:pos]]
        cross_t += [to_time(int(k)) for k in crossings[c0:min(n_cross, crossings.size)]]
        if code == DIVERGED:
            k_last = ka * m + done
            status = "diverged"
            diag = (f"state left the guard box at t={to_time(k_last + 1):.6g} s; "
                    "last valid sample kept")
            if times[pos - 1] != to_time(k_last):
                rec[pos] = x
                times[pos] = to_time(k_last)
                pos += 1
            break
    for t in cross_t:
        log.append({"t": t, "kind": "switching_surface"})
    if n_cross > crossings.size:
        log.append({"t": math.inf, "kind": "switching_surface_overflow", "count": int(n_cross)})
    log.sort(key=lambda e: (e["t"], e["kind"]))
    rec, times = rec[:pos], times[:pos]
    raw = rec[:, 0].copy()
    states = rec.copy()
    states[:, 0] = wrap_angles(raw)
    return Trajectory(times, states, raw, sc, log, status, diag)


def concatenate(parts: Sequence[Trajectory]) -> Trajectory:
    """Join consecutive runs, dropping the duplicated boundary samples."""
    first = parts[0]
    times = [first.times]
    states = [first.states]
    raw = [first.theta_raw]
    log = list(first.events_log)
    for p in parts[1:]:
        times.append(p.times[1:])
        states.append(p.states[1:])
        raw.append(p.theta_raw[1:])
        log += p.events_log
    last = parts[-1]
    return Trajectory(np.concatenate(times), np.concatenate(states), np.concatenate(raw),
                      first.scenario, log, last.status, last.diagnostic)


def continue_run(traj: Trajectory, t_more: float, backend_name: str | None = None) -> Trajectory:
    """Integrate a further ``t_more`` seconds from the end of ``traj`` without events."""
    sc = traj.scenario.with_(x0=tuple(traj.final_raw_state), t_end=t_more, events=())
    return integrate(sc, backend_name, t_offset=float(traj.times[-1]))
