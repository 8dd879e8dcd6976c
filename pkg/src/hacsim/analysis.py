"""Equilibria, stability certificates, Lyapunov auditing and performance metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .controller import LIMITER_OFF, HacParams, LimiterParams, closed_loop_rhs
from .mathkit import TWO_PI, DomainError
from .plant import CoiParams, GridModel, InfiniteBus, PlantParams, is_coi


class EquilibriumError(ArithmeticError):
    pass


_J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
_I2 = np.eye(2)


def _network_matrix(pp: PlantParams, omega: float) -> np.ndarray:
    zf = pp.r * _I2 - pp.ell * omega * _J2
    yf = pp.g * _I2 - pp.c * omega * _J2
    zg = pp.r_g * _I2 - pp.ell_g * omega * _J2
    a = np.zeros((6, 6))
    a[0:2, 0:2] = -zf
    a[0:2, 2:4] = -_I2
    a[2:4, 0:2] = _I2
    a[2:4, 2:4] = -yf
    a[2:4, 4:6] = -_I2
    a[4:6, 2:4] = _I2
    a[4:6, 4:6] = -zg
    return a


def _solve_refined(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(a)) or np.linalg.cond(a) > 1e14:
        raise EquilibriumError("network matrix is singular")
    y = np.linalg.solve(a, b)
    y += np.linalg.solve(a, b - a @ y)
    return y


@dataclass(frozen=True)
class EquilibriumPair:
    """The two equilibria sharing the Euclidean part ``y*``.

    ``hp`` and ``grid`` hold the parameters for which both points are exact
    equilibria (the dc current reference and, for COI, the mechanical torque
    replaced by their consistent values).
    """

    x_stable: np.ndarray
    x_unstable: np.ndarray
    residual_norm: float
    required_i_r: float
    required_t_m: float | None
    hp: HacParams
    grid: GridModel
    pp: PlantParams
    residual_unstable: float = 0.0

    @property
    def is_coi(self) -> bool:
        return is_coi(self.grid)

    @property
    def y_star(self) -> np.ndarray:
        return self.x_stable[1:].copy()

    @property
    def theta_star(self) -> float:
        return float(self.x_stable[0])

    def euclid_slices(self):
        """Index slices of (i, v, i_g) in the state vector."""
        o = 4 if self.is_coi else 3
        return slice(o, o + 2), slice(o + 2, o + 4), slice(o + 4, o + 6)


def solve_equilibrium(pp: PlantParams, hp: HacParams, grid: GridModel | None = None,
                      enforce_reference: bool = True, lp: LimiterParams = LIMITER_OFF
                      ) -> EquilibriumPair:
    """Solve for both equilibria at theta* = theta_r and theta_r + 2*pi.

    With ``enforce_reference`` the dc voltage is pinned to ``v_dc_r`` and the
    consistent ``i_r`` is reported (and used for the returned pair).  Without
    it, which requires ``eta == 0``, the dc voltage follows from the given
    ``i_r`` through the proportional dc law.
    """
    grid = InfiniteBus() if grid is None else grid
    w = pp.omega_0
    a = _network_matrix(pp, w)
    v_grid = grid.b * w if is_coi(grid) else pp.v_r
    m = hp.mu_r * np.array([math.cos(hp.theta_r), math.sin(hp.theta_r)])

    b0 = np.array([0.0, 0.0, 0.0, 0.0, v_grid, 0.0])
    b1 = np.concatenate([-m, np.zeros(4)])
    if enforce_reference:
        v_dc = hp.v_dc_r
        y = _solve_refined(a, v_dc * b1 + b0)
        i_r = pp.g_dc * v_dc + float(m @ y[0:2])
    else:
        if hp.eta != 0.0:
            raise EquilibriumError("a free dc voltage requires eta = 0")
        y_0 = _solve_refined(a, b0)
        y_1 = _solve_refined(a, b1)
        a0, a1 = float(m @ y_0[0:2]), float(m @ y_1[0:2])
        v_dc = (hp.i_r + hp.kappa * hp.v_dc_r - a0) / (hp.kappa + pp.g_dc + a1)
        y = _solve_refined(a, v_dc * b1 + b0)
        i_r = hp.i_r
    i_dc = pp.g_dc * v_dc + float(m @ y[0:2])
    hp_c = replace(hp, i_r=i_r)

    if is_coi(grid):
        t_m = grid.d * w - grid.b * y[4]
        grid_c = replace(grid, t_m=t_m)
        head = [hp.theta_r, i_dc, v_dc, w]
    else:
        t_m, grid_c = None, grid
        head = [hp.theta_r, i_dc, v_dc]
    x_s = np.array(head + list(y))
    x_u = x_s.copy()
    x_u[0] = hp.theta_r + TWO_PI

    # x_u carries the rounding of sin(2*pi) in the angle law, so report it apart
    res_s = float(np.linalg.norm(closed_loop_rhs(x_s, pp, hp_c, lp, grid_c)))
    res_u = float(np.linalg.norm(closed_loop_rhs(x_u, pp, hp_c, lp, grid_c)))
    return EquilibriumPair(x_s, x_u, res_s, i_r, t_m, hp_c, grid_c, pp, res_u)


def make_consistent(pp: PlantParams, hp: HacParams, grid: GridModel | None = None):
    """Return (hp, grid) with i_r and T_m set to their consistent values."""
    eq = solve_equilibrium(pp, hp, grid)
    return eq.hp, eq.grid


# --------------------------------------------------------------- certificates

@dataclass(frozen=True)
class StabilityCert:
    lhs: float
    gamma: float
    satisfied: bool
    margin: float
    d_min_required: float | None = None
    extra_term: float | None = None
    kind: str = "ib"


def _norm(z) -> float:
    return float(np.hypot(z[0], z[1]))


def stability_condition_ib(pp: PlantParams, hp: HacParams, eq: EquilibriumPair) -> StabilityCert:
    si, sv, _ = eq.euclid_slices()
    i_mag = _norm(eq.x_stable[si])
    v_dc = float(eq.x_stable[2])
    lhs = (hp.eta / pp.g_dc + hp.eta * (hp.mu_r * i_mag) ** 2 / pp.g_dc
           + hp.eta * (hp.mu_r * v_dc) ** 2 / pp.r)
    return StabilityCert(lhs=lhs, gamma=hp.gamma, satisfied=lhs < hp.gamma,
                         margin=hp.gamma - lhs)


def coi_damping_bound(pp: PlantParams, eq: EquilibriumPair) -> float:
    si, sv, sg = eq.euclid_slices()
    x = eq.x_stable
    return ((pp.ell * _norm(x[si])) ** 2 / pp.r + (pp.c * _norm(x[sv])) ** 2 / pp.g
            + (pp.ell_g * _norm(x[sg])) ** 2 / pp.r_g)


def stability_condition_coi(pp: PlantParams, cp: CoiParams, hp: HacParams,
                            eq: EquilibriumPair) -> StabilityCert:
    ib = stability_condition_ib(pp, hp, eq)
    d_min = coi_damping_bound(pp, eq)
    if cp.d <= d_min:
        return StabilityCert(lhs=math.inf, gamma=hp.gamma, satisfied=False, margin=-math.inf,
                             d_min_required=d_min, extra_term=math.inf, kind="coi")
    extra = 1.0 / (2.0 * (cp.d - d_min))
    # margin computed from the IB margin so that the D -> inf limit is exact
    margin = ib.margin - extra
    return StabilityCert(lhs=ib.lhs + extra, gamma=hp.gamma, satisfied=margin > 0.0,
                         margin=margin, d_min_required=d_min, extra_term=extra, kind="coi")


def minimal_lambda_eta0(pp: PlantParams, hp: HacParams, eq: EquilibriumPair) -> float:
    """Smallest weight on the angle term for which the eta = 0 bound holds."""
    if hp.gamma <= 0.0:
        raise DomainError("gamma must be positive")
    si, _, _ = eq.euclid_slices()
    i_mag = _norm(eq.x_stable[si])
    v_dc = float(eq.x_stable[2])
    return (2.0 * (hp.mu_r * i_mag) ** 2 / pp.g_dc + 2.0 * (hp.mu_r * v_dc) ** 2 / pp.r) / hp.gamma


# ------------------------------------------------------------------ Lyapunov

@dataclass(frozen=True)
class LyapunovConfig:
    """Weights of V = 1/2 y~^T P y~ + 2 lam (1 - cos(th~/2)).

    ``angle_reference="nearest"`` measures the angle error to whichever of
    the two equilibria is closer, i.e. uses |cos(th~/2)|; this is the
    function that decreases under the switched implicit implementation.
    """

    lam: float
    weights: tuple
    angle_reference: str = "stable"

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ValueError("LyapunovConfig.lam must be > 0")
        if self.angle_reference not in ("stable", "nearest"):
            raise ValueError("angle_reference must be 'stable' or 'nearest'")

    @classmethod
    def build(cls, pp: PlantParams, hp: HacParams, eq: EquilibriumPair,
              lam: float | None = None, angle_reference: str = "stable",
              safety: float = 2.0) -> "LyapunovConfig":
        if lam is None:
            lam = 2.0 / hp.eta if hp.eta > 0.0 else safety * minimal_lambda_eta0(pp, hp, eq)
        w = [pp.tau_dc / hp.kappa, pp.c_dc]
        if eq.is_coi:
            w.append(eq.grid.inertia(pp.omega_0))
        w += [pp.ell] * 2 + [pp.c] * 2 + [pp.ell_g] * 2
        return cls(lam=lam, weights=tuple(w), angle_reference=angle_reference)


def lyapunov_values(states, eq: EquilibriumPair, cfg: LyapunovConfig) -> np.ndarray:
    x = np.atleast_2d(np.asarray(states, dtype=float))
    dy = x[:, 1:] - eq.x_stable[1:]
    h = 0.5 * (dy * dy) @ np.asarray(cfg.weights)
    c = np.cos(0.5 * (x[:, 0] - eq.x_stable[0]))
    if cfg.angle_reference == "nearest":
        c = np.abs(c)
    return h + 2.0 * cfg.lam * (1.0 - c)


def lyapunov_value(x, eq: EquilibriumPair, cfg: LyapunovConfig) -> float:
    return float(lyapunov_values(x, eq, cfg)[0])


@dataclass
class AuditReport:
    max_positive_increment: float
    violation_times: list = field(default_factory=list)
    tolerance: float = 0.0
    n_samples: int = 0
    v_max: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.violation_times


def audit_values(times: Sequence[float], values: Sequence[float], rel_tol: float = 1e-6
                 ) -> AuditReport:
    v = np.asarray(values, dtype=float)
    t = np.asarray(times, dtype=float)
    if v.size < 2:
        return AuditReport(0.0, [], 0.0, int(v.size), float(v.max(initial=0.0)))
    v_max = float(np.max(v))
    tol = rel_tol * v_max
    inc = np.diff(v)
    bad = np.nonzero(inc > tol)[0]
    return AuditReport(max_positive_increment=float(max(inc.max(), 0.0)),
                       violation_times=[float(t[k + 1]) for k in bad],
                       tolerance=tol, n_samples=int(v.size), v_max=v_max)


def lyapunov_audit(traj, eq: EquilibriumPair, cfg: LyapunovConfig, rel_tol: float = 1e-6
                   ) -> AuditReport:
    return audit_values(traj.times, lyapunov_values(traj.states, eq, cfg), rel_tol)


# ------------------------------------------------------------- linearization

def state_scales(eq: EquilibriumPair) -> np.ndarray:
    """Per-component magnitudes: 1 for the angle, group norms elsewhere (at least 1)."""
    x = eq.x_stable
    sc = np.ones_like(x)
    sc[1] = max(abs(x[1]), 1.0)
    sc[2] = max(abs(x[2]), 1.0)
    if eq.is_coi:
        sc[3] = max(abs(x[3]), 1.0)
    for s in eq.euclid_slices():
        sc[s] = max(_norm(x[s]), 1.0)
    return sc


def numerical_jacobian(fun, x: np.ndarray, steps: np.ndarray) -> np.ndarray:
    n = x.size
    jac = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = steps[k]
        jac[:, k] = (fun(x + e) - fun(x - e)) / (2.0 * steps[k])
    return jac


@dataclass(frozen=True)
class DeterminantReport:
    det_at_unstable: float
    det_at_stable: float
    consistent: bool
    inconclusive: bool
    log_abs_det_unstable: float
    log_abs_det_stable: float


def jacobian_sign_test(pp: PlantParams, hp: HacParams, eq: EquilibriumPair,
                       lp: LimiterParams = LIMITER_OFF, rel_step: float = 1e-6
                       ) -> DeterminantReport:
    steps = rel_step * state_scales(eq)

    def fun(x):
        return closed_loop_rhs(x, pp, eq.hp, lp, eq.grid)

    out = []
    inconclusive = False
    for x in (eq.x_unstable, eq.x_stable):
        jac = numerical_jacobian(fun, x, steps)
        sign, logdet = np.linalg.slogdet(jac)
        log_bound = float(np.sum(np.log(np.linalg.norm(jac, axis=0))))
        if sign == 0 or logdet < log_bound + math.log(1e-30):
            inconclusive = True
        out.append((float(sign), float(logdet)))
    (su, lu), (ss, ls) = out
    det_u = su * math.exp(lu) if lu < 700 else su * math.inf
    det_s = ss * math.exp(ls) if ls < 700 else ss * math.inf
    return DeterminantReport(det_u, det_s, (su > 0) and (ss < 0) and not inconclusive,
                             inconclusive, lu, ls)


# -------------------------------------------------------------------- droop

def _droop_parts(pp: PlantParams, hp: HacParams, theta_x: float):
    if hp.eta == 0.0:
        raise DomainError("droop slope requires eta > 0")
    g_dc = hp.kappa + pp.g_dc
    i0 = hp.i_r + hp.kappa * hp.v_dc_r
    beta = pp.omega_0 - hp.eta * hp.v_dc_r - hp.gamma * math.sin(0.5 * (theta_x - hp.theta_r))
    return g_dc, i0, beta


def droop_slope(pp: PlantParams, cp: CoiParams | None, hp: HacParams, omega_x: float,
                theta_x: float) -> float:
    g_dc, i0, beta = _droop_parts(pp, hp, theta_x)
    eta2 = hp.eta ** 2
    # split so the beta term vanishes exactly when beta == 0
    return -(2.0 * g_dc / eta2) * omega_x + i0 / hp.eta + 2.0 * g_dc * beta / eta2


def droop_power(pp: PlantParams, hp: HacParams, omega_x: float, theta_x: float) -> float:
    """Net converter power at an equilibrium with frequency omega_x and angle theta_x."""
    g_dc, i0, beta = _droop_parts(pp, hp, theta_x)
    dw = omega_x - beta
    return i0 * dw / hp.eta - g_dc * dw ** 2 / hp.eta ** 2


def droop_slope_fd(pp: PlantParams, hp: HacParams, omega_x: float, theta_x: float,
                   h: float | None = None) -> float:
    h = 1e-3 * max(abs(omega_x), 1.0) if h is None else h
    return (droop_power(pp, hp, omega_x + h, theta_x)
            - droop_power(pp, hp, omega_x - h, theta_x)) / (2.0 * h)


# ------------------------------------------------------------------ metrics

def rocof(traj, t0: float, horizon_t: float) -> float:
    t = np.asarray(traj.times)
    if horizon_t <= 0.0 or t0 < t[0] or t0 + horizon_t > t[-1] + 1e-12:
        raise DomainError(f"window [{t0}, {t0 + horizon_t}] outside trajectory span")
    w = traj.column("omega")
    w0, w1 = np.interp([t0, min(t0 + horizon_t, t[-1])], t, w)
    return abs(w1 - w0) / horizon_t


def relative_error(x, eq: EquilibriumPair) -> float:
    y = np.asarray(x, dtype=float)[1:]
    return float(np.linalg.norm(y - eq.x_stable[1:]) / np.linalg.norm(eq.x_stable[1:]))


def angle_error_to_set(theta: float, theta_r: float) -> float:
    """Distance from theta to the nearer of theta_r, theta_r +- 2*pi on the 4*pi circle."""
    d = math.fmod(theta - theta_r, TWO_PI)
    d = abs(d)
    return min(d, TWO_PI - d)


def settling_time(times, errors, tol: float) -> float:
    """First time after which ``errors`` stays below ``tol`` (nan if never)."""
    e = np.asarray(errors)
    above = np.nonzero(e >= tol)[0]
    if above.size == 0:
        return float(times[0])
    k = above[-1] + 1
    return float(times[k]) if k < len(times) else math.nan


__all__ = [
    "EquilibriumPair", "EquilibriumError", "solve_equilibrium", "make_consistent",
    "StabilityCert", "stability_condition_ib", "stability_condition_coi",
    "coi_damping_bound", "minimal_lambda_eta0", "LyapunovConfig", "lyapunov_value",
    "lyapunov_values", "AuditReport", "audit_values", "lyapunov_audit", "state_scales",
    "numerical_jacobian", "DeterminantReport", "jacobian_sign_test", "droop_slope",
    "droop_power", "droop_slope_fd", "rocof", "relative_error", "angle_error_to_set",
    "settling_time",
]
