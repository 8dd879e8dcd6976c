"""Hybrid angle control, dc-voltage regulation, current limiting and feedforward references."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .mathkit import DomainError, PreconditionError, Vec2, psi
from .plant import (NO_PERTURBATION, GridModel, PlantParams, ShuntPerturbation,
                    is_coi, rhs_coi, rhs_ib, unpack)

FEEDBACK_MODES = ("explicit", "implicit_usw", "atan")
D_UPPER = 1.0 - 1e-9
# relative size of ||psi_r + psi|| below which the implicit law is on its switching surface
SWITCH_EPS = 1e-12
# largest double below 1: the limiter reduction must stay < 1
DMU_MAX = math.nextafter(1.0, 0.0)
# below this the limiter output underflows to zero (and exp(-x) would overflow)
X_FLOOR = -709.0


@dataclass(frozen=True)
class HacParams:
    """Controller gains and references.

    ``theta_r`` is stored as a plain angle; ``psi_theta_r`` is the unit vector
    the implicit implementation works with.  ``gamma = 0`` is accepted here so
    that parameter sweeps can include the uncompensated case.
    """

    eta: float
    gamma: float
    kappa: float
    v_dc_r: float
    i_r: float
    mu_r: float
    theta_r: float = 0.0
    feedback_mode: str = "explicit"

    def __post_init__(self):
        if not self.eta >= 0.0:
            raise ValueError(f"HacParams.eta must be >= 0, got {self.eta!r}")
        if not self.gamma >= 0.0:
            raise ValueError(f"HacParams.gamma must be >= 0, got {self.gamma!r}")
        if not self.kappa > 0.0:
            raise ValueError(f"HacParams.kappa must be > 0, got {self.kappa!r}")
        if not 0.0 < self.mu_r <= 1.0:
            raise ValueError(f"HacParams.mu_r must lie in (0, 1], got {self.mu_r!r}")
        if not self.v_dc_r > 0.0:
            raise ValueError(f"HacParams.v_dc_r must be > 0, got {self.v_dc_r!r}")
        if self.feedback_mode not in FEEDBACK_MODES:
            raise ValueError(f"HacParams.feedback_mode must be one of {FEEDBACK_MODES}")
        if not math.isfinite(self.i_r) or not math.isfinite(self.theta_r):
            raise ValueError("HacParams.i_r and theta_r must be finite")

    @property
    def psi_theta_r(self) -> Vec2:
        return psi(self.theta_r)

    @classmethod
    def table1(cls, pp: PlantParams) -> "HacParams":
        v_dc_r = 3.0 * pp.v_r
        return cls(eta=0.01, gamma=1e4, kappa=2.0, v_dc_r=v_dc_r, i_r=0.0,
                   mu_r=2.0 * pp.v_r / v_dc_r)

    def with_(self, **kw) -> "HacParams":
        return replace(self, **kw)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class LimiterParams:
    enabled: bool = False
    beta: float = 0.25
    i_th: float = 510.37
    d_min: float = 0.01
    use_measured_d: bool = False
    abs_extension: bool = False

    def __post_init__(self):
        if not self.beta > 0.0:
            raise ValueError(f"LimiterParams.beta must be > 0, got {self.beta!r}")
        if not self.i_th > 0.0:
            raise ValueError(f"LimiterParams.i_th must be > 0, got {self.i_th!r}")
        if not 0.0 < self.d_min < 1.0:
            raise ValueError(f"LimiterParams.d_min must lie in (0, 1), got {self.d_min!r}")

    def to_dict(self):
        return asdict(self)


LIMITER_OFF = LimiterParams()


@dataclass(frozen=True)
class ControlOutputs:
    theta_dot: float
    mu: float
    i_dc_ref: float
    delta_mu: float = 0.0
    d_value: float = 0.0
    on_switching_surface: bool = False
    d_fallback: bool = False


def dc_current_ref(v_dc: float, hp: HacParams) -> float:
    return hp.i_r - hp.kappa * (v_dc - hp.v_dc_r)


def angle_feedback_explicit(theta: float, theta_r: float) -> float:
    return math.sin(0.5 * (float(theta) - float(theta_r)))


def _check_unit(z, name, tol=1e-6):
    n = math.hypot(z[0], z[1])
    if abs(n - 1.0) > tol:
        raise PreconditionError(f"{name} must be a unit vector, |{name}|={n!r}")


def relative_angle_measurement(psi_theta_c, psi_theta_b) -> Vec2:
    """psi(theta_c - theta_b) from the two absolute unit vectors."""
    _check_unit(psi_theta_c, "psi_theta_c")
    _check_unit(psi_theta_b, "psi_theta_b")
    c0, c1 = psi_theta_c
    b0, b1 = psi_theta_b
    return Vec2(c0 * b0 + c1 * b1, b0 * c1 - b1 * c0)


def angle_feedback_implicit(psi_theta_r, psi_theta) -> tuple[float, bool]:
    """Angle feedback computed from unit vectors only.

    Returns ``(u, on_surface)``.  ``u`` equals sin(d/2) for |d| < pi, with
    d = theta - theta_r, and sgn(cos(d/2)) sin(d/2) in general.  The value is
    evaluated as ``psi_r^T J s / |s|`` with ``s = psi_r + psi``; this is the
    same expression with the denominator written as |s| and avoids the
    cancellation in ``1 + psi_r^T psi`` near |d| = pi.  Exactly on the
    switching surface the one-sided limit is returned and the flag is set.
    """
    _check_unit(psi_theta_r, "psi_theta_r")
    _check_unit(psi_theta, "psi_theta")
    r0, r1 = psi_theta_r
    s0, s1 = r0 + psi_theta[0], r1 + psi_theta[1]
    ns = math.hypot(s0, s1)
    if ns <= SWITCH_EPS:
        num = r0 * psi_theta[1] - r1 * psi_theta[0]
        return (math.copysign(1.0, num), True)
    return ((r0 * s1 - r1 * s0) / ns, False)


def implicit_feedback_formula(psi_theta_r, psi_theta) -> float:
    """The textbook form psi_r^T J psi / sqrt(2 (1 + psi_r^T psi)), kept for comparison."""
    r0, r1 = psi_theta_r
    p0, p1 = psi_theta
    den = math.sqrt(2.0 * (1.0 + r0 * p0 + r1 * p1))
    if den == 0.0:
        raise DomainError("implicit feedback undefined on the switching surface")
    return (r0 * p1 - r1 * p0) / den


def u_sw(theta_tilde: float) -> float:
    h = 0.5 * theta_tilde
    return math.copysign(1.0, math.cos(h)) * math.sin(h)


def hac_rate(v_dc: float, angle_fb: float, hp: HacParams, omega_0: float) -> float:
    return omega_0 + hp.eta * (v_dc - hp.v_dc_r) - hp.gamma * angle_fb


def atan_rate(theta_unwrapped: float, theta_r: float, v_dc: float, hp: HacParams,
              omega_0: float) -> float:
    return omega_0 + hp.eta * (v_dc - hp.v_dc_r) - hp.gamma * math.atan(theta_unwrapped - theta_r)


def disturbance_d(x, pp: PlantParams, mu_r: float, eps: float = 1e-12) -> float:
    """D = ||v|| cos(th_v - th_i) / (mu_r v_dc cos(th - th_i)), i.e. p_f / p_s at mu = mu_r.

    Raises ``DomainError`` when the current vanishes or the denominator does.
    """
    s = unpack(x)
    id_, iq = s.i
    i_mag = math.hypot(id_, iq)
    if i_mag == 0.0:
        raise DomainError("disturbance undefined at zero current")
    num = s.v[0] * id_ + s.v[1] * iq
    den = mu_r * s.v_dc * (math.cos(s.theta) * id_ + math.sin(s.theta) * iq)
    if abs(den) <= eps * (abs(num) + mu_r * abs(s.v_dc) * i_mag):
        raise DomainError("disturbance denominator vanishes")
    return num / den


def limiter_delta_mu(i_mag: float, d_value: float, lp: LimiterParams) -> float:
    """Modulation reduction in [0, 1); increasing in ||i|| and in C = 1 - D."""
    if lp.abs_extension:
        d = min(max(d_value, lp.d_min), 2.0 - lp.d_min)
        c = abs(1.0 - d)
    else:
        d = min(max(d_value, lp.d_min), D_UPPER)
        c = 1.0 - d
    if c == 0.0:
        return 0.0
    x = lp.beta * (i_mag - lp.i_th)
    if x < X_FLOOR:
        return 0.0
    # C e^x / (1 - C + C e^x) as a chain of monotone steps: finite for any x and
    # monotone after rounding; kept below 1 where it would round up to it
    return min(1.0 / (1.0 + (1.0 - c) / c * math.exp(-x)), DMU_MAX)


def effective_mu(mu_r: float, delta_mu: float) -> float:
    if not 0.0 <= delta_mu < 1.0:
        raise ValueError(f"delta_mu must lie in [0, 1), got {delta_mu!r}")
    return (1.0 - delta_mu) * mu_r


def control_step(x, pp: PlantParams, hp: HacParams, lp: LimiterParams = LIMITER_OFF,
                 grid_angle_psi=(1.0, 0.0), grid: GridModel | None = None) -> ControlOutputs:
    """Evaluate all control laws at state ``x``.

    ``x[0]`` is the relative angle in the grid-aligned frame, tracked on the
    real line.  ``grid_angle_psi`` is the measured grid voltage direction,
    used by the implicit implementation to rebuild the converter angle.
    """
    s = unpack(x)
    on_surface = False
    if hp.feedback_mode == "explicit":
        w_c = hac_rate(s.v_dc, angle_feedback_explicit(s.theta, hp.theta_r), hp, pp.omega_0)
    elif hp.feedback_mode == "implicit_usw":
        gb = Vec2(*grid_angle_psi)
        c, sn = math.cos(s.theta), math.sin(s.theta)
        psi_c = Vec2(gb.a * c - gb.b * sn, gb.b * c + gb.a * sn)
        fb, on_surface = angle_feedback_implicit(hp.psi_theta_r,
                                                 relative_angle_measurement(psi_c, gb))
        w_c = hac_rate(s.v_dc, fb, hp, pp.omega_0)
    else:
        w_c = atan_rate(s.theta, hp.theta_r, s.v_dc, hp, pp.omega_0)

    frame_rate = s.omega if is_coi(grid) else pp.omega_0
    d_value, fallback, delta_mu = lp.d_min, False, 0.0
    if lp.enabled:
        i_mag = math.hypot(*s.i)
        if lp.use_measured_d:
            try:
                d_value = disturbance_d(x, pp, hp.mu_r)
            except DomainError:
                d_value, fallback = lp.d_min, True
        delta_mu = limiter_delta_mu(i_mag, d_value, lp)
    return ControlOutputs(theta_dot=w_c - frame_rate,
                          mu=(1.0 - delta_mu) * hp.mu_r,
                          i_dc_ref=dc_current_ref(s.v_dc, hp),
                          delta_mu=delta_mu, d_value=d_value,
                          on_switching_surface=on_surface, d_fallback=fallback)


def closed_loop_rhs(x, pp: PlantParams, hp: HacParams, lp: LimiterParams = LIMITER_OFF,
                    grid: GridModel | None = None,
                    pert: ShuntPerturbation = NO_PERTURBATION) -> np.ndarray:
    ctrl = control_step(x, pp, hp, lp, grid=grid)
    if is_coi(grid):
        return rhs_coi(x, pp, grid, ctrl, pert)
    return rhs_ib(x, pp, ctrl, pert)


# ---------------------------------------------------------------- feedforward

def _skew(z):
    return (z[1], -z[0])


@dataclass(frozen=True)
class FeedforwardResult:
    psi_theta_r: Vec2
    mu_r: float
    p_f: float
    q_f: float

    @property
    def theta_r(self) -> float:
        return math.atan2(self.psi_theta_r.b, self.psi_theta_r.a)


def feedforward_refs(p_g_r: float, q_g_r: float, v_dc_star: float, v_mag_star: float,
                     pp: PlantParams, method: str = "exact") -> FeedforwardResult:
    """Reference angle direction and modulation magnitude from grid power set-points.

    ``method="exact"`` solves the filter network backwards from the grid
    terminal: the grid current follows from the set-points, then the shunt
    and series drops give the switching-node voltage, whose direction and
    magnitude are the references.  ``method="rotation"`` evaluates the
    closed-form rotation/magnitude formulas on the filter powers; those
    formulas neglect the |v|^2 part of the filter power and are only an
    approximation for realistic filters.  In both cases the filter powers
    (p_f, q_f) include line loss and shunt terms.
    """
    if p_g_r == 0.0 and q_g_r == 0.0:
        raise DomainError("power reference must be non-zero")
    if not (v_dc_star > 0.0 and v_mag_star > 0.0):
        raise DomainError("equilibrium voltages must be positive")
    w = pp.omega_0
    xl, xc, xg = pp.ell * w, pp.c * w, pp.ell_g * w
    # grid current from p_g = v_r ig_d, q_g = -v_r ig_q
    ig = (p_g_r / pp.v_r, -q_g_r / pp.v_r)
    jig = _skew(ig)
    v = (pp.v_r + pp.r_g * ig[0] - xg * jig[0], pp.r_g * ig[1] - xg * jig[1])
    jv = _skew(v)
    i = (ig[0] + pp.g * v[0] - xc * jv[0], ig[1] + pp.g * v[1] - xc * jv[1])
    ig2, v2 = ig[0] ** 2 + ig[1] ** 2, v[0] ** 2 + v[1] ** 2
    p_f = p_g_r + pp.r_g * ig2 + pp.g * v2
    q_f = q_g_r + xg * ig2 - xc * v2

    if method == "exact":
        ji = _skew(i)
        vs = (v[0] + pp.r * i[0] - xl * ji[0], v[1] + pp.r * i[1] - xl * ji[1])
        n = math.hypot(*vs)
        psi_r = Vec2(vs[0] / n, vs[1] / n)
        mu_r = n / v_dc_star
    elif method == "rotation":
        ng, nf = math.hypot(p_g_r, q_g_r), math.hypot(p_f, q_f)
        sg = (p_g_r / ng, q_g_r / ng)
        sf = (p_f / nf, q_f / nf)
        u = (sg[0] * sf[0] - sg[1] * sf[1], sg[0] * sf[1] + sg[1] * sf[0])
        delta = math.atan(xg / pp.r_g) + math.atan(xl / pp.r)
        cd, sd = math.cos(delta), math.sin(delta)
        psi_r = Vec2(cd * u[0] + sd * u[1], -sd * u[0] + cd * u[1])
        mu_r = math.sqrt((p_f ** 2 + q_f ** 2) * (pp.r ** 2 + xl ** 2)) / (v_dc_star * v_mag_star)
    else:
        raise ValueError(f"unknown feedforward method {method!r}")
    if abs(math.hypot(*psi_r) - 1.0) > 1e-9:
        raise ArithmeticError("feedforward produced a non-unit angle reference")
    return FeedforwardResult(psi_r, mu_r, p_f, q_f)


def feedforward_delta(pp: PlantParams) -> float:
    return math.atan(pp.ell_g * pp.omega_0 / pp.r_g) + math.atan(pp.ell * pp.omega_0 / pp.r)


__all__ = [
    "HacParams", "LimiterParams", "ControlOutputs", "FeedforwardResult", "FEEDBACK_MODES",
    "LIMITER_OFF", "dc_current_ref", "angle_feedback_explicit", "relative_angle_measurement",
    "angle_feedback_implicit", "implicit_feedback_formula", "u_sw", "hac_rate", "atan_rate",
    "disturbance_d", "limiter_delta_mu", "effective_mu", "control_step", "closed_loop_rhs",
    "feedforward_refs", "feedforward_delta",
]
