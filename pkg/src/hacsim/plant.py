"""Averaged converter model against an infinite bus or a center-of-inertia grid.

States are flat float arrays in the order

    IB : (theta, i_dc, v_dc, i_d, i_q, v_d, v_q, ig_d, ig_q)
    COI: (theta, i_dc, v_dc, omega, i_d, i_q, v_d, v_q, ig_d, ig_q)

``StateIb`` / ``StateCoi`` are named views over those arrays.  All
quantities are SI.  ``J`` below is the skew matrix ``[[0, 1], [-1, 0]]`` so
``J z = (z_q, -z_d)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Union

import numpy as np

from .mathkit import DomainError, Vec2, to_polar

IB_LABELS = ("theta", "i_dc", "v_dc", "i_d", "i_q", "v_d", "v_q", "ig_d", "ig_q")
COI_LABELS = ("theta", "i_dc", "v_dc", "omega", "i_d", "i_q", "v_d", "v_q", "ig_d", "ig_q")


def _positive(obj, names):
    for name in names:
        value = getattr(obj, name)
        if not (value > 0.0 and math.isfinite(value)):
            raise ValueError(f"{type(obj).__name__}.{name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class PlantParams:
    tau_dc: float
    c_dc: float
    g_dc: float
    ell: float
    r: float
    c: float
    g: float
    ell_g: float
    r_g: float
    omega_0: float
    v_r: float
    s_rc: float = 0.5e6  # converter rating, only used for per-unit bases

    def __post_init__(self):
        _positive(self, [f.name for f in fields(self)])

    @classmethod
    def table1(cls) -> "PlantParams":
        return cls(tau_dc=0.05, c_dc=0.008, g_dc=0.001, ell=200e-6, r=0.001,
                   c=300e-6, g=0.001, ell_g=200e-6, r_g=0.001,
                   omega_0=2.0 * math.pi * 50.0, v_r=816.4, s_rc=0.5e6)

    @property
    def current_base(self) -> float:
        """Nameplate current base 2 S / (3 v_r) for the peak-phase convention."""
        return 2.0 * self.s_rc / (3.0 * self.v_r)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class InfiniteBus:
    """Stiff grid with the voltage magnitude and frequency of ``PlantParams``."""

    kind: str = field(default="ib", init=False)


@dataclass(frozen=True)
class CoiParams:
    s_r_g: float
    h: float
    d: float
    t_m: float
    b: float
    kind: str = field(default="coi", init=False)

    def __post_init__(self):
        _positive(self, ["s_r_g", "h", "d", "b"])
        if not math.isfinite(self.t_m):
            raise ValueError("CoiParams.t_m must be finite")

    def inertia(self, omega_0: float) -> float:
        return 2.0 * self.h * self.s_r_g / omega_0 ** 2

    @classmethod
    def table1(cls, pp: PlantParams) -> "CoiParams":
        d = 100.0
        return cls(s_r_g=5e6, h=5.0, d=d, t_m=d * pp.omega_0, b=pp.v_r / pp.omega_0)


GridModel = Union[InfiniteBus, CoiParams]


def is_coi(grid: GridModel | None) -> bool:
    return isinstance(grid, CoiParams)


@dataclass(frozen=True)
class ShuntPerturbation:
    """Admittance g_extra + j b_extra added at the filter-capacitor node."""

    g_extra: float = 0.0
    b_extra: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.g_extra) and math.isfinite(self.b_extra)):
            raise ValueError("perturbation admittance must be finite")


NO_PERTURBATION = ShuntPerturbation()


@dataclass(frozen=True)
class StateIb:
    theta: float
    i_dc: float
    v_dc: float
    i: Vec2
    v: Vec2
    i_g: Vec2

    def to_array(self) -> np.ndarray:
        return np.array([self.theta, self.i_dc, self.v_dc, *self.i, *self.v, *self.i_g])

    @classmethod
    def from_array(cls, x) -> "StateIb":
        x = [float(e) for e in x]
        if len(x) != 9:
            raise ValueError("IB state has 9 entries")
        return cls(x[0], x[1], x[2], Vec2(x[3], x[4]), Vec2(x[5], x[6]), Vec2(x[7], x[8]))


@dataclass(frozen=True)
class StateCoi:
    theta: float
    i_dc: float
    v_dc: float
    omega: float
    i: Vec2
    v: Vec2
    i_g: Vec2

    def to_array(self) -> np.ndarray:
        return np.array([self.theta, self.i_dc, self.v_dc, self.omega,
                         *self.i, *self.v, *self.i_g])

    @classmethod
    def from_array(cls, x) -> "StateCoi":
        x = [float(e) for e in x]
        if len(x) != 10:
            raise ValueError("COI state has 10 entries")
        return cls(x[0], x[1], x[2], x[3], Vec2(x[4], x[5]), Vec2(x[6], x[7]),
                   Vec2(x[8], x[9]))


def as_vector(x) -> np.ndarray:
    if isinstance(x, (StateIb, StateCoi)):
        return x.to_array()
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class StateView:
    """Named access to a state vector of either model."""

    theta: float
    i_dc: float
    v_dc: float
    omega: float | None
    i: tuple
    v: tuple
    i_g: tuple


def unpack(x) -> StateView:
    x = as_vector(x)
    if x.shape[-1] == 9:
        return StateView(x[0], x[1], x[2], None, (x[3], x[4]), (x[5], x[6]), (x[7], x[8]))
    if x.shape[-1] == 10:
        return StateView(x[0], x[1], x[2], x[3], (x[4], x[5]), (x[6], x[7]), (x[8], x[9]))
    raise ValueError(f"state must have 9 or 10 entries, got {x.shape[-1]}")


def _ac_derivatives(s: StateView, pp: PlantParams, mu: float, omega: float,
                    pert: ShuntPerturbation, v_grid: float):
    id_, iq = s.i
    vd, vq = s.v
    gd, gq = s.i_g
    md, mq = mu * math.cos(s.theta), mu * math.sin(s.theta)
    xl, xc, xg = pp.ell * omega, pp.c * omega + pert.b_extra, pp.ell_g * omega
    gsh = pp.g + pert.g_extra
    # Z z = r z - x J z  with  J z = (z_q, -z_d)
    did = (s.v_dc * md - (pp.r * id_ - xl * iq) - vd) / pp.ell
    diq = (s.v_dc * mq - (pp.r * iq + xl * id_) - vq) / pp.ell
    dvd = (id_ - (gsh * vd - xc * vq) - gd) / pp.c
    dvq = (iq - (gsh * vq + xc * vd) - gq) / pp.c
    dgd = (vd - (pp.r_g * gd - xg * gq) - v_grid) / pp.ell_g
    dgq = (vq - (pp.r_g * gq + xg * gd)) / pp.ell_g
    dvdc = (s.i_dc - pp.g_dc * s.v_dc - (md * id_ + mq * iq)) / pp.c_dc
    return dvdc, did, diq, dvd, dvq, dgd, dgq


def rhs_ib(x, pp: PlantParams, ctrl, pert: ShuntPerturbation = NO_PERTURBATION) -> np.ndarray:
    """Closed-loop IB vector field given the controller outputs ``ctrl``."""
    s = unpack(x)
    dvdc, did, diq, dvd, dvq, dgd, dgq = _ac_derivatives(
        s, pp, ctrl.mu, pp.omega_0, pert, pp.v_r)
    didc = (ctrl.i_dc_ref - s.i_dc) / pp.tau_dc
    return np.array([ctrl.theta_dot, didc, dvdc, did, diq, dvd, dvq, dgd, dgq])


def rhs_coi(x, pp: PlantParams, cp: CoiParams, ctrl,
            pert: ShuntPerturbation = NO_PERTURBATION) -> np.ndarray:
    """Closed-loop COI vector field in the frame of the grid angle.

    Impedances are evaluated at the instantaneous grid frequency.
    """
    s = unpack(x)
    w = s.omega
    dvdc, did, diq, dvd, dvq, dgd, dgq = _ac_derivatives(s, pp, ctrl.mu, w, pert, cp.b * w)
    didc = (ctrl.i_dc_ref - s.i_dc) / pp.tau_dc
    dw = (cp.t_m - cp.d * w + cp.b * s.i_g[0]) / cp.inertia(pp.omega_0)
    return np.array([ctrl.theta_dot, didc, dvdc, dw, did, diq, dvd, dvq, dgd, dgq])


@dataclass(frozen=True)
class PowerFlows:
    p_net: float
    i_net: float
    p_s: float
    q_s: float
    p_f: float
    q_f: float
    p_g: float
    q_g: float


def grid_voltage(x, pp: PlantParams, grid: GridModel | None = None) -> tuple[float, float]:
    s = unpack(x)
    if is_coi(grid):
        if s.omega is None:
            raise ValueError("COI grid needs a 10-entry state")
        return (grid.b * s.omega, 0.0)
    return (pp.v_r, 0.0)


def power_flows(x, pp: PlantParams, mu: float, grid: GridModel | None = None) -> PowerFlows:
    s = unpack(x)
    md, mq = mu * math.cos(s.theta), mu * math.sin(s.theta)
    id_, iq = s.i
    vd, vq = s.v
    gd, gq = s.i_g
    vbd, vbq = grid_voltage(x, pp, grid)
    i_net = md * id_ + mq * iq
    vsd, vsq = s.v_dc * md, s.v_dc * mq
    return PowerFlows(
        p_net=s.v_dc * i_net,
        i_net=i_net,
        p_s=id_ * vsd + iq * vsq,
        q_s=id_ * vsq - iq * vsd,
        p_f=id_ * vd + iq * vq,
        q_f=id_ * vq - iq * vd,
        p_g=gd * vbd + gq * vbq,
        q_g=gd * vbq - gq * vbd,
    )


def current_magnitude_rhs(x, pp: PlantParams, mu: float) -> float:
    """Time derivative of ||i|| written in polar coordinates."""
    s = unpack(x)
    i_mag, th_i = to_polar(s.i)
    if s.v[0] == 0.0 and s.v[1] == 0.0:
        v_term = 0.0
    else:
        v_mag, th_v = to_polar(s.v)
        v_term = v_mag * math.cos(th_v - th_i)
    return (mu * s.v_dc * math.cos(s.theta - th_i) - pp.r * i_mag - v_term) / pp.ell


def stored_energy(x, pp: PlantParams) -> float:
    s = unpack(x)
    return 0.5 * (pp.c_dc * s.v_dc ** 2 + pp.ell * (s.i[0] ** 2 + s.i[1] ** 2)
                  + pp.c * (s.v[0] ** 2 + s.v[1] ** 2)
                  + pp.ell_g * (s.i_g[0] ** 2 + s.i_g[1] ** 2))


def energy_balance(x, pp: PlantParams, pert: ShuntPerturbation = NO_PERTURBATION,
                   grid: GridModel | None = None) -> float:
    """dc injection minus all resistive losses minus power delivered to the grid."""
    s = unpack(x)
    vbd, vbq = grid_voltage(x, pp, grid)
    i2 = s.i[0] ** 2 + s.i[1] ** 2
    v2 = s.v[0] ** 2 + s.v[1] ** 2
    g2 = s.i_g[0] ** 2 + s.i_g[1] ** 2
    return (s.v_dc * s.i_dc - pp.g_dc * s.v_dc ** 2 - pp.r * i2
            - (pp.g + pert.g_extra) * v2 - pp.r_g * g2
            - (s.i_g[0] * vbd + s.i_g[1] * vbq))


def check_modulation_bound(mu_r: float) -> str | None:
    """The averaged model assumes |m| <= 1/2; larger references are allowed but flagged."""
    if mu_r > 0.5:
        return f"mu_r={mu_r:.4g} exceeds the averaged-model modulation bound 1/2"
    return None


__all__ = [
    "PlantParams", "CoiParams", "InfiniteBus", "GridModel", "ShuntPerturbation",
    "NO_PERTURBATION", "StateIb", "StateCoi", "PowerFlows", "rhs_ib", "rhs_coi",
    "power_flows", "current_magnitude_rhs", "stored_energy", "energy_balance",
    "unpack", "as_vector", "is_coi", "grid_voltage", "IB_LABELS", "COI_LABELS",
    "DomainError", "check_modulation_bound",
]
