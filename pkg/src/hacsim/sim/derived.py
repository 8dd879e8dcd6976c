"""Per-sample derived channels computed from recorded states (vectorized)."""
from __future__ import annotations

import numpy as np

from ..controller import D_UPPER, DMU_MAX, X_FLOOR, HacParams, LimiterParams
from ..plant import GridModel, PlantParams, is_coi

DERIVED_NAMES = ("mu", "delta_mu", "d_value", "i_net", "p_net", "p_s", "q_s",
                 "p_f", "q_f", "p_g", "q_g")


def _delta_mu(i_mag, d, lp: LimiterParams):
    if lp.abs_extension:
        c = np.abs(1.0 - np.clip(d, lp.d_min, 2.0 - lp.d_min))
    else:
        c = 1.0 - np.clip(d, lp.d_min, D_UPPER)
    x = lp.beta * (i_mag - lp.i_th)
    zero = (c == 0.0) | (x < X_FLOOR)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        r = (1.0 - c) / np.where(zero, 1.0, c) * np.exp(-x)
        out = np.minimum(1.0 / (1.0 + r), DMU_MAX)
    return np.where(zero, 0.0, out)


def compute_derived(states: np.ndarray, pp: PlantParams, hp: HacParams, lp: LimiterParams,
                    grid: GridModel | None) -> dict:
    x = np.atleast_2d(states)
    o = 4 if is_coi(grid) else 3
    th, vdc = x[:, 0], x[:, 2]
    id_, iq, vd, vq, gd, gq = (x[:, o + k] for k in range(6))
    ct, st = np.cos(th), np.sin(th)
    n = x.shape[0]
    d_value = np.full(n, lp.d_min)
    delta = np.zeros(n)
    if lp.enabled:
        i_mag = np.hypot(id_, iq)
        if lp.use_measured_d:
            num = vd * id_ + vq * iq
            den = hp.mu_r * vdc * (ct * id_ + st * iq)
            ok = (i_mag != 0.0) & (np.abs(den) > 1e-12 * (np.abs(num) + hp.mu_r * np.abs(vdc) * i_mag))
            d_value = np.where(ok, num / np.where(ok, den, 1.0), lp.d_min)
        delta = _delta_mu(i_mag, d_value, lp)
    mu = (1.0 - delta) * hp.mu_r
    md, mq = mu * ct, mu * st
    i_net = md * id_ + mq * iq
    vsd, vsq = vdc * md, vdc * mq
    vb = grid.b * x[:, 3] if is_coi(grid) else np.full(n, pp.v_r)
    return {
        "mu": mu, "delta_mu": delta, "d_value": d_value, "i_net": i_net,
        "p_net": vdc * i_net,
        "p_s": id_ * vsd + iq * vsq, "q_s": id_ * vsq - iq * vsd,
        "p_f": id_ * vd + iq * vq, "q_f": id_ * vq - iq * vd,
        "p_g": gd * vb, "q_g": -gq * vb,
    }
