"""Pure-Python twin of the compiled kernel, used when the extension is unavailable."""
from __future__ import annotations

from math import atan, copysign, cos, exp, hypot, isfinite, sin

from ._layout import (ABS_EXT, B, B_EXTRA, BETA, C, C_DC, COI, D_MIN, DAMP, ELL, ELL_G, ETA,
                      G, G_DC, G_EXTRA, GAMMA, I_R, I_TH, INERTIA, KAPPA, LIM_ON, MODE, MU_R,
                      OMEGA_0, R, R_G, T_M, TAU_DC, THETA_R, USE_D, V_DC_R, V_R)

D_UPPER = 1.0 - 1e-9
DMU_MAX = 0.9999999999999999
X_FLOOR = -709.0
SWITCH_EPS = 1e-12


def _delta_mu(i_mag, d, p):
    if p[ABS_EXT] != 0.0:
        d = min(max(d, p[D_MIN]), 2.0 - p[D_MIN])
        c = abs(1.0 - d)
    else:
        d = min(max(d, p[D_MIN]), D_UPPER)
        c = 1.0 - d
    if c == 0.0:
        return 0.0
    x = p[BETA] * (i_mag - p[I_TH])
    if x < X_FLOOR:
        return 0.0
    return min(1.0 / (1.0 + (1.0 - c) / c * exp(-x)), DMU_MAX)


def rhs(x, p):
    coi = p[COI] != 0.0
    o = 4 if coi else 3
    mode = int(p[MODE])
    th, idc, vdc = x[0], x[1], x[2]
    w = x[3] if coi else p[OMEGA_0]
    id_, iq, vd, vq, gd, gq = x[o], x[o + 1], x[o + 2], x[o + 3], x[o + 4], x[o + 5]
    ct, st = cos(th), sin(th)

    if mode == 0:
        wc = p[OMEGA_0] + p[ETA] * (vdc - p[V_DC_R]) - p[GAMMA] * sin(0.5 * (th - p[THETA_R]))
    elif mode == 1:
        r0, r1 = cos(p[THETA_R]), sin(p[THETA_R])
        s0, s1 = r0 + ct, r1 + st
        ns = hypot(s0, s1)
        fb = copysign(1.0, r0 * st - r1 * ct) if ns <= SWITCH_EPS else (r0 * s1 - r1 * s0) / ns
        wc = p[OMEGA_0] + p[ETA] * (vdc - p[V_DC_R]) - p[GAMMA] * fb
    else:
        wc = p[OMEGA_0] + p[ETA] * (vdc - p[V_DC_R]) - p[GAMMA] * atan(th - p[THETA_R])

    mu = p[MU_R]
    if p[LIM_ON] != 0.0:
        i_mag = hypot(id_, iq)
        dval = p[D_MIN]
        if p[USE_D] != 0.0 and i_mag != 0.0:
            num = vd * id_ + vq * iq
            den = p[MU_R] * vdc * (ct * id_ + st * iq)
            if abs(den) > 1e-12 * (abs(num) + p[MU_R] * abs(vdc) * i_mag):
                dval = num / den
        mu = (1.0 - _delta_mu(i_mag, dval, p)) * p[MU_R]

    md, mq = mu * ct, mu * st
    xl, xc, xg = p[ELL] * w, p[C] * w + p[B_EXTRA], p[ELL_G] * w
    gsh = p[G] + p[G_EXTRA]
    v_grid = p[B] * w if coi else p[V_R]

    f = [0.0] * len(x)
    f[0] = wc - w
    f[1] = (p[I_R] - p[KAPPA] * (vdc - p[V_DC_R]) - idc) / p[TAU_DC]
    f[2] = (idc - p[G_DC] * vdc - (md * id_ + mq * iq)) / p[C_DC]
    if coi:
        f[3] = (p[T_M] - p[DAMP] * w + p[B] * gd) / p[INERTIA]
    f[o] = (vdc * md - (p[R] * id_ - xl * iq) - vd) / p[ELL]
    f[o + 1] = (vdc * mq - (p[R] * iq + xl * id_) - vq) / p[ELL]
    f[o + 2] = (id_ - (gsh * vd - xc * vq) - gd) / p[C]
    f[o + 3] = (iq - (gsh * vq + xc * vd) - gq) / p[C]
    f[o + 4] = (vd - (p[R_G] * gd - xg * gq) - v_grid) / p[ELL_G]
    f[o + 5] = (vq - (p[R_G] * gq + xg * gd)) / p[ELL_G]
    return f


def eval_rhs(x, p, out):
    out[:] = rhs(list(x), list(p))


def run_segment(x, p, dt, n_steps, k0, stride, record_last, guard, rec, rec_k, rec_pos,
                crossings, n_cross):
    """Same contract as the compiled ``run_segment``."""
    p = [float(v) for v in p]
    g = [float(v) for v in guard]
    xs = [float(v) for v in x]
    n = len(xs)
    h2, h6 = 0.5 * dt, dt / 6.0
    track = p[MODE] == 1.0
    cmax = len(crossings)
    cprev = cos(0.5 * (xs[0] - p[THETA_R]))
    status, done = 0, n_steps
    for j in range(n_steps):
        k1 = rhs(xs, p)
        k2 = rhs([xs[c] + h2 * k1[c] for c in range(n)], p)
        k3 = rhs([xs[c] + h2 * k2[c] for c in range(n)], p)
        k4 = rhs([xs[c] + dt * k3[c] for c in range(n)], p)
        xn = [xs[c] + h6 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]) for c in range(n)]
        if any(not isfinite(v) or abs(v) > g[c] for c, v in enumerate(xn)):
            status, done = 1, j
            break
        xs = xn
        k = k0 + j + 1
        if track:
            cnow = cos(0.5 * (xs[0] - p[THETA_R]))
            if (cnow > 0.0) != (cprev > 0.0):
                if n_cross < cmax:
                    crossings[n_cross] = k
                n_cross += 1
            cprev = cnow
        if k % stride == 0 or (record_last and j == n_steps - 1):
            rec[rec_pos, :] = xs
            rec_k[rec_pos] = k
            rec_pos += 1
    x[:] = xs
    return status, done, rec_pos, n_cross
