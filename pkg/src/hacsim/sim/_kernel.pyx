# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled fixed-step RK4 integrator for the closed-loop converter models.

Parameter indices follow ``_layout``; keep both in sync.
"""
from libc.math cimport sin, cos, atan, exp, hypot, copysign, fabs, isfinite

DEF TAU_DC = 0
DEF C_DC = 1
DEF G_DC = 2
DEF ELL = 3
DEF R = 4
DEF C = 5
DEF G = 6
DEF ELL_G = 7
DEF R_G = 8
DEF OMEGA_0 = 9
DEF V_R = 10
DEF ETA = 11
DEF GAMMA = 12
DEF KAPPA = 13
DEF V_DC_R = 14
DEF I_R = 15
DEF MU_R = 16
DEF THETA_R = 17
DEF LIM_ON = 18
DEF BETA = 19
DEF I_TH = 20
DEF D_MIN = 21
DEF USE_D = 22
DEF ABS_EXT = 23
DEF COI = 24
DEF INERTIA = 25
DEF DAMP = 26
DEF T_M = 27
DEF B = 28
DEF G_EXTRA = 29
DEF B_EXTRA = 30
DEF MODE = 31
DEF D_UPPER = 1.0 - 1e-9
DEF SWITCH_EPS = 1e-12
DEF DMU_MAX = 0.9999999999999999
DEF X_FLOOR = -709.0


cdef double delta_mu(double i_mag, double d, const double* p) noexcept nogil:
    cdef double c, x
    if p[ABS_EXT] != 0.0:
        d = min(max(d, p[D_MIN]), 2.0 - p[D_MIN])
        c = fabs(1.0 - d)
    else:
        d = min(max(d, p[D_MIN]), D_UPPER)
        c = 1.0 - d
    if c == 0.0:
        return 0.0
    x = p[BETA] * (i_mag - p[I_TH])
    if x < X_FLOOR:
        return 0.0
    # rounds up to 1.0 for large x; keep it strictly below
    return min(1.0 / (1.0 + (1.0 - c) / c * exp(-x)), DMU_MAX)


cdef void rhs(const double* x, const double* p, double* f) noexcept nogil:
    cdef int coi = p[COI] != 0.0
    cdef int o = 4 if coi else 3
    cdef int mode = <int>p[MODE]
    cdef double th = x[0], idc = x[1], vdc = x[2]
    cdef double w = x[3] if coi else p[OMEGA_0]
    cdef double id_ = x[o], iq = x[o + 1], vd = x[o + 2], vq = x[o + 3]
    cdef double gd = x[o + 4], gq = x[o + 5]
    cdef double ct = cos(th), st = sin(th)
    cdef double fb, wc, r0, r1, s0, s1, ns, mu, dval, i_mag, num, den
    cdef double md, mq, xl, xc, xg, gsh, v_grid

    if mode == 0:
        fb = sin(0.5 * (th - p[THETA_R]))
        wc = p[OMEGA_0] + p[ETA] * (vdc - p[V_DC_R]) - p[GAMMA] * fb
    elif mode == 1:
        r0 = cos(p[THETA_R])
        r1 = sin(p[THETA_R])
        s0 = r0 + ct
        s1 = r1 + st
        ns = hypot(s0, s1)
        if ns <= SWITCH_EPS:
            fb = copysign(1.0, r0 * st - r1 * ct)
        else:
            fb = (r0 * s1 - r1 * s0) / ns
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
            if fabs(den) > 1e-12 * (fabs(num) + p[MU_R] * fabs(vdc) * i_mag):
                dval = num / den
        mu = (1.0 - delta_mu(i_mag, dval, p)) * p[MU_R]

    md = mu * ct
    mq = mu * st
    xl = p[ELL] * w
    xc = p[C] * w + p[B_EXTRA]
    xg = p[ELL_G] * w
    gsh = p[G] + p[G_EXTRA]
    v_grid = p[B] * w if coi else p[V_R]

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


def eval_rhs(const double[::1] x, const double[::1] p, double[::1] out):
    rhs(&x[0], &p[0], &out[0])


def run_segment(double[::1] x, const double[::1] p, double dt, long n_steps, long k0,
                long stride, bint record_last, const double[::1] guard,
                double[:, ::1] rec, long[::1] rec_k, long rec_pos,
                long[::1] crossings, long n_cross):
    """Advance ``x`` in place by ``n_steps`` RK4 steps.

    Returns ``(status, steps_done, rec_pos, n_cross)``.
    """
    cdef int n = x.shape[0]
    cdef double k1[10]
    cdef double k2[10]
    cdef double k3[10]
    cdef double k4[10]
    cdef double tmp[10]
    cdef double xn[10]
    cdef long j, k
    cdef int c
    cdef int status = 0
    cdef int track = p[MODE] == 1.0
    cdef double h2 = 0.5 * dt, h6 = dt / 6.0
    cdef double cprev, cnow
    cdef long cmax = crossings.shape[0]
    cdef const double* pp = &p[0]

    with nogil:
        cprev = cos(0.5 * (x[0] - p[THETA_R]))
        for j in range(n_steps):
            rhs(&x[0], pp, k1)
            for c in range(n):
                tmp[c] = x[c] + h2 * k1[c]
            rhs(tmp, pp, k2)
            for c in range(n):
                tmp[c] = x[c] + h2 * k2[c]
            rhs(tmp, pp, k3)
            for c in range(n):
                tmp[c] = x[c] + dt * k3[c]
            rhs(tmp, pp, k4)
            for c in range(n):
                xn[c] = x[c] + h6 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
            for c in range(n):
                if not isfinite(xn[c]) or fabs(xn[c]) > guard[c]:
                    status = 1
                    break
            if status:
                break
            for c in range(n):
                x[c] = xn[c]
            k = k0 + j + 1
            if track:
                cnow = cos(0.5 * (x[0] - p[THETA_R]))
                if (cnow > 0.0) != (cprev > 0.0):
                    if n_cross < cmax:
                        crossings[n_cross] = k
                    n_cross += 1
                cprev = cnow
            if k % stride == 0 or (record_last and j == n_steps - 1):
                for c in range(n):
                    rec[rec_pos, c] = x[c]
                rec_k[rec_pos] = k
                rec_pos += 1
    return status, j if status else n_steps, rec_pos, n_cross
