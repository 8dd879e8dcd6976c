"""Flat parameter-vector layout shared by the compiled kernel and the Python fallback."""
from __future__ import annotations

import math

import numpy as np

from ..controller import HacParams, LimiterParams
from ..plant import GridModel, PlantParams, ShuntPerturbation, is_coi

(TAU_DC, C_DC, G_DC, ELL, R, C, G, ELL_G, R_G, OMEGA_0, V_R,
 ETA, GAMMA, KAPPA, V_DC_R, I_R, MU_R, THETA_R,
 LIM_ON, BETA, I_TH, D_MIN, USE_D, ABS_EXT,
 COI, INERTIA, DAMP, T_M, B,
 G_EXTRA, B_EXTRA, MODE) = range(32)
N_PARAMS = 32

MODE_CODES = {"explicit": 0, "implicit_usw": 1, "atan": 2}

# kernel status codes
OK, DIVERGED = 0, 1


def pack_params(pp: PlantParams, hp: HacParams, lp: LimiterParams, grid: GridModel | None,
                pert: ShuntPerturbation) -> np.ndarray:
    p = np.zeros(N_PARAMS)
    p[[TAU_DC, C_DC, G_DC, ELL, R, C, G, ELL_G, R_G, OMEGA_0, V_R]] = [
        pp.tau_dc, pp.c_dc, pp.g_dc, pp.ell, pp.r, pp.c, pp.g, pp.ell_g, pp.r_g,
        pp.omega_0, pp.v_r]
    p[[ETA, GAMMA, KAPPA, V_DC_R, I_R, MU_R, THETA_R]] = [
        hp.eta, hp.gamma, hp.kappa, hp.v_dc_r, hp.i_r, hp.mu_r, hp.theta_r]
    p[[LIM_ON, BETA, I_TH, D_MIN, USE_D, ABS_EXT]] = [
        float(lp.enabled), lp.beta, lp.i_th, lp.d_min, float(lp.use_measured_d),
        float(lp.abs_extension)]
    if is_coi(grid):
        p[[COI, INERTIA, DAMP, T_M, B]] = [1.0, grid.inertia(pp.omega_0), grid.d, grid.t_m, grid.b]
    p[[G_EXTRA, B_EXTRA]] = [pert.g_extra, pert.b_extra]
    p[MODE] = MODE_CODES[hp.feedback_mode]
    if not np.all(np.isfinite(p)) or math.isnan(p.sum()):
        raise ValueError("non-finite parameter")
    return p
