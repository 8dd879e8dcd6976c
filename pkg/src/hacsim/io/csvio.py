"""Trajectory CSV export and re-import."""
from __future__ import annotations

import csv
import os

import numpy as np

from ..analysis import EquilibriumPair, solve_equilibrium
from ..plant import IB_LABELS
from ..sim.derived import DERIVED_NAMES

NORMALIZATIONS = ("si", "per_equilibrium", "nameplate")
TAIL = DERIVED_NAMES + ("V_lyap",)
VOLTAGES = ("v_dc", "v_d", "v_q")
CURRENTS = ("i_dc", "i_d", "i_q", "ig_d", "ig_q", "i_net")
POWERS = ("p_net", "p_s", "q_s", "p_f", "q_f", "p_g", "q_g")


def csv_header(coi: bool) -> list[str]:
    states = list(IB_LABELS)
    if coi:
        states.append("omega")
    return ["t"] + states + list(TAIL)


def _state_column(traj, name):
    return traj.states[:, traj.labels.index(name)]


def _equilibrium_for(traj) -> EquilibriumPair:
    sc = traj.scenario
    return solve_equilibrium(sc.pp, sc.hp, sc.grid, enforce_reference=sc.hp.eta > 0.0)


def trajectory_table(traj, normalization: str = "si", eq: EquilibriumPair | None = None
                     ) -> tuple[list[str], np.ndarray]:
    """Columns in export order, optionally normalized.

    ``per_equilibrium`` divides each Euclidean state channel by its equilibrium
    value (channels whose equilibrium value is zero stay in SI).  ``nameplate``
    uses V_base = v_r, S_base = S_rc, I_base = 2 S_base / (3 v_r), omega_0.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    if len(traj.times) == 0:
        raise ValueError("empty trajectory")
    header = csv_header(traj.is_coi)
    cols = []
    for name in header:
        if name == "t":
            cols.append(traj.times)
        elif name in traj.labels:
            cols.append(_state_column(traj, name))
        else:
            cols.append(traj.derived[name])
    table = np.column_stack(cols).astype(float)

    if normalization == "per_equilibrium":
        eq = eq or _equilibrium_for(traj)
        for k, name in enumerate(traj.labels[1:], start=1):
            ref = eq.x_stable[k]
            if ref != 0.0:
                table[:, header.index(name)] /= ref
    elif normalization == "nameplate":
        pp = traj.scenario.pp
        scale = {n: pp.v_r for n in VOLTAGES}
        scale.update({n: pp.current_base for n in CURRENTS})
        scale.update({n: pp.s_rc for n in POWERS})
        scale["omega"] = pp.omega_0
        for name, base in scale.items():
            if name in header:
                table[:, header.index(name)] /= base
    return header, table


def export_csv(traj, path, normalization: str = "si", eq: EquilibriumPair | None = None) -> str:
    header, table = trajectory_table(traj, normalization, eq)
    path = os.fspath(path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in table:
            w.writerow(["%.17g" % v for v in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body], dtype=float)
    return header, data.reshape(len(body), len(header))


def write_table(path, header, rows) -> str:
    """Generic metrics table (sweep / Monte-Carlo output)."""
    path = os.fspath(path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([("%.17g" % v) if isinstance(v, float) else v for v in r])
    return path


__all__ = ["NORMALIZATIONS", "csv_header", "trajectory_table", "export_csv", "read_csv",
           "write_table"]
