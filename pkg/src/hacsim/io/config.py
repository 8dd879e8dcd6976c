"""YAML scenario configuration: schema, validation with line numbers, resolution.

Field names carry their SI unit as a suffix (``ell_H``, ``tau_dc_s``).  The
document is versioned with ``schema: 1``.  Unknown keys are errors.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from ..analysis import EquilibriumPair, solve_equilibrium
from ..controller import FEEDBACK_MODES, HacParams, LimiterParams, feedforward_refs
from ..plant import CoiParams, GridModel, InfiniteBus, PlantParams, ShuntPerturbation
from ..sim import Scenario, TimedEvent

SCHEMA_VERSION = 1
REQUIRED = object()


class ConfigError(ValueError):
    def __init__(self, message: str, field_path: str = "", line: int | None = None):
        self.field_path = field_path
        self.line = line
        where = f" (line {line})" if line is not None else ""
        prefix = f"{field_path}: " if field_path else ""
        super().__init__(f"{prefix}{message}{where}")


# ------------------------------------------------------------------ schema
# key -> (kind, default); kinds: float, int, bool, str, choice:<a|b>, any

CONVERTER = {
    "tau_dc_s": ("pos", REQUIRED), "c_dc_F": ("pos", REQUIRED), "g_dc_S": ("pos", REQUIRED),
    "ell_H": ("pos", REQUIRED), "r_Ohm": ("pos", REQUIRED), "c_F": ("pos", REQUIRED),
    "g_S": ("pos", REQUIRED), "ell_g_H": ("pos", REQUIRED), "r_g_Ohm": ("pos", REQUIRED),
    "omega_0_rad_s": ("pos", REQUIRED), "v_r_V": ("pos", REQUIRED),
    "s_rc_VA": ("pos", 5e5),
}
GRID_COI = {
    "type": ("choice:ib|coi", REQUIRED), "s_rg_VA": ("pos", REQUIRED), "h_s": ("pos", REQUIRED),
    "d_Nms_rad": ("pos", REQUIRED), "t_m_Nm": ("float", REQUIRED), "b_Vs_rad": ("pos", REQUIRED),
}
GRID_IB = {"type": ("choice:ib|coi", REQUIRED)}
CONTROL = {
    "eta_rad_sV": ("nonneg", REQUIRED), "gamma_rad_s": ("pos", REQUIRED),
    "kappa_A_V": ("pos", REQUIRED), "v_dc_r_V": ("pos", REQUIRED), "i_r_A": ("float", 0.0),
    "mu_r": ("float", None), "theta_r_rad": ("float", 0.0),
    "feedback_mode": ("choice:" + "|".join(FEEDBACK_MODES), "explicit"),
    "consistent_references": ("bool", False),
    "power_reference": ("mapping", None),
}
POWER_REF = {"p_g_W": ("float", REQUIRED), "q_g_var": ("float", REQUIRED),
             "method": ("choice:exact|rotation", "exact")}
LIMITER = {
    "enabled": ("bool", False), "beta_per_A": ("pos", 0.25), "i_th_A": ("pos", None),
    "i_th_pu": ("pos", None), "pu_base": ("choice:nameplate|equilibrium", "nameplate"),
    "d_min": ("float", 0.01), "use_measured_d": ("bool", False), "abs_extension": ("bool", False),
}
SCENARIO = {
    "t_end_s": ("pos", REQUIRED), "dt_s": ("pos", 20e-6), "seed": ("int", 0),
    "initial_state": ("any", "equilibrium"), "events": ("list", []), "sweep": ("mapping", None),
}
EVENT = {
    "kind": ("choice:fault|load_step|clear", REQUIRED), "t_start_s": ("nonneg", REQUIRED),
    "t_end_s": ("float", None), "g_extra_S": ("float", None), "b_extra_S": ("float", 0.0),
    "p_load_W": ("float", None),
}
SWEEP = {"param": ("str", REQUIRED), "values": ("list", REQUIRED),
         "rocof_t0_s": ("float", None), "rocof_horizon_s": ("pos", 0.5)}
OUTPUT = {
    "directory": ("str", "out"), "name": ("str", "run"), "stride": ("int", 10),
    "normalization": ("choice:si|per_equilibrium|nameplate", "si"), "plot_script": ("bool", True),
}
SECTIONS = ("converter", "grid", "control", "limiter", "scenario", "output")


# --------------------------------------------------------- YAML with lines

def _node_to_python(node, path: str, lines: dict):
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k_node, v_node in node.value:
            key = k_node.value
            sub = f"{path}.{key}" if path else str(key)
            if key in out:
                raise ConfigError("duplicate key", sub, k_node.start_mark.line + 1)
            out[key] = _node_to_python(v_node, sub, lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_node_to_python(v, f"{path}[{i}]", lines) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def parse_yaml(text: str) -> tuple[dict, dict]:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", "",
                          mark.line + 1 if mark else None) from None
    if node is None or not isinstance(node, yaml.MappingNode):
        raise ConfigError("top level must be a mapping", "", 1)
    lines: dict = {}
    return _node_to_python(node, "", lines), lines


def _coerce(kind: str, value, path: str, line):
    if kind == "any":
        return value
    if kind in ("float", "pos", "nonneg"):
        if isinstance(value, bool):
            raise ConfigError("expected a number", path, line)
        try:
            v = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"expected a number, got {value!r}", path, line) from None
        if not math.isfinite(v):
            raise ConfigError("must be finite", path, line)
        if kind == "pos" and not v > 0.0:
            raise ConfigError(f"must be > 0, got {v!r}", path, line)
        if kind == "nonneg" and not v >= 0.0:
            raise ConfigError(f"must be >= 0, got {v!r}", path, line)
        return v
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path, line)
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", path, line)
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path, line)
        return value
    if kind == "list":
        if not isinstance(value, list):
            raise ConfigError("expected a list", path, line)
        return value
    if kind == "mapping":
        if not isinstance(value, dict):
            raise ConfigError("expected a mapping", path, line)
        return value
    if kind.startswith("choice:"):
        options = kind[7:].split("|")
        if value not in options:
            raise ConfigError(f"must be one of {options}, got {value!r}", path, line)
        return value
    raise AssertionError(kind)


def _validate(raw, schema: dict, path: str, lines: dict) -> dict:
    line = lines.get(path)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("expected a mapping", path, line)
    for key in raw:
        if key not in schema:
            sub = f"{path}.{key}"
            raise ConfigError("unknown key", sub, lines.get(sub, line))
    out = {}
    for key, (kind, default) in schema.items():
        sub = f"{path}.{key}"
        if key in raw and raw[key] is not None:
            out[key] = _coerce(kind, raw[key], sub, lines.get(sub, line))
        elif default is REQUIRED:
            raise ConfigError("missing required field", sub, line)
        else:
            out[key] = copy.deepcopy(default)
    return out


# ------------------------------------------------------------- document

@dataclass
class ConfigDocument:
    converter: dict
    grid: dict
    control: dict
    limiter: dict
    scenario: dict
    output: dict
    schema: int = SCHEMA_VERSION
    source: str | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {"schema": self.schema, **{s: copy.deepcopy(getattr(self, s)) for s in SECTIONS}}

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


def validate_document(raw: dict, lines: dict | None = None, source: str | None = None
                      ) -> ConfigDocument:
    lines = lines or {}
    for key in raw:
        if key not in SECTIONS and key != "schema":
            raise ConfigError("unknown section", key, lines.get(key))
    if "schema" not in raw:
        raise ConfigError("missing required field", "schema", 1)
    if raw["schema"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {raw['schema']!r}", "schema",
                          lines.get("schema"))
    for sec in ("converter", "grid", "control", "scenario"):
        if sec not in raw:
            raise ConfigError("missing required section", sec, 1)

    conv = _validate(raw["converter"], CONVERTER, "converter", lines)
    graw = raw["grid"] if isinstance(raw["grid"], dict) else {}
    gtype = graw.get("type")
    grid = _validate(raw["grid"], GRID_COI if gtype == "coi" else GRID_IB, "grid", lines)

    ctrl = _validate(raw["control"], CONTROL, "control", lines)
    if ctrl["power_reference"] is not None:
        ctrl["power_reference"] = _validate(ctrl["power_reference"], POWER_REF,
                                            "control.power_reference", lines)
    elif ctrl["mu_r"] is None:
        raise ConfigError("missing required field (or give power_reference)", "control.mu_r",
                          lines.get("control"))
    if ctrl["mu_r"] is not None and not 0.0 < ctrl["mu_r"] <= 1.0:
        raise ConfigError("must lie in (0, 1]", "control.mu_r", lines.get("control.mu_r"))

    lim = _validate(raw.get("limiter"), LIMITER, "limiter", lines)
    if lim["i_th_A"] is None and lim["i_th_pu"] is None:
        lim["i_th_A"] = 1.25 * 2.0 * conv["s_rc_VA"] / (3.0 * conv["v_r_V"])
    if lim["i_th_A"] is not None and lim["i_th_pu"] is not None:
        raise ConfigError("give either i_th_A or i_th_pu, not both", "limiter.i_th_pu",
                          lines.get("limiter.i_th_pu"))
    if not 0.0 < lim["d_min"] < 1.0:
        raise ConfigError("must lie in (0, 1)", "limiter.d_min", lines.get("limiter.d_min"))

    scen = _validate(raw["scenario"], SCENARIO, "scenario", lines)
    if not scen["dt_s"] <= 1e-3:
        raise ConfigError("must be <= 1e-3", "scenario.dt_s", lines.get("scenario.dt_s"))
    events = []
    for i, ev in enumerate(scen["events"]):
        p = f"scenario.events[{i}]"
        e = _validate(ev, EVENT, p, lines)
        if e["kind"] == "fault":
            if e["t_end_s"] is None:
                raise ConfigError("fault needs t_end_s", p, lines.get(p))
            if e["g_extra_S"] is None:
                e["g_extra_S"] = 1e3
        if e["g_extra_S"] is not None and e["p_load_W"] is not None:
            raise ConfigError("give either g_extra_S or p_load_W", p, lines.get(p))
        if e["t_end_s"] is not None and e["t_end_s"] > scen["t_end_s"] + 1e-12:
            raise ConfigError("event ends after scenario.t_end_s", p, lines.get(p))
        if e["t_start_s"] > scen["t_end_s"]:
            raise ConfigError("event starts after scenario.t_end_s", p, lines.get(p))
        events.append(e)
    starts = [e["t_start_s"] for e in events]
    if starts != sorted(starts):
        raise ConfigError("events must be time-ordered", "scenario.events",
                          lines.get("scenario.events"))
    scen["events"] = events
    if scen["sweep"] is not None:
        sw = _validate(scen["sweep"], SWEEP, "scenario.sweep", lines)
        sw["values"] = [_coerce("float", v, f"scenario.sweep.values[{i}]",
                                lines.get(f"scenario.sweep.values[{i}]"))
                        for i, v in enumerate(sw["values"])]
        scen["sweep"] = sw
    init = scen["initial_state"]
    if isinstance(init, list):
        scen["initial_state"] = [_coerce("float", v, f"scenario.initial_state[{i}]",
                                         lines.get(f"scenario.initial_state[{i}]"))
                                 for i, v in enumerate(init)]
        n = 10 if grid["type"] == "coi" else 9
        if len(init) != n:
            raise ConfigError(f"needs {n} entries", "scenario.initial_state",
                              lines.get("scenario.initial_state"))
    elif isinstance(init, dict):
        scen["initial_state"] = _validate(init, {"perturb": ("pos", REQUIRED)},
                                          "scenario.initial_state", lines)
    elif init not in ("equilibrium", "unstable"):
        raise ConfigError("must be 'equilibrium', 'unstable', a list or {perturb: eps}",
                          "scenario.initial_state", lines.get("scenario.initial_state"))

    out = _validate(raw.get("output"), OUTPUT, "output", lines)
    if out["stride"] < 1:
        raise ConfigError("must be >= 1", "output.stride", lines.get("output.stride"))
    return ConfigDocument(conv, grid, ctrl, lim, scen, out, SCHEMA_VERSION, source)


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings; values are parsed as YAML scalars."""
    raw = copy.deepcopy(raw)
    for item in overrides or ():
        path, sep, text = item.partition("=")
        if not sep or "." not in path:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        keys = path.strip().split(".")
        node = raw
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError("cannot override inside a non-mapping", path)
        node[keys[-1]] = yaml.safe_load(text)
    return raw


def loads_config(text: str, source: str | None = None, overrides=None) -> ConfigDocument:
    raw, lines = parse_yaml(text)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return validate_document(raw, lines, source)


def load_config(path, overrides=None) -> ConfigDocument:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"file not found: {p}")
    return loads_config(p.read_text(), str(p), overrides)


PRESETS = ("table1_ib", "table1_coi", "fault", "rocof")


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    return resources.files("hacsim.presets").joinpath(f"{name}.yaml").read_text()


def load_preset(name: str, overrides=None) -> ConfigDocument:
    return loads_config(preset_text(name), f"preset:{name}", overrides)


def load_any(spec: str, overrides=None) -> ConfigDocument:
    """Path to a YAML file, or ``preset:<name>``."""
    if spec.startswith("preset:"):
        return load_preset(spec[7:], overrides)
    return load_config(spec, overrides)


# ------------------------------------------------------------ resolution

@dataclass
class ResolvedRun:
    doc: ConfigDocument
    pp: PlantParams
    grid: GridModel
    hp: HacParams
    lp: LimiterParams
    eq: EquilibriumPair
    x0: np.ndarray
    events: list
    notes: list

    def scenario(self) -> Scenario:
        s = self.doc.scenario
        return Scenario(self.pp, self.hp, tuple(self.x0), s["t_end_s"], grid=self.grid,
                        lp=self.lp, dt=s["dt_s"], events=tuple(self.events),
                        record_stride=self.doc.output["stride"])


def plant_from(doc: ConfigDocument) -> PlantParams:
    c = doc.converter
    return PlantParams(tau_dc=c["tau_dc_s"], c_dc=c["c_dc_F"], g_dc=c["g_dc_S"], ell=c["ell_H"],
                       r=c["r_Ohm"], c=c["c_F"], g=c["g_S"], ell_g=c["ell_g_H"],
                       r_g=c["r_g_Ohm"], omega_0=c["omega_0_rad_s"], v_r=c["v_r_V"],
                       s_rc=c["s_rc_VA"])


def grid_from(doc: ConfigDocument) -> GridModel:
    g = doc.grid
    if g["type"] == "ib":
        return InfiniteBus()
    return CoiParams(s_r_g=g["s_rg_VA"], h=g["h_s"], d=g["d_Nms_rad"], t_m=g["t_m_Nm"],
                     b=g["b_Vs_rad"])


def resolve(doc: ConfigDocument, gamma_override: float | None = None) -> ResolvedRun:
    """Build domain objects: feedforward references, consistent references, i_th, x0."""
    pp = plant_from(doc)
    grid = grid_from(doc)
    c = doc.control
    notes = []
    mu_r, theta_r = c["mu_r"], c["theta_r_rad"]
    if c["power_reference"] is not None:
        pr = c["power_reference"]
        ff = feedforward_refs(pr["p_g_W"], pr["q_g_var"], c["v_dc_r_V"], pp.v_r, pp,
                              method=pr["method"])
        mu_r, theta_r = float(ff.mu_r), float(ff.theta_r)
        notes.append(f"feedforward references: mu_r={mu_r:.12g}, theta_r={theta_r:.12g}")
    gamma = c["gamma_rad_s"] if gamma_override is None else gamma_override
    try:
        hp = HacParams(eta=c["eta_rad_sV"], gamma=gamma, kappa=c["kappa_A_V"],
                       v_dc_r=c["v_dc_r_V"], i_r=c["i_r_A"], mu_r=mu_r, theta_r=theta_r,
                       feedback_mode=c["feedback_mode"])
    except ValueError as exc:
        raise ConfigError(str(exc), "control") from None
    eq = solve_equilibrium(pp, hp, grid, enforce_reference=hp.eta > 0.0)
    if c["consistent_references"]:
        hp, grid = eq.hp, eq.grid
        notes.append(f"consistent references applied: i_r={hp.i_r:.12g}"
                     + (f", t_m={grid.t_m:.12g}" if eq.is_coi else ""))

    lim = doc.limiter
    if lim["i_th_pu"] is not None:
        if lim["pu_base"] == "nameplate":
            base = pp.current_base
        else:
            si, _, _ = eq.euclid_slices()
            base = float(np.hypot(*eq.x_stable[si]))
        i_th = lim["i_th_pu"] * base
        notes.append(f"i_th = {lim['i_th_pu']} pu ({lim['pu_base']} base) = {i_th:.12g} A")
    else:
        i_th = lim["i_th_A"]
    lp = LimiterParams(enabled=lim["enabled"], beta=lim["beta_per_A"], i_th=i_th,
                       d_min=lim["d_min"], use_measured_d=lim["use_measured_d"],
                       abs_extension=lim["abs_extension"])

    init = doc.scenario["initial_state"]
    if init == "equilibrium":
        x0 = eq.x_stable.copy()
    elif init == "unstable":
        x0 = eq.x_unstable.copy()
    elif isinstance(init, dict):
        rng = np.random.default_rng(doc.scenario["seed"])
        signs = rng.choice([-1.0, 1.0], size=eq.x_stable.size)
        x0 = eq.x_stable * (1.0 + init["perturb"] * signs)
        x0[0] = eq.x_stable[0] + init["perturb"] * signs[0]
    else:
        x0 = np.array(init, dtype=float)

    si, sv, _ = eq.euclid_slices()
    v_mag = float(np.hypot(*eq.x_stable[sv]))
    events = []
    for e in doc.scenario["events"]:
        g_extra = e["g_extra_S"]
        if g_extra is None:
            g_extra = e["p_load_W"] / v_mag ** 2 if e["p_load_W"] is not None else 0.0
        events.append(TimedEvent(e["kind"], e["t_start_s"], e["t_end_s"],
                                 ShuntPerturbation(g_extra, e["b_extra_S"])))
    return ResolvedRun(doc, pp, grid, hp, lp, eq, x0, events, notes)
