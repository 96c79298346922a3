"""JSON experiment configuration: schema, SI conversion and construction of run objects.

Physical quantities may be given in internal units (Gamma = 1) or with an SI
suffix: ``_us`` for times, ``_kHz``/``_MHz`` for angular frequencies quoted
as 2 pi x f.  A quantity may not be given both ways.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ParseError, SSLError, ValidationError
from .model import CANONICAL_PI_PHASES, CouplingSet, MediumParams, UnitSystem, relative_phase, wrap_angle
from .protocols import QubitAmplitudes, SimConfig
from .solver import GridSpec, PulseSpec

PROTOCOLS = ("scan_delta", "scan_theta", "tune_theta", "interferometer_delta_scan",
             "interferometer_time_scan", "two_color_storage", "synthetic_trace")

_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_range = {
    "oneOf": [
        {"type": "array", "items": _num, "minItems": 1},
        {"type": "object", "additionalProperties": False, "required": ["start", "stop", "num"],
         "properties": {"start": _num, "stop": _num, "num": {"type": "integer", "minimum": 1}}},
    ]
}
_complex = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]}
_four = {"type": "array", "items": _num, "minItems": 4, "maxItems": 4}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["protocol", "medium", "couplings"],
    "properties": {
        "protocol": {"enum": list(PROTOCOLS)},
        "description": {"type": "string"},
        "units": {"type": "object", "additionalProperties": False,
                  "properties": {"gamma_SI": {"type": "number", "exclusiveMinimum": 0},
                                 "gamma_MHz": {"type": "number", "exclusiveMinimum": 0}}},
        "medium": {"type": "object", "additionalProperties": False, "required": ["alpha"],
                   "properties": {"alpha": {"type": "number", "exclusiveMinimum": 0},
                                  "gamma1": _nonneg, "gamma2": _nonneg,
                                  "gamma1_kHz": _nonneg, "gamma2_kHz": _nonneg,
                                  "dk_L": _num}},
        "couplings": {"type": "object", "additionalProperties": False,
                      "properties": {"omega": {"oneOf": [{"type": "number", "exclusiveMinimum": 0},
                                                         {"type": "array", "items": _nonneg,
                                                          "minItems": 4, "maxItems": 4}]},
                                     "omega_MHz": {"oneOf": [{"type": "number", "exclusiveMinimum": 0},
                                                             {"type": "array", "items": _nonneg,
                                                              "minItems": 4, "maxItems": 4}]},
                                     "phases": _four,
                                     "theta": _num}},
        "pulse": {"type": "object", "additionalProperties": False,
                  "properties": {"peak": _complex, "center": _num, "center_us": _num,
                                 "width_e2": {"type": "number", "exclusiveMinimum": 0},
                                 "width_e2_us": {"type": "number", "exclusiveMinimum": 0},
                                 "plateau": _nonneg, "plateau_us": _nonneg}},
        "grid": {"type": "object", "additionalProperties": False,
                 "properties": {"n_z": {"type": "integer", "minimum": 16},
                                "dt": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.1},
                                "t_span": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                                "fast_storage": {"type": "boolean"}}},
        "scan": {"type": "object", "additionalProperties": False,
                 "properties": {"delta": _range, "delta_kHz": _range, "theta": _range,
                                "t_s": _range, "t_s_us": _range}},
        "delta": _num,
        "delta_kHz": _num,
        "storage": {"type": "object", "additionalProperties": False,
                    "properties": {"t_s": _nonneg, "t_s_us": _nonneg,
                                   "delta_store": _num, "delta_store_kHz": _num,
                                   "t_off": _num, "t_off_us": _num,
                                   "detune_on": {"type": "boolean"}}},
        "qubit": {"type": "object", "additionalProperties": False,
                  "properties": {"ratio": _nonneg, "a": _complex, "b": _complex}},
        "trace": {"type": "object", "additionalProperties": False,
                  "properties": {"subsystem": {"enum": [1, 2]},
                                 "omega_B": _nonneg,
                                 "noise": _nonneg,
                                 "t_stop": _num, "t_stop_us": _num,
                                 "sample_dt": {"type": "number", "exclusiveMinimum": 0}}},
        "tune": {"type": "object", "additionalProperties": False,
                 "properties": {"theta0": _num, "n_coarse": {"type": "integer", "minimum": 4}}},
        "output": {"type": "object", "additionalProperties": False,
                   "properties": {"dir": {"type": "string"}}},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": ["integer", "null"], "minimum": 1},
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str
    sim: SimConfig
    params: dict
    output_dir: str = "out"
    seed: int = 0
    raw: dict = field(default_factory=dict)
    source: str = ""

    @property
    def units(self) -> UnitSystem:
        return self.sim.units


def _pick(d: dict, key: str, conv: dict, where: str, default=None):
    """Return d[key] or d[key+suffix] converted; both present is an error."""
    found = [k for k in [key] + [key + s for s in conv] if k in d]
    name = f"{where}.{key}" if where else key
    if len(found) > 1:
        raise ValidationError(f"{name}: give only one of {found}", field=name)
    if not found:
        return default
    k = found[0]
    v = d[k]
    if k == key:
        return v
    f = conv[k[len(key):]]
    if isinstance(v, list):
        return [f(x) for x in v]
    return f(v)


def _expand_range(v):
    if isinstance(v, dict):
        return list(np.linspace(v["start"], v["stop"], v["num"]))
    return list(v)


def _complex_value(v):
    if isinstance(v, list):
        return complex(v[0], v[1])
    return complex(v)


def validate_dict(cfg: dict, source: str = "") -> ExperimentConfig:
    """Schema check plus semantic checks; returns the normalized configuration."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise ValidationError(f"{path}: {e.message}", field=path)

    units_d = cfg.get("units", {})
    if "gamma_SI" in units_d and "gamma_MHz" in units_d:
        raise ValidationError("units: give gamma_SI or gamma_MHz, not both", field="units")
    gamma_SI = units_d.get("gamma_SI", 2 * math.pi * units_d["gamma_MHz"] * 1e6 if "gamma_MHz" in units_d
                           else UnitSystem().gamma_SI)
    units = UnitSystem(gamma_SI=gamma_SI)
    T = {"_us": units.time_from_us}
    F = {"_kHz": units.freq_from_kHz, "_MHz": units.freq_from_MHz}
    Fm = {"_MHz": units.freq_from_MHz}

    try:
        md = cfg["medium"]
        medium = MediumParams(alpha=md["alpha"],
                              gamma1=_pick(md, "gamma1", {"_kHz": units.freq_from_kHz}, "medium", 0.0),
                              gamma2=_pick(md, "gamma2", {"_kHz": units.freq_from_kHz}, "medium", 0.0),
                              dk_L=md.get("dk_L", 0.0))

        cd = cfg["couplings"]
        omega = _pick(cd, "omega", Fm, "couplings")
        if omega is None:
            raise ValidationError("couplings.omega: required", field="couplings.omega")
        mags = omega if isinstance(omega, list) else [omega] * 4
        if "phases" in cd:
            phases = cd["phases"]
            if "theta" in cd:
                if min(mags) <= 0:
                    raise ValidationError("couplings.theta: needs all four couplings nonzero", field="couplings.theta")
                th = relative_phase(CouplingSet.from_polar(mags, phases))
                if abs(wrap_angle(th - cd["theta"])) > 1e-6:
                    raise ValidationError(f"couplings.theta: {cd['theta']} inconsistent with phases (give {th:.9g})",
                                          field="couplings.theta")
        elif "theta" in cd:
            phases = (cd["theta"] - math.pi / 2, 0.0, 0.0, math.pi / 2)
        else:
            phases = CANONICAL_PI_PHASES
        couplings = CouplingSet.from_polar(mags, phases)

        pd = cfg.get("pulse", {})
        pulse = PulseSpec(peak=_complex_value(pd.get("peak", 0.01)),
                          center=_pick(pd, "center", T, "pulse", 0.0),
                          width_e2=_pick(pd, "width_e2", T, "pulse", 94.0),
                          plateau=_pick(pd, "plateau", T, "pulse", 0.0))
        gd = cfg.get("grid", {})
        grid = GridSpec(n_z=gd.get("n_z", 200), dt=gd.get("dt", 0.05),
                        t_span=tuple(gd["t_span"]) if "t_span" in gd else None,
                        fast_storage=gd.get("fast_storage", True))
    except SSLError as e:
        if isinstance(e, ValidationError):
            raise
        raise ValidationError(str(e)) from e

    delta = _pick(cfg, "delta", F, "", 0.0)
    sim = SimConfig(medium=medium, couplings=couplings, pulse=pulse, grid=grid, delta=delta, units=units,
                    threads=cfg.get("threads"))

    proto = cfg["protocol"]
    sd = cfg.get("scan", {})
    st = cfg.get("storage", {})
    params = {"delta": delta}
    need = {"scan_delta": "delta", "scan_theta": "theta", "interferometer_delta_scan": "delta",
            "interferometer_time_scan": "t_s"}
    if proto in need:
        key = need[proto]
        conv = {"delta": {"_kHz": units.freq_from_kHz}, "t_s": {"_us": units.time_from_us}, "theta": {}}[key]
        present = [k for k in [key] + [key + s for s in conv] if k in sd]
        if not present:
            raise ValidationError(f"scan.{key}: required for protocol {proto}", field=f"scan.{key}")
        if len(present) > 1:
            raise ValidationError(f"scan.{key}: give only one of {present}", field=f"scan.{key}")
        k = present[0]
        f = conv.get(k[len(key):], float)
        params[key + "_list"] = [float(f(x)) for x in _expand_range(sd[k])]
    if proto in ("interferometer_delta_scan", "two_color_storage"):
        ts = _pick(st, "t_s", T, "storage")
        if ts is None:
            raise ValidationError(f"storage.t_s: required for protocol {proto}", field="storage.t_s")
        params["t_s"] = float(ts)
    if proto in ("interferometer_delta_scan", "interferometer_time_scan"):
        params["detune_on"] = st.get("detune_on", True)
    if proto == "two_color_storage":
        params["delta_store"] = float(_pick(st, "delta_store", F, "storage", 0.0))
        qd = cfg.get("qubit", {})
        try:
            if "ratio" in qd:
                if "a" in qd or "b" in qd:
                    raise ValidationError("qubit: give ratio or (a, b), not both", field="qubit")
                q = QubitAmplitudes.from_ratio(qd["ratio"])
            else:
                q = QubitAmplitudes(_complex_value(qd.get("a", 1.0)), _complex_value(qd.get("b", 0.0)))
        except ValidationError:
            raise
        except SSLError as e:
            raise ValidationError(f"qubit: {e}", field="qubit") from e
        params["qubit"] = q
    if "t_off" in st or "t_off_us" in st:
        params["t_off"] = float(_pick(st, "t_off", T, "storage"))
    if proto == "tune_theta":
        td = cfg.get("tune", {})
        params["theta0"] = td.get("theta0")
        params["n_coarse"] = td.get("n_coarse", 24)
    if proto == "synthetic_trace":
        trd = cfg.get("trace", {})
        params["subsystem"] = trd.get("subsystem", 1)
        params["omega_B"] = trd.get("omega_B", 0.0)
        params["noise"] = trd.get("noise", 0.0)
        params["t_stop"] = _pick(trd, "t_stop", T, "trace", None)
        params["sample_dt"] = trd.get("sample_dt", 0.5)
    return ExperimentConfig(protocol=proto, sim=sim, params=params,
                            output_dir=cfg.get("output", {}).get("dir", "out"),
                            seed=cfg.get("seed", 0), raw=copy.deepcopy(cfg), source=source)


def bundled_configs() -> list:
    return sorted(p.name for p in resources.files("sslsim").joinpath("configs").iterdir()
                  if p.name.endswith(".json"))


def resolve_path(path) -> Path:
    """A path on disk, or the name of a bundled configuration."""
    p = Path(path)
    if p.exists():
        return p
    cand = resources.files("sslsim").joinpath("configs", p.name)
    if cand.is_file():
        return Path(str(cand))
    raise ParseError(f"config file not found: {path}")


def load_config(path) -> ExperimentConfig:
    p = resolve_path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ParseError(f"cannot read {p}: {e}") from e

    def no_constants(name):
        raise ValidationError(f"non-finite number {name} in config")

    try:
        cfg = json.loads(text, parse_constant=no_constants)
    except json.JSONDecodeError as e:
        raise ParseError(f"{p}: malformed JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(cfg, dict):
        raise ParseError(f"{p}: top level must be a JSON object")
    return validate_dict(cfg, source=str(p))
