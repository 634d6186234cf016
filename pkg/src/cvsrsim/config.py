"""Scenario configuration: INI text in, resolved RunConfig out, echo back out.

Six sections (cvsr, material, solver, source, scenario, output), every key
optional with a documented default, unknown sections and keys rejected by
name so a typo cannot silently fall back to a default. The resolved config
renders back to text that re-parses to an identical RunConfig; that echo is
what run reports embed.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, replace
from typing import Optional, Tuple

from .converter import ConverterConfig
from .errors import ConfigError
from .scenario import (CONVERTER_DT, IDEAL_DT, SOURCE_KINDS, CvsrParams,
                       Scenario)
from .solver import SolverConfig

ENV_OUT_DIR = "CVSR_OUT_DIR"

# section -> key -> (value kind, default used when the key is absent)
_CVSR_KEYS = {
    "l_mid": "float", "l_out": "float", "h_gap": "float", "area": "float",
    "n_ac": "int", "n_dc": "int", "supply_rms": "float", "frequency": "float",
    "load_ohms": "float", "load_henry": "float", "fringing_factor": "float",
    "dc_polarity": "int",
}
_MATERIAL_KEYS = {
    "mu_r_linear": "float", "b_sat": "float", "mu_r_sat": "float",
    "knee_sharpness": "float", "r_mag": "float",
    "mid_leg_saturates": "bool", "linear_material": "bool",
}
_SOLVER_KEYS = {
    "dt": "float", "method": "str",
    "newton_tol": "float", "newton_max_iter": "int",
}
_SOURCE_KEYS = {
    "kind": "str", "dc_setpoint": "float", "profile": "profile",
    "source_rms": "float", "source_frequency": "float",
    "source_resistance": "float", "dc_link_farad": "float",
    "carrier_frequency": "float", "r_on": "float", "g_off": "float",
    "v_fwd": "float", "kp": "float", "ki": "float",
}
_SCENARIO_KEYS = {
    "duration": "float", "ramp_cycles": "float", "calibrate": "bool",
    "metric_cycles": "int", "startup": "float",
}
_OUTPUT_KEYS = {
    "directory": "str", "channels": "list", "decimation": "int",
    "waveform_file": "str", "report_file": "str",
}
_SECTIONS = {
    "cvsr": _CVSR_KEYS, "material": _MATERIAL_KEYS, "solver": _SOLVER_KEYS,
    "source": _SOURCE_KEYS, "scenario": _SCENARIO_KEYS, "output": _OUTPUT_KEYS,
}

_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one command invocation."""

    params: CvsrParams
    converter: ConverterConfig
    source: str
    dc_setpoint: float
    profile: Optional[Tuple[Tuple[float, float], ...]]
    dt: float
    method: str
    newton_tol: float
    newton_max_iter: int
    duration: float
    ramp_cycles: float
    calibrate: bool
    metric_cycles: int
    startup: float
    out_dir: str
    channels: Optional[Tuple[str, ...]]
    decimation: int
    waveform_file: str
    report_file: str

    def solver_config(self) -> SolverConfig:
        return SolverConfig(dt=self.dt, method=self.method,
                            newton_tol=self.newton_tol,
                            newton_max_iter=self.newton_max_iter)

    def scenario(self) -> Scenario:
        ref = None
        if self.profile is not None:
            from .converter import ReferenceProfile
            ref = ReferenceProfile.steps(list(self.profile))
        solver_kw = dict(method=self.method, newton_tol=self.newton_tol,
                         newton_max_iter=self.newton_max_iter,
                         ramp_cycles=self.ramp_cycles)
        if self.source == "ideal":
            return Scenario(params=self.params, source="ideal",
                            dc_setpoint=self.dc_setpoint,
                            duration=self.duration, dt=self.dt, **solver_kw)
        return Scenario.with_converter(self.dc_setpoint, params=self.params,
                                       converter=self.converter,
                                       reference=ref, duration=self.duration,
                                       dt=self.dt, **solver_kw)


def _convert(raw: str, kind: str, where: str):
    raw = raw.strip()
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            try:
                return _BOOL_WORDS[raw.lower()]
            except KeyError:
                raise ValueError(f"not a boolean: {raw!r}")
        if kind == "str":
            return raw
        if kind == "list":
            if raw.lower() == "all":
                return None
            items = tuple(s.strip() for s in raw.split(",") if s.strip())
            if not items:
                raise ValueError("empty channel list")
            return items
        if kind == "profile":
            pairs = []
            for piece in raw.split(","):
                piece = piece.strip()
                if not piece:
                    continue
                t_s, _, v_s = piece.partition(":")
                if not _:
                    raise ValueError(f"profile step {piece!r} is not time:level")
                pairs.append((float(t_s), float(v_s)))
            if not pairs:
                raise ValueError("empty profile")
            return tuple(pairs)
    except ValueError as exc:
        raise ConfigError(str(exc), location=where)
    raise ConfigError(f"unhandled value kind {kind!r}", location=where)


def _read_ini(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"entry before any [section] header: {exc.line.strip()!r}",
                          location=f"line {exc.lineno}")
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r}",
                          location=f"{exc.section}.{exc.option}, line {exc.lineno}")
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]",
                          location=f"line {exc.lineno}")
    except configparser.ParsingError as exc:
        lineno, content = exc.errors[0]
        raise ConfigError(f"cannot parse {content}", location=f"line {lineno}")
    return cp


def _collect(cp: configparser.ConfigParser) -> dict:
    values = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(
                f"unknown section [{section}]; expected one of "
                f"{sorted(_SECTIONS)}", location=section)
        keys = _SECTIONS[section]
        for key, raw in cp.items(section):
            if key not in keys:
                raise ConfigError(
                    f"unknown key; [{section}] accepts {sorted(keys)}",
                    location=f"{section}.{key}")
            values[(section, key)] = _convert(raw, keys[key], f"{section}.{key}")
    return values


def _semantic(build, fields_to_location):
    """Construct a validated object, pinning ValueErrors to their key path."""
    try:
        return build()
    except ValueError as exc:
        msg = str(exc)
        for field, location in fields_to_location.items():
            if field in msg:
                raise ConfigError(msg, location=location)
        raise ConfigError(msg)


def parse_config(text: str) -> RunConfig:
    """Parse INI text into a RunConfig; empty text yields all defaults."""
    values = _collect(_read_ini(text))

    def get(section, key, default):
        return values.get((section, key), default)

    params_kv = {k: values[(s, k)]
                 for (s, k) in values if s in ("cvsr", "material")}
    params = _semantic(
        lambda: CvsrParams(**params_kv),
        {k: f"{'material' if k in _MATERIAL_KEYS else 'cvsr'}.{k}"
         for k in list(_CVSR_KEYS) + list(_MATERIAL_KEYS)})

    conv_fields = {k: values[("source", k)]
                   for (s, k) in values
                   if s == "source" and k not in ("kind", "dc_setpoint", "profile")}
    converter = _semantic(
        lambda: ConverterConfig(**conv_fields),
        {k: f"source.{k}" for k in _SOURCE_KEYS})

    source = get("source", "kind", "ideal")
    if source not in SOURCE_KINDS:
        raise ConfigError(f"kind must be one of {SOURCE_KINDS}, got {source!r}",
                          location="source.kind")
    dc_setpoint = get("source", "dc_setpoint", 0.0)
    profile = get("source", "profile", None)

    dt = get("solver", "dt", IDEAL_DT if source == "ideal" else CONVERTER_DT)
    method = get("solver", "method", "trapezoidal")
    newton_tol = get("solver", "newton_tol", 1e-8)
    newton_max_iter = get("solver", "newton_max_iter", 40)
    _semantic(lambda: SolverConfig(dt=dt, method=method, newton_tol=newton_tol,
                                   newton_max_iter=newton_max_iter),
              {"dt": "solver.dt", "method": "solver.method",
               "newton_tol": "solver.newton_tol",
               "iteration limits": "solver.newton_max_iter"})

    duration = get("scenario", "duration", 0.2 if source == "ideal" else 0.1)
    ramp_cycles = get("scenario", "ramp_cycles", 2.0)
    calibrate = get("scenario", "calibrate", False)
    metric_cycles = get("scenario", "metric_cycles", 5)
    startup = get("scenario", "startup", 0.05)
    if duration <= 0:
        raise ConfigError("duration must be positive", location="scenario.duration")
    if ramp_cycles < 0:
        raise ConfigError("ramp_cycles must be nonnegative",
                          location="scenario.ramp_cycles")
    if metric_cycles < 1:
        raise ConfigError("metric_cycles must be at least 1",
                          location="scenario.metric_cycles")
    if startup < 0:
        raise ConfigError("startup must be nonnegative", location="scenario.startup")

    out_dir = get("output", "directory", None)
    if out_dir is None:
        out_dir = os.environ.get(ENV_OUT_DIR, "out")
    channels = get("output", "channels", None)
    decimation = get("output", "decimation", 1)
    if decimation < 1:
        raise ConfigError("decimation must be at least 1",
                          location="output.decimation")
    waveform_file = get("output", "waveform_file", "waveform.csv")
    report_file = get("output", "report_file", "report.json")

    return RunConfig(params=params, converter=converter, source=source,
                     dc_setpoint=dc_setpoint, profile=profile, dt=dt,
                     method=method, newton_tol=newton_tol,
                     newton_max_iter=newton_max_iter, duration=duration,
                     ramp_cycles=ramp_cycles, calibrate=calibrate,
                     metric_cycles=metric_cycles, startup=startup,
                     out_dir=out_dir, channels=channels,
                     decimation=decimation, waveform_file=waveform_file,
                     report_file=report_file)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(cfg: RunConfig) -> str:
    """Resolved config as INI text; parse_config(render_config(c)) == c."""
    p, cv = cfg.params, cfg.converter
    lines = ["[cvsr]"]
    for k in _CVSR_KEYS:
        lines.append(f"{k} = {_fmt(getattr(p, k))}")
    lines.append("")
    lines.append("[material]")
    for k in _MATERIAL_KEYS:
        lines.append(f"{k} = {_fmt(getattr(p, k))}")
    lines.append("")
    lines.append("[solver]")
    lines.append(f"dt = {_fmt(cfg.dt)}")
    lines.append(f"method = {cfg.method}")
    lines.append(f"newton_tol = {_fmt(cfg.newton_tol)}")
    lines.append(f"newton_max_iter = {cfg.newton_max_iter}")
    lines.append("")
    lines.append("[source]")
    lines.append(f"kind = {cfg.source}")
    lines.append(f"dc_setpoint = {_fmt(cfg.dc_setpoint)}")
    if cfg.profile is not None:
        steps = ", ".join(f"{_fmt(t)}:{_fmt(v)}" for t, v in cfg.profile)
        lines.append(f"profile = {steps}")
    for k in _SOURCE_KEYS:
        if k in ("kind", "dc_setpoint", "profile"):
            continue
        lines.append(f"{k} = {_fmt(getattr(cv, k))}")
    lines.append("")
    lines.append("[scenario]")
    lines.append(f"duration = {_fmt(cfg.duration)}")
    lines.append(f"ramp_cycles = {_fmt(cfg.ramp_cycles)}")
    lines.append(f"calibrate = {_fmt(cfg.calibrate)}")
    lines.append(f"metric_cycles = {cfg.metric_cycles}")
    lines.append(f"startup = {_fmt(cfg.startup)}")
    lines.append("")
    lines.append("[output]")
    lines.append(f"directory = {cfg.out_dir}")
    lines.append("channels = " + ("all" if cfg.channels is None
                                  else ", ".join(cfg.channels)))
    lines.append(f"decimation = {cfg.decimation}")
    lines.append(f"waveform_file = {cfg.waveform_file}")
    lines.append(f"report_file = {cfg.report_file}")
    lines.append("")
    return "\n".join(lines)
