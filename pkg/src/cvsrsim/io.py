"""Waveform serialization and run reports.

Waveform files are plain comma-separated text with self-describing headers:
each column is "name (unit)", time first, values printed with 17 significant
digits so a re-parse reproduces the array bit-exactly. Reports are JSON with
the resolved configuration echoed verbatim, so a report alone is enough to
rerun its scenario.
"""

from __future__ import annotations

import json
import math
import os
import time as _time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .analysis import Metrics, rms
from .errors import ReportingError
from .solver import TimeSeries

# named channel groups for plot-ready extracts; the tags follow the numbering
# of the reference waveform set, one group per plotted quantity
PLOT_PRESETS = {
    "fig5": ("b_left", "b_right", "b_mid"),
    "fig6": ("v_wind",),
    "fig7": ("b_left", "b_right", "b_mid"),
    "fig8": ("v_bias",),
    "fig9": ("v_wind",),
    "fig10": ("b_left", "b_right", "b_mid"),
    "fig11": ("v_wind",),
    "fig12": ("b_left", "b_right", "b_mid"),
    "fig13": ("v_bias",),
    "fig14": ("v_bias",),
    "fig15": ("b_left", "b_right", "b_mid"),
    "fig16": ("v_wind",),
    "fig17": ("v_bias",),
    "fig18": ("v_bias", "i_dc", "p_dc"),
    "fig19": ("i_dc", "i_ref"),
    "fig20": ("b_left", "b_right", "b_mid"),
    "fig21": ("v_wind",),
    "fig22": ("v_bias",),
}


def with_power_channel(series: TimeSeries) -> TimeSeries:
    """Copy of the series with the dc-winding power added as channel p_dc."""
    if "p_dc" in series:
        return series
    for chan in ("v_bias", "i_dc"):
        if chan not in series:
            raise ReportingError(f"p_dc needs channel {chan!r}")
    channels = dict(series.channels)
    channels["p_dc"] = series["v_bias"] * series["i_dc"]
    units = dict(series.units)
    units["p_dc"] = "W"
    return TimeSeries(series.time, channels, units)


def emit_timeseries(series: TimeSeries, path: str, *, channels=None,
                    decimation: int = 1) -> int:
    """Write the series as comma-separated text; returns rows written.

    Decimation keeps every decimation-th sample starting with the first.
    """
    if series.n_samples == 0:
        raise ReportingError("refusing to write an empty series")
    if decimation < 1:
        raise ReportingError(f"decimation must be >= 1, got {decimation}")
    names = list(series.names) if channels is None else list(channels)
    missing = [n for n in names if n not in series]
    if missing:
        raise ReportingError(f"series lacks channels {missing}; "
                             f"have {sorted(series.names)}")
    cols = [series.time[::decimation]]
    header = ["time (s)"]
    for n in names:
        cols.append(series[n][::decimation])
        header.append(f"{n} ({series.units.get(n, '')})")
    data = np.column_stack(cols)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")
    return data.shape[0]


def read_timeseries(path: str) -> TimeSeries:
    """Parse a waveform file written by emit_timeseries."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header:
            raise ReportingError(f"{path}: empty waveform file")
        names, units = [], {}
        for col in header.split(","):
            col = col.strip()
            if not (col.endswith(")") and " (" in col):
                raise ReportingError(
                    f"{path}: header column {col!r} is not 'name (unit)'")
            name, unit = col[:-1].rsplit(" (", 1)
            names.append(name)
            units[name] = unit
        with warnings.catch_warnings():
            # a header-only file is reported as "no data rows" below; the
            # loadtxt warning for it would just duplicate that
            warnings.simplefilter("ignore", UserWarning)
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if names[0] != "time":
        raise ReportingError(f"{path}: first column must be time, got {names[0]!r}")
    if data.size == 0:
        raise ReportingError(f"{path}: no data rows")
    if data.shape[1] != len(names):
        raise ReportingError(
            f"{path}: {len(names)} header columns but {data.shape[1]} data columns")
    channels = {n: data[:, k] for k, n in enumerate(names) if k > 0}
    return TimeSeries(data[:, 0], channels, units)


# ------------------------------------------------------------------ report

@dataclass
class RunReport:
    """Everything needed to audit one run: what ran, what came out, how long."""

    config_text: str
    metrics: dict
    checks: dict
    wall_clock_s: float
    waveform_path: str = ""
    rows_written: int = 0
    extras: dict = field(default_factory=dict)

    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_json(self) -> str:
        return json.dumps(
            {"config": self.config_text, "metrics": self.metrics,
             "checks": self.checks, "wall_clock_s": self.wall_clock_s,
             "waveform_path": self.waveform_path,
             "rows_written": self.rows_written, **self.extras},
            indent=2, allow_nan=True)


def _check(passed: bool, value, limit, description: str) -> dict:
    def clean(x):
        if isinstance(x, float) and not math.isfinite(x):
            return repr(x)
        return x
    return {"passed": bool(passed), "value": clean(value),
            "limit": clean(limit), "description": description}


def run_checks(series: TimeSeries, metrics: Metrics, *, source: str,
               dc_setpoint: float, newton_max_iter: int,
               step_time: float = 0.0) -> dict:
    """Machine-checkable health gates evaluated on every completed run."""
    checks = {}
    t = series.time
    if "power_residual" in series and "v_supply" in series and "i_ac" in series:
        budget = 1e-3 * rms(t, series["v_supply"] * series["i_ac"])
        worst = float(np.max(np.abs(series["power_residual"])))
        checks["power_balance"] = _check(
            worst <= budget, worst, budget,
            "max |power residual| within 0.1% of source RMS power")
    if "newton_iters" in series:
        worst = int(np.max(series["newton_iters"]))
        checks["newton_iterations"] = _check(
            worst < newton_max_iter, worst, newton_max_iter,
            "Newton never hit its iteration limit")
    if "i_ac" in metrics.rms:
        val = metrics.rms["i_ac"]
        checks["ac_current_finite"] = _check(
            math.isfinite(val) and val > 0, val, "finite, positive",
            "steady-window ac RMS is a usable number")
    if source == "converter" and dc_setpoint != 0 and metrics.overshoot_pct is not None:
        checks["overshoot"] = _check(
            metrics.overshoot_pct <= 25.0, metrics.overshoot_pct, 25.0,
            "dc current overshoot within the tuning target")
        settle = (metrics.settling_s - step_time
                  if metrics.settling_s is not None else math.inf)
        checks["settling"] = _check(
            settle <= 0.02, settle, 0.02,
            "dc current settles within 20 ms of the reference step")
    return checks


def write_report(report: RunReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
        fh.write("\n")


class Stopwatch:
    """Wall-clock timer for report timing fields."""

    def __init__(self):
        self.t0 = _time.perf_counter()

    def elapsed(self) -> float:
        return _time.perf_counter() - self.t0


def ensure_dir(path: str) -> str:
    """Create the output directory if needed; returns it for chaining."""
    if path:
        os.makedirs(path, exist_ok=True)
    return path
