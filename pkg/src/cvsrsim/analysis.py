"""Waveform post-processing: steady-window metrics and control measures.

All integral quantities use trapezoidal quadrature on the recorded grid.
Window extraction snaps cycle boundaries to sample instants; with the step
sizes used here that puts cycle-truncation errors orders of magnitude below
the acceptance tolerances.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ReportingError
from .solver import TimeSeries


def mean(t, y) -> float:
    """Time-weighted average over the record."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    span = t[-1] - t[0]
    if span <= 0:
        raise ReportingError("mean needs a window of nonzero duration")
    return float(np.trapezoid(y, t) / span)


def rms(t, y) -> float:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    return math.sqrt(mean(t, y * y))


def peak_to_peak(y) -> float:
    y = np.asarray(y, dtype=float)
    return float(y.max() - y.min())


def fundamental_phasor(t, y, frequency: float) -> complex:
    """Complex amplitude X with y(t) ~ Re[X exp(j*2*pi*f*t)].

    Correlation over the full record; pass an integer number of cycles
    (see window_cycles) to keep spectral leakage negligible.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    span = t[-1] - t[0]
    if span <= 0 or frequency <= 0:
        raise ReportingError("phasor extraction needs a window and positive frequency")
    w = 2.0 * math.pi * frequency
    ref = np.exp(-1j * w * t)
    return complex(2.0 / span * np.trapezoid(y * ref, t))


def harmonic_magnitude(t, y, frequency: float, order: int) -> float:
    return abs(fundamental_phasor(t, y, order * frequency))


def thd(t, y, frequency: float, n_harmonics: int = 25) -> float:
    """Total harmonic distortion relative to the fundamental."""
    h1 = harmonic_magnitude(t, y, frequency, 1)
    if h1 == 0.0:
        raise ReportingError("THD undefined: zero fundamental")
    acc = 0.0
    for k in range(2, n_harmonics + 1):
        acc += harmonic_magnitude(t, y, frequency, k) ** 2
    return math.sqrt(acc) / h1


def window_cycles(series: TimeSeries, frequency: float, n_cycles: int,
                  end_time: float | None = None) -> TimeSeries:
    """Last n_cycles whole cycles ending at end_time (default: series end)."""
    if n_cycles < 1 or frequency <= 0:
        raise ReportingError("need n_cycles >= 1 and a positive frequency")
    t = series.time
    t_end = t[-1] if end_time is None else float(end_time)
    t_start = t_end - n_cycles / frequency
    dt = series.dt
    if t_start < t[0] - 0.5 * dt:
        raise ReportingError(
            f"series spans {t[-1] - t[0]:.6g} s; {n_cycles} cycles at "
            f"{frequency:g} Hz need {n_cycles / frequency:.6g} s")
    return series.window(t_start - 0.25 * dt, t_end + 0.25 * dt)


def saturation_fraction(y, threshold: float) -> float:
    """Fraction of samples with |y| above the threshold."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ReportingError("saturation_fraction of an empty record")
    return float(np.mean(np.abs(y) > threshold))


def overshoot(y, target: float) -> float:
    """Fractional overshoot of a step response toward target (0 if none)."""
    if target == 0.0:
        raise ReportingError("overshoot undefined for a zero target")
    y = np.asarray(y, dtype=float)
    if target > 0:
        over = float(y.max()) - target
    else:
        over = target - float(y.min())
    return max(0.0, over / abs(target))


def settling_time(t, y, target: float, band: float) -> float:
    """Elapsed time until |y - target| stays within band (absolute units).

    Returns inf when the record never settles, so threshold comparisons
    still read naturally.
    """
    if band <= 0:
        raise ReportingError("settling band must be positive")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    outside = np.abs(y - target) > band
    if not outside.any():
        return 0.0
    last_out = int(np.nonzero(outside)[0][-1])
    if last_out == t.size - 1:
        return math.inf
    return float(t[last_out + 1] - t[0])


def smoothed(t, y, window_seconds: float):
    """Centered boxcar average; returns the interior (t, y) where it is valid."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 2:
        raise ReportingError("smoothing needs at least two samples")
    dt = float(t[1] - t[0])
    n = max(1, int(round(window_seconds / dt)))
    if n >= t.size:
        raise ReportingError("smoothing window longer than the record")
    kernel = np.full(n, 1.0 / n)
    ys = np.convolve(y, kernel, mode="valid")
    lead = (n - 1) // 2
    return t[lead:lead + ys.size], ys


FLUX_CHANNELS = {"left": "b_left", "right": "b_right", "mid": "b_mid"}
DEFAULT_THD_CHANNELS = ("i_ac", "v_wind")


@dataclass(frozen=True)
class Metrics:
    """Steady-window summary of one run."""

    window_start: float
    window_end: float
    cycles: int
    rms: dict
    thd: dict
    dft: dict                 # channel -> {frequency: magnitude}
    b_min: dict               # leg -> min over window
    b_max: dict
    sat_fraction: dict        # leg -> fraction of window with |B| > b_sat
    mean_value: dict          # channel -> time-weighted mean
    p_dc_mean: float | None = None
    overshoot_pct: float | None = None
    settling_s: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def analyze(series: TimeSeries, *, frequency: float, b_sat: float,
            n_cycles: int = 5, startup: float = 0.05,
            dc_target: float | None = None,
            ripple_smooth_s: float | None = None,
            thd_channels=DEFAULT_THD_CHANNELS,
            dft_channels: dict | None = None) -> Metrics:
    """Steady-window metrics over the trailing whole cycles of a run.

    The first `startup` seconds are discarded; at least 3 whole cycles must
    remain or a ReportingError is raised, and at most `n_cycles` are used.
    Flux, THD, DFT, and dc-winding metrics are computed for whichever of the
    canonical channels are present. Overshoot and settling time are measured
    on the i_dc channel against dc_target over the whole record (the
    transient is the point), using a 2% settling band. For switched-source
    runs pass ripple_smooth_s = one period of the slowest steady ripple on
    i_dc (the double-frequency bias ripple when the core saturates, never
    shorter than a carrier period): the settling band is narrower than the
    ripple, so the step metrics must follow the ripple-averaged current,
    the dc component the loop actually regulates.
    """
    if frequency <= 0 or b_sat <= 0:
        raise ReportingError("frequency and b_sat must be positive")
    t_all = series.time
    if t_all.size < 2:
        raise ReportingError("series too short to analyze")
    t_end = float(t_all[-1])
    avail = t_end - max(float(t_all[0]), startup)
    n_avail = int(math.floor(avail * frequency + 1e-9))
    if n_avail < 3:
        raise ReportingError(
            f"only {max(avail, 0.0) * frequency:.2f} cycles remain after the "
            f"{startup:g} s startup window; need at least 3")
    use = min(n_cycles, n_avail)
    w = window_cycles(series, frequency, use)
    t = w.time

    rms_d = {name: rms(t, w[name]) for name in w.names}
    mean_d = {name: mean(t, w[name]) for name in w.names}
    thd_d = {name: thd(t, w[name], frequency)
             for name in thd_channels if name in w}
    dft_d = {}
    for name, freqs in (dft_channels or {}).items():
        if name in w:
            dft_d[name] = {float(f): harmonic_magnitude(t, w[name], f, 1)
                           for f in freqs}
    b_min, b_max, sat = {}, {}, {}
    for leg, chan in FLUX_CHANNELS.items():
        if chan in w:
            b_min[leg] = float(w[chan].min())
            b_max[leg] = float(w[chan].max())
            sat[leg] = saturation_fraction(w[chan], b_sat)

    p_dc = None
    if "v_bias" in w and "i_dc" in w:
        p_dc = mean(t, w["v_bias"] * w["i_dc"])

    over = settle = None
    if dc_target is not None and "i_dc" in series:
        t_i, y_i = series.time, series["i_dc"]
        if ripple_smooth_s:
            t_i, y_i = smoothed(t_i, y_i, ripple_smooth_s)
        over = 100.0 * overshoot(y_i, dc_target)
        settle = settling_time(t_i, y_i, dc_target, band=0.02 * abs(dc_target))

    return Metrics(window_start=float(t[0]), window_end=float(t[-1]),
                   cycles=use, rms=rms_d, thd=thd_d, dft=dft_d,
                   b_min=b_min, b_max=b_max, sat_fraction=sat,
                   mean_value=mean_d, p_dc_mean=p_dc,
                   overshoot_pct=over, settling_s=settle)
