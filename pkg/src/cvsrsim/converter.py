"""Bias supply: rectifier, dc link, PWM H-bridge, and current control.

The power stage is built from the switch and diode primitives of the circuit
module, so the solver sees it as ordinary network elements. The controller is
a synchronous component: once per carrier period (at the carrier valley) it
feeds the PI the measured current averaged over the period just ended, and it
drives the four bridge gates through a midpoint-sampled triangle comparator.
Averaged rather than instantaneous feedback matters here: the reactor's
switching ripple has a resistive component (the hysteresis loss reflected
into the winding) that does not average out at the carrier extrema, so a
point sample would regulate the ripple crest instead of the mean.

Relay-style gain probing (double the proportional gain until the loop rings,
then bisect to the stability boundary) recovers the ultimate gain and period
for Ziegler-Nichols PI tuning; the same classifier serves synthetic plants
and the full reactor loop.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .circuit import (Capacitor, Control, Diode, Resistor, Switch,
                      VoltageSource)
from .errors import TuningError, UsageError
from .solver import ProbeSpec


# ------------------------------------------------------------------ control

@dataclass
class PiController:
    """Discrete PI with output clamping and conditional anti-windup."""

    kp: float
    ki: float
    out_min: float = -1.0
    out_max: float = 1.0
    integrator: float = 0.0


def pi_update(pi: PiController, error: float, dt: float) -> float:
    """One sample: returns the clamped output, advancing the integrator.

    Integration is skipped when the output is pinned at a limit and the
    error would push it further, so the integrator never winds beyond what
    the actuator can deliver.
    """
    cand = pi.integrator + pi.ki * error * dt
    u = pi.kp * error + cand
    if u > pi.out_max:
        if error > 0:
            cand = pi.integrator
        pi.integrator = cand
        return pi.out_max
    if u < pi.out_min:
        if error < 0:
            cand = pi.integrator
        pi.integrator = cand
        return pi.out_min
    pi.integrator = cand
    return u


def triangle_carrier(phase: float) -> float:
    """Unit triangle over one period of phase in [0, 1): valley -1 at 0, peak +1 at 1/2."""
    p = phase % 1.0
    return 4.0 * p - 1.0 if p < 0.5 else 3.0 - 4.0 * p


def pwm_gates(duty: float, phase: float):
    """Bipolar comparator: (s1, s2, s3, s4) with diagonal pairs complementary."""
    high = duty > triangle_carrier(phase)
    return (high, not high, not high, high)


# ------------------------------------------------------------- reference

@dataclass(frozen=True)
class ProfileSegment:
    """One piece of a reference profile, active from t_start to the next piece."""

    t_start: float
    kind: str               # const | ramp | sine
    level: float            # const value, ramp start value, sine offset
    level_end: float = 0.0  # ramp end value
    amplitude: float = 0.0  # sine amplitude
    frequency: float = 0.0  # sine frequency


class ReferenceProfile:
    """Piecewise reference waveform for the current loop."""

    def __init__(self, segments: Sequence[ProfileSegment]):
        if not segments:
            raise UsageError("profile needs at least one segment")
        segs = sorted(segments, key=lambda s: s.t_start)
        for s in segs:
            if s.kind not in ("const", "ramp", "sine"):
                raise UsageError(f"unknown profile segment kind {s.kind!r}")
            if s.kind == "sine" and s.frequency <= 0:
                raise UsageError("sine segment needs a positive frequency")
        if segs[-1].kind == "ramp":
            raise UsageError("a ramp segment needs a following segment to end at")
        self.segments = tuple(segs)
        self._starts = [s.t_start for s in segs]

    @classmethod
    def steps(cls, points: Sequence[tuple]) -> "ReferenceProfile":
        """Stairs from (time, level) pairs."""
        return cls([ProfileSegment(t, "const", lvl) for t, lvl in points])

    def value(self, t: float) -> float:
        i = bisect.bisect_right(self._starts, t) - 1
        if i < 0:
            i = 0
        seg = self.segments[i]
        if seg.kind == "const":
            return seg.level
        if seg.kind == "sine":
            return seg.level + seg.amplitude * math.sin(
                2.0 * math.pi * seg.frequency * (t - seg.t_start))
        t_end = self._starts[i + 1]
        frac = (t - seg.t_start) / (t_end - seg.t_start)
        frac = min(max(frac, 0.0), 1.0)
        return seg.level + (seg.level_end - seg.level) * frac

    def __call__(self, t: float) -> float:
        return self.value(t)


# ------------------------------------------------------------ power stage

@dataclass(frozen=True)
class ConverterConfig:
    """Bias supply ratings and control settings."""

    source_rms: float = 120.0
    source_frequency: float = 60.0
    source_resistance: float = 0.1
    dc_link_farad: float = 4.7e-3
    carrier_frequency: float = 50e3
    r_on: float = 1e-3
    g_off: float = 1e-9
    v_fwd: float = 0.7
    # Ziegler-Nichols defaults from P-only probes (zn_tune) of the full
    # rectifier + H-bridge + reactor loop, run in the deep-saturation regime
    # where the incremental core permeability collapses to mu_r_sat and the
    # plant gain per sample is highest: Ku = 0.68, Tu = 80 us (4 controller
    # periods). The low-flux regime rings only at Ku = 5.4, so a loop tuned
    # there limit-cycles rail to rail once the core saturates; tuning at the
    # stiffest operating point keeps every setpoint stable at the cost of a
    # slower (still millisecond-scale) linear-regime response. kp is
    # dimensionless duty per ampere, ki its per-second companion.
    kp: float = 0.306
    ki: float = 4590.0

    def __post_init__(self):
        for name in ("source_rms", "source_frequency", "source_resistance",
                     "dc_link_farad", "carrier_frequency", "r_on", "v_fwd"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


SWITCH_NAMES = ("conv_s1", "conv_s2", "conv_s3", "conv_s4")


def build_converter(network, cfg: ConverterConfig, out_a: str, out_b: str,
                    prefix: str = "conv") -> dict:
    """Add rectifier, dc link, and H-bridge between out_a and out_b.

    Node and element names are prefixed to stay clear of the load circuit.
    Returns the key node names for probing.
    """
    gnd = network.elec_ground
    n_src, n_ac, n_p, n_n = (f"{prefix}_src", f"{prefix}_ac",
                             f"{prefix}_p", f"{prefix}_n")
    network.add(
        VoltageSource.ac(f"{prefix}_vs", n_src, gnd,
                         rms=cfg.source_rms, frequency=cfg.source_frequency),
        Resistor(f"{prefix}_rs", n_src, n_ac, ohms=cfg.source_resistance),
        # full bridge: conduction pairs (d1, d4) and (d3, d2)
        Diode(f"{prefix}_d1", n_ac, n_p, r_on=cfg.r_on, g_off=cfg.g_off, v_fwd=cfg.v_fwd),
        Diode(f"{prefix}_d2", n_n, n_ac, r_on=cfg.r_on, g_off=cfg.g_off, v_fwd=cfg.v_fwd),
        Diode(f"{prefix}_d3", gnd, n_p, r_on=cfg.r_on, g_off=cfg.g_off, v_fwd=cfg.v_fwd),
        Diode(f"{prefix}_d4", n_n, gnd, r_on=cfg.r_on, g_off=cfg.g_off, v_fwd=cfg.v_fwd),
        Capacitor(f"{prefix}_link", n_p, n_n, farad=cfg.dc_link_farad),
        Switch(f"{prefix}_s1", n_p, out_a, r_on=cfg.r_on, g_off=cfg.g_off),
        Switch(f"{prefix}_s2", out_a, n_n, r_on=cfg.r_on, g_off=cfg.g_off),
        Switch(f"{prefix}_s3", n_p, out_b, r_on=cfg.r_on, g_off=cfg.g_off),
        Switch(f"{prefix}_s4", out_b, n_n, r_on=cfg.r_on, g_off=cfg.g_off),
    )
    return {"source": n_src, "rectifier_in": n_ac, "link_pos": n_p, "link_neg": n_n}


class PwmCurrentControl(Control):
    """Carrier-synchronous PI current regulator driving the H-bridge gates.

    All run-varying values (integrator, duty, sample counter) live in the
    state's ctrl dict, so stepping stays a pure function of SystemState.
    """

    def __init__(self, sense: ProbeSpec, profile, cfg: ConverterConfig,
                 prefix: str = "conv"):
        self.sense = sense
        self.profile = profile
        self.cfg = cfg
        self.period = 1.0 / cfg.carrier_frequency
        self.switch_names = tuple(f"{prefix}_s{k}" for k in (1, 2, 3, 4))
        self._pi = PiController(kp=cfg.kp, ki=cfg.ki)
        self._sim = None
        self._read = None
        self._sw = None

    def bind(self, simulator):
        self._sim = simulator
        self._read = simulator.bind_probe(self.sense)
        self._sw = [simulator.switch_index(n) for n in self.switch_names]

    def before_step(self, t, dt, state):
        ctrl = state.ctrl
        count = int(ctrl.get("pwm_count", 0))
        v = self._sim.gathered_potentials(state)
        now = self._read(state, v)
        if t >= count * self.period - 0.5 * dt:
            n = int(ctrl.get("sense_n", 0))
            # mean over the period just ended; the raw reading only seeds
            # the very first update, before any window has accumulated
            measured = ctrl.get("sense_acc", 0.0) / n if n else now
            ref = self.profile(t)
            err = ref - measured
            self._pi.integrator = ctrl.get("pi_integrator", 0.0)
            duty = pi_update(self._pi, err, self.period)
            ctrl["pi_integrator"] = self._pi.integrator
            ctrl["duty"] = duty
            ctrl["i_ref"] = ref
            ctrl["i_err"] = err
            ctrl["pwm_count"] = count + 1
            ctrl["sense_acc"] = 0.0
            ctrl["sense_n"] = 0
        ctrl["sense_acc"] = ctrl.get("sense_acc", 0.0) + now
        ctrl["sense_n"] = int(ctrl.get("sense_n", 0)) + 1
        duty = ctrl.get("duty", 0.0)
        phase = (t + 0.5 * dt) / self.period
        gates = pwm_gates(duty, phase)
        for idx, g in zip(self._sw, gates):
            state.gates[idx] = g


# ---------------------------------------------------------------- tuning

@dataclass(frozen=True)
class OscillationRecord:
    """Closed-loop error trace from one gain probe."""

    time: np.ndarray
    error: np.ndarray
    sat_fraction: float


@dataclass(frozen=True)
class TuningResult:
    kp: float
    ki: float
    ultimate_gain: float
    ultimate_period: float
    evaluations: int


def _extrema(t, e):
    """Interior strict extrema; times refined by parabolic interpolation."""
    d = np.sign(np.diff(e))
    idx = np.nonzero(d[:-1] * d[1:] < 0)[0] + 1
    if idx.size == 0:
        return t[idx], e[idx]
    dt = t[1] - t[0]
    denom = e[idx - 1] - 2.0 * e[idx] + e[idx + 1]
    shift = np.where(np.abs(denom) > 0,
                     0.5 * (e[idx - 1] - e[idx + 1]) / np.where(denom == 0, 1.0, denom),
                     0.0)
    return t[idx] + shift * dt, e[idx]


def classify_oscillation(rec: OscillationRecord, tail: float = 0.5,
                         tol: float = 0.05, sat_limit: float = 0.3):
    """Label a gain probe as decaying, sustained, or growing.

    Compares peak amplitudes one full period apart over the trailing part
    of the record, measured about the tail mean: a proportional-only loop
    rings around its steady-state offset, and without detrending a decayed
    ring riding that offset would read as sustained. A loop that spends
    most of its time against the output limits is treated as beyond the
    stability boundary regardless of the bounded amplitude the clamping
    enforces, and so is a trace that left floating-point range.
    Returns (label, period) with period = nan when no ring is visible.
    """
    t, e = rec.time, rec.error
    if not np.all(np.isfinite(e)):
        return "growing", math.nan
    n0 = int(t.size * (1.0 - tail))
    te, ee = _extrema(t[n0:], e[n0:])
    if rec.sat_fraction > sat_limit:
        period = 2.0 * float(np.mean(np.diff(te))) if te.size >= 3 else math.nan
        return "growing", period
    if te.size < 12:
        return "decaying", math.nan
    amps = np.abs(ee[-12:] - float(np.mean(e[n0:])))
    times = te[-12:]
    scale = float(np.max(np.abs(e)))
    if np.max(amps) < 1e-9 * max(scale, 1e-30):
        return "decaying", math.nan
    ratios = amps[2:] / np.maximum(amps[:-2], 1e-300)
    period = 2.0 * float(np.mean(np.diff(times)))
    mean_r = float(np.exp(np.mean(np.log(np.maximum(ratios, 1e-300)))))
    if np.all((ratios > 1.0 - tol) & (ratios < 1.0 + tol)):
        return "sustained", period
    return ("growing", period) if mean_r > 1.0 else ("decaying", period)


def zn_tune(response: Callable[[float], OscillationRecord], *,
            kp_start: float = 1.0, max_doublings: int = 16,
            bracket_rtol: float = 0.01, max_bisections: int = 40) -> TuningResult:
    """Ziegler-Nichols PI gains from a closed-loop gain search.

    `response(kp)` must run a proportional-only loop at the control sample
    rate and return the error trace. The gain is doubled until the loop
    rings with growing amplitude, then the boundary is bisected; the PI
    rule kp = 0.45 Ku, ki = 0.54 Ku / Tu is applied to the boundary gain
    and ring period.
    """
    evals = 0

    def probe(kp):
        nonlocal evals
        evals += 1
        rec = response(kp)
        return classify_oscillation(rec)

    kp = kp_start
    label, period = probe(kp)
    if label == "growing":
        raise TuningError(
            f"loop already unstable at the starting gain {kp_start:g}",
            last_stable_kp=None)
    lo, lo_period = kp, period
    hi = None
    for _ in range(max_doublings):
        kp *= 2.0
        label, period = probe(kp)
        if label == "growing":
            hi, hi_period = kp, period
            break
        lo, lo_period = kp, period
    if hi is None:
        raise TuningError(
            f"no ultimate gain below {kp:g}; the loop never sustained an "
            "oscillation, so relay tuning does not apply to this plant",
            last_stable_kp=lo)

    ku = None
    ku_period = hi_period
    for _ in range(max_bisections):
        if (hi - lo) <= bracket_rtol * 0.5 * (hi + lo):
            break
        mid = 0.5 * (lo + hi)
        label, period = probe(mid)
        if label == "sustained":
            ku, ku_period = mid, period
            break
        if label == "growing":
            hi, hi_period = mid, period
        else:
            lo, lo_period = mid, period
    if ku is None:
        # boundary pinched tighter than the tolerance: take the midpoint,
        # with the period read from the marginally growing side
        ku = 0.5 * (lo + hi)
        ku_period = hi_period
    if not (ku_period and math.isfinite(ku_period) and ku_period > 0):
        raise TuningError("could not measure the oscillation period",
                          last_stable_kp=lo)
    return TuningResult(kp=0.45 * ku, ki=0.54 * ku / ku_period,
                        ultimate_gain=ku, ultimate_period=ku_period,
                        evaluations=evals)


# ------------------------------------------------------- synthetic plants

class FirstOrderLagPlant:
    """Exact zero-order-hold discretization of gain / (1 + s/pole)."""

    def __init__(self, gain: float, pole: float, dt: float):
        if pole <= 0 or dt <= 0:
            raise ValueError("pole and dt must be positive")
        self.gain = gain
        self.dt = dt
        self._a = math.exp(-pole * dt)
        self._y = 0.0

    def reset(self):
        self._y = 0.0

    def step(self, u: float) -> float:
        self._y = self._a * self._y + (1.0 - self._a) * u
        return self.gain * self._y


class CascadedLagPlant:
    """Chain of exact zero-order-hold first-order stages with unit dc gain each.

    For two stages the sampled proportional loop has a closed-form ultimate
    gain: the characteristic polynomial z^2 - (a1+a2) z + a1 a2 + kp K (1-a1)(1-a2)
    crosses the unit circle when the constant term reaches 1, giving
    Ku = (1 - a1 a2) / (K (1-a1)(1-a2)) at angle arccos((a1+a2)/2).
    """

    def __init__(self, gain: float, poles, dt: float):
        if not poles or any(p <= 0 for p in poles):
            raise ValueError("need at least one positive pole")
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.gain = gain
        self.dt = dt
        self._a = [math.exp(-p * dt) for p in poles]
        self._s = [0.0] * len(poles)

    def reset(self):
        self._s = [0.0] * len(self._s)

    def step(self, u: float) -> float:
        # stages update simultaneously: each consumes the previous stage's
        # output from the last sample, so an n-stage chain carries n samples
        # of delay and the closed form above holds
        x = u
        for k, a in enumerate(self._a):
            x, self._s[k] = self._s[k], a * self._s[k] + (1.0 - a) * x
        return self.gain * self._s[-1]


def closed_loop_response(plant, kp: float, *, ref: float = 1.0,
                         n_samples: int = 6000,
                         u_limits=(-math.inf, math.inf)) -> OscillationRecord:
    """Proportional-only sampled loop around a discrete plant."""
    plant.reset()
    lo, hi = u_limits
    y = 0.0
    t = np.arange(n_samples) * plant.dt
    err = np.empty(n_samples)
    saturated = 0
    for k in range(n_samples):
        e = ref - y
        err[k] = e
        u = kp * e
        if u > hi:
            u = hi
            saturated += 1
        elif u < lo:
            u = lo
            saturated += 1
        y = plant.step(u)
    return OscillationRecord(time=t, error=err,
                             sat_fraction=saturated / n_samples)
