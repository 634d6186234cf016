"""Three-legged saturable reactor: assembly, operating points, experiments.

Sign conventions, fixed here and relied on by probes and tests:
  * outer-leg fluxes are measured top-to-bottom, the center leg bottom-to-top,
    so flux conservation reads phi_mid = phi_left + phi_right;
  * the bias pair is wound opposing (polarity +1 left, -1 right), so a
    positive bias current circulates dc flux around the outer frame, adding
    in the left leg and subtracting in the right;
  * v_bias = v(bias_pos) - v(bias_neg) = n_dc * (dphi_left - dphi_right),
    and i_dc flows from bias_pos into the winding chain, so
    p_dc = v_bias * i_dc is the power delivered to the bias winding.

The air gap sits in the center branch; its fringing multiplier is the one
calibrated quantity (see calibrate_fringing), frozen as the default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .analysis import FLUX_CHANNELS, rms, window_cycles
from .circuit import CurrentSource, HybridNetwork, Inductor, Resistor, VoltageSource
from .converter import (ConverterConfig, OscillationRecord, PwmCurrentControl,
                        ReferenceProfile, TuningResult, build_converter, zn_tune)
from .errors import CalibrationError, ConfigError, ReportingError
from .magnetics import (BHMaterial, CoreGeometry, HysteresisElement,
                        PermeanceElement, WindingGyrator, equivalent_inductance)
from .solver import ProbeSpec, SolverConfig, TimeSeries, initial_state, run

# gap fringing multiplier that lands the 0 A operating point on its rated
# ac current (bisection result of calibrate_fringing, frozen)
DEFAULT_FRINGING = 5.4077

# step sizes: both divide the 60 Hz period exactly; the converter grid also
# divides the 50 kHz carrier period (60 steps per carrier cycle)
IDEAL_DT = 1.0 / 60_000.0
CONVERTER_DT = 1.0 / 3_000_000.0

# converter reference holds at zero this long so the dc link pre-charges
# before the current loop starts tracking
REFERENCE_DELAY = 0.01

SOURCE_KINDS = ("ideal", "converter")


@dataclass(frozen=True)
class CvsrParams:
    """Complete rating sheet for the reactor, its supply, and its load."""

    l_mid: float = 0.4572            # m, center-leg path length
    l_out: float = 0.8636            # m, outer-leg path length
    h_gap: float = 0.00178           # m, air gap in the center branch
    area: float = 0.0103             # m^2, core cross-section
    n_ac: int = 20                   # ac winding turns (center leg)
    n_dc: int = 30                   # bias turns per outer-leg coil
    supply_rms: float = 2400.0       # V
    frequency: float = 60.0          # Hz
    load_ohms: float = 100.0
    load_henry: float = 0.13
    mu_r_linear: float = 5000.0
    b_sat: float = 1.34              # T
    mu_r_sat: float = 40.0
    knee_sharpness: float = 22.0
    fringing_factor: float = DEFAULT_FRINGING
    r_mag: float = 2.0               # magnetic-domain loss resistance per leg
    mid_leg_saturates: bool = False  # center branch stays linear by default
    linear_material: bool = False    # all legs constant-mu (oracle comparisons)
    dc_polarity: int = 1             # winding sense of the bias pair

    def __post_init__(self):
        for name in ("l_mid", "l_out", "h_gap", "area", "supply_rms",
                     "frequency", "load_ohms", "load_henry", "mu_r_linear",
                     "b_sat", "mu_r_sat", "knee_sharpness"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        for name in ("n_ac", "n_dc"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 1):
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.fringing_factor < 1.0:
            raise ValueError("fringing_factor must be >= 1")
        if self.r_mag < 0.0:
            raise ValueError("r_mag must be nonnegative")
        if self.dc_polarity not in (1, -1):
            raise ValueError("dc_polarity must be +1 or -1")

    def geometry(self) -> CoreGeometry:
        return CoreGeometry(l_mid=self.l_mid, l_out=self.l_out,
                            h_gap=self.h_gap, area=self.area)

    def material(self) -> BHMaterial:
        return BHMaterial(mu_r_linear=self.mu_r_linear, b_sat=self.b_sat,
                          mu_r_sat=self.mu_r_sat,
                          knee_sharpness=self.knee_sharpness)


# canonical node and element names
AC_NODES = ("e_src", "e_rl", "e_w")
BIAS_POS = "bias_pos"
BIAS_NEG = "bias_neg"
LEG_ELEMENTS = {"left": "leg_left", "right": "leg_right", "mid": "leg_mid"}


def _magnetic_side(net: HybridNetwork, p: CvsrParams):
    geom = p.geometry()
    mat = p.material()

    def leg(name, top_node, end_node, length, saturates):
        """One leg chain: winding port node -> hysteresis -> permeance -> end."""
        mid_node = f"m_{name}_c"
        if p.r_mag > 0:
            net.add(HysteresisElement(f"hyst_{name}", top_node, mid_node,
                                      r_mag=p.r_mag))
        else:
            mid_node = top_node
        if saturates and not p.linear_material:
            el = PermeanceElement.core(LEG_ELEMENTS[name], mid_node, end_node,
                                       length=length, area=p.area, material=mat)
        else:
            el = PermeanceElement.linear(LEG_ELEMENTS[name], mid_node, end_node,
                                         mu_r=p.mu_r_linear, area=p.area,
                                         length=length)
        net.add(el)

    # outer legs run m_top -> winding port -> leg -> bottom yoke (ground);
    # the center branch runs ground -> winding port -> leg -> gap -> m_top,
    # so leg fluxes satisfy phi_mid = phi_left + phi_right at m_top
    leg("left", "m_left_w", net.mag_ground, p.l_out, True)
    leg("right", "m_right_w", net.mag_ground, p.l_out, True)
    leg("mid", "m_mid_w", "m_mid_e", p.l_mid, p.mid_leg_saturates)
    net.add(PermeanceElement.air_gap("gap", "m_mid_e", "m_top", geom,
                                     fringing_factor=p.fringing_factor))


def _soft_start(level: float, ramp: float) -> Callable[[float], float]:
    """Constant level reached through a C1 smoothstep over the first `ramp` s.

    A hard 0 -> level jump at t=0 forces a one-step flux slew whose
    trapezoidal closure error dwarfs the steady-state energy residual; the
    ramp keeps start-up inside the same tolerance as the rest of the run.
    """
    def wave(t: float) -> float:
        if t >= ramp:
            return level
        if t <= 0.0:
            return 0.0
        x = t / ramp
        return level * x * x * (3.0 - 2.0 * x)
    return wave


def build_cvsr_network(params: CvsrParams, source: str = "ideal", *,
                       bias: Union[float, Callable[[float], float]] = 0.0,
                       bias_ramp: float = 0.0,
                       converter: Optional[ConverterConfig] = None,
                       reference=None) -> HybridNetwork:
    """Assemble the reactor with its ac circuit and the chosen bias source.

    `bias` feeds the ideal current source (constant or waveform), soft-started
    over `bias_ramp` seconds when constant; converter runs take a
    ConverterConfig plus a reference (profile or constant amps).
    """
    if source not in SOURCE_KINDS:
        raise ConfigError(f"source must be one of {SOURCE_KINDS}, got {source!r}")
    p = params
    net = HybridNetwork()
    _magnetic_side(net, p)

    # ac side: supply -> R -> L -> winding on the center leg
    net.add(
        VoltageSource.ac("supply", "e_src", net.elec_ground,
                         rms=p.supply_rms, frequency=p.frequency),
        Resistor("load_r", "e_src", "e_rl", ohms=p.load_ohms),
        Inductor("load_l", "e_rl", "e_w", henry=p.load_henry),
        WindingGyrator("ac_wind", "e_w", net.elec_ground,
                       net.mag_ground, "m_mid_w", turns=p.n_ac, polarity=1),
    )

    # bias pair in series, wound opposing so dc flux circulates the frame
    bias_neg = net.elec_ground if source == "ideal" else BIAS_NEG
    net.add(
        WindingGyrator("dc_wind_left", BIAS_POS, "bias_mid",
                       "m_top", "m_left_w", turns=p.n_dc,
                       polarity=p.dc_polarity),
        WindingGyrator("dc_wind_right", "bias_mid", bias_neg,
                       "m_top", "m_right_w", turns=p.n_dc,
                       polarity=-p.dc_polarity),
    )

    if source == "ideal":
        wave = bias
        if bias_ramp > 0.0 and not callable(bias):
            wave = _soft_start(float(bias), bias_ramp)
        net.add(CurrentSource("bias_src", BIAS_POS, net.elec_ground,
                              waveform=wave))
    else:
        cfg = converter or ConverterConfig()
        if reference is None:
            reference = ReferenceProfile.steps([(0.0, float(bias))])
        elif isinstance(reference, (int, float)):
            reference = ReferenceProfile.steps([(0.0, float(reference))])
        build_converter(net, cfg, BIAS_POS, BIAS_NEG)
        sense = ProbeSpec("i_dc", "A", "element_i", target="dc_wind_left")
        net.add_control(PwmCurrentControl(sense, reference, cfg))
    return net


@dataclass(frozen=True)
class Scenario:
    """One runnable operating point."""

    params: CvsrParams = field(default_factory=CvsrParams)
    source: str = "ideal"
    dc_setpoint: float = 0.0
    reference: Optional[ReferenceProfile] = None
    converter: Optional[ConverterConfig] = None
    duration: float = 0.2
    dt: float = IDEAL_DT
    method: str = "trapezoidal"
    ramp_cycles: float = 2.0         # ideal-source soft-start length
    newton_tol: float = 1e-8
    newton_max_iter: int = 40

    def __post_init__(self):
        if self.source not in SOURCE_KINDS:
            raise ConfigError(f"source must be one of {SOURCE_KINDS}")
        cycles = self.duration * self.params.frequency
        if cycles < 6 - 1e-9:
            raise ConfigError(
                f"duration {self.duration:g} s covers only {cycles:.2f} cycles; "
                "steady-state metrics need at least 6")

    @classmethod
    def ideal(cls, dc_setpoint: float, *, params: CvsrParams = None,
              duration: float = 0.2, dt: float = IDEAL_DT, **kw) -> "Scenario":
        return cls(params=params or CvsrParams(), source="ideal",
                   dc_setpoint=dc_setpoint, duration=duration, dt=dt, **kw)

    @classmethod
    def with_converter(cls, dc_setpoint: float, *, params: CvsrParams = None,
                       converter: ConverterConfig = None,
                       reference: ReferenceProfile = None,
                       duration: float = 0.1, dt: float = CONVERTER_DT,
                       **kw) -> "Scenario":
        if reference is None:
            level = float(dc_setpoint)
            # hold zero until the dc link has pre-charged through the bridge
            points = [(0.0, 0.0)]
            if level != 0.0:
                points.append((REFERENCE_DELAY, level))
            reference = ReferenceProfile.steps(points)
        return cls(params=params or CvsrParams(), source="converter",
                   dc_setpoint=dc_setpoint, reference=reference,
                   converter=converter or ConverterConfig(),
                   duration=duration, dt=dt, **kw)


def standard_probes(scn: Scenario) -> list:
    p = scn.params
    per_area = 1.0 / p.area
    bias_neg = "gnd" if scn.source == "ideal" else BIAS_NEG
    probes = [
        ProbeSpec("i_ac", "A", "element_i", target="load_r"),
        ProbeSpec("v_supply", "V", "branch_v", target="supply"),
        ProbeSpec("v_wind", "V", "branch_v", target="ac_wind"),
        ProbeSpec("v_bias", "V", "node_dv", target=BIAS_POS, target_b=bias_neg),
        ProbeSpec("i_dc", "A", "element_i", target="dc_wind_left"),
        ProbeSpec("b_left", "T", "phi", target="leg_left", scale=per_area),
        ProbeSpec("b_right", "T", "phi", target="leg_right", scale=per_area),
        ProbeSpec("b_mid", "T", "phi", target="leg_mid", scale=per_area),
        ProbeSpec("dphi_left", "Wb/s", "dphi", target="leg_left"),
        ProbeSpec("dphi_right", "Wb/s", "dphi", target="leg_right"),
        ProbeSpec("dphi_mid", "Wb/s", "dphi", target="leg_mid"),
        ProbeSpec("power_residual", "W", "diag", target="power_residual"),
        ProbeSpec("newton_iters", "", "diag", target="newton_iters"),
    ]
    if scn.source == "converter":
        probes += [
            ProbeSpec("duty", "", "ctrl", target="duty"),
            ProbeSpec("i_ref", "A", "ctrl", target="i_ref"),
            ProbeSpec("v_link", "V", "node_dv", target="conv_p", target_b="conv_n"),
        ]
    return probes


def run_scenario(scn: Scenario) -> TimeSeries:
    ramp = scn.ramp_cycles / scn.params.frequency if scn.source == "ideal" else 0.0
    net = build_cvsr_network(scn.params, scn.source, bias=scn.dc_setpoint,
                             bias_ramp=ramp, converter=scn.converter,
                             reference=scn.reference)
    cfg = SolverConfig(dt=scn.dt, method=scn.method,
                       newton_tol=scn.newton_tol,
                       newton_max_iter=scn.newton_max_iter)
    state = initial_state(net, cfg)
    return run(net, state, cfg, scn.duration, standard_probes(scn))


# ----------------------------------------------------------------- probes

def probe_flux_density(series: TimeSeries, leg: str) -> np.ndarray:
    """B(t) for one leg, from the recorded flux-density channel."""
    try:
        chan = FLUX_CHANNELS[leg]
    except KeyError:
        raise ReportingError(f"leg must be one of {sorted(FLUX_CHANNELS)}, got {leg!r}")
    if chan not in series:
        raise ReportingError(f"series lacks channel {chan!r}")
    return series[chan]


def probe_v_bias(series: TimeSeries, n_dc: int = 30,
                 dc_polarity: int = 1) -> np.ndarray:
    """Bias-pair voltage recomputed from the recorded leg flux rates.

    With this assembly's polarity convention the pair voltage is
    n_dc * (dphi_left - dphi_right); it must agree with the electrically
    probed v_bias channel to solver tolerance.
    """
    for chan in ("dphi_left", "dphi_right"):
        if chan not in series:
            raise ReportingError(f"series lacks channel {chan!r}")
    return dc_polarity * n_dc * (series["dphi_left"] - series["dphi_right"])


def probe_power_dc(series: TimeSeries, frequency: float = 60.0,
                   n_cycles: int = 3):
    """Instantaneous power into the bias winding and its cycle-averaged mean."""
    for chan in ("v_bias", "i_dc"):
        if chan not in series:
            raise ReportingError(f"series lacks channel {chan!r}")
    p = series["v_bias"] * series["i_dc"]
    w = window_cycles(series, frequency, n_cycles)
    pw = w["v_bias"] * w["i_dc"]
    mean_p = float(np.trapezoid(pw, w.time) / (w.time[-1] - w.time[0]))
    return p, mean_p


def linearized_inductance(params: CvsrParams, fluxes=None) -> float:
    """Inductance seen by the ac winding via quasi-static network reduction."""
    net = build_cvsr_network(params, "ideal", bias=0.0)
    winding = next(g for g in net.gyrators if g.name == "ac_wind")
    return equivalent_inductance(net, winding, fluxes)


# ------------------------------------------------------------ experiments

@dataclass(frozen=True)
class CalibrationResult:
    fringing_factor: float
    achieved_rms: float
    target_rms: float
    evaluations: int


def _steady_ac_rms(params: CvsrParams, bias: float, duration: float,
                   dt: float, n_cycles: int = 3) -> float:
    scn = Scenario.ideal(bias, params=params, duration=duration, dt=dt)
    series = run_scenario(scn)
    w = window_cycles(series, params.frequency, n_cycles)
    return rms(w.time, w["i_ac"])


def calibrate_fringing(params: CvsrParams, target_rms: float = 21.2, *,
                       rtol: float = 0.005, lo: float = 1.0, hi: float = 10.0,
                       duration: float = 0.1, dt: float = IDEAL_DT,
                       max_iter: int = 40) -> CalibrationResult:
    """Bisect the gap fringing multiplier until the 0 A ac RMS hits target.

    The current is strictly decreasing in the factor (more fringing means a
    larger gap permeance, a larger equivalent inductance, and a smaller
    current), so a sign change across [lo, hi] brackets the answer.
    """
    def measure(f):
        return _steady_ac_rms(replace(params, fringing_factor=f),
                              0.0, duration, dt)

    evals = 0
    m_lo = measure(lo); evals += 1
    m_hi = measure(hi); evals += 1
    if not (m_hi < target_rms < m_lo):
        raise CalibrationError(
            f"target {target_rms:g} A not bracketed by factors "
            f"[{lo:g}, {hi:g}]", bracket=(lo, hi), values=(m_lo, m_hi))
    tol = rtol * target_rms
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        m = measure(mid); evals += 1
        if abs(m - target_rms) <= tol:
            return CalibrationResult(fringing_factor=mid, achieved_rms=m,
                                     target_rms=target_rms, evaluations=evals)
        if m > target_rms:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(
        f"no factor within {rtol:.1%} of {target_rms:g} A after "
        f"{max_iter} bisections", bracket=(lo, hi), values=(m_lo, m_hi))


def bias_loop_response(params: CvsrParams, cfg: ConverterConfig, kp: float, *,
                       setpoint: float = 2.0, settle: float = REFERENCE_DELAY,
                       window: float = 0.02,
                       dt: float = CONVERTER_DT) -> OscillationRecord:
    """Proportional-only closed-loop error trace of the physical bias loop.

    The main ac supply is silenced so the bias loop is probed alone (the dc
    link still charges from the converter's own source), and the error is
    read at the controller sampling instants, the only signal the loop acts
    on. Saturation is judged from the duty command, so a clamped limit cycle
    is not mistaken for a sustained linear oscillation.
    """
    quiet = replace(params, supply_rms=1e-6)
    probe_cfg = replace(cfg, kp=kp, ki=0.0)
    ref = ReferenceProfile.steps([(0.0, 0.0), (settle, float(setpoint))])
    net = build_cvsr_network(quiet, "converter", converter=probe_cfg,
                             reference=ref)
    solver_cfg = SolverConfig(dt=dt, method="trapezoidal")
    state = initial_state(net, solver_cfg)
    probes = [ProbeSpec("i_dc", "A", "element_i", target="dc_wind_left"),
              ProbeSpec("duty", "", "ctrl", target="duty")]
    series = run(net, state, solver_cfg, settle + window, probes)
    stride = max(1, round(1.0 / (cfg.carrier_frequency * dt)))
    t = series.time[::stride]
    i = series["i_dc"][::stride]
    duty = series["duty"][::stride]
    keep = t >= settle
    ref_vals = np.array([ref(tt) for tt in t[keep]])
    sat = float(np.mean(np.abs(duty[keep]) >= 1.0 - 1e-9))
    return OscillationRecord(time=t[keep], error=ref_vals - i[keep],
                             sat_fraction=sat)


def tune_bias_loop(params: CvsrParams = None, cfg: ConverterConfig = None, *,
                   setpoint: float = 2.0, kp_start: float = 0.05,
                   window: float = 0.02) -> TuningResult:
    """Ziegler-Nichols PI gains for the physical bias current loop."""
    params = params or CvsrParams()
    cfg = cfg or ConverterConfig()

    def response(kp):
        return bias_loop_response(params, cfg, kp,
                                  setpoint=setpoint, window=window)

    return zn_tune(response, kp_start=kp_start)


def find_critical_dc(params: CvsrParams, *, grid: float = 0.25,
                     max_bias: float = 30.0, duration: float = 0.1,
                     dt: float = IDEAL_DT) -> float:
    """Smallest ideal-source bias (on the grid) that saturates an outer leg.

    Peak |B| grows monotonically with bias, so the grid is bisected rather
    than swept. Raises ReportingError when even max_bias does not saturate.
    """
    def peak_b(bias):
        scn = Scenario.ideal(bias, params=params, duration=duration, dt=dt)
        series = run_scenario(scn)
        w = window_cycles(series, params.frequency, 3)
        return max(float(np.max(np.abs(w["b_left"]))),
                   float(np.max(np.abs(w["b_right"]))))

    if peak_b(0.0) > params.b_sat:
        return 0.0
    steps = int(math.ceil(max_bias / grid))
    if peak_b(steps * grid) <= params.b_sat:
        raise ReportingError(
            f"no outer-leg saturation up to {steps * grid:g} A bias")
    lo, hi = 0, steps
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if peak_b(mid * grid) > params.b_sat:
            hi = mid
        else:
            lo = mid
    return hi * grid
