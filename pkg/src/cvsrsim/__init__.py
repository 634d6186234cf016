"""Transient simulation of magnetically biased reactors via the
gyrator-capacitor equivalence, with an ideal or switched-mode bias source."""

from .analysis import (Metrics, analyze, fundamental_phasor,
                       harmonic_magnitude, mean, overshoot, peak_to_peak,
                       rms, saturation_fraction, settling_time, smoothed,
                       thd, window_cycles)
from .circuit import (Capacitor, Control, CurrentSource, Diode,
                      HybridNetwork, Inductor, Resistor, Switch,
                      VoltageSource, element_current)
from .config import (ENV_OUT_DIR, RunConfig, parse_config, render_config)
from .converter import (CascadedLagPlant, ConverterConfig, FirstOrderLagPlant,
                        OscillationRecord, PiController, ProfileSegment,
                        PwmCurrentControl, ReferenceProfile, TuningResult,
                        build_converter, classify_oscillation,
                        closed_loop_response, pi_update, pwm_gates,
                        triangle_carrier, zn_tune)
from .errors import (CalibrationError, ConfigError, CvsrSimError,
                     NetworkError, NumericalError, ReportingError,
                     SolverError, TuningError, UsageError)
from .io import (PLOT_PRESETS, RunReport, emit_timeseries, read_timeseries,
                 run_checks, with_power_channel, write_report)
from .magnetics import (MU_0, BHMaterial, CoreGeometry, HysteresisElement,
                        PermeanceElement, WindingGyrator, dh_db,
                        differential_permeance, equivalent_inductance,
                        gap_permeance, h_of_b, linear_permeance, mmf_of_flux)
from .scenario import (CONVERTER_DT, DEFAULT_FRINGING, IDEAL_DT,
                       REFERENCE_DELAY, CalibrationResult, CvsrParams,
                       Scenario, bias_loop_response, build_cvsr_network,
                       calibrate_fringing, find_critical_dc,
                       linearized_inductance, probe_flux_density,
                       probe_power_dc, probe_v_bias, run_scenario,
                       standard_probes, tune_bias_loop)
from .solver import (ProbeSpec, Simulator, SolverConfig, SystemState,
                     TimeSeries, initial_state, run, step)

__version__ = "0.1.0"
