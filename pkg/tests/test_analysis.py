"""Metric helpers checked against waveforms with known answers."""

import math

import numpy as np
import pytest

from cvsrsim.analysis import (Metrics, analyze, fundamental_phasor,
                              harmonic_magnitude, mean, overshoot,
                              peak_to_peak, rms, saturation_fraction,
                              settling_time, smoothed, thd, window_cycles)
from cvsrsim.errors import ReportingError
from cvsrsim.solver import TimeSeries

T = np.linspace(0.0, 0.1, 6001)          # exactly 6 cycles at 60 Hz
W = 2.0 * math.pi * 60.0


def test_mean_and_rms_of_sine_with_offset():
    y = 3.0 + 2.0 * np.sin(W * T)
    assert mean(T, y) == pytest.approx(3.0, abs=1e-9)
    assert rms(T, y) == pytest.approx(math.sqrt(9.0 + 2.0), rel=1e-6)


def test_peak_to_peak():
    assert peak_to_peak(2.0 * np.sin(W * T)) == pytest.approx(4.0, rel=1e-6)


def test_fundamental_phasor_recovers_amplitude_and_phase():
    y = 5.0 * np.cos(W * T - 0.3)
    x = fundamental_phasor(T, y, 60.0)
    assert abs(x) == pytest.approx(5.0, rel=1e-6)
    assert math.atan2(-x.imag, x.real) == pytest.approx(0.3, abs=1e-6)


def test_harmonic_magnitude_picks_single_bins():
    y = 4.0 * np.sin(W * T) + 1.0 * np.sin(3 * W * T)
    assert harmonic_magnitude(T, y, 60.0, 1) == pytest.approx(4.0, rel=1e-6)
    assert harmonic_magnitude(T, y, 60.0, 3) == pytest.approx(1.0, rel=1e-5)
    assert harmonic_magnitude(T, y, 60.0, 2) == pytest.approx(0.0, abs=1e-6)


def test_thd_of_known_mixture():
    y = 10.0 * np.sin(W * T) + 0.5 * np.sin(2 * W * T) + 0.2 * np.sin(5 * W * T)
    expect = math.sqrt(0.5 ** 2 + 0.2 ** 2) / 10.0
    assert thd(T, y, 60.0) == pytest.approx(expect, rel=1e-4)
    with pytest.raises(ReportingError):
        thd(T, np.zeros_like(T), 60.0)


def test_window_cycles_takes_trailing_whole_cycles():
    ts = TimeSeries(T, {"y": np.sin(W * T)}, {"y": ""})
    w = window_cycles(ts, 60.0, 2)
    assert w.time[0] == pytest.approx(0.1 - 2.0 / 60.0, abs=1e-9)
    assert w.time[-1] == pytest.approx(0.1, abs=1e-9)
    with pytest.raises(ReportingError):
        window_cycles(ts, 60.0, 7)


def test_saturation_fraction():
    y = np.array([0.0, 1.5, -1.6, 1.0, 2.0])
    assert saturation_fraction(y, 1.34) == pytest.approx(3.0 / 5.0)


def test_overshoot_and_settling():
    t = np.linspace(0.0, 1.0, 1001)
    y = 1.0 - np.exp(-t / 0.05) * np.cos(2 * math.pi * 5 * t)
    ov = overshoot(y, 1.0)
    assert 0.0 < ov < 1.0
    st = settling_time(t, y, 1.0, band=0.02)
    assert 0.0 < st < 0.5
    # never settles outside a too-tight band
    assert settling_time(t, 0.9 * np.ones_like(t), 1.0, band=0.01) == math.inf
    assert settling_time(t, np.ones_like(t), 1.0, band=0.01) == 0.0
    # negative target mirrors
    assert overshoot(-y, -1.0) == pytest.approx(ov, rel=1e-12)


def test_smoothed_removes_carrier_ripple():
    t = np.linspace(0.0, 1e-3, 3001)
    ripple = 0.2 * np.sin(2 * math.pi * 50e3 * t)
    ts_s, ys = smoothed(t, 5.0 + ripple, 1.0 / 50e3)
    assert np.all(np.abs(ys - 5.0) < 0.01)
    assert ts_s.size == ys.size


def test_analyze_produces_complete_metrics():
    y = 21.2 * math.sqrt(2.0) * np.sin(W * T)
    b = 1.2 * np.sin(W * T)
    ts = TimeSeries(T, {"i_ac": y, "b_left": b, "b_right": b, "b_mid": b,
                        "v_bias": 0.01 * np.sin(2 * W * T),
                        "i_dc": np.full_like(T, 5.0)},
                    {"i_ac": "A"})
    m = analyze(ts, frequency=60.0, b_sat=1.34, n_cycles=3, startup=0.0,
                dc_target=5.0, dft_channels={"v_bias": [120.0]})
    assert isinstance(m, Metrics)
    assert m.rms["i_ac"] == pytest.approx(21.2, rel=1e-4)
    assert m.b_max["left"] == pytest.approx(1.2, rel=1e-4)
    assert m.sat_fraction["left"] == 0.0
    assert m.dft["v_bias"][120.0] == pytest.approx(0.01, rel=1e-3)
    assert m.overshoot_pct == pytest.approx(0.0, abs=1e-9)
    assert m.settling_s == 0.0
    assert m.p_dc_mean == pytest.approx(0.0, abs=1e-6)
    d = m.to_dict()
    assert d["cycles"] == 3


def test_analyze_needs_three_cycles_after_startup():
    ts = TimeSeries(T, {"i_ac": np.sin(W * T)}, {})
    with pytest.raises(ReportingError):
        analyze(ts, frequency=60.0, b_sat=1.34, startup=0.09)


def test_analyze_ripple_smoothing_hides_switching_band():
    # 5 A step at t=0 with 50 kHz ripple wider than the 2% settling band:
    # raw samples never settle, the one-period average settles immediately
    t = np.arange(0.0, 0.02, 1.0 / 3e6)
    y = 5.0 + 0.2 * np.sign(np.sin(2 * math.pi * 50e3 * t))
    ts = TimeSeries(t, {"i_dc": y}, {})
    raw = analyze(ts, frequency=600.0, b_sat=1.34, startup=0.0,
                  n_cycles=3, dc_target=5.0)
    assert raw.settling_s == math.inf
    sm = analyze(ts, frequency=600.0, b_sat=1.34, startup=0.0,
                 n_cycles=3, dc_target=5.0, ripple_smooth_s=1.0 / 50e3)
    assert sm.settling_s < 1e-4
    assert sm.overshoot_pct < 1.0
