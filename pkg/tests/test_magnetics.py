"""Saturation curve, permeances, and magnetic elements.

The curve oracles were computed once from the closed forms (softplus
shoulder, smoothstep slope ramp, linear tail) and frozen; the property
tests pin the invariants every element of the solver relies on.
"""

import math

import numpy as np
import pytest

from cvsrsim.magnetics import (HARD_SAT_ONSET, HARD_SAT_WIDTH, MU_0,
                               BHMaterial, CoreGeometry, HysteresisElement,
                               PermeanceElement, WindingGyrator, dh_db,
                               differential_permeance, equivalent_inductance,
                               gap_permeance, h_of_b, linear_permeance,
                               mmf_of_flux)

MAT = BHMaterial()


# ------------------------------------------------------------- fixed points

def test_h_of_b_frozen_values():
    assert h_of_b(MAT, 0.5) == pytest.approx(79.57749258231331, rel=1e-12)
    assert h_of_b(MAT, 1.34) == pytest.approx(233.6222533891377, rel=1e-12)
    assert h_of_b(MAT, 2.0) == pytest.approx(11240.036688315386, rel=1e-12)


def test_dh_db_frozen_values():
    assert dh_db(MAT, 0.0) == pytest.approx(159.1549432799199, rel=1e-12)
    # deep in saturation the slope is exactly the saturated reluctivity
    assert dh_db(MAT, 2.0) == pytest.approx(1.0 / (MU_0 * MAT.mu_r_sat), rel=1e-12)


def test_low_field_slope_is_linear_permeability():
    # at the origin the shoulder terms cancel pairwise
    assert dh_db(MAT, 0.0) == pytest.approx(1.0 / (MU_0 * MAT.mu_r_linear), rel=1e-3)


def test_curve_still_nearly_linear_below_the_knee():
    for frac, limit in ((0.85, 0.005), (0.9, 0.02)):
        b = frac * MAT.b_sat
        h_lin = b / (MU_0 * MAT.mu_r_linear)
        assert abs(h_of_b(MAT, b) - h_lin) / h_lin < limit


# --------------------------------------------------------------- invariants

B_GRID = np.linspace(-2.5, 2.5, 2001)


def test_h_of_b_is_odd():
    h = h_of_b(MAT, B_GRID)
    assert np.allclose(h + h[::-1], 0.0, atol=1e-9)
    assert h_of_b(MAT, 0.0) == 0.0


def test_h_of_b_strictly_increasing():
    h = h_of_b(MAT, B_GRID)
    assert np.all(np.diff(h) > 0)


def test_dh_db_positive_and_bounded():
    d = dh_db(MAT, B_GRID)
    assert np.all(d > 0)
    assert np.all(d <= 1.0 / (MU_0 * MAT.mu_r_sat) + 1e-9)


def test_dh_db_matches_finite_difference():
    b = np.linspace(-2.2, 2.2, 401)
    eps = 1e-7
    fd = (h_of_b(MAT, b + eps) - h_of_b(MAT, b - eps)) / (2 * eps)
    assert np.allclose(dh_db(MAT, b), fd, rtol=1e-5, atol=1e-3)


def test_slope_is_continuous_across_hard_finish():
    # C1 handoff: the smoothstep ramp starts at the shoulder slope and ends
    # exactly on the saturated slope
    b_on = HARD_SAT_ONSET * MAT.b_sat
    b_end = b_on + HARD_SAT_WIDTH
    for b in (b_on, b_end):
        below = dh_db(MAT, b - 1e-9)
        above = dh_db(MAT, b + 1e-9)
        assert above == pytest.approx(below, rel=1e-6)
    assert dh_db(MAT, b_end + 1e-9) == pytest.approx(
        1.0 / (MU_0 * MAT.mu_r_sat), rel=1e-12)


def test_curve_exactly_linear_beyond_hard_finish():
    # zero curvature past the ramp: equal slopes everywhere on the tail
    b = np.linspace(HARD_SAT_ONSET * MAT.b_sat + HARD_SAT_WIDTH, 3.0, 200)
    d = dh_db(MAT, b)
    assert float(d.max() - d.min()) == pytest.approx(0.0, abs=1e-9)


def test_material_validation():
    with pytest.raises(ValueError):
        BHMaterial(mu_r_linear=-1.0)
    with pytest.raises(ValueError):
        BHMaterial(b_sat=0.0)
    with pytest.raises(ValueError):
        BHMaterial(mu_r_sat=5000.0, mu_r_linear=40.0)  # saturated above linear
    with pytest.raises(ValueError):
        BHMaterial(knee_sharpness=0.0)


# -------------------------------------------------------------- permeances

def test_linear_permeance_values():
    assert linear_permeance(1.0, 0.0103, 0.00178) == pytest.approx(
        7.2715515352752e-06, rel=1e-10)
    assert linear_permeance(5000.0, 0.0103, 0.4572) == pytest.approx(
        1.4155032516174484e-04, rel=1e-10)


def test_gap_permeance_scales_with_fringing():
    geom = CoreGeometry(l_mid=0.4572, l_out=0.8636, h_gap=0.00178, area=0.0103)
    base = gap_permeance(geom, 1.0)
    assert gap_permeance(geom, 5.4077) == pytest.approx(5.4077 * base, rel=1e-12)
    with pytest.raises(ValueError):
        gap_permeance(geom, 0.5)


def test_permeance_element_kinds():
    lin = PermeanceElement.linear("p", "a", "b", mu_r=5000.0,
                                  area=0.0103, length=0.4572)
    assert lin.kind == "linear"
    assert differential_permeance(lin, 0.123) == pytest.approx(lin.permeance)
    core = PermeanceElement.core("c", "a", "b", length=0.8636,
                                 area=0.0103, material=MAT)
    assert core.kind == "nonlinear-core"
    with pytest.raises(ValueError):
        PermeanceElement("x", "a", "b", "linear", permeance=-1.0)
    with pytest.raises(ValueError):
        PermeanceElement("x", "a", "b", "nonlinear-core", length=0.1, area=0.01)


def test_mmf_of_flux_consistent_with_curve():
    core = PermeanceElement.core("c", "a", "b", length=0.8636,
                                 area=0.0103, material=MAT)
    phi = 0.5 * 0.0103
    assert mmf_of_flux(core, phi) == pytest.approx(
        h_of_b(MAT, 0.5) * 0.8636, rel=1e-12)
    lin = PermeanceElement.linear("p", "a", "b", mu_r=5000.0,
                                  area=0.0103, length=0.4572)
    with pytest.raises(Exception):
        mmf_of_flux(lin, phi)


def test_differential_permeance_tracks_slope():
    core = PermeanceElement.core("c", "a", "b", length=0.8636,
                                 area=0.0103, material=MAT)
    for b in (0.0, 1.0, 1.4, 2.0):
        phi = b * 0.0103
        expect = 0.0103 / (0.8636 * dh_db(MAT, b))
        assert differential_permeance(core, phi) == pytest.approx(expect, rel=1e-12)


def test_hysteresis_and_gyrator_validation():
    hy = HysteresisElement("h", "a", "b", r_mag=2.0)
    assert hy.r_mag == 2.0
    with pytest.raises(ValueError):
        HysteresisElement("h", "a", "b", r_mag=-1.0)
    gy = WindingGyrator("w", "ea", "eb", "ma", "mb", turns=20, polarity=1)
    assert gy.gyration_conductance == pytest.approx(1.0 / 20.0)
    with pytest.raises(ValueError):
        WindingGyrator("w", "ea", "eb", "ma", "mb", turns=0)
    with pytest.raises(ValueError):
        WindingGyrator("w", "ea", "eb", "ma", "mb", turns=20, polarity=2)


def test_equivalent_inductance_of_single_loop():
    # one winding on one linear leg: L = n^2 * permeance
    from cvsrsim.circuit import HybridNetwork
    net = HybridNetwork()
    gy = WindingGyrator("w", "e", "gnd", "mgnd", "m", turns=20)
    net.add(gy)
    net.add(PermeanceElement.linear("leg", "m", "mgnd", mu_r=5000.0,
                                    area=0.0103, length=0.4572))
    expect = 400.0 * linear_permeance(5000.0, 0.0103, 0.4572)
    assert equivalent_inductance(net, gy) == pytest.approx(expect, rel=1e-12)
