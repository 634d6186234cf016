"""Element constitutive laws and network bookkeeping."""

import math

import pytest

from cvsrsim.circuit import (Capacitor, CurrentSource, Diode, HybridNetwork,
                             Inductor, Resistor, Switch, VoltageSource,
                             element_current)
from cvsrsim.errors import NetworkError, UsageError
from cvsrsim.magnetics import PermeanceElement, WindingGyrator


def test_element_validation():
    with pytest.raises(ValueError):
        Resistor("r", "a", "a", 1.0)       # self loop
    with pytest.raises(ValueError):
        Resistor("r", "a", "b", 0.0)
    with pytest.raises(ValueError):
        Inductor("l", "a", "b", -1.0)
    with pytest.raises(ValueError):
        Capacitor("c", "a", "b", math.inf)
    with pytest.raises(ValueError):
        Diode("d", "a", "b", v_fwd=-0.1)


def test_ac_source_waveform():
    src = VoltageSource.ac("s", "a", "b", rms=100.0, frequency=50.0)
    assert src.waveform(0.0) == pytest.approx(0.0)
    assert src.waveform(1.0 / 200.0) == pytest.approx(100.0 * math.sqrt(2.0))
    dc = VoltageSource.dc("s2", "a", "b", 12.0)
    assert dc.waveform(0.123) == 12.0


def test_element_current_laws():
    r = Resistor("r", "a", "b", 50.0)
    assert element_current(r, 100.0) == pytest.approx(2.0)

    sw = Switch("sw", "a", "b", r_on=1e-3, g_off=1e-9)
    assert element_current(sw, 1.0, gate_on=True) == pytest.approx(1000.0)
    assert element_current(sw, 1.0, gate_on=False) == pytest.approx(1e-9)
    with pytest.raises(UsageError):
        element_current(sw, 1.0)

    d = Diode("d", "a", "b", r_on=1e-3, v_fwd=0.7)
    assert element_current(d, 1.7, conducting=True) == pytest.approx(1000.0)
    assert element_current(d, 1.7, conducting=False) == pytest.approx(1.7e-9)

    cs = CurrentSource("i", "a", "b", lambda t: 3.0 * t)
    assert element_current(cs, 0.0, time=2.0) == pytest.approx(6.0)

    with pytest.raises(UsageError):
        element_current(Inductor("l", "a", "b", 0.1), 1.0)  # storage element


def test_network_rejects_duplicates_and_foreign_objects():
    net = HybridNetwork()
    net.add(Resistor("r", "a", "gnd", 1.0))
    with pytest.raises(NetworkError):
        net.add(Resistor("r", "b", "gnd", 2.0))
    with pytest.raises(NetworkError):
        net.add(object())


def test_element_lookup_and_node_sets():
    net = HybridNetwork()
    net.add(Resistor("r", "a", "gnd", 1.0),
            WindingGyrator("w", "a", "gnd", "mgnd", "m", turns=10),
            PermeanceElement.linear("p", "m", "mgnd", mu_r=100.0,
                                    area=0.01, length=0.1))
    assert net.element("p").kind == "linear"
    with pytest.raises(KeyError):
        net.element("missing")
    assert net.electric_nodes() == {"a", "gnd"}
    assert net.magnetic_nodes() == {"m", "mgnd"}


def test_validate_flags_structural_problems():
    net = HybridNetwork()
    net.add(Resistor("r", "a", "b", 1.0))   # never touches ground
    problems = net.validate()
    assert any("no ground" in p for p in problems)

    net2 = HybridNetwork()
    net2.add(Resistor("r1", "a", "gnd", 1.0),
             Resistor("r2", "b", "gnd", 1.0))  # b dangles on one edge
    problems = net2.validate()
    assert any("dangling" in p for p in problems)

    net3 = HybridNetwork()
    net3.add(Resistor("r1", "a", "gnd", 1.0),
             Resistor("r2", "a", "gnd", 1.0),
             Resistor("r3", "x", "y", 1.0),
             Resistor("r4", "x", "y", 1.0))    # island with no ground path
    problems = net3.validate()
    assert any("disconnected" in p for p in problems)

    # both domains populated but uncoupled
    net4 = HybridNetwork()
    net4.add(Resistor("r1", "a", "gnd", 1.0),
             Resistor("r2", "a", "gnd", 1.0),
             PermeanceElement.linear("p1", "m", "mgnd", mu_r=10.0,
                                     area=0.01, length=0.1),
             PermeanceElement.linear("p2", "m", "mgnd", mu_r=10.0,
                                     area=0.01, length=0.1))
    assert any("gyrator" in p for p in net4.validate())


def test_validate_accepts_sound_network():
    from cvsrsim.scenario import CvsrParams, build_cvsr_network
    net = build_cvsr_network(CvsrParams(), "ideal", bias=0.0)
    assert net.validate() == []
    net_conv = build_cvsr_network(CvsrParams(), "converter", bias=0.0)
    assert net_conv.validate() == []
