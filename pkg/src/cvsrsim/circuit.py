"""Electric-domain elements and the two-domain network container.

Node names are strings, scoped per domain. Every network designates one
electric ground and one magnetic ground; validate() reports structural
problems (dangling nodes, subgraphs with no path to ground, missing
grounds, a populated domain pair with no gyrator) without raising.
"""

from __future__ import annotations

import math
from typing import Callable, Union

import numpy as np

from .errors import NetworkError, UsageError
from .magnetics import HysteresisElement, PermeanceElement, WindingGyrator

Waveform = Union[float, Callable[[float], float]]


def _as_waveform(value: Waveform) -> Callable[[float], float]:
    if callable(value):
        return value
    level = float(value)
    return lambda t: level


def _check_positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")


class ElectricElement:
    """Two-terminal electric element base. node_a is the positive reference."""

    def __init__(self, name, node_a, node_b):
        if node_a == node_b:
            raise ValueError(f"element {name!r} connects node {node_a!r} to itself")
        self.name = name
        self.node_a = node_a
        self.node_b = node_b

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, {self.node_a!r}->{self.node_b!r})"


class Resistor(ElectricElement):
    def __init__(self, name, node_a, node_b, ohms):
        super().__init__(name, node_a, node_b)
        _check_positive("resistance", ohms)
        self.ohms = float(ohms)


class Inductor(ElectricElement):
    def __init__(self, name, node_a, node_b, henry):
        super().__init__(name, node_a, node_b)
        _check_positive("inductance", henry)
        self.henry = float(henry)


class Capacitor(ElectricElement):
    def __init__(self, name, node_a, node_b, farad):
        super().__init__(name, node_a, node_b)
        _check_positive("capacitance", farad)
        self.farad = float(farad)


class VoltageSource(ElectricElement):
    """Ideal voltage source, v(node_a) - v(node_b) = waveform(t)."""

    def __init__(self, name, node_a, node_b, waveform: Waveform):
        super().__init__(name, node_a, node_b)
        self.waveform = _as_waveform(waveform)

    @classmethod
    def ac(cls, name, node_a, node_b, rms, frequency, phase=0.0):
        """Sinusoidal source specified by its RMS amplitude."""
        _check_positive("rms", rms)
        _check_positive("frequency", frequency)
        amp = math.sqrt(2.0) * rms
        w = 2.0 * math.pi * frequency
        return cls(name, node_a, node_b, lambda t: amp * math.sin(w * t + phase))

    @classmethod
    def dc(cls, name, node_a, node_b, volts):
        return cls(name, node_a, node_b, float(volts))


class CurrentSource(ElectricElement):
    """Ideal current source injecting waveform(t) amps into node_a."""

    def __init__(self, name, node_a, node_b, waveform: Waveform):
        super().__init__(name, node_a, node_b)
        self.waveform = _as_waveform(waveform)


class Switch(ElectricElement):
    """Gate-commanded two-state resistor."""

    def __init__(self, name, node_a, node_b, r_on=1e-3, g_off=1e-9):
        super().__init__(name, node_a, node_b)
        _check_positive("r_on", r_on)
        _check_positive("g_off", g_off)
        self.r_on = float(r_on)
        self.g_off = float(g_off)


class Diode(ElectricElement):
    """Two-state diode with forward threshold; anode is node_a.

    Conducting: i = (v - v_fwd)/r_on. Blocking: i = v*g_off. The solver flips
    the conduction state until it is consistent with the solved voltages.
    """

    def __init__(self, name, node_a, node_b, r_on=1e-3, g_off=1e-9, v_fwd=0.7):
        super().__init__(name, node_a, node_b)
        _check_positive("r_on", r_on)
        _check_positive("g_off", g_off)
        if v_fwd < 0:
            raise ValueError(f"v_fwd must be nonnegative, got {v_fwd}")
        self.r_on = float(r_on)
        self.g_off = float(g_off)
        self.v_fwd = float(v_fwd)


def element_current(element, branch_voltage, *, gate_on=None, conducting=None, time=None):
    """Constitutive branch current for algebraic elements.

    Storage elements (inductor, capacitor, permeance) have no algebraic
    current law; their current is solver state, and asking for it here is a
    usage error.
    """
    v = branch_voltage
    if isinstance(element, Resistor):
        return v / element.ohms
    if isinstance(element, Switch):
        if gate_on is None:
            raise UsageError(f"switch {element.name!r} needs gate_on")
        return v / element.r_on if gate_on else v * element.g_off
    if isinstance(element, Diode):
        if conducting is None:
            raise UsageError(f"diode {element.name!r} needs conducting")
        return (v - element.v_fwd) / element.r_on if conducting else v * element.g_off
    if isinstance(element, CurrentSource):
        if time is None:
            raise UsageError(f"current source {element.name!r} needs time")
        return element.waveform(time)
    if isinstance(element, HysteresisElement):
        if element.r_mag == 0:
            raise UsageError(f"hysteresis {element.name!r} with r_mag=0 has no current law")
        return v / element.r_mag
    raise UsageError(
        f"{type(element).__name__} {element.name!r} has no algebraic current law")


class Control:
    """Synchronous discrete-time component evaluated at step boundaries."""

    def bind(self, simulator):
        pass

    def before_step(self, t, dt, state):
        pass


class HybridNetwork:
    """Container of electric and magnetic elements with shared bookkeeping."""

    def __init__(self, elec_ground="gnd", mag_ground="mgnd"):
        self.elec_ground = elec_ground
        self.mag_ground = mag_ground
        self.electric = []      # ElectricElement instances
        self.permeances = []    # PermeanceElement
        self.hysteresis = []    # HysteresisElement
        self.gyrators = []      # WindingGyrator
        self.controls = []      # Control hooks
        self._names = set()

    def add(self, *elements):
        for el in elements:
            if getattr(el, "name", None) is None:
                raise NetworkError(f"cannot add {type(el).__name__} to a network")
            if el.name in self._names:
                raise NetworkError(f"duplicate element name {el.name!r}")
            self._names.add(el.name)
            if isinstance(el, PermeanceElement):
                self.permeances.append(el)
            elif isinstance(el, HysteresisElement):
                self.hysteresis.append(el)
            elif isinstance(el, WindingGyrator):
                self.gyrators.append(el)
            elif isinstance(el, ElectricElement):
                self.electric.append(el)
            else:
                raise NetworkError(f"cannot add {type(el).__name__} to a network")
        return elements[0] if len(elements) == 1 else elements

    def add_control(self, control: Control):
        self.controls.append(control)
        return control

    def element(self, name):
        for group in (self.electric, self.permeances, self.hysteresis, self.gyrators):
            for el in group:
                if el.name == name:
                    return el
        raise KeyError(name)

    def electric_nodes(self):
        nodes = set()
        for el in self.electric:
            nodes.add(el.node_a)
            nodes.add(el.node_b)
        for gy in self.gyrators:
            nodes.add(gy.elec_a)
            nodes.add(gy.elec_b)
        return nodes

    def magnetic_nodes(self):
        nodes = set()
        for el in self.permeances + self.hysteresis:
            nodes.add(el.node_a)
            nodes.add(el.node_b)
        for gy in self.gyrators:
            nodes.add(gy.mag_a)
            nodes.add(gy.mag_b)
        return nodes

    def _domain_edges(self):
        elec, mag = [], []
        for el in self.electric:
            elec.append((el.node_a, el.node_b))
        for gy in self.gyrators:
            elec.append((gy.elec_a, gy.elec_b))
            mag.append((gy.mag_a, gy.mag_b))
        for el in self.permeances + self.hysteresis:
            mag.append((el.node_a, el.node_b))
        return elec, mag

    def validate(self):
        """Return a list of human-readable violations; empty means sound."""
        problems = []
        elec_edges, mag_edges = self._domain_edges()
        for label, edges, nodes, ground in (
            ("electric", elec_edges, self.electric_nodes(), self.elec_ground),
            ("magnetic", mag_edges, self.magnetic_nodes(), self.mag_ground),
        ):
            if not edges:
                continue
            if ground not in nodes:
                problems.append(f"no ground: {label} domain never references {ground!r}")
                continue
            degree = {}
            adj = {}
            for a, b in edges:
                degree[a] = degree.get(a, 0) + 1
                degree[b] = degree.get(b, 0) + 1
                adj.setdefault(a, []).append(b)
                adj.setdefault(b, []).append(a)
            for node, deg in sorted(degree.items()):
                if node != ground and deg < 2:
                    problems.append(f"dangling node: {label} node {node!r} has a single connection")
            seen = {ground}
            stack = [ground]
            while stack:
                for nxt in adj.get(stack.pop(), []):
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            floating = sorted(set(nodes) - seen)
            if floating:
                problems.append(
                    f"disconnected: {label} nodes {floating} have no path to {ground!r}")
        if self.electric and self.permeances and not self.gyrators:
            problems.append("both domains are populated but no gyrator couples them")
        return problems
