"""Magnetic-domain elements and the saturable core material model.

The magnetic side of a hybrid network is written in the charge analogy:
magnetomotive force plays the role of node potential and flux the role of
charge, so a permeance behaves exactly like a capacitance and flux rate
dPhi/dt is the through variable. Core loss is represented by magnetic
resistors in series with the leg permeances, and windings couple the two
domains as lossless gyrators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, UsageError

MU_0 = 4.0e-7 * math.pi  # vacuum permeability, H/m

PERMEANCE_KINDS = ("linear", "nonlinear-core", "air-gap")


def _softplus(x):
    # log(1 + exp(x)) without overflow for large |x|
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class CoreGeometry:
    """Physical dimensions of the three-legged core, SI units.

    l_mid and l_out are the mean flux path lengths of the middle and outer
    legs, h_gap the air-gap height cut into the middle leg, area the core
    cross section (one value for all legs).
    """

    l_mid: float
    l_out: float
    h_gap: float
    area: float

    def __post_init__(self):
        for name in ("l_mid", "l_out", "h_gap", "area"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"CoreGeometry.{name} must be a positive finite number, got {v!r}")
        if self.h_gap >= self.l_mid:
            raise ValueError(
                f"air gap {self.h_gap} must be smaller than the middle leg length {self.l_mid}"
            )


# Blend midpoint of the shoulder, as a multiple of b_sat. b_sat marks the
# onset of the bend (where the curve visibly departs from the linear
# asymptote); the crossover of the two asymptotes in electrical steels sits
# a little higher, so flux keeps climbing well past b_sat before the
# saturated slope takes over.
KNEE_CENTER = 1.185

# The gradual shoulder does not taper off on its own: once domain rotation
# is exhausted the incremental permeability collapses to its saturated value
# within a few mT. Past HARD_SAT_ONSET*b_sat the slope ramps (C1, smoothstep
# over HARD_SAT_WIDTH tesla) from the shoulder value to exactly
# 1/(mu0*mu_r_sat) and the curve is linear from there on.
HARD_SAT_ONSET = 1.082
HARD_SAT_WIDTH = 0.006


@dataclass(frozen=True)
class BHMaterial:
    """Anhysteretic saturation curve: soft shoulder, hard finish.

    H(B) rises with slope 1/(mu0*mu_r_linear) near zero, bends gradually
    through a shoulder centered at KNEE_CENTER*b_sat whose width is set by
    knee_sharpness (dimensionless, larger = crisper), and past
    HARD_SAT_ONSET*b_sat finishes abruptly: the slope ramps to exactly
    1/(mu0*mu_r_sat) over HARD_SAT_WIDTH tesla and stays there. The split
    shape mirrors electrical steel, where the approach to saturation is
    rounded but technical saturation itself arrives within a few mT. The
    defaults keep the curve within 2% of the linear asymptote up to
    0.9*b_sat and within 0.5% up to 0.85*b_sat.
    """

    mu_r_linear: float = 5000.0
    b_sat: float = 1.34
    mu_r_sat: float = 40.0
    knee_sharpness: float = 22.0

    def __post_init__(self):
        if not self.mu_r_sat >= 1.0:
            raise ValueError(f"mu_r_sat must be >= 1, got {self.mu_r_sat}")
        if not self.mu_r_linear > self.mu_r_sat:
            raise ValueError(
                f"mu_r_linear ({self.mu_r_linear}) must exceed mu_r_sat ({self.mu_r_sat})"
            )
        if not self.b_sat > 0:
            raise ValueError(f"b_sat must be positive, got {self.b_sat}")
        if not self.knee_sharpness > 0:
            raise ValueError(f"knee_sharpness must be positive, got {self.knee_sharpness}")


def _curve_geometry(material: BHMaterial):
    """Shared constants of the shoulder and the hard finish."""
    k = material.knee_sharpness / material.b_sat
    bc = KNEE_CENTER * material.b_sat
    slope_lin = 1.0 / (MU_0 * material.mu_r_linear)
    slope_sat = 1.0 / (MU_0 * material.mu_r_sat)
    extra = slope_sat - slope_lin
    b2 = HARD_SAT_ONSET * material.b_sat
    # shoulder slope where the hard finish takes over; always < slope_sat
    s0 = slope_lin + extra * (_sigmoid(k * (b2 - bc)) + _sigmoid(-k * (b2 + bc)))
    h2 = slope_lin * b2 + extra * (_softplus(k * (b2 - bc)) - _softplus(k * (-b2 - bc))) / k
    return k, bc, slope_lin, slope_sat, extra, b2, float(s0), float(h2)


def h_of_b(material: BHMaterial, b):
    """Field strength H (A/m) for flux density b (T). Odd and strictly increasing."""
    k, bc, slope_lin, slope_sat, extra, b2, s0, h2 = _curve_geometry(material)
    b = np.asarray(b, dtype=float)
    beta = np.abs(b)
    excess = (_softplus(k * (beta - bc)) - _softplus(k * (-beta - bc))) / k
    shoulder = slope_lin * beta + extra * excess
    d = beta - b2
    u = np.clip(d / HARD_SAT_WIDTH, 0.0, 1.0)
    ramp = HARD_SAT_WIDTH * (u ** 3 - 0.5 * u ** 4)
    finish = h2 + s0 * d + (slope_sat - s0) * (ramp + np.maximum(d - HARD_SAT_WIDTH, 0.0))
    h = np.sign(b) * np.where(beta <= b2, shoulder, finish)
    return float(h) if h.ndim == 0 else h


def dh_db(material: BHMaterial, b):
    """Differential slope dH/dB (A/m/T) of the saturation curve."""
    k, bc, slope_lin, slope_sat, extra, b2, s0, _ = _curve_geometry(material)
    b = np.asarray(b, dtype=float)
    beta = np.abs(b)
    shoulder = slope_lin + extra * (_sigmoid(k * (beta - bc)) + _sigmoid(-k * (beta + bc)))
    u = np.clip((beta - b2) / HARD_SAT_WIDTH, 0.0, 1.0)
    finish = s0 + (slope_sat - s0) * u * u * (3.0 - 2.0 * u)
    d = np.where(beta <= b2, shoulder, finish)
    return float(d) if d.ndim == 0 else d


def linear_permeance(mu_r: float, area: float, length: float) -> float:
    """Permeance mu0*mu_r*area/length of a uniform path, Wb per A-turn."""
    if mu_r <= 0 or area <= 0 or length <= 0:
        raise ValueError(
            f"permeance arguments must be positive (mu_r={mu_r}, area={area}, length={length})"
        )
    return MU_0 * mu_r * area / length


def gap_permeance(geometry: CoreGeometry, fringing_factor: float) -> float:
    """Air-gap permeance with a multiplicative fringing correction."""
    if fringing_factor < 1.0:
        raise ValueError(f"fringing_factor must be >= 1, got {fringing_factor}")
    return fringing_factor * linear_permeance(1.0, geometry.area, geometry.h_gap)


class PermeanceElement:
    """Flux storage branch between two magnetic nodes.

    kind is one of "linear", "air-gap" (both hold a fixed permeance) or
    "nonlinear-core" (flux-dependent, defined by a BHMaterial over a path
    length and cross section).
    """

    def __init__(self, name, node_a, node_b, kind, *, permeance=None,
                 length=None, area=None, material=None, fringing_factor=1.0):
        if kind not in PERMEANCE_KINDS:
            raise ValueError(f"unknown permeance kind {kind!r}, expected one of {PERMEANCE_KINDS}")
        self.name = name
        self.node_a = node_a
        self.node_b = node_b
        self.kind = kind
        self.fringing_factor = float(fringing_factor)
        if self.fringing_factor < 1.0:
            raise ValueError(f"fringing_factor must be >= 1, got {fringing_factor}")
        if kind == "nonlinear-core":
            if material is None or length is None or area is None:
                raise ValueError("nonlinear-core permeance needs material, length and area")
            if length <= 0 or area <= 0:
                raise ValueError(f"length and area must be positive, got {length}, {area}")
            self.material = material
            self.length = float(length)
            self.area = float(area)
            self.permeance = None
        else:
            if permeance is None or permeance <= 0:
                raise ValueError(f"{kind} permeance needs a positive permeance value, got {permeance}")
            self.permeance = float(permeance)
            self.material = None
            self.length = length
            self.area = area

    @classmethod
    def linear(cls, name, node_a, node_b, mu_r, area, length):
        return cls(name, node_a, node_b, "linear",
                   permeance=linear_permeance(mu_r, area, length), length=length, area=area)

    @classmethod
    def air_gap(cls, name, node_a, node_b, geometry: CoreGeometry, fringing_factor: float):
        return cls(name, node_a, node_b, "air-gap",
                   permeance=gap_permeance(geometry, fringing_factor),
                   length=geometry.h_gap, area=geometry.area, fringing_factor=fringing_factor)

    @classmethod
    def core(cls, name, node_a, node_b, length, area, material: BHMaterial):
        return cls(name, node_a, node_b, "nonlinear-core",
                   length=length, area=area, material=material)

    def __repr__(self):
        return f"PermeanceElement({self.name!r}, kind={self.kind!r})"


def mmf_of_flux(element: PermeanceElement, phi):
    """Mmf drop (A-turn) across a nonlinear-core permeance carrying flux phi (Wb)."""
    if element.kind != "nonlinear-core":
        raise UsageError(f"mmf_of_flux applies to nonlinear-core permeances, not {element.kind!r}")
    b = np.asarray(phi, dtype=float) / element.area
    out = h_of_b(element.material, b) * element.length
    return float(out) if np.ndim(out) == 0 else out


def differential_permeance(element: PermeanceElement, phi):
    """Small-signal permeance dPhi/dF at operating flux phi.

    Linear kinds return their fixed permeance regardless of phi.
    """
    if element.kind != "nonlinear-core":
        return element.permeance
    b = np.asarray(phi, dtype=float) / element.area
    out = element.area / (element.length * dh_db(element.material, b))
    return float(out) if np.ndim(out) == 0 else out


class HysteresisElement:
    """Magnetic resistor: mmf drop proportional to flux rate, always dissipative."""

    def __init__(self, name, node_a, node_b, r_mag):
        if r_mag < 0:
            raise ValueError(f"r_mag must be nonnegative, got {r_mag}")
        self.name = name
        self.node_a = node_a
        self.node_b = node_b
        self.r_mag = float(r_mag)

    def __repr__(self):
        return f"HysteresisElement({self.name!r}, r_mag={self.r_mag})"


class WindingGyrator:
    """Lossless coupling between an electric port and a magnetic port.

    With turns N and polarity s, the element enforces
        v_elec = s*N * dPhi/dt        (flux rate = magnetic port current)
        mmf    = s*N * i_elec         (mmf rise across the magnetic port)
    so instantaneous power entering one port leaves the other exactly.
    """

    def __init__(self, name, elec_a, elec_b, mag_a, mag_b, turns, polarity=1):
        if not (isinstance(turns, int) and turns > 0):
            raise ValueError(f"turns must be a positive integer, got {turns!r}")
        if polarity not in (1, -1):
            raise ValueError(f"polarity must be +1 or -1, got {polarity!r}")
        self.name = name
        self.elec_a = elec_a
        self.elec_b = elec_b
        self.mag_a = mag_a
        self.mag_b = mag_b
        self.turns = turns
        self.polarity = polarity

    @property
    def gyration_conductance(self):
        # i_mag(a->b) = g * v_elec ; i_elec(a->b) = -g * v_mag
        return self.polarity / self.turns

    def __repr__(self):
        return f"WindingGyrator({self.name!r}, turns={self.turns}, polarity={self.polarity:+d})"


def equivalent_inductance(network, winding: WindingGyrator, fluxes=None) -> float:
    """Inductance seen at a winding's electric port, turns^2 times the
    small-signal permeance of the magnetic network at its magnetic port.

    fluxes maps nonlinear permeance names to their operating flux (missing
    entries default to zero flux). Hysteresis resistors and the magnetic
    ports of other windings are quasi-statically transparent (zero mmf drop)
    and are treated as shorts.
    """
    mag_nodes = {}

    def node_id(name):
        return mag_nodes.setdefault(name, len(mag_nodes))

    parent = {}

    def find(i):
        while parent.get(i, i) != i:
            parent[i] = parent.get(parent[i], parent[i])
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj

    for el in network.permeances:
        node_id(el.node_a), node_id(el.node_b)
    for el in network.hysteresis:
        union(node_id(el.node_a), node_id(el.node_b))
    for gy in network.gyrators:
        if gy is not winding:
            union(node_id(gy.mag_a), node_id(gy.mag_b))
    try:
        port_a = find(node_id(winding.mag_a))
        port_b = find(node_id(winding.mag_b))
    except KeyError:
        raise NumericalError(f"winding {winding.name!r} magnetic port is not in the network")
    if port_a == port_b:
        raise NumericalError(
            f"magnetic port of {winding.name!r} is short-circuited, permeance is unbounded")

    roots = sorted({find(i) for i in mag_nodes.values()})
    col = {r: i for i, r in enumerate(roots)}
    n = len(roots)
    lap = np.zeros((n, n))
    fluxes = fluxes or {}
    for el in network.permeances:
        p = differential_permeance(el, fluxes.get(el.name, 0.0))
        i, j = col[find(node_id(el.node_a))], col[find(node_id(el.node_b))]
        if i == j:
            continue
        lap[i, i] += p
        lap[j, j] += p
        lap[i, j] -= p
        lap[j, i] -= p

    # pin the port's b side, inject unit mmf-driving flux at the a side
    keep = [i for i in range(n) if i != col[port_b]]
    rhs = np.zeros(n)
    rhs[col[port_a]] = 1.0
    try:
        sol = np.linalg.solve(lap[np.ix_(keep, keep)], rhs[keep])
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"magnetic network is singular at {winding.name!r}: {exc}")
    u_a = sol[keep.index(col[port_a])]
    if u_a <= 0 or not math.isfinite(u_a):
        raise NumericalError(f"magnetic network is singular at {winding.name!r}")
    p_eq = 1.0 / u_a
    return winding.turns ** 2 * p_eq
