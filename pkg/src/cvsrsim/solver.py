"""Fixed-step implicit transient solver for hybrid electric-magnetic networks.

The unknown vector holds node potentials for both domains (grounds removed),
one branch current per voltage source, and one flux unknown per nonlinear
permeance. Each step solves the full nonlinear nodal system with damped
Newton iteration on the exact residual; the only Jacobian entries that change
between iterations are the differential mmf slopes of the nonlinear
permeances. Diode conduction states are resolved by re-solving the step until
self-consistent. Storage elements use trapezoidal or backward-Euler companion
histories carried in SystemState, so stepping is a pure function of state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .circuit import (Capacitor, CurrentSource, Diode, Inductor, Resistor,
                      Switch, VoltageSource)
from .errors import ConfigError, NetworkError, SolverError, UsageError
from .magnetics import dh_db, h_of_b

METHODS = ("trapezoidal", "backward-euler")

_GROUND = -1


@dataclass(frozen=True)
class SolverConfig:
    """Numerical settings for the fixed-step implicit integrator."""

    dt: float
    method: str = "trapezoidal"
    newton_tol: float = 1e-8
    newton_max_iter: int = 40
    max_switch_passes: int = 8
    track_energy: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not (0 < self.newton_tol < 1):
            raise ValueError(f"newton_tol must be in (0, 1), got {self.newton_tol}")
        if self.newton_max_iter < 1 or self.max_switch_passes < 1:
            raise ValueError("iteration limits must be at least 1")


@dataclass
class SystemState:
    """Complete dynamic state; stepping consumes and produces these."""

    time: float
    x: np.ndarray            # node potentials, source branch currents, fluxes
    cap_u: np.ndarray        # capacitor and linear-permeance branch drops
    cap_i: np.ndarray        # and their through currents
    ind_i: np.ndarray        # inductor currents
    ind_u: np.ndarray        # inductor branch voltages
    nl_phi: np.ndarray       # nonlinear permeance fluxes
    nl_i: np.ndarray         # their flux rates
    nl_f: np.ndarray         # their mmf drops
    gates: np.ndarray        # switch gate commands (bool)
    diode_on: np.ndarray     # diode conduction states (bool)
    ctrl: dict = field(default_factory=dict)
    p_src: float = 0.0       # instantaneous source power at `time`
    p_diss: float = 0.0
    last_power_residual: float = 0.0
    last_kcl_residual: float = 0.0
    last_newton_iters: int = 0
    last_switch_passes: int = 0

    def copy(self) -> "SystemState":
        return SystemState(
            time=self.time, x=self.x.copy(), cap_u=self.cap_u.copy(),
            cap_i=self.cap_i.copy(), ind_i=self.ind_i.copy(), ind_u=self.ind_u.copy(),
            nl_phi=self.nl_phi.copy(), nl_i=self.nl_i.copy(), nl_f=self.nl_f.copy(),
            gates=self.gates.copy(), diode_on=self.diode_on.copy(),
            ctrl=dict(self.ctrl), p_src=self.p_src, p_diss=self.p_diss,
            last_power_residual=self.last_power_residual,
            last_kcl_residual=self.last_kcl_residual,
            last_newton_iters=self.last_newton_iters,
            last_switch_passes=self.last_switch_passes)


class TimeSeries:
    """Uniformly sampled named channels with units."""

    def __init__(self, time: np.ndarray, channels: dict, units: dict):
        self.time = np.asarray(time, dtype=float)
        self.channels = {k: np.asarray(v, dtype=float) for k, v in channels.items()}
        self.units = dict(units)
        for name, arr in self.channels.items():
            if arr.shape != self.time.shape:
                raise ValueError(f"channel {name!r} length {arr.size} != time length {self.time.size}")

    def __getitem__(self, name) -> np.ndarray:
        if name == "time":
            return self.time
        try:
            return self.channels[name]
        except KeyError:
            raise KeyError(f"no channel {name!r}; have {sorted(self.channels)}")

    def __contains__(self, name):
        return name == "time" or name in self.channels

    @property
    def names(self):
        return list(self.channels)

    @property
    def n_samples(self):
        return self.time.size

    @property
    def dt(self):
        if self.time.size < 2:
            return 0.0
        return float(self.time[1] - self.time[0])

    def window(self, t_start, t_end) -> "TimeSeries":
        """Inclusive sub-series between two times."""
        mask = (self.time >= t_start - 1e-15) & (self.time <= t_end + 1e-15)
        return TimeSeries(self.time[mask],
                          {k: v[mask] for k, v in self.channels.items()}, self.units)


@dataclass(frozen=True)
class ProbeSpec:
    """Declarative description of one recorded channel."""

    name: str
    unit: str
    kind: str        # node_v | node_dv | branch_v | element_i | mag_port_v |
                     # mag_port_i | phi | dphi | ctrl | diag
    target: Optional[str] = None
    target_b: Optional[str] = None   # second node for node_dv
    domain: str = "electric"
    scale: float = 1.0


_DIAG_ATTRS = {
    "power_residual": "last_power_residual",
    "kcl_residual": "last_kcl_residual",
    "newton_iters": "last_newton_iters",
    "switch_passes": "last_switch_passes",
    "p_src": "p_src",
    "p_diss": "p_diss",
}


class Simulator:
    """Compiled form of a network for one SolverConfig."""

    def __init__(self, network, config: SolverConfig):
        problems = network.validate()
        if problems:
            raise NetworkError("invalid network: " + "; ".join(problems))
        self.net = network
        self.cfg = config
        self._compile()
        self._j_cache_sig = None
        self._j_cache = None

    # ------------------------------------------------------------- compile

    def _compile(self):
        net = self.net
        elec_names, mag_names = [], []

        def elec_idx(name):
            if name == net.elec_ground:
                return _GROUND
            if name not in self._elec_table:
                self._elec_table[name] = len(elec_names)
                elec_names.append(name)
            return self._elec_table[name]

        def mag_idx(name):
            if name == net.mag_ground:
                return _GROUND
            if name not in self._mag_table:
                self._mag_table[name] = len(mag_names)
                mag_names.append(name)
            return self._mag_table[name]

        self._elec_table = {}
        self._mag_table = {}

        res_a, res_b, res_g, res_mag = [], [], [], []
        sw_a, sw_b, sw_gon, sw_goff = [], [], [], []
        di_a, di_b, di_gon, di_goff, di_vf = [], [], [], [], []
        cap_a, cap_b, cap_c, cap_mag = [], [], [], []
        ind_a, ind_b, ind_l = [], [], []
        vs_a, vs_b, vs_fn = [], [], []
        cs_a, cs_b, cs_fn = [], [], []
        gy_ea, gy_eb, gy_ma, gy_mb, gy_g = [], [], [], [], []
        self.nl_elements = []
        self._where = {}

        for el in net.electric:
            if isinstance(el, Resistor):
                self._where[el.name] = ("res", len(res_a))
                res_a.append(elec_idx(el.node_a)); res_b.append(elec_idx(el.node_b))
                res_g.append(1.0 / el.ohms); res_mag.append(False)
            elif isinstance(el, Switch):
                self._where[el.name] = ("sw", len(sw_a))
                sw_a.append(elec_idx(el.node_a)); sw_b.append(elec_idx(el.node_b))
                sw_gon.append(1.0 / el.r_on); sw_goff.append(el.g_off)
            elif isinstance(el, Diode):
                self._where[el.name] = ("di", len(di_a))
                di_a.append(elec_idx(el.node_a)); di_b.append(elec_idx(el.node_b))
                di_gon.append(1.0 / el.r_on); di_goff.append(el.g_off); di_vf.append(el.v_fwd)
            elif isinstance(el, Capacitor):
                self._where[el.name] = ("cap", len(cap_a))
                cap_a.append(elec_idx(el.node_a)); cap_b.append(elec_idx(el.node_b))
                cap_c.append(el.farad); cap_mag.append(False)
            elif isinstance(el, Inductor):
                self._where[el.name] = ("ind", len(ind_a))
                ind_a.append(elec_idx(el.node_a)); ind_b.append(elec_idx(el.node_b))
                ind_l.append(el.henry)
            elif isinstance(el, VoltageSource):
                self._where[el.name] = ("vs", len(vs_a))
                vs_a.append(elec_idx(el.node_a)); vs_b.append(elec_idx(el.node_b))
                vs_fn.append(el.waveform)
            elif isinstance(el, CurrentSource):
                self._where[el.name] = ("cs", len(cs_a))
                cs_a.append(elec_idx(el.node_a)); cs_b.append(elec_idx(el.node_b))
                cs_fn.append(el.waveform)
            else:
                raise NetworkError(f"unsupported electric element {type(el).__name__}")

        for el in net.hysteresis:
            if el.r_mag <= 0:
                raise NetworkError(
                    f"hysteresis {el.name!r} with r_mag=0 must be omitted, not added")
            self._where[el.name] = ("res", len(res_a))
            res_a.append(mag_idx(el.node_a)); res_b.append(mag_idx(el.node_b))
            res_g.append(1.0 / el.r_mag); res_mag.append(True)

        for el in net.permeances:
            if el.kind == "nonlinear-core":
                self._where[el.name] = ("nl", len(self.nl_elements))
                self.nl_elements.append((mag_idx(el.node_a), mag_idx(el.node_b), el))
            else:
                self._where[el.name] = ("cap", len(cap_a))
                cap_a.append(mag_idx(el.node_a)); cap_b.append(mag_idx(el.node_b))
                cap_c.append(el.permeance); cap_mag.append(True)

        for gy in net.gyrators:
            self._where[gy.name] = ("gy", len(gy_ea))
            gy_ea.append(elec_idx(gy.elec_a)); gy_eb.append(elec_idx(gy.elec_b))
            gy_ma.append(mag_idx(gy.mag_a)); gy_mb.append(mag_idx(gy.mag_b))
            gy_g.append(gy.gyration_conductance)

        self.n_elec = len(elec_names)
        n_nodes = self.n_elec + len(mag_names)
        self.n_nodes = n_nodes
        self.n_vs = len(vs_a)
        self.n_nl = len(self.nl_elements)
        self.n_unknowns = n_nodes + self.n_vs + self.n_nl
        self.vs_offset = n_nodes
        self.phi_offset = n_nodes + self.n_vs

        def node(idx, magnetic=False):
            # ground maps to the appended zero entry of the gathered vector
            if idx == _GROUND:
                return n_nodes
            return idx + self.n_elec if magnetic else idx

        def arr(v, magnetic=False):
            return np.array([node(i, magnetic) for i in v], dtype=int)

        def arr_mixed(v, flags):
            return np.array([node(i, m) for i, m in zip(v, flags)], dtype=int)

        self.res_a = arr_mixed(res_a, res_mag)
        self.res_b = arr_mixed(res_b, res_mag)
        self.res_g = np.array(res_g)
        self.sw_a, self.sw_b = arr(sw_a), arr(sw_b)
        self.sw_gon, self.sw_goff = np.array(sw_gon), np.array(sw_goff)
        self.di_a, self.di_b = arr(di_a), arr(di_b)
        self.di_gon, self.di_goff, self.di_vf = np.array(di_gon), np.array(di_goff), np.array(di_vf)
        self.ind_a, self.ind_b = arr(ind_a), arr(ind_b)
        self.ind_l = np.array(ind_l)
        self.vs_a, self.vs_b = arr(vs_a), arr(vs_b)
        self.vs_fn = vs_fn
        self.cs_a, self.cs_b = arr(cs_a), arr(cs_b)
        self.cs_fn = cs_fn
        self.gy_ea, self.gy_eb = arr(gy_ea), arr(gy_eb)
        self.gy_ma, self.gy_mb = arr(gy_ma, True), arr(gy_mb, True)
        self.gy_g = np.array(gy_g)
        self.nl_a = np.array([node(a, True) for a, _, _ in self.nl_elements], dtype=int)
        self.nl_b = np.array([node(b, True) for _, b, _ in self.nl_elements], dtype=int)
        self.nl_rows = self.phi_offset + np.arange(self.n_nl)
        self.nl_cols = self.nl_rows.copy()
        self.cap_a = arr_mixed(cap_a, cap_mag)
        self.cap_b = arr_mixed(cap_b, cap_mag)
        self.cap_c = np.array(cap_c)

        self._companions()
        self._base_matrix()
        self._scatter_plans()

    def _companions(self):
        dt = self.cfg.dt
        if self.cfg.method == "trapezoidal":
            self.k_cap = 2.0 / dt * self.cap_c if self.cap_c.size else self.cap_c
            self.k_ind = dt / (2.0 * self.ind_l) if self.ind_l.size else self.ind_l
            self.k_phi = 2.0 / dt
            self.trapezoidal = True
        else:
            self.k_cap = self.cap_c / dt if self.cap_c.size else self.cap_c
            self.k_ind = dt / self.ind_l if self.ind_l.size else self.ind_l
            self.k_phi = 1.0 / dt
            self.trapezoidal = False

    def _stamp(self, J, a, b, g):
        n = self.n_nodes
        if a < n:
            J[a, a] += g
        if b < n:
            J[b, b] += g
        if a < n and b < n:
            J[a, b] -= g
            J[b, a] -= g

    def _base_matrix(self):
        n = self.n_nodes
        J = np.zeros((self.n_unknowns, self.n_unknowns))
        for a, b, g in zip(self.res_a, self.res_b, self.res_g):
            self._stamp(J, a, b, g)
        for a, b, g in zip(self.cap_a, self.cap_b, self.k_cap):
            self._stamp(J, a, b, g)
        for a, b, g in zip(self.ind_a, self.ind_b, self.k_ind):
            self._stamp(J, a, b, g)
        for ea, eb, ma, mb, g in zip(self.gy_ea, self.gy_eb, self.gy_ma, self.gy_mb, self.gy_g):
            # i_elec(ea->eb) = -g*(v_ma - v_mb); i_mag(ma->mb) = +g*(v_ea - v_eb)
            for row, col, val in ((ea, ma, -g), (ea, mb, +g), (eb, ma, +g), (eb, mb, -g),
                                  (ma, ea, +g), (ma, eb, -g), (mb, ea, -g), (mb, eb, +g)):
                if row < n and col < n:
                    J[row, col] += val
        for j, (a, b) in enumerate(zip(self.vs_a, self.vs_b)):
            row = self.vs_offset + j
            if a < n:
                J[a, row] += 1.0
                J[row, a] += 1.0
            if b < n:
                J[b, row] -= 1.0
                J[row, b] -= 1.0
        for j, (a, b) in enumerate(zip(self.nl_a, self.nl_b)):
            row = self.phi_offset + j
            if a < n:
                J[a, row] += self.k_phi
                J[row, a] -= 1.0
            if b < n:
                J[b, row] -= self.k_phi
                J[row, b] += 1.0
        self.J0 = J

    def _scatter_plans(self):
        plans = {}
        for key, (a, b) in {
            "res": (self.res_a, self.res_b), "sw": (self.sw_a, self.sw_b),
            "di": (self.di_a, self.di_b), "cap": (self.cap_a, self.cap_b),
            "ind": (self.ind_a, self.ind_b), "vs": (self.vs_a, self.vs_b),
            "cs": (self.cs_a, self.cs_b), "gye": (self.gy_ea, self.gy_eb),
            "gym": (self.gy_ma, self.gy_mb), "nl": (self.nl_a, self.nl_b),
        }.items():
            n = self.n_nodes
            sel_a = np.nonzero(a < n)[0]
            sel_b = np.nonzero(b < n)[0]
            plans[key] = (a[sel_a], sel_a, b[sel_b], sel_b)
        self._plans = plans

    # --------------------------------------------------------------- state

    def make_state(self) -> SystemState:
        return SystemState(
            time=0.0, x=np.zeros(self.n_unknowns),
            cap_u=np.zeros(self.cap_c.size), cap_i=np.zeros(self.cap_c.size),
            ind_i=np.zeros(self.ind_l.size), ind_u=np.zeros(self.ind_l.size),
            nl_phi=np.zeros(self.n_nl), nl_i=np.zeros(self.n_nl), nl_f=np.zeros(self.n_nl),
            gates=np.zeros(self.sw_gon.size, dtype=bool),
            diode_on=np.zeros(self.di_gon.size, dtype=bool))

    # ------------------------------------------------------------ residual

    def _residual(self, x, state, E, I):
        """Exact nodal residual, its row scales, and per-group currents."""
        n = self.n_nodes
        v = np.empty(n + 1)
        v[:n] = x[:n]
        v[n] = 0.0
        f = np.zeros(self.n_unknowns)
        s = np.zeros(self.n_unknowns)
        aux = {}
        plans = self._plans

        def scatter(key, i):
            ra, sa, rb, sb = plans[key]
            if ra.size:
                np.add.at(f, ra, i[sa])
                np.add.at(s, ra, np.abs(i[sa]))
            if rb.size:
                np.subtract.at(f, rb, i[sb])
                np.add.at(s, rb, np.abs(i[sb]))

        u = v[self.res_a] - v[self.res_b]
        i = self.res_g * u
        aux["res"] = (u, i)
        scatter("res", i)

        if self.sw_gon.size:
            g = np.where(state.gates, self.sw_gon, self.sw_goff)
            u = v[self.sw_a] - v[self.sw_b]
            i = g * u
            aux["sw"] = (u, i)
            scatter("sw", i)

        if self.di_gon.size:
            u = v[self.di_a] - v[self.di_b]
            i = np.where(state.diode_on, (u - self.di_vf) * self.di_gon, u * self.di_goff)
            aux["di"] = (u, i)
            scatter("di", i)

        if self.cap_c.size:
            u = v[self.cap_a] - v[self.cap_b]
            if self.trapezoidal:
                i = self.k_cap * (u - state.cap_u) - state.cap_i
            else:
                i = self.k_cap * (u - state.cap_u)
            aux["cap"] = (u, i)
            scatter("cap", i)

        if self.ind_l.size:
            u = v[self.ind_a] - v[self.ind_b]
            if self.trapezoidal:
                i = state.ind_i + self.k_ind * (u + state.ind_u)
            else:
                i = state.ind_i + self.k_ind * u
            aux["ind"] = (u, i)
            scatter("ind", i)

        if self.gy_g.size:
            ue = v[self.gy_ea] - v[self.gy_eb]
            um = v[self.gy_ma] - v[self.gy_mb]
            ie = -self.gy_g * um
            im = self.gy_g * ue
            aux["gye"] = (ue, ie)
            aux["gym"] = (um, im)
            scatter("gye", ie)
            scatter("gym", im)

        if self.n_vs:
            i = x[self.vs_offset:self.vs_offset + self.n_vs]
            uv = v[self.vs_a] - v[self.vs_b]
            aux["vs"] = (uv, i.copy())
            scatter("vs", i)
            rows = self.vs_offset + np.arange(self.n_vs)
            f[rows] = uv - E
            s[rows] = np.abs(uv) + np.abs(E)

        if self.cs_fn:
            i = -I  # injects I into node_a, so the a->b through current is -I
            uc = v[self.cs_a] - v[self.cs_b]
            aux["cs"] = (uc, i)
            scatter("cs", i)

        if self.n_nl:
            phi = x[self.phi_offset:]
            if self.trapezoidal:
                i = self.k_phi * (phi - state.nl_phi) - state.nl_i
            else:
                i = self.k_phi * (phi - state.nl_phi)
            um = v[self.nl_a] - v[self.nl_b]
            F = np.empty(self.n_nl)
            dF = np.empty(self.n_nl)
            for j, (_, _, el) in enumerate(self.nl_elements):
                b = phi[j] / el.area
                F[j] = h_of_b(el.material, b) * el.length
                dF[j] = dh_db(el.material, b) * el.length / el.area
            aux["nl"] = (um, i, phi.copy(), F, dF)
            scatter("nl", i)
            f[self.nl_rows] = F - um
            s[self.nl_rows] = np.abs(F) + np.abs(um)

        return f, s, aux

    def _metric(self, f, s):
        return float(np.max(np.abs(f) / (s + 1.0))) if f.size else 0.0

    # ------------------------------------------------------------ jacobian

    def _state_matrix(self, state):
        sig = (state.gates.tobytes(), state.diode_on.tobytes())
        if sig != self._j_cache_sig:
            J = self.J0.copy()
            if self.sw_gon.size:
                g = np.where(state.gates, self.sw_gon, self.sw_goff)
                for a, b, gv in zip(self.sw_a, self.sw_b, g):
                    self._stamp(J, a, b, gv)
            if self.di_gon.size:
                g = np.where(state.diode_on, self.di_gon, self.di_goff)
                for a, b, gv in zip(self.di_a, self.di_b, g):
                    self._stamp(J, a, b, gv)
            self._j_cache_sig = sig
            self._j_cache = J
        return self._j_cache

    # -------------------------------------------------------------- newton

    def _newton(self, state, t_new):
        cfg = self.cfg
        E = np.array([fn(t_new) for fn in self.vs_fn]) if self.vs_fn else np.empty(0)
        I = np.array([fn(t_new) for fn in self.cs_fn]) if self.cs_fn else np.empty(0)
        x = state.x.copy()
        f, s, aux = self._residual(x, state, E, I)
        m = self._metric(f, s)
        iters = 0
        while m > cfg.newton_tol:
            if iters >= cfg.newton_max_iter:
                raise SolverError("Newton iteration did not converge",
                                  time=t_new, iterations=iters, residual=m)
            J = self._state_matrix(state).copy()
            if self.n_nl:
                J[self.nl_rows, self.nl_cols] = aux["nl"][4]
            try:
                dx = np.linalg.solve(J, -f)
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"linear solve failed: {exc}", time=t_new, iterations=iters)
            alpha = 1.0
            for _ in range(6):
                xt = x + alpha * dx
                ft, st, auxt = self._residual(xt, state, E, I)
                mt = self._metric(ft, st)
                if mt < m or mt <= cfg.newton_tol:
                    break
                alpha *= 0.5
            x, f, s, aux, m = xt, ft, st, auxt, mt
            iters += 1
        return x, aux, iters, m

    def _diode_flips(self, state, aux):
        if not self.di_gon.size or "di" not in aux:
            return False
        u, i = aux["di"]
        on = state.diode_on
        turn_on = ~on & (u > self.di_vf)
        turn_off = on & (i < 0.0)
        flips = turn_on | turn_off
        if flips.any():
            state.diode_on = on ^ flips
            return True
        return False

    # -------------------------------------------------------------- stepping

    def advance(self, state: SystemState, t_new: float):
        """Advance state in place to t_new (one step of cfg.dt)."""
        passes = 0
        while True:
            x, aux, iters, m = self._newton(state, t_new)
            if not self._diode_flips(state, aux):
                break
            passes += 1
            if passes > self.cfg.max_switch_passes:
                raise SolverError("conduction states did not settle",
                                  time=t_new, iterations=iters, residual=m)
        self._commit(state, x, aux, t_new, iters, m, passes)

    def _commit(self, state, x, aux, t_new, iters, m, passes):
        dt = self.cfg.dt
        cap_u, cap_i = aux.get("cap", (state.cap_u, state.cap_i))
        ind_u, ind_i = aux["ind"] if "ind" in aux else (state.ind_u, state.ind_i)
        if self.cfg.track_energy:
            p_src = 0.0
            if "vs" in aux:
                u, i = aux["vs"]
                p_src -= float(u @ i)
            if "cs" in aux:
                u, i = aux["cs"]
                p_src -= float(u @ i)
            p_diss = 0.0
            for key in ("res", "sw", "di"):
                if key in aux:
                    u, i = aux[key]
                    p_diss += float(u @ i)
            de = 0.0
            if self.cap_c.size:
                de += float(np.sum(0.5 * self.cap_c * (cap_u ** 2 - state.cap_u ** 2)))
            if self.ind_l.size:
                de += float(np.sum(0.5 * self.ind_l * (ind_i ** 2 - state.ind_i ** 2)))
            if self.n_nl:
                _, _, phi, F, _ = aux["nl"]
                de += float(np.sum(0.5 * (F + state.nl_f) * (phi - state.nl_phi)))
            e_src = 0.5 * dt * (state.p_src + p_src)
            e_diss = 0.5 * dt * (state.p_diss + p_diss)
            state.last_power_residual = (e_src - e_diss - de) / dt
            state.p_src = p_src
            state.p_diss = p_diss
        if self.cap_c.size:
            state.cap_u = cap_u
            state.cap_i = cap_i
        if self.ind_l.size:
            state.ind_u = ind_u
            state.ind_i = ind_i
        if self.n_nl:
            _, nl_i, phi, F, _ = aux["nl"]
            state.nl_phi = phi
            state.nl_i = nl_i
            state.nl_f = F
        state.x = x
        state.time = t_new
        state.last_newton_iters = iters
        state.last_kcl_residual = m
        state.last_switch_passes = passes

    # --------------------------------------------------------------- probes

    def switch_index(self, name):
        kind, j = self._where[name]
        if kind != "sw":
            raise UsageError(f"{name!r} is not a switch")
        return j

    def node_index(self, name, domain="electric"):
        if domain == "electric":
            if name == self.net.elec_ground:
                return self.n_nodes
            return self._elec_table[name]
        if name == self.net.mag_ground:
            return self.n_nodes
        return self._mag_table[name] + self.n_elec

    def _element_ports(self, name):
        kind, j = self._where[name]
        table = {"res": (self.res_a, self.res_b), "sw": (self.sw_a, self.sw_b),
                 "di": (self.di_a, self.di_b), "cap": (self.cap_a, self.cap_b),
                 "ind": (self.ind_a, self.ind_b), "vs": (self.vs_a, self.vs_b),
                 "cs": (self.cs_a, self.cs_b), "gy": (self.gy_ea, self.gy_eb),
                 "nl": (self.nl_a, self.nl_b)}
        a, b = table[kind]
        return kind, j, int(a[j]), int(b[j])

    def bind_probe(self, spec: ProbeSpec) -> Callable:
        """Compile a ProbeSpec into fn(state, v_full) -> float."""
        k = spec.scale
        if spec.kind == "node_v":
            idx = self.node_index(spec.target, spec.domain)
            return lambda st, v: k * v[idx]
        if spec.kind == "node_dv":
            ia = self.node_index(spec.target, spec.domain)
            ib = self.node_index(spec.target_b, spec.domain)
            return lambda st, v: k * (v[ia] - v[ib])
        if spec.kind == "ctrl":
            key = spec.target
            return lambda st, v: k * st.ctrl.get(key, 0.0)
        if spec.kind == "diag":
            try:
                attr = _DIAG_ATTRS[spec.target]
            except KeyError:
                raise UsageError(f"unknown diagnostic {spec.target!r}; "
                                 f"have {sorted(_DIAG_ATTRS)}")
            return lambda st, v: k * getattr(st, attr)
        kind, j, a, b = self._element_ports(spec.target)
        if spec.kind == "branch_v":
            return lambda st, v: k * (v[a] - v[b])
        if spec.kind == "mag_port_v":
            if kind != "gy":
                raise UsageError(f"{spec.target!r} is not a gyrator")
            ma, mb = int(self.gy_ma[j]), int(self.gy_mb[j])
            return lambda st, v: k * (v[ma] - v[mb])
        if spec.kind == "mag_port_i":
            if kind != "gy":
                raise UsageError(f"{spec.target!r} is not a gyrator")
            g = self.gy_g[j]
            return lambda st, v: k * g * (v[a] - v[b])
        if spec.kind == "phi":
            if kind == "nl":
                return lambda st, v: k * st.nl_phi[j]
            if kind == "cap":
                c = self.cap_c[j]
                return lambda st, v: k * c * (v[a] - v[b])
            raise UsageError(f"{spec.target!r} stores no flux")
        if spec.kind == "dphi":
            if kind == "nl":
                return lambda st, v: k * st.nl_i[j]
            if kind == "cap":
                return lambda st, v: k * st.cap_i[j]
            raise UsageError(f"{spec.target!r} stores no flux")
        if spec.kind == "element_i":
            if kind == "res":
                g = self.res_g[j]
                return lambda st, v: k * g * (v[a] - v[b])
            if kind == "sw":
                gon, goff = self.sw_gon[j], self.sw_goff[j]
                return lambda st, v: k * (v[a] - v[b]) * (gon if st.gates[j] else goff)
            if kind == "di":
                gon, goff, vf = self.di_gon[j], self.di_goff[j], self.di_vf[j]
                return lambda st, v: (k * ((v[a] - v[b]) - vf) * gon if st.diode_on[j]
                                      else k * (v[a] - v[b]) * goff)
            if kind == "cap":
                return lambda st, v: k * st.cap_i[j]
            if kind == "ind":
                return lambda st, v: k * st.ind_i[j]
            if kind == "vs":
                row = self.vs_offset + j
                return lambda st, v: k * st.x[row]
            if kind == "cs":
                fn = self.cs_fn[j]
                return lambda st, v: k * fn(st.time)
            if kind == "gy":
                ma, mb = int(self.gy_ma[j]), int(self.gy_mb[j])
                g = self.gy_g[j]
                return lambda st, v: -k * g * (v[ma] - v[mb])
            if kind == "nl":
                return lambda st, v: k * st.nl_i[j]
        raise UsageError(f"cannot bind probe kind {spec.kind!r} to {spec.target!r}")

    def gathered_potentials(self, state):
        v = np.empty(self.n_nodes + 1)
        v[:self.n_nodes] = state.x[:self.n_nodes]
        v[self.n_nodes] = 0.0
        return v


def _step_count(duration, dt):
    if duration < 0:
        raise ConfigError(f"duration must be nonnegative, got {duration}")
    n = int(round(duration / dt))
    if abs(n * dt - duration) > 1e-9 * max(dt, duration, 1e-30):
        raise ConfigError(f"duration {duration} is not an integer multiple of dt {dt}")
    return n


def initial_state(network, config: SolverConfig) -> SystemState:
    """All-zero state sized for the network."""
    return Simulator(network, config).make_state()


def step(network, state: SystemState, config: SolverConfig) -> SystemState:
    """One dt advance, returning the next state; the input is not mutated."""
    sim = Simulator(network, config)
    out = state.copy()
    for ctrl in network.controls:
        ctrl.bind(sim)
        ctrl.before_step(out.time, config.dt, out)
    sim.advance(out, out.time + config.dt)
    return out


def run(network, state: SystemState, config: SolverConfig, duration: float,
        probes: Sequence[ProbeSpec] = ()) -> TimeSeries:
    """Integrate for `duration` seconds, recording probes at every step.

    The returned series includes the initial sample, so it has
    duration/dt + 1 rows. The caller's state object is not mutated.
    """
    sim = Simulator(network, config)
    n = _step_count(duration, config.dt)
    st = state.copy()
    bound = [(p.name, p.unit, sim.bind_probe(p)) for p in probes]
    for ctrl in network.controls:
        ctrl.bind(sim)
    buf = np.empty((n + 1, len(bound)))
    v = sim.gathered_potentials(st)
    for col, (_, _, fn) in enumerate(bound):
        buf[0, col] = fn(st, v)
    dt = config.dt
    for k in range(n):
        t = k * dt
        for ctrl in network.controls:
            ctrl.before_step(t, dt, st)
        sim.advance(st, (k + 1) * dt)
        v = sim.gathered_potentials(st)
        for col, (_, _, fn) in enumerate(bound):
            buf[k + 1, col] = fn(st, v)
    time = np.arange(n + 1) * dt
    channels = {name: buf[:, col].copy() for col, (name, _, _) in enumerate(bound)}
    units = {name: unit for name, unit, _ in bound}
    return TimeSeries(time, channels, units)
