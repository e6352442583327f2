"""Time-domain simulation: classical swing dynamics over the static network.

Generators are constant-voltage-behind-transient-reactance sources entered as
Norton equivalents, loads are constant admittances frozen at the solved
operating point, and battery units inject constant power between steps. The
swing states integrate with fixed-step RK4; the converter lag, the measured
bus frequency, and the battery state of charge advance once per step.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .bess import BessParams, BessState, bess_step, initial_state
from .grid import PowerSystemCase, OperatingPoint, build_ybus

FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAX_ITER = 20

_CHANNEL_RE = re.compile(r"^(delta_g|omega_g|freq_b|pbess_b)(\d+)$")


class SimulationError(RuntimeError):
    pass


class ChannelError(KeyError):
    pass


class _FixedPointDiverged(Exception):
    pass


@dataclass(frozen=True)
class Disturbance:
    """Temporary shunt fault, active on [t_on, t_off).

    ``target`` is a bus id for kind "bus_fault", or a [from_bus, to_bus] pair
    for kind "branch_fault" (the fault admittance lands at the branch's
    from-bus terminal; the branch stays in service).
    """

    kind: str
    target: object
    t_on: float
    t_off: float
    fault_admittance: complex = 1e4 - 1e4j

    def __post_init__(self):
        if self.kind not in ("bus_fault", "branch_fault"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.t_on < 0 or self.t_off <= self.t_on:
            raise ValueError("need 0 <= t_on < t_off")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.005
    t_end: float = 20.0
    tf: float = 0.05              # bus-frequency low-pass time constant
    record: tuple = ()            # channel names; empty -> sensible default

    def __post_init__(self):
        if self.dt <= 0 or self.t_end < self.dt:
            raise ValueError("need dt > 0 and t_end >= dt")
        if self.tf < 0:
            raise ValueError("tf must be non-negative")


@dataclass
class TraceSet:
    """Uniformly sampled named channels sharing one time axis."""

    t: np.ndarray
    channels: dict = field(default_factory=dict)

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise ChannelError(f"trace has no channel {name!r}; "
                               f"have {sorted(self.channels)}") from None

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def write_csv(self, path):
        names = list(self.channels)
        data = np.column_stack([self.t] + [self.channels[n] for n in names])
        header = ",".join(["t"] + names)
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for row in data:
                fh.write(",".join(f"{x:.9g}" for x in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "TraceSet":
        with open(path) as fh:
            names = fh.readline().strip().split(",")
        if not names or names[0] != "t":
            raise ValueError(f"{path}: first CSV column must be t")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(t=data[:, 0],
                   channels={n: data[:, i + 1] for i, n in enumerate(names[1:])})


def wrap_angle(x):
    """Wrap to (-pi, pi]."""
    return -((-x + math.pi) % (2.0 * math.pi) - math.pi)


def bus_frequency(theta: np.ndarray, dt: float, f_sys: float,
                  tf: float = 0.05) -> np.ndarray:
    """Per-unit frequency deviation from sampled voltage angles.

    Backward difference of the unwrapped angle divided by the synchronous
    speed, then a first-order low-pass with time constant ``tf``. The first
    sample is 0 by convention.
    """
    theta = np.unwrap(np.asarray(theta, dtype=float))
    w_s = 2.0 * math.pi * f_sys
    raw = np.zeros(theta.size)
    raw[1:] = np.diff(theta) / dt / w_s
    alpha = math.exp(-dt / tf) if tf > 0 else 0.0
    out = np.zeros(theta.size)
    acc = 0.0
    for k in range(1, theta.size):
        acc = alpha * acc + (1.0 - alpha) * raw[k]
        out[k] = acc
    return out


def network_solve(ybus_eff: np.ndarray, current_sources: np.ndarray,
                  bess_power: dict | None = None,
                  tol: float = FIXED_POINT_TOL,
                  max_iter: int = FIXED_POINT_MAX_ITER) -> np.ndarray:
    """Bus voltages for fixed current sources plus constant-power injections.

    ``bess_power`` maps bus position -> real power injection (p.u.). The
    linear system is solved once; constant-power injections are folded in by
    fixed-point iteration on the injected currents.
    """
    lu = lu_factor(ybus_eff)
    v_lin = lu_solve(lu, current_sources)
    if not bess_power:
        return v_lin
    b_idx = np.array(sorted(bess_power), dtype=int)
    s_b = np.array([complex(bess_power[i]) for i in b_idx])
    if not np.any(s_b):
        return v_lin
    unit = np.zeros((ybus_eff.shape[0], b_idx.size), dtype=complex)
    unit[b_idx, np.arange(b_idx.size)] = 1.0
    z_cols = lu_solve(lu, unit)
    try:
        v_b, i_b = _bess_fixed_point(v_lin[b_idx], z_cols[b_idx, :], s_b, tol,
                                     max_iter)
    except _FixedPointDiverged:
        raise SimulationError(
            "constant-power injection iteration did not converge") from None
    return v_lin + z_cols @ i_b


def _bess_fixed_point(v_lin_b, z_bb, s_b, tol=FIXED_POINT_TOL,
                      max_iter=FIXED_POINT_MAX_ITER):
    """Iterate battery-bus voltages under constant-power injection."""
    v_b = v_lin_b.copy()
    for _ in range(max_iter):
        i_b = np.conj(s_b / v_b)
        v_new = v_lin_b + z_bb @ i_b
        if np.max(np.abs(v_new - v_b)) < tol:
            return v_new, i_b
        v_b = v_new
    raise _FixedPointDiverged


# ----------------------------------------------------------------- contexts

class _Network:
    """One admittance variant (healthy or faulted), prefactored."""

    def __init__(self, ybus_eff, bess_pos):
        try:
            self.lu = lu_factor(ybus_eff)
        except np.linalg.LinAlgError as exc:
            raise SimulationError(f"effective network matrix is singular: {exc}")
        n = ybus_eff.shape[0]
        if bess_pos.size:
            unit = np.zeros((n, bess_pos.size), dtype=complex)
            unit[bess_pos, np.arange(bess_pos.size)] = 1.0
            self.z_cols = lu_solve(self.lu, unit)
            self.z_bb = self.z_cols[bess_pos, :]
        else:
            self.z_cols = None
            self.z_bb = None

    def solve(self, i_inj, s_bess, bess_pos):
        """Full voltage vector; skips the fixed point for a powerless fleet."""
        v_lin = lu_solve(self.lu, i_inj, check_finite=False)
        if self.z_cols is None or not np.any(s_bess):
            return v_lin
        _, i_b = _bess_fixed_point(v_lin[bess_pos], self.z_bb, s_bess)
        return v_lin + self.z_cols @ i_b

    def solve_at(self, i_inj, s_bess, bess_pos, want_pos):
        """Voltages at selected positions only (inner integration loop)."""
        v_lin = lu_solve(self.lu, i_inj, check_finite=False)
        if self.z_cols is None or not np.any(s_bess):
            return v_lin[want_pos]
        _, i_b = _bess_fixed_point(v_lin[bess_pos], self.z_bb, s_bess)
        return v_lin[want_pos] + self.z_cols[want_pos, :] @ i_b


def _split_bus_power(case, op):
    """Apportion each bus's net generation among its machines."""
    idx = case.bus_index()
    load = np.zeros(case.n_bus, dtype=complex)
    for ld in case.loads:
        load[idx[ld.bus]] += complex(ld.p, ld.q)
    s_gen_bus = op.injections + load
    shares = []
    for g in case.generators:
        at_bus = [gg for gg in case.generators if gg.bus == g.bus]
        total_p = sum(abs(gg.p_set) for gg in at_bus)
        w = abs(g.p_set) / total_p if total_p > 0 else 1.0 / len(at_bus)
        shares.append(w * s_gen_bus[idx[g.bus]])
    return np.array(shares)


def default_channels(case: PowerSystemCase, fleet) -> tuple:
    names = [f"delta_g{i + 1}" for i in range(len(case.generators))]
    for u in fleet:
        names += [f"freq_b{u.bus}", f"pbess_b{u.bus}"]
    return tuple(names)


def simulate(case: PowerSystemCase, op: OperatingPoint, fleet,
             disturbance: Disturbance, cfg: SimConfig) -> TraceSet:
    """Integrate the disturbed system and record the requested channels.

    ``fleet`` is a sequence of BessParams. Channel names: ``delta_g<i>`` /
    ``omega_g<i>`` (rotor angle rad / speed deviation p.u. of machine i,
    1-based case order), ``freq_b<bus>`` (filtered bus frequency deviation),
    ``pbess_b<bus>`` (battery power, needs a unit at that bus).
    """
    fleet = list(fleet)
    idx = case.bus_index()
    n = case.n_bus
    n_gen = len(case.generators)
    w_s = 2.0 * math.pi * case.freq_hz
    s_base_mw = case.base_mva

    for u in fleet:
        if u.bus not in idx:
            raise SimulationError(f"battery references missing bus {u.bus}")

    # machine internal sources from the operating point
    gen_pos = np.array([idx[g.bus] for g in case.generators], dtype=int)
    xdp = np.array([g.xdp for g in case.generators])
    h2 = 2.0 * np.array([g.h for g in case.generators])
    damp = np.array([g.d for g in case.generators])
    s_gen = _split_bus_power(case, op)
    v_t0 = op.v[gen_pos]
    i_g0 = np.conj(s_gen / v_t0)
    e0 = v_t0 + 1j * xdp * i_g0
    emag = np.abs(e0)
    delta0 = np.angle(e0)
    y_norton = 1.0 / (1j * xdp)

    # constant-admittance loads at the solved voltages
    y_load = np.zeros(n, dtype=complex)
    for ld in case.loads:
        i = idx[ld.bus]
        y_load[i] += complex(ld.p, -ld.q) / abs(op.v[i]) ** 2

    y_eff = build_ybus(case)
    y_eff[np.arange(n), np.arange(n)] += y_load
    np.add.at(y_eff, (gen_pos, gen_pos), y_norton)

    y_fault = y_eff.copy()
    f_pos = _fault_position(case, disturbance, idx)
    y_fault[f_pos, f_pos] += complex(disturbance.fault_admittance)

    bess_pos = np.array([idx[u.bus] for u in fleet], dtype=int)
    healthy = _Network(y_eff, bess_pos)
    faulted = _Network(y_fault, bess_pos)

    # frequency measurement points: fleet buses plus requested freq channels
    record = tuple(cfg.record) if cfg.record else default_channels(case, fleet)
    freq_buses = sorted({u.bus for u in fleet}
                        | {int(m.group(2)) for m in map(_CHANNEL_RE.match, record)
                           if m and m.group(1) == "freq_b"})
    missing = [b for b in freq_buses if b not in idx]
    if missing:
        raise ChannelError(f"frequency channel buses not in the case: {missing}")
    freq_pos = np.array([idx[b] for b in freq_buses], dtype=int)
    freq_slot = {b: i for i, b in enumerate(freq_buses)}
    unit_slot = [freq_slot[u.bus] for u in fleet]

    want_pos = np.concatenate([gen_pos, bess_pos]).astype(int)
    gen_sel = np.arange(n_gen)
    bess_sel = np.arange(n_gen, n_gen + len(fleet))

    def derivatives(delta, dw, net, s_bess):
        e = emag * np.exp(1j * delta)
        i_inj = np.zeros(n, dtype=complex)
        np.add.at(i_inj, gen_pos, e * y_norton)
        v_sel = net.solve_at(i_inj, s_bess, bess_pos, want_pos)
        pe = (e * np.conj((e - v_sel[gen_sel]) * y_norton)).real
        return w_s * dw, (pm - pe - damp * dw) / h2, pe

    # mechanical power balances the simulator's own electrical power at t=0,
    # so the converged power-flow residual cannot drift the speeds
    pm = np.zeros(n_gen)
    zero_s = np.zeros(len(fleet), dtype=complex)
    _, _, pe0 = derivatives(delta0, np.zeros(n_gen), healthy, zero_s)
    pm = pe0

    n_steps = int(round(cfg.t_end / cfg.dt))
    dt = cfg.dt
    k_on = int(round(disturbance.t_on / dt))
    k_off = int(round(disturbance.t_off / dt))
    if k_off <= k_on:
        k_off = k_on + 1

    alpha = math.exp(-dt / cfg.tf) if cfg.tf > 0 else 0.0

    delta = delta0.copy()
    dw = np.zeros(n_gen)
    states = [initial_state(u) for u in fleet]
    s_bess = np.zeros(len(fleet), dtype=complex)
    dwf = np.zeros(len(freq_buses))
    theta_prev = np.angle(op.v[freq_pos]) if freq_pos.size else np.zeros(0)

    samplers = _build_samplers(case, fleet, record, freq_slot)
    out = {name: np.zeros(n_steps + 1) for name in record}
    t_axis = np.arange(n_steps + 1) * dt

    def sample(k):
        for name, fn in samplers:
            out[name][k] = fn(delta, dw, states, dwf)

    sample(0)

    def rk4(delta, dw, net, step):
        d1, w1, _ = derivatives(delta, dw, net, s_bess)
        d2, w2, _ = derivatives(delta + 0.5 * step * d1, dw + 0.5 * step * w1,
                                net, s_bess)
        d3, w3, _ = derivatives(delta + 0.5 * step * d2, dw + 0.5 * step * w2,
                                net, s_bess)
        d4, w4, _ = derivatives(delta + step * d3, dw + step * w3, net, s_bess)
        return (delta + step / 6.0 * (d1 + 2 * d2 + 2 * d3 + d4),
                dw + step / 6.0 * (w1 + 2 * w2 + 2 * w3 + w4))

    for k in range(n_steps):
        net = faulted if k_on <= k < k_off else healthy
        net_next = faulted if k_on <= k + 1 < k_off else healthy
        try:
            delta_n, dw_n = rk4(delta, dw, net, dt)
            v_full = _end_solve(net_next, delta_n, emag, y_norton, gen_pos, n,
                                s_bess, bess_pos)
        except _FixedPointDiverged:
            # one retry at half step before giving up on the interval
            try:
                delta_n, dw_n = rk4(delta, dw, net, 0.5 * dt)
                delta_n, dw_n = rk4(delta_n, dw_n, net, 0.5 * dt)
                v_full = _end_solve(net_next, delta_n, emag, y_norton, gen_pos,
                                    n, s_bess, bess_pos)
            except _FixedPointDiverged:
                raise SimulationError(
                    f"network solve did not converge at step {k + 1} "
                    f"(t={(k + 1) * dt:.4f} s)") from None
        delta, dw = delta_n, dw_n

        if not (np.all(np.isfinite(delta)) and np.all(np.isfinite(dw))):
            raise SimulationError(
                f"non-finite state at step {k + 1} (t={(k + 1) * dt:.4f} s)")

        if freq_pos.size:
            theta = np.angle(v_full[freq_pos])
            dwf = alpha * dwf + (1.0 - alpha) * (
                wrap_angle(theta - theta_prev) / dt / w_s)
            theta_prev = theta

        for j, u in enumerate(fleet):
            states[j] = bess_step(states[j], dwf[unit_slot[j]], dt, u,
                                  s_base_mw)
            s_bess[j] = states[j].p_es

        sample(k + 1)

    return TraceSet(t=t_axis, channels={name: out[name] for name in record})


def _end_solve(net, delta, emag, y_norton, gen_pos, n, s_bess, bess_pos):
    e = emag * np.exp(1j * delta)
    i_inj = np.zeros(n, dtype=complex)
    np.add.at(i_inj, gen_pos, e * y_norton)
    return net.solve(i_inj, s_bess, bess_pos)


def _fault_position(case, disturbance, idx):
    if disturbance.kind == "bus_fault":
        bus = int(disturbance.target)
        if bus not in idx:
            raise SimulationError(f"fault bus {bus} is not in the case")
        return idx[bus]
    f, t = (int(x) for x in disturbance.target)
    for br in case.branches:
        if br.status == "in" and {br.from_bus, br.to_bus} == {f, t}:
            return idx[f]
    raise SimulationError(f"no in-service branch {f}-{t} to fault")


def _build_samplers(case, fleet, record, freq_slot):
    unit_by_bus = {}
    for j, u in enumerate(fleet):
        unit_by_bus.setdefault(u.bus, []).append(j)
    samplers = []
    for name in record:
        m = _CHANNEL_RE.match(name)
        if not m:
            raise ChannelError(f"unknown channel {name!r}")
        kind, num = m.group(1), int(m.group(2))
        if kind in ("delta_g", "omega_g"):
            if not 1 <= num <= len(case.generators):
                raise ChannelError(f"{name!r}: case has "
                                   f"{len(case.generators)} machines")
            g = num - 1
            if kind == "delta_g":
                samplers.append((name,
                                 lambda d, w, st, f, g=g: d[g]))
            else:
                samplers.append((name,
                                 lambda d, w, st, f, g=g: w[g]))
        elif kind == "freq_b":
            if num not in freq_slot:
                raise ChannelError(f"{name!r}: bus {num} not in the case")
            slot = freq_slot[num]
            samplers.append((name,
                             lambda d, w, st, f, s=slot: f[s]))
        else:  # pbess_b
            if num not in unit_by_bus:
                raise ChannelError(f"{name!r}: no battery at bus {num}")
            units = unit_by_bus[num]
            samplers.append((name,
                             lambda d, w, st, f, uu=tuple(units):
                             sum(st[j].p_es for j in uu)))
    return samplers
