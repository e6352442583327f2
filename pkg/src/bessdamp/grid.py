"""Network model: case data, admittance matrix, AC power flow, loading scenarios.

All quantities are per unit on the case MVA base unless a name says otherwise.
Bus ids are arbitrary positive integers; matrix rows follow the order of
``case.buses``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np


class CaseError(ValueError):
    """Structural problem in the case data (bad reference, missing slack, ...)."""


class PowerFlowError(RuntimeError):
    """Newton iteration did not converge; carries the final mismatch."""

    def __init__(self, message, mismatch):
        super().__init__(message)
        self.mismatch = mismatch


@dataclass(frozen=True)
class Bus:
    id: int
    type: str = "pq"  # "slack" | "pv" | "pq"
    v_set: float | None = None
    shunt: complex = 0j  # admittance to ground


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0  # total line charging susceptance
    status: str = "in"


@dataclass(frozen=True)
class Generator:
    bus: int
    p_set: float
    h: float        # inertia constant, seconds on system base
    d: float        # damping coefficient, p.u. torque per p.u. speed
    xdp: float      # transient reactance


@dataclass(frozen=True)
class Load:
    bus: int
    p: float
    q: float


@dataclass(frozen=True)
class Scenario:
    """Multiplicative re-dispatch of an existing case.

    ``per_generator_scale`` maps bus id -> extra multiplier applied on top of
    ``gen_scale``. The slack bus absorbs any resulting imbalance when the
    scenario case is solved.
    """

    name: str
    load_scale: float = 1.0
    gen_scale: float = 1.0
    per_generator_scale: dict | None = None


UNIT_SCENARIO = Scenario(name="base")


@dataclass(frozen=True)
class PowerSystemCase:
    base_mva: float
    freq_hz: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]
    scenarios: tuple[Scenario, ...] = ()

    def __post_init__(self):
        _validate_case(self)

    def bus_index(self) -> dict[int, int]:
        """Map bus id -> row position."""
        return {bus.id: i for i, bus in enumerate(self.buses)}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    def scenario_named(self, name: str) -> Scenario:
        if name == UNIT_SCENARIO.name:
            return UNIT_SCENARIO
        for sc in self.scenarios:
            if sc.name == name:
                return sc
        raise CaseError(f"case defines no scenario named {name!r}")


@dataclass(frozen=True)
class OperatingPoint:
    """Solved steady state: complex bus voltages and net injections."""

    v: np.ndarray           # complex voltage phasor per bus
    injections: np.ndarray  # complex net power injection per bus
    mismatch: float         # max power residual at the solution


def _validate_case(case: PowerSystemCase):
    if case.base_mva <= 0:
        raise CaseError("base_mva must be positive")
    if case.freq_hz <= 0:
        raise CaseError("freq_hz must be positive")
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        raise CaseError("bus ids are not unique")
    known = set(ids)
    slack = [b for b in case.buses if b.type == "slack"]
    if len(slack) != 1:
        raise CaseError(f"need exactly one slack bus, found {len(slack)}")
    for b in case.buses:
        if b.type not in ("slack", "pv", "pq"):
            raise CaseError(f"bus {b.id}: unknown type {b.type!r}")
    for br in case.branches:
        if br.from_bus not in known or br.to_bus not in known:
            raise CaseError(f"branch {br.from_bus}-{br.to_bus} references a missing bus")
        if br.from_bus == br.to_bus:
            raise CaseError(f"branch {br.from_bus}-{br.to_bus} is a self loop")
        if abs(complex(br.r, br.x)) == 0.0:
            raise CaseError(f"branch {br.from_bus}-{br.to_bus} has zero impedance")
        if br.status not in ("in", "out"):
            raise CaseError(f"branch {br.from_bus}-{br.to_bus}: bad status {br.status!r}")
    for g in case.generators:
        if g.bus not in known:
            raise CaseError(f"generator references missing bus {g.bus}")
        if g.h <= 0:
            raise CaseError(f"generator at bus {g.bus}: inertia must be positive")
        if g.xdp <= 0:
            raise CaseError(f"generator at bus {g.bus}: transient reactance must be positive")
        if g.d < 0:
            raise CaseError(f"generator at bus {g.bus}: damping must be non-negative")
    for ld in case.loads:
        if ld.bus not in known:
            raise CaseError(f"load references missing bus {ld.bus}")


def build_ybus(case: PowerSystemCase) -> np.ndarray:
    """Dense bus admittance matrix with line charging and bus shunts."""
    n = case.n_bus
    idx = case.bus_index()
    y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        if br.status != "in":
            continue
        i, j = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        ysh = 0.5j * br.b
        y[i, i] += ys + ysh
        y[j, j] += ys + ysh
        y[i, j] -= ys
        y[j, i] -= ys
    for bus in case.buses:
        y[idx[bus.id], idx[bus.id]] += bus.shunt
    return y


def _scheduled_injection(case: PowerSystemCase):
    """Specified P and Q per bus (generation minus load)."""
    idx = case.bus_index()
    p = np.zeros(case.n_bus)
    q = np.zeros(case.n_bus)
    for g in case.generators:
        p[idx[g.bus]] += g.p_set
    for ld in case.loads:
        p[idx[ld.bus]] -= ld.p
        q[idx[ld.bus]] -= ld.q
    return p, q


def solve_power_flow(case: PowerSystemCase, tol: float = 1e-8,
                     max_iter: int = 50) -> OperatingPoint:
    """Full Newton-Raphson power flow in polar form from a flat start.

    PV and slack magnitudes come from ``v_set`` (1.0 when unset). Raises
    PowerFlowError with the final mismatch if Newton does not reach ``tol``
    within ``max_iter`` iterations.
    """
    n = case.n_bus
    ybus = build_ybus(case)
    p_spec, q_spec = _scheduled_injection(case)

    types = [b.type for b in case.buses]
    pv = np.array([i for i, t in enumerate(types) if t == "pv"], dtype=int)
    pq = np.array([i for i, t in enumerate(types) if t == "pq"], dtype=int)
    pvpq = np.concatenate([pv, pq])

    vm = np.ones(n)
    for i, bus in enumerate(case.buses):
        if bus.type in ("slack", "pv") and bus.v_set is not None:
            vm[i] = bus.v_set
    va = np.zeros(n)

    mismatch = np.inf
    for _ in range(max_iter):
        v = vm * np.exp(1j * va)
        s_calc = v * np.conj(ybus @ v)
        dp = p_spec[pvpq] - s_calc.real[pvpq]
        dq = q_spec[pq] - s_calc.imag[pq]
        resid = np.concatenate([dp, dq])
        mismatch = float(np.max(np.abs(resid))) if resid.size else 0.0
        if mismatch < tol:
            injections = v * np.conj(ybus @ v)
            return OperatingPoint(v=v, injections=injections, mismatch=mismatch)

        # complex-form Jacobian blocks (dS/d angle, dS/d magnitude)
        i_bus = ybus @ v
        diag_v = np.diag(v)
        diag_i = np.diag(i_bus)
        diag_vnorm = np.diag(v / vm)
        ds_dva = 1j * diag_v @ np.conj(diag_i - ybus @ diag_v)
        ds_dvm = diag_v @ np.conj(ybus @ diag_vnorm) + np.conj(diag_i) @ diag_vnorm

        j11 = ds_dva[np.ix_(pvpq, pvpq)].real
        j12 = ds_dvm[np.ix_(pvpq, pq)].real
        j21 = ds_dva[np.ix_(pq, pvpq)].imag
        j22 = ds_dvm[np.ix_(pq, pq)].imag
        jac = np.block([[j11, j12], [j21, j22]])

        try:
            dx = np.linalg.solve(jac, resid)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError(f"singular Jacobian: {exc}", mismatch) from exc
        va[pvpq] += dx[: pvpq.size]
        vm[pq] += dx[pvpq.size:]

    raise PowerFlowError(
        f"power flow did not converge in {max_iter} iterations "
        f"(mismatch {mismatch:.3e})", mismatch)


def apply_scenario(case: PowerSystemCase, scenario: Scenario) -> PowerSystemCase:
    """New case with loads and generator set-points rescaled."""
    per_gen = scenario.per_generator_scale or {}
    unknown = set(per_gen) - {g.bus for g in case.generators}
    if unknown:
        raise CaseError(f"scenario {scenario.name!r} scales generators at "
                        f"non-generator buses {sorted(unknown)}")
    loads = tuple(replace(ld, p=ld.p * scenario.load_scale,
                          q=ld.q * scenario.load_scale) for ld in case.loads)
    gens = tuple(replace(g, p_set=g.p_set * scenario.gen_scale
                         * per_gen.get(g.bus, 1.0)) for g in case.generators)
    return replace(case, loads=loads, generators=gens)


def _as_complex(value) -> complex:
    if isinstance(value, (list, tuple)):
        re, im = value
        return complex(re, im)
    return complex(value)


def case_from_dict(data: dict) -> PowerSystemCase:
    """Build a case from parsed JSON. Complex values are [re, im] pairs."""
    try:
        buses = tuple(Bus(id=int(b["id"]), type=b.get("type", "pq"),
                          v_set=b.get("v_set"),
                          shunt=_as_complex(b.get("shunt", 0.0)))
                      for b in data["buses"])
        branches = tuple(Branch(from_bus=int(br["from_bus"]),
                                to_bus=int(br["to_bus"]),
                                r=float(br["r"]), x=float(br["x"]),
                                b=float(br.get("b", 0.0)),
                                status=br.get("status", "in"))
                         for br in data["branches"])
        gens = tuple(Generator(bus=int(g["bus"]), p_set=float(g["p_set"]),
                               h=float(g["h"]), d=float(g["d"]),
                               xdp=float(g["xdp"]))
                     for g in data["generators"])
        loads = tuple(Load(bus=int(ld["bus"]), p=float(ld["p"]),
                           q=float(ld["q"]))
                      for ld in data.get("loads", ()))
        scenarios = tuple(_scenario_from_dict(sc)
                          for sc in data.get("scenarios", ()))
        return PowerSystemCase(base_mva=float(data["base_mva"]),
                               freq_hz=float(data["freq_hz"]),
                               buses=buses, branches=branches,
                               generators=gens, loads=loads,
                               scenarios=scenarios)
    except (KeyError, TypeError) as exc:
        raise CaseError(f"malformed case data: {exc}") from exc


def _scenario_from_dict(data: dict) -> Scenario:
    per_gen = data.get("per_generator_scale")
    if per_gen is not None:
        per_gen = {int(k): float(v) for k, v in per_gen.items()}
    return Scenario(name=data["name"],
                    load_scale=float(data.get("load_scale", 1.0)),
                    gen_scale=float(data.get("gen_scale", 1.0)),
                    per_generator_scale=per_gen)


def load_case(path) -> PowerSystemCase:
    with open(path) as fh:
        return case_from_dict(json.load(fh))
