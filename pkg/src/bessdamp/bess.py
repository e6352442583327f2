"""Battery storage model: frequency-feedback controller, converter lag, state
of charge.

Power is per unit on the system MVA base, positive when the unit discharges
into the grid. The controller acts on the measured frequency deviation at the
unit's terminal bus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CONTROLLERS = ("proportional", "pi")


@dataclass(frozen=True)
class BessParams:
    bus: int
    k_es: float
    controller: str = "proportional"
    t_i: float = 1.0          # integral time constant, used by "pi" only
    t_es: float = 0.02        # converter lag time constant, seconds
    p_max: float = 1.0        # power rating, p.u.
    e_total_mwh: float = 10.0
    soc_init: float = 0.5
    soc_min: float = 0.1
    soc_max: float = 0.9

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.k_es < 0:
            raise ValueError("k_es must be non-negative")
        if self.t_es <= 0 or self.t_i <= 0:
            raise ValueError("time constants must be positive")
        if self.p_max <= 0 or self.e_total_mwh <= 0:
            raise ValueError("ratings must be positive")
        if not (0.0 <= self.soc_min < self.soc_max <= 1.0):
            raise ValueError("need 0 <= soc_min < soc_max <= 1")
        if not (0.0 <= self.soc_init <= 1.0):
            raise ValueError("soc_init must lie in [0, 1]")


@dataclass(frozen=True)
class BessState:
    p_es: float = 0.0       # converter output after lag and limits
    soc: float = 0.5
    integrator: float = 0.0  # running integral of -dw, for the pi controller


def initial_state(params: BessParams) -> BessState:
    return BessState(p_es=0.0, soc=params.soc_init, integrator=0.0)


def controller_reference(dw: float, params: BessParams,
                         integrator: float = 0.0) -> float:
    """Power order from the frequency deviation (p.u.).

    Proportional: p_ref = -k_es * dw. PI: k_es + 1/(t_i s) acting on -dw,
    where ``integrator`` is the caller-maintained integral of -dw.
    """
    if params.controller == "pi":
        return params.k_es * (-dw) + integrator / params.t_i
    return -params.k_es * dw


def soc_update(soc: float, p_es: float, dt: float, e_total_mwh: float,
               s_base_mw: float = 100.0) -> float:
    """Advance state of charge by one step; discharge lowers it. Clamped [0, 1]."""
    delta = p_es * s_base_mw * dt / 3600.0 / e_total_mwh
    return min(1.0, max(0.0, soc - delta))


def pcs_step(state: BessState, p_ref: float, dt: float, params: BessParams,
             s_base_mw: float = 100.0) -> BessState:
    """One converter step: charge gating, exact first-order lag, power limit,
    state-of-charge update.

    Charging (p_ref < 0) is blocked at soc_max, discharging (p_ref > 0) at
    soc_min; a blocked or zero order snaps the output to zero (lag state
    resets).
    """
    blocked = ((p_ref < 0.0 and state.soc >= params.soc_max)
               or (p_ref > 0.0 and state.soc <= params.soc_min))
    if blocked or p_ref == 0.0:
        p_new = 0.0
    else:
        p_new = p_ref + (state.p_es - p_ref) * math.exp(-dt / params.t_es)
        p_new = min(params.p_max, max(-params.p_max, p_new))
    soc_new = soc_update(state.soc, p_new, dt, params.e_total_mwh, s_base_mw)
    return BessState(p_es=p_new, soc=soc_new, integrator=state.integrator)


def bess_step(state: BessState, dw: float, dt: float, params: BessParams,
              s_base_mw: float = 100.0) -> BessState:
    """Controller plus converter update for one simulation step.

    The pi integrator holds its value while the output limit binds
    (conditional-integration anti-windup).
    """
    if params.controller == "pi":
        integ = state.integrator + (-dw) * dt
        p_ref = controller_reference(dw, params, integ)
        nxt = pcs_step(state, p_ref, dt, params, s_base_mw)
        unsaturated = abs(nxt.p_es) < params.p_max
        return BessState(p_es=nxt.p_es, soc=nxt.soc,
                         integrator=integ if unsaturated else state.integrator)
    p_ref = controller_reference(dw, params)
    return pcs_step(state, p_ref, dt, params, s_base_mw)


def soc_change_report(t: np.ndarray, p_es: np.ndarray, params: BessParams,
                      s_base_mw: float = 100.0) -> float:
    """Net state-of-charge change over a power trace, in percent.

    Trapezoidal energy integral; negative when the unit net-discharged.
    """
    energy_mwh = float(np.trapezoid(p_es, t)) * s_base_mw / 3600.0
    return -100.0 * energy_mwh / params.e_total_mwh
