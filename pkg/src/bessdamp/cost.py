"""Installed-cost model for a damping fleet.

The optimizer's objective is the total feedback gain, in per-unit power per
per-unit speed deviation. Sizing the converters for a stated worst-case
speed deviation turns that gain directly into rated power, so the converter
cost scales with the objective while the cell cost scales with the unit
count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class CostConfig:
    converter_usd_per_kw: float = 421.43
    cell_usd_per_kwh: float = 218.52
    dw_max: float = 0.01        # sizing speed deviation, p.u.
    e_per_unit_mwh: float = 10.0
    s_base_mva: float = 100.0

    def __post_init__(self) -> None:
        if min(self.converter_usd_per_kw, self.cell_usd_per_kwh) < 0.0:
            raise ValueError("unit prices must not be negative")
        if self.dw_max <= 0.0 or self.s_base_mva <= 0.0:
            raise ValueError("dw_max and s_base_mva must be positive")
        if self.e_per_unit_mwh <= 0.0:
            raise ValueError("e_per_unit_mwh must be positive")


@dataclass(frozen=True)
class CostReport:
    n_es: int
    objective: float            # total gain, p.u. power per p.u. speed
    rated_power_kw: float
    converter_usd: float
    cell_usd: float
    total_usd: float
    feasible: bool


def fleet_cost(objective: float, n_es: int, cfg: CostConfig = CostConfig(),
               feasible: bool = True) -> CostReport:
    """Price one fleet from its total gain and unit count."""
    if objective < 0.0:
        raise ValueError("objective must not be negative")
    if n_es < 1:
        raise ValueError("n_es must be at least 1")
    rated_kw = objective * cfg.dw_max * cfg.s_base_mva * 1000.0
    converter = rated_kw * cfg.converter_usd_per_kw
    cell = n_es * cfg.e_per_unit_mwh * 1000.0 * cfg.cell_usd_per_kwh
    return CostReport(n_es=n_es, objective=objective, rated_power_kw=rated_kw,
                      converter_usd=converter, cell_usd=cell,
                      total_usd=converter + cell, feasible=feasible)


def recommend(reports: Iterable[CostReport]) -> CostReport:
    """Cheapest feasible fleet; the smaller fleet wins a cost tie."""
    feasible = [r for r in reports if r.feasible]
    if not feasible:
        raise ValueError("no feasible fleet size in the sweep")
    return min(feasible, key=lambda r: (r.total_usd, r.n_es))
