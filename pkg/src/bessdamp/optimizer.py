"""Placement and gain co-design by mixed-integer particle swarm search.

A candidate solution is an ordered fleet: which buses host the storage units
and what feedback gain each unit runs. Gain dimensions move as ordinary
continuous PSO coordinates; location dimensions also move continuously but
are decoded before every fitness evaluation by rounding to the nearest
candidate index and repairing duplicates to distinct buses. Fitness is the
total installed gain plus a large penalty when any scenario misses the
damping target or degrades a matched baseline mode.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .bess import BessParams
from .dynamics import Disturbance, SimConfig, SimulationError, simulate
from .grid import (UNIT_SCENARIO, OperatingPoint, PowerSystemCase, Scenario,
                   apply_scenario, solve_power_flow)
from .modal import (EspritConfig, Mode, TargetModeMissing, estimate_modes,
                    match_modes, select_target_mode)


@dataclass(frozen=True)
class PsoConfig:
    population: int = 20
    iterations: int = 30
    c1: float = 2.0
    c2: float = 2.0
    inertia: float = 0.9
    k_min: float = 5.0
    k_max: float = 50.0
    vmax_frac: float = 0.5    # velocity cap as a fraction of each dimension span
    seed: int | None = None
    workers: int | None = None

    def __post_init__(self) -> None:
        if self.population < 1:
            raise ValueError("population must be at least 1")
        if self.iterations < 0:
            raise ValueError("iterations must not be negative")
        if not self.k_min < self.k_max:
            raise ValueError("k_min must be below k_max")
        if self.k_min <= 0.0:
            raise ValueError("gains must stay positive")
        if not 0.0 < self.vmax_frac <= 1.0:
            raise ValueError("vmax_frac must lie in (0, 1]")


@dataclass(frozen=True)
class ProblemSpec:
    """Everything that defines one co-design problem on one study case."""

    case: PowerSystemCase
    n_es: int
    candidate_buses: tuple[int, ...]
    disturbance: Disturbance
    target_band: tuple[float, float] = (0.2, 1.0)
    zeta_star: float = 0.05
    scenarios: tuple[Scenario, ...] = (UNIT_SCENARIO,)
    bess: BessParams = BessParams(bus=0, k_es=0.0)
    sim: SimConfig = SimConfig(dt=0.005, t_end=15.0)
    esprit: EspritConfig = EspritConfig(window_start=1.0, model_order=10)
    decimation: int = 10
    f_tol: float = 0.1        # frequency window for matching modes across runs
    dzeta_tol: float = 1e-3   # tolerated damping loss on matched modes
    energy_floor: float = 0.01
    match_band: tuple[float, float] = (0.2, 2.5)
    penalty_weight: float = 1e4

    def __post_init__(self) -> None:
        if self.n_es < 1:
            raise ValueError("n_es must be at least 1")
        if len(set(self.candidate_buses)) != len(self.candidate_buses):
            raise ValueError("candidate buses must be distinct")
        if self.n_es > len(self.candidate_buses):
            raise ValueError("more units than candidate buses")
        known = {b.id for b in self.case.buses}
        missing = [b for b in self.candidate_buses if b not in known]
        if missing:
            raise ValueError(f"candidate buses not in the case: {missing}")
        if not self.target_band[0] < self.target_band[1]:
            raise ValueError("target band must be an increasing pair")
        if self.decimation < 1:
            raise ValueError("decimation must be at least 1")
        if self.zeta_star <= 0.0:
            raise ValueError("zeta_star must be positive")


@dataclass(frozen=True)
class Fitness:
    objective: float          # total installed gain
    violation: float          # constraint shortfall, zero when feasible
    penalized: float
    target_zeta: dict[str, float] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.violation == 0.0


@dataclass(frozen=True)
class ScenarioContext:
    """Scenario data solved once and reused for every fitness evaluation."""

    scenario: Scenario
    case: PowerSystemCase
    op: OperatingPoint
    baseline_modes: tuple[Mode, ...]
    baseline_target: Mode


@dataclass(frozen=True)
class OptimizationResult:
    locations: tuple[int, ...]
    gains: tuple[float, ...]
    fitness: Fitness
    history: tuple[float, ...]   # best penalized fitness after each iteration
    evaluations: int
    baseline: dict[str, float]   # scenario name -> baseline target damping


def repair_locations(values: Sequence[int],
                     candidates: Sequence[int]) -> list[int]:
    """Make the location list distinct while keeping first occurrences.

    A duplicate moves to the nearest unused bus by candidate-index distance,
    preferring the lower index on ties. Already-distinct lists come back
    unchanged, so the repair is idempotent.
    """
    cand = list(candidates)
    index = {b: i for i, b in enumerate(cand)}
    if len(index) != len(cand):
        raise ValueError("candidate buses must be distinct")
    used: set[int] = set()
    out: list[int] = []
    for v in values:
        if v not in index:
            raise ValueError(f"bus {v} is not a candidate")
        if v not in used:
            out.append(v)
            used.add(v)
            continue
        i = index[v]
        pick = None
        for radius in range(1, len(cand)):
            left = i - radius
            if left >= 0 and cand[left] not in used:
                pick = cand[left]
                break
            right = i + radius
            if right < len(cand) and cand[right] not in used:
                pick = cand[right]
                break
        if pick is None:
            raise ValueError("more units than candidate buses")
        out.append(pick)
        used.add(pick)
    return out


def pso_velocity(velocity, position, pbest, gbest, cfg: PsoConfig, r1, r2):
    """One velocity update; arguments broadcast elementwise."""
    return (cfg.inertia * velocity + cfg.c1 * r1 * (pbest - position)
            + cfg.c2 * r2 * (gbest - position))


def placement_similarity(a: Sequence[int], b: Sequence[int]) -> float:
    """Fraction of the reference placement ``b`` recovered by ``a``."""
    ref = set(b)
    if not ref:
        raise ValueError("reference placement is empty")
    return len(set(a) & ref) / len(ref)


def reduce_candidates(case: PowerSystemCase, extra: int = 0) -> tuple[int, ...]:
    """Generator buses plus the ``extra`` electrically closest other buses.

    Distance is the shortest-path sum of branch impedance magnitudes from
    any generator bus; ties break toward the smaller bus id.
    """
    if extra < 0:
        raise ValueError("extra must not be negative")
    pos = {b.id: i for i, b in enumerate(case.buses)}
    n = len(case.buses)
    weights: dict[tuple[int, int], float] = {}
    for br in case.branches:
        if br.status != "in":
            continue
        i, j = pos[br.from_bus], pos[br.to_bus]
        w = abs(complex(br.r, br.x))
        key = (min(i, j), max(i, j))
        weights[key] = min(w, weights.get(key, math.inf))
    rows = [k[0] for k in weights] + [k[1] for k in weights]
    cols = [k[1] for k in weights] + [k[0] for k in weights]
    vals = list(weights.values()) * 2
    graph = csr_matrix((vals, (rows, cols)), shape=(n, n))
    gen_buses = sorted({g.bus for g in case.generators})
    if extra == 0:
        return tuple(gen_buses)
    sources = [pos[b] for b in gen_buses]
    dist = dijkstra(graph, directed=False, indices=sources).min(axis=0)
    others = sorted((b.id for b in case.buses if b.id not in set(gen_buses)),
                    key=lambda bid: (dist[pos[bid]], bid))
    return tuple(sorted(gen_buses + others[:extra]))


def ringdown_analysis(case: PowerSystemCase, op: OperatingPoint,
                      fleet: Sequence[BessParams], disturbance: Disturbance,
                      sim: SimConfig, esprit: EspritConfig,
                      decimation: int = 1, extra_record: Sequence[str] = (),
                      ):
    """Simulate the disturbance and identify modes from the ringdown.

    The analysis signal is the rotor angle of the machine that swings
    hardest against the inertia-weighted system average, decimated before
    estimation so the subspace fit concentrates on the electromechanical
    band. Returns the mode list and the recorded traces.
    """
    names = tuple(f"delta_g{i + 1}" for i in range(len(case.generators)))
    cfg = replace(sim, record=names + tuple(extra_record))
    traces = simulate(case, op, fleet, disturbance, cfg)
    deltas = np.array([traces.channel(c) for c in names])
    h = np.array([g.h for g in case.generators])
    coi = (h[:, None] * deltas).sum(axis=0) / h.sum()
    rel = deltas - coi
    n0 = int(round(esprit.window_start / cfg.dt))
    spread = rel[:, n0:] - rel[:, n0:].mean(axis=1, keepdims=True)
    strongest = int(np.argmax((spread * spread).sum(axis=1)))
    signal = rel[strongest, ::decimation]
    modes = estimate_modes(signal, cfg.dt * decimation, esprit)
    return modes, traces


def scenario_contexts(spec: ProblemSpec) -> tuple[ScenarioContext, ...]:
    """Solve each scenario once: power flow, baseline ringdown, mode table."""
    out = []
    for sc in spec.scenarios:
        scaled = apply_scenario(spec.case, sc)
        op = solve_power_flow(scaled)
        modes, _ = ringdown_analysis(scaled, op, (), spec.disturbance,
                                     spec.sim, spec.esprit, spec.decimation)
        target = select_target_mode(modes, spec.target_band)
        keep = tuple(m for m in modes
                     if m.energy >= spec.energy_floor
                     and spec.match_band[0] <= m.freq_hz <= spec.match_band[1])
        out.append(ScenarioContext(sc, scaled, op, keep, target))
    return tuple(out)


def evaluate_placement(spec: ProblemSpec, locations: Sequence[int],
                       gains: Sequence[float],
                       contexts: Sequence[ScenarioContext] | None = None,
                       ) -> Fitness:
    """Fitness of one fleet over every scenario.

    The violation collects the damping shortfall against the target on each
    scenario plus any damping lost on matched baseline modes beyond the
    tolerance. A missing target mode counts as a full shortfall plus one; a
    failed simulation is an immediate infinite penalty.
    """
    if contexts is None:
        contexts = scenario_contexts(spec)
    fleet = tuple(replace(spec.bess, bus=int(b), k_es=float(k))
                  for b, k in zip(locations, gains))
    objective = float(np.sum(np.asarray(gains, dtype=float)))
    violation = 0.0
    target_zeta: dict[str, float] = {}
    for ctx in contexts:
        try:
            modes, _ = ringdown_analysis(ctx.case, ctx.op, fleet,
                                         spec.disturbance, spec.sim,
                                         spec.esprit, spec.decimation)
        except SimulationError:
            return Fitness(objective=objective, violation=math.inf,
                           penalized=math.inf, target_zeta={})
        try:
            target = select_target_mode(modes, spec.target_band)
            target_zeta[ctx.scenario.name] = float(target.zeta)
            violation += max(0.0, spec.zeta_star - target.zeta)
        except TargetModeMissing:
            violation += spec.zeta_star + 1.0
        for base, found in match_modes(ctx.baseline_modes, modes, spec.f_tol):
            if found is not None:
                violation += max(0.0, base.zeta - found.zeta - spec.dzeta_tol)
    penalized = objective + spec.penalty_weight * violation
    return Fitness(objective=objective, violation=violation,
                   penalized=penalized, target_zeta=target_zeta)


_WORKER_STATE: dict = {}


def _worker_init(spec: ProblemSpec,
                 contexts: tuple[ScenarioContext, ...]) -> None:
    _WORKER_STATE["spec"] = spec
    _WORKER_STATE["contexts"] = contexts


def _worker_eval(args: tuple[tuple[int, ...], np.ndarray]) -> Fitness:
    locations, gains = args
    return evaluate_placement(_WORKER_STATE["spec"], locations, gains,
                              _WORKER_STATE["contexts"])


def _decode(x: np.ndarray, spec: ProblemSpec) -> tuple[tuple[int, ...],
                                                       np.ndarray]:
    n = spec.n_es
    idx = np.clip(np.rint(x[:n]).astype(int), 0,
                  len(spec.candidate_buses) - 1)
    buses = repair_locations([spec.candidate_buses[i] for i in idx],
                             spec.candidate_buses)
    return tuple(buses), x[n:].copy()


def optimize(spec: ProblemSpec, cfg: PsoConfig = PsoConfig(),
             evaluate: Callable[[tuple[int, ...], np.ndarray], Fitness]
             | None = None,
             callback: Callable[[int, float], None] | None = None,
             ) -> OptimizationResult:
    """Run the swarm and return the best fleet found.

    ``evaluate`` substitutes the simulation-based fitness with any callable
    taking (locations, gains); the swarm arithmetic is unchanged, which
    keeps surrogate runs and production runs on the same code path. The
    returned history has one entry per completed evaluation round and never
    increases.
    """
    rng = np.random.default_rng(cfg.seed)
    n = spec.n_es
    n_cand = len(spec.candidate_buses)
    lo = np.concatenate([np.zeros(n), np.full(n, cfg.k_min)])
    hi = np.concatenate([np.full(n, n_cand - 1.0), np.full(n, cfg.k_max)])
    vmax = cfg.vmax_frac * (hi - lo)

    pool = None
    baseline: dict[str, float] = {}
    if evaluate is None:
        contexts = scenario_contexts(spec)
        baseline = {c.scenario.name: float(c.baseline_target.zeta)
                    for c in contexts}
        if cfg.workers and cfg.workers > 1:
            pool = ProcessPoolExecutor(max_workers=cfg.workers,
                                       initializer=_worker_init,
                                       initargs=(spec, contexts))
        else:
            evaluate = (lambda locs, gains:
                        evaluate_placement(spec, locs, gains, contexts))

    def evaluate_all(xs: np.ndarray) -> list[Fitness]:
        decoded = [_decode(row, spec) for row in xs]
        if pool is not None:
            return list(pool.map(_worker_eval, decoded))
        return [evaluate(locs, gains) for locs, gains in decoded]

    try:
        x = rng.uniform(lo, hi, size=(cfg.population, 2 * n))
        v = np.zeros_like(x)
        fits = evaluate_all(x)
        evaluations = cfg.population
        pbest_x = x.copy()
        pbest = list(fits)
        best = min(range(cfg.population), key=lambda p: pbest[p].penalized)
        gbest_x = pbest_x[best].copy()
        gbest = pbest[best]
        history = [gbest.penalized]
        if callback is not None:
            callback(0, gbest.penalized)

        for it in range(1, cfg.iterations + 1):
            for p in range(cfg.population):
                r1 = rng.random(2 * n)
                r2 = rng.random(2 * n)
                v[p] = pso_velocity(v[p], x[p], pbest_x[p], gbest_x, cfg,
                                    r1, r2)
                np.clip(v[p], -vmax, vmax, out=v[p])
                x[p] = np.clip(x[p] + v[p], lo, hi)
            fits = evaluate_all(x)
            evaluations += cfg.population
            for p in range(cfg.population):
                if fits[p].penalized < pbest[p].penalized:
                    pbest[p] = fits[p]
                    pbest_x[p] = x[p].copy()
                if pbest[p].penalized < gbest.penalized:
                    gbest = pbest[p]
                    gbest_x = pbest_x[p].copy()
            history.append(gbest.penalized)
            if callback is not None:
                callback(it, gbest.penalized)
    finally:
        if pool is not None:
            pool.shutdown()

    locations, gains = _decode(gbest_x, spec)
    return OptimizationResult(locations=locations,
                              gains=tuple(float(g) for g in gains),
                              fitness=gbest, history=tuple(history),
                              evaluations=evaluations, baseline=baseline)
