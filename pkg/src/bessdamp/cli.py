"""Command-line entry points for the damping toolkit.

Five subcommands cover the full workflow: ``simulate`` runs one disturbance
and writes traces plus a storage report, ``identify`` estimates modes from a
trace file, ``optimize`` searches placements and gains, ``cost-sweep``
repeats the search over fleet sizes and prices each result, and
``compare-controllers`` scores controller variants on a fixed fleet.

Run descriptions live in small JSON files; bundled ones are addressed by
name, anything else by path. Exit codes: 0 on success, 2 on bad arguments,
3 when an optimization ends infeasible, 4 when a solver fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from .bess import BessParams, soc_change_report
from .cost import CostConfig, CostReport, fleet_cost, recommend
from .dynamics import (ChannelError, Disturbance, SimConfig, SimulationError,
                       TraceSet, default_channels, simulate)
from .grid import (CaseError, PowerFlowError, PowerSystemCase,
                   apply_scenario, case_from_dict, load_case,
                   solve_power_flow)
from .modal import (EspritConfig, ModalError, estimate_modes,
                    select_target_mode)
from .optimizer import (ProblemSpec, PsoConfig, optimize, reduce_candidates,
                        ringdown_analysis)

EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4

_SOLVER_ERRORS = (CaseError, PowerFlowError, SimulationError, ModalError,
                  ChannelError, FileNotFoundError, KeyError, ValueError)


def _bundled(kind: str, name: str) -> dict:
    ref = resources.files("bessdamp").joinpath(kind).joinpath(f"{name}.json")
    with ref.open("r") as fh:
        return json.load(fh)


def load_run(source: str) -> dict:
    """Run description from a JSON path, or from the bundle by name."""
    path = Path(source)
    if path.suffix == ".json":
        with open(path) as fh:
            return json.load(fh)
    return _bundled("runs", source)


def resolve_case(source: str) -> PowerSystemCase:
    """Case from a JSON path, or from the bundle by name."""
    path = Path(source)
    if path.suffix == ".json":
        return load_case(path)
    return case_from_dict(_bundled("cases", source))


def disturbance_from_dict(data: dict) -> Disturbance:
    target = data["target"]
    if isinstance(target, list):
        target = tuple(int(t) for t in target)
    kwargs = {}
    y = data.get("fault_admittance")
    if y is not None:
        kwargs["fault_admittance"] = complex(y[0], y[1])
    return Disturbance(kind=data["kind"], target=target,
                       t_on=float(data["t_on"]), t_off=float(data["t_off"]),
                       **kwargs)


def fleet_from_run(run: dict) -> tuple[BessParams, ...]:
    defaults = run.get("bess_defaults", {})
    return tuple(BessParams(**{**defaults, **unit})
                 for unit in run.get("fleet", []))


def problem_from_run(run: dict, case: PowerSystemCase) -> ProblemSpec:
    prob = run["problem"]
    cand = prob.get("candidate_buses", "all")
    if cand == "all":
        cand = tuple(b.id for b in case.buses)
    elif isinstance(cand, dict):
        cand = reduce_candidates(case, int(cand.get("extra", 0)))
    else:
        cand = tuple(int(b) for b in cand)
    scenarios = tuple(case.scenario_named(name)
                      for name in prob.get("scenarios", ["base"]))
    spec = ProblemSpec(
        case=case, n_es=int(prob["n_es"]), candidate_buses=cand,
        disturbance=disturbance_from_dict(prob["disturbance"]),
        scenarios=scenarios,
        bess=BessParams(bus=0, k_es=0.0, **run.get("bess_defaults", {})))
    overrides: dict = {}
    if "target_band" in prob:
        overrides["target_band"] = tuple(prob["target_band"])
    if "match_band" in prob:
        overrides["match_band"] = tuple(prob["match_band"])
    for key in ("zeta_star", "decimation", "f_tol", "dzeta_tol",
                "energy_floor", "penalty_weight"):
        if key in prob:
            overrides[key] = prob[key]
    if "sim" in prob:
        overrides["sim"] = SimConfig(**prob["sim"])
    if "esprit" in prob:
        overrides["esprit"] = EspritConfig(**prob["esprit"])
    return replace(spec, **overrides) if overrides else spec


def pso_from_run(run: dict, seed=None, workers=None) -> PsoConfig:
    cfg = PsoConfig(**run.get("pso", {}))
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if workers is not None:
        cfg = replace(cfg, workers=workers)
    return cfg


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True,
                  default=_json_default)
        fh.write("\n")


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def _prepare_case(run: dict, override: str | None):
    source = override or run["case"]
    case = resolve_case(source)
    scenario = run.get("scenario", "base")
    case = apply_scenario(case, case.scenario_named(scenario))
    return case, source, scenario


def cmd_simulate(args) -> int:
    run = load_run(args.run)
    case, source, scenario = _prepare_case(run, args.case)
    op = solve_power_flow(case)
    fleet = fleet_from_run(run)
    dist = disturbance_from_dict(run["disturbance"])
    sim = SimConfig(**run.get("sim", {}))
    if not sim.record:
        sim = replace(sim, record=default_channels(case, fleet))
    traces = simulate(case, op, fleet, dist, sim)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "traces.csv"
    traces.write_csv(trace_path)
    units = []
    for params in fleet:
        p_es = traces.channel(f"pbess_b{params.bus}")
        units.append({
            "bus": params.bus, "k_es": params.k_es,
            "controller": params.controller,
            "peak_p_es": float(np.max(np.abs(p_es))),
            "delta_soc_pct": float(soc_change_report(
                traces.t, p_es, params, case.base_mva)),
        })
    report = {"case": source, "scenario": scenario,
              "channels": list(sim.record), "dt": sim.dt,
              "t_end": sim.t_end, "samples": len(traces.t), "units": units}
    _write_json(out / "simulation.json", report)
    _say(args.quiet, f"wrote {trace_path} ({len(sim.record)} channels, "
                     f"{len(traces.t)} samples)")
    for u in units:
        _say(args.quiet, f"  bus {u['bus']}: peak |p_es| {u['peak_p_es']:.4f}"
                         f" p.u., SOC change {u['delta_soc_pct']:+.4f}%")
    return 0


def cmd_identify(args) -> int:
    traces = TraceSet.from_csv(args.traces)
    signal = traces.channel(args.channel)[::args.decimate]
    cfg = EspritConfig(window_start=args.window_start,
                       model_order=args.order)
    modes = estimate_modes(signal, traces.dt * args.decimate, cfg)
    rows = [{"freq_hz": m.freq_hz, "zeta": m.zeta, "amplitude": m.amplitude,
             "phase": m.phase, "energy": m.energy} for m in modes]
    for m in modes:
        _say(args.quiet, f"f={m.freq_hz:7.4f} Hz  zeta={m.zeta * 100:+7.3f}%"
             f"  energy={m.energy:6.4f}  amplitude={m.amplitude:.4g}")
    payload = {"channel": args.channel, "modes": rows}
    if args.band is not None:
        target = select_target_mode(modes, tuple(args.band))
        payload["target"] = {"freq_hz": target.freq_hz, "zeta": target.zeta}
        _say(args.quiet, f"target mode: f={target.freq_hz:.4f} Hz "
                         f"zeta={target.zeta * 100:+.3f}%")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "modes.json", payload)
    return 0


def _write_history(path: Path, history) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,best_penalized\n")
        for i, value in enumerate(history):
            fh.write(f"{i},{value:.9g}\n")


def cmd_optimize(args) -> int:
    run = load_run(args.run)
    case = resolve_case(args.case or run["case"])
    spec = problem_from_run(run, case)
    cfg = pso_from_run(run, args.seed, args.workers)
    callback = None
    if not args.quiet:
        callback = lambda it, best: print(f"iter {it:3d}  best {best:.6g}")
    result = optimize(spec, cfg, callback=callback)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "case": args.case or run["case"],
        "locations": list(result.locations),
        "gains": list(result.gains),
        "objective": result.fitness.objective,
        "violation": result.fitness.violation,
        "penalized": result.fitness.penalized,
        "feasible": result.fitness.feasible,
        "target_zeta": result.fitness.target_zeta,
        "baseline_zeta": result.baseline,
        "evaluations": result.evaluations,
        "seed": cfg.seed,
    }
    _write_json(out / "result.json", payload)
    _write_history(out / "history.csv", result.history)
    gains = ", ".join(f"{g:.4f}" for g in result.gains)
    _say(args.quiet, f"locations {list(result.locations)}  gains [{gains}]")
    for name, zeta in result.fitness.target_zeta.items():
        base = result.baseline.get(name)
        _say(args.quiet, f"  {name}: target zeta {zeta * 100:+.3f}% "
                         f"(baseline {base * 100:+.3f}%)")
    if not result.fitness.feasible:
        _say(args.quiet, "search ended infeasible")
        return EXIT_INFEASIBLE
    return 0


def cmd_cost_sweep(args) -> int:
    run = load_run(args.run)
    case = resolve_case(args.case or run["case"])
    spec = problem_from_run(run, case)
    cfg = pso_from_run(run, args.seed, args.workers)
    cost_cfg = CostConfig(**run.get("cost", {}))
    lo, hi = (int(n) for n in run["n_range"])
    rows = []
    reports: list[CostReport] = []
    for n in range(lo, hi + 1):
        result = optimize(replace(spec, n_es=n), cfg)
        feasible = result.fitness.feasible
        # an infeasible search is priced at full gain on every unit so the
        # sweep table stays comparable across fleet sizes
        objective = result.fitness.objective if feasible else n * cfg.k_max
        report = fleet_cost(objective, n, cost_cfg, feasible)
        reports.append(report)
        rows.append({
            "n_es": n, "objective": objective, "feasible": feasible,
            "locations": list(result.locations), "gains": list(result.gains),
            "converter_usd": report.converter_usd,
            "cell_usd": report.cell_usd, "total_usd": report.total_usd,
            "target_zeta": result.fitness.target_zeta,
        })
        _say(args.quiet, f"n_es={n}: objective {objective:.4f} "
             f"{'feasible' if feasible else 'infeasible'} "
             f"total ${report.total_usd / 1e6:.3f}M")
    payload = {"case": args.case or run["case"], "rows": rows}
    any_feasible = any(r.feasible for r in reports)
    if any_feasible:
        best = recommend(reports)
        payload["recommended_n_es"] = best.n_es
        _say(args.quiet, f"recommended fleet size: {best.n_es} "
             f"(total ${best.total_usd / 1e6:.3f}M)")
    else:
        payload["recommended_n_es"] = None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "cost_sweep.json", payload)
    return 0 if any_feasible else EXIT_INFEASIBLE


def cmd_compare_controllers(args) -> int:
    run = load_run(args.run)
    case, source, scenario = _prepare_case(run, args.case)
    op = solve_power_flow(case)
    dist = disturbance_from_dict(run["disturbance"])
    sim = SimConfig(**run.get("sim", {}))
    esprit = EspritConfig(**run.get("esprit",
                                    {"window_start": 1.0, "model_order": 10}))
    decimation = int(run.get("decimation", 10))
    band = tuple(run.get("target_band", (0.2, 1.0)))
    base_fleet = fleet_from_run(run)
    variants = [("proportional", None, base_fleet)]
    for t_i in run.get("t_i_values", []):
        fleet = tuple(replace(u, controller="pi", t_i=float(t_i))
                      for u in base_fleet)
        variants.append(("pi", float(t_i), fleet))
    rows = []
    for controller, t_i, fleet in variants:
        extra = tuple(f"pbess_b{u.bus}" for u in fleet)
        modes, traces = ringdown_analysis(case, op, fleet, dist, sim, esprit,
                                          decimation, extra)
        target = select_target_mode(modes, band)
        peak = max(float(np.max(np.abs(traces.channel(c)))) for c in extra)
        rows.append({"controller": controller, "t_i": t_i,
                     "target_freq_hz": float(target.freq_hz),
                     "target_zeta": float(target.zeta),
                     "peak_p_es": peak})
        label = controller if t_i is None else f"{controller} t_i={t_i:g}"
        _say(args.quiet, f"{label:>16}: zeta {target.zeta * 100:+.3f}% "
             f"at {target.freq_hz:.3f} Hz, peak |p_es| {peak:.4f} p.u.")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "controllers.json",
                {"case": source, "scenario": scenario, "rows": rows})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bessdamp",
        description="Storage placement and gain design for oscillation "
                    "damping")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, case_override=True):
        p.add_argument("--run", required=True,
                       help="run description: bundled name or JSON path")
        if case_override:
            p.add_argument("--case", default=None,
                           help="override the run's case")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("simulate", help="run one disturbance and save traces")
    common(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("identify", help="estimate modes from saved traces")
    p.add_argument("--traces", required=True, help="trace CSV path")
    p.add_argument("--channel", required=True)
    p.add_argument("--window-start", type=float, default=1.0)
    p.add_argument("--order", type=int, default=None,
                   help="even model order; omit to pick automatically")
    p.add_argument("--decimate", type=int, default=1)
    p.add_argument("--band", type=float, nargs=2, default=None,
                   metavar=("LO", "HI"),
                   help="also report the strongest mode in this band")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(handler=cmd_identify)

    p = sub.add_parser("optimize", help="search placements and gains")
    common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(handler=cmd_optimize)

    p = sub.add_parser("cost-sweep",
                       help="optimize over a range of fleet sizes and price "
                            "each")
    common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(handler=cmd_cost_sweep)

    p = sub.add_parser("compare-controllers",
                       help="score controller variants on a fixed fleet")
    common(p)
    p.set_defaults(handler=cmd_compare_controllers)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except _SOLVER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
