"""Command-line front end.

    tndp gen-city --n 50 --process voronoi --seed 3 --out city.json
    tndp construct --preset mandl --lc-n 100 --seeds 0 --out-dir runs/
    tndp evolve --preset mandl --variant combine --iters 4000 --seeds 0-9 --out-dir runs/
    tndp eval --preset mandl --network runs/.../network.json
    tndp sweep --preset mandl --alpha 0:1:0.1 --seeds 0-9 --out-dir sweep/

Exit status is 0 when every produced network is feasible, 2 when a run
finished with an infeasible network, and 1 on errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .citygraph import (
    PRESETS,
    SYNTHETIC_PROCESSES,
    CityGraph,
    ProblemParams,
    SyntheticCityConfig,
    generate_city,
    load_preset,
)
from .evolve import EaParams, run_ea, write_history_csv
from .mdp import ConstructionMDP, lc_sample, make_policy
from .network import CostModel, EvalResult, TransitNetwork, check_constraints
from .validation import NetworkValidationError, check_alphas, check_network

log = logging.getLogger("tndp")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
WORKERS_ENV = "TNDP_WORKERS"
BUS_COST = 200.0

DEFAULTS = {
    "city": None, "preset": None, "data_dir": None, "generate": None,
    "routes": None, "min_stops": None, "max_stops": None,
    "transfer_penalty": 300.0, "beta": 5.0,
    "alpha": [1.0], "seeds": [0],
    "iters": 400, "pop": 10, "mut_per_stage": 10, "p_delete": 0.2,
    "policy": "uniform", "variant": "ea", "enforce_connectivity": False,
    "lc_n": 100, "double_co": False, "headway_min": None, "out_dir": "tndp_out",
    "network": None, "algorithm": "evolve",
}


# ------------------------------------------------------------- parsing
def parse_seeds(text) -> list[int]:
    """``"0-9"``, ``"1,4,7"`` or a list of ints."""
    if isinstance(text, (list, tuple)):
        return [int(s) for s in text]
    if isinstance(text, int):
        return [text]
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("at least one seed is required")
    return seeds


def parse_alphas(text) -> list[float]:
    """``"0:1:0.1"`` (inclusive range), ``"0.2,0.5"`` or a list of floats."""
    if isinstance(text, (list, tuple)):
        return check_alphas(text)
    if isinstance(text, (int, float)):
        return check_alphas([text])
    text = str(text)
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        count = int(round((hi - lo) / step)) + 1
        return check_alphas([round(lo + k * step, 10) for k in range(count)])
    return check_alphas([float(x) for x in text.split(",") if x.strip()])


def _add_city_args(p):
    g = p.add_argument_group("city")
    g.add_argument("--city", help="city JSON file")
    g.add_argument("--preset", choices=sorted(PRESETS), help="named benchmark city")
    g.add_argument("--data-dir", help="directory holding benchmark matrices")
    g.add_argument("--routes", type=int, help="number of routes S")
    g.add_argument("--min-stops", type=int, help="MIN stops per route")
    g.add_argument("--max-stops", type=int, help="MAX stops per route")
    g.add_argument("--transfer-penalty", type=float, help="seconds per transfer (300)")
    g.add_argument("--beta", type=float, help="constraint weight (5.0)")
    g.add_argument("--alpha", help="alpha value(s): 1.0, 0.2,0.8 or 0:1:0.1")
    g.add_argument("--spec", help="JSON run spec; command-line flags take precedence")


def _add_run_args(p):
    g = p.add_argument_group("run")
    g.add_argument("--seeds", help="seeds: 0, 0-9 or 1,5,7")
    g.add_argument("--policy", help="uniform, demand or table:<path>")
    g.add_argument("--enforce-connectivity", action="store_true", default=None,
                   help="prune construction actions until all demand is served")
    g.add_argument("--lc-n", type=int, help="rollouts per LC sample (100)")
    g.add_argument("--iters", type=int, help="EA iterations IT (400)")
    g.add_argument("--pop", type=int, help="population size B (10)")
    g.add_argument("--mut-per-stage", type=int, help="mutation passes per iteration E (10)")
    g.add_argument("--p-delete", type=float, help="type-2 deletion probability (0.2)")
    g.add_argument("--variant", choices=["ea", "combine"],
                   help="ea: type-1/type-2 mutators; combine: policy re-plans routes "
                        "(RC-EA with the uniform policy, NEA-shaped with a scorer)")
    _add_report_args(p)
    p.add_argument("--out-dir", help="output directory (tndp_out)")


def _add_report_args(p):
    g = p.add_argument_group("report")
    g.add_argument("--double-co", action="store_true", default=None,
                   help="report operator cost over both directions")
    g.add_argument("--headway-min", type=float,
                   help="headway in minutes; adds fleet size and operating cost")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tndp", description="Transit network design solvers")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-city", help="generate a synthetic city")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--process", choices=SYNTHETIC_PROCESSES, default="4nn")
    p.add_argument("--rho", type=float, default=0.3, help="edge deletion fraction")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("construct", help="best-of-N construction (LC-N)")
    _add_city_args(p)
    _add_run_args(p)

    p = sub.add_parser("evolve", help="evolutionary search")
    _add_city_args(p)
    _add_run_args(p)

    p = sub.add_parser("eval", help="evaluate a network file")
    _add_city_args(p)
    p.add_argument("--network", help="network JSON file")
    _add_report_args(p)

    p = sub.add_parser("sweep", help="alpha x seed grid with aggregate statistics")
    _add_city_args(p)
    _add_run_args(p)
    p.add_argument("--algorithm", choices=["evolve", "construct"])
    return parser


def resolve_spec(args) -> dict:
    """Merge defaults, the --spec JSON file, and explicit flags (in that order)."""
    spec = dict(DEFAULTS)
    if getattr(args, "spec", None):
        data = json.loads(Path(args.spec).read_text())
        unknown = set(data) - set(DEFAULTS) - {"command"}
        if unknown:
            raise ValueError(f"unknown spec keys: {sorted(unknown)}")
        spec.update({k: v for k, v in data.items() if k != "command"})
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            spec[key] = value
    spec["command"] = args.command
    spec["alpha"] = parse_alphas(spec["alpha"])
    spec["seeds"] = parse_seeds(spec["seeds"])
    return spec


def load_instance(spec: dict, alpha: float | None = None) -> tuple[CityGraph, ProblemParams]:
    overrides = {k: spec[k] for k in ("transfer_penalty", "beta")}
    overrides["alpha"] = spec["alpha"][0] if alpha is None else alpha
    sizes = {"n_routes": spec["routes"], "min_stops": spec["min_stops"],
             "max_stops": spec["max_stops"]}
    sources = [k for k in ("city", "preset", "generate") if spec.get(k)]
    if len(sources) != 1:
        raise ValueError("give exactly one of --city, --preset or a 'generate' spec entry")
    if spec.get("preset"):
        city, params = load_preset(spec["preset"], spec.get("data_dir"), **overrides)
        sizes = {k: v for k, v in sizes.items() if v is not None}
        return city, params.replace(**sizes)
    if spec.get("city"):
        city = CityGraph.from_json(spec["city"])
    else:
        gen = dict(spec["generate"])
        seed = gen.pop("seed", 0)
        if "demand_range" in gen:
            gen["demand_range"] = tuple(gen["demand_range"])
        city = generate_city(SyntheticCityConfig(**gen), seed)
    missing = [k for k, v in sizes.items() if v is None]
    if missing:
        raise ValueError("--routes, --min-stops and --max-stops are required for non-preset cities")
    return city, ProblemParams(**sizes, **overrides)


# ------------------------------------------------------------- reports
def report(result: EvalResult, spec: dict, city: CityGraph, network, params) -> dict:
    out = result.to_dict(double_co=spec["double_co"])
    out["constraints"] = check_constraints(city, network, params).as_dict()
    headway = spec.get("headway_min")
    if headway:
        buses = out["co_minutes"] / headway
        out["headway_minutes"] = headway
        out["fleet_size"] = buses
        out["operating_cost"] = BUS_COST * buses
    return out


def summary_line(rep: dict) -> str:
    return (f"C_p {rep['cp_minutes']:.2f} min  C_o {rep['co_minutes']:.2f} min  "
            f"total {rep['total']:.4f}  d0 {rep['d0']:.2f}  d1 {rep['d1']:.2f}  "
            f"d2 {rep['d2']:.2f}  dun {rep['dun']:.2f}  "
            f"{'feasible' if rep['feasible'] else 'INFEASIBLE'}")


# ------------------------------------------------------------- single runs
def _run_cell(spec: dict, alpha: float, seed: int, algorithm: str) -> dict:
    """One (alpha, seed) run; writes its artifacts and returns a summary row."""
    started = time.perf_counter()
    row = {"alpha": alpha, "seed": seed}
    try:
        city, params = load_instance(spec, alpha)
        policy = make_policy(spec["policy"], city)
        rng = np.random.default_rng(seed)
        history = None
        cm = CostModel(city, params)
        if algorithm == "construct":
            mdp = ConstructionMDP(city, params, cost_model=cm,
                                  enforce_connectivity=spec["enforce_connectivity"])
            net = lc_sample(policy, mdp, spec["lc_n"], rng, cost_model=cm)
            result = cm.evaluate(net.routes)
        else:
            ea = EaParams(population=spec["pop"], iterations=spec["iters"],
                          mutations_per_stage=spec["mut_per_stage"], p_delete=spec["p_delete"],
                          variant=spec["variant"], lc_samples=spec["lc_n"], policy=policy)
            net, result, history = run_ea(city, ea, params, rng)
        rep = report(result, spec, city, net, params)
        run_dir = Path(spec["out_dir"]) / f"alpha{alpha:.2f}_seed{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        net.to_json(run_dir / "network.json")
        if history is not None:
            write_history_csv(history, run_dir / "history.csv")
        rep["wall_seconds"] = time.perf_counter() - started
        payload = {"spec": spec, "alpha": alpha, "seed": seed, "result": rep}
        (run_dir / "result.json").write_text(json.dumps(payload, indent=2))
        row.update(rep)
        row.pop("constraints")
        row["status"] = "ok"
    except Exception as exc:  # isolate per-run failures in batches
        log.exception("run alpha=%s seed=%s failed", alpha, seed)
        row.update(status=f"error: {exc}", wall_seconds=time.perf_counter() - started)
    return row


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def run_grid(spec: dict, algorithm: str) -> list[dict]:
    cells = [(a, s) for a in spec["alpha"] for s in spec["seeds"]]
    workers = min(_workers(), len(cells))
    if workers <= 1:
        rows = [_run_cell(spec, a, s, algorithm) for a, s in cells]
    else:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_run_cell, spec, a, s, algorithm) for a, s in cells]
            rows = [f.result() for f in futures]
    return sorted(rows, key=lambda r: (r["alpha"], r["seed"]))


ROW_FIELDS = ("kind", "alpha", "seed", "status", "cp_minutes", "co_minutes", "total", "cc",
              "d0", "d1", "d2", "dun", "feasible", "wall_seconds", "fleet_size", "operating_cost")
STAT_FIELDS = ("cp_minutes", "co_minutes", "total")


def aggregate(rows: list[dict]) -> list[dict]:
    """Mean and standard deviation per alpha over the successful runs."""
    out = []
    for alpha in sorted({r["alpha"] for r in rows}):
        ok = [r for r in rows if r["alpha"] == alpha and r["status"] == "ok"]
        agg = {"kind": "aggregate", "alpha": alpha, "n_runs": len(ok)}
        for f in STAT_FIELDS:
            vals = np.array([r[f] for r in ok], dtype=float)
            agg[f"{f}_mean"] = float(vals.mean()) if len(vals) else float("nan")
            agg[f"{f}_std"] = float(vals.std()) if len(vals) else float("nan")
        out.append(agg)
    return out


def write_table(rows: list[dict], aggs: list[dict], path: Path) -> None:
    agg_fields = ["n_runs"] + [f"{f}_{s}" for f in STAT_FIELDS for s in ("mean", "std")]
    fields = list(ROW_FIELDS) + agg_fields
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for r in rows:
            writer.writerow({"kind": "run", **r})
        for a in aggs:
            writer.writerow(a)


def _batch(spec: dict, algorithm: str, table_name: str) -> int:
    out_dir = Path(spec["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "spec.json").write_text(json.dumps(spec, indent=2))
    rows = run_grid(spec, algorithm)
    aggs = aggregate(rows)
    write_table(rows, aggs, out_dir / table_name)
    for r in rows:
        if r["status"] == "ok":
            print(f"alpha={r['alpha']:.2f} seed={r['seed']}: {summary_line(r)}")
        else:
            print(f"alpha={r['alpha']:.2f} seed={r['seed']}: {r['status']}")
    for a in aggs:
        print(f"alpha={a['alpha']:.2f} mean over {a['n_runs']} runs: "
              f"C_p {a['cp_minutes_mean']:.2f} +/- {a['cp_minutes_std']:.2f} min, "
              f"C_o {a['co_minutes_mean']:.2f} +/- {a['co_minutes_std']:.2f} min")
    if any(r["status"] != "ok" for r in rows):
        return EXIT_ERROR
    if not all(r["feasible"] for r in rows):
        return EXIT_INFEASIBLE
    return EXIT_OK


# ------------------------------------------------------------- commands
def cmd_gen_city(args) -> int:
    city = generate_city(SyntheticCityConfig(n=args.n, process=args.process, rho=args.rho), args.seed)
    city.to_json(args.out)
    print(f"wrote {args.out}: {city.n} nodes, {city.n_edges} street edges")
    return EXIT_OK


def cmd_construct(spec: dict) -> int:
    return _batch(spec, "construct", "runs.csv")


def cmd_evolve(spec: dict) -> int:
    return _batch(spec, "evolve", "runs.csv")


def cmd_sweep(spec: dict) -> int:
    return _batch(spec, spec["algorithm"], "sweep.csv")


def cmd_eval(spec: dict) -> int:
    if not spec.get("network"):
        raise ValueError("--network is required")
    city, params = load_instance(spec)
    net = TransitNetwork.from_json(spec["network"])
    check_network(city, net.routes)
    result = CostModel(city, params).evaluate(net.routes)
    rep = report(result, spec, city, net, params)
    print(json.dumps(rep, indent=2))
    print(summary_line(rep), file=sys.stderr)
    ok = result.feasible and rep["constraints"]["route_count_ok"]
    return EXIT_OK if ok else EXIT_INFEASIBLE


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen-city":
            return cmd_gen_city(args)
        spec = resolve_spec(args)
        handler = {"construct": cmd_construct, "evolve": cmd_evolve,
                   "sweep": cmd_sweep, "eval": cmd_eval}[args.command]
        return handler(spec)
    except NetworkValidationError as exc:
        print(f"invalid network: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
