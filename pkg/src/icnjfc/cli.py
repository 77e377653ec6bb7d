"""Command-line entry point.

Exit codes: 0 success, 2 configuration or I/O error, 3 simulation anomaly,
4 livelock guard. Errors are one JSON line on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from importlib import resources
from pathlib import Path

import yaml

from .builtin import PRESETS, TOPOLOGIES, preset
from .errors import AnomalyError, ConfigError, LivelockError
from .sim.strategies import STRATEGIES

OUT_ENV = "ICNJFC_OUT"
DEFAULT_OUT = "icnjfc-out"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def data_path(name: str) -> Path:
    return Path(str(resources.files("icnjfc") / "data" / name))


def _existing(path: str) -> str:
    """A user path, or the packaged file of the same name."""
    if Path(path).exists():
        return path
    packaged = data_path(Path(path).name)
    if packaged.exists():
        return str(packaged)
    if Path(path).suffix:
        raise ConfigError(f"file not found: {path}")
    return path  # maybe a built-in topology name


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _positive(kind):
    def parse(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
        if v < 0:
            raise argparse.ArgumentTypeError(f"{text} must be nonnegative")
        return v
    return parse


def _instance(args):
    from .experiments import resolve_instance
    return resolve_instance(_existing(args.instance), args.preset, args.capacity_mbps,
                            args.objects, args.cache_size, rate=args.rate)


def _emit(summary: dict):
    print(json.dumps(summary, sort_keys=True))


# subcommands -------------------------------------------------------------


def cmd_list_topologies(args):
    from .experiments import resolve_instance
    p = preset(args.preset)
    for name in TOPOLOGIES:
        cap = args.capacity_mbps or (p["abilene_capacity_mbps"] if name == "abilene" else None)
        try:
            g = resolve_instance(name, args.preset, cap).graph
            links = len(g.capacity) // 2
            print(f"{name}\tnodes={g.n}\tlinks={links}\tobjects={g.object_count}")
        except ConfigError as exc:
            print(f"{name}\tunavailable: {exc}")
    return 0


def cmd_solve_fluid(args):
    from .fluid import point_from_document, point_to_document
    from .mindelay import run_fluid_mindelay
    from .plotting import plot_trajectory

    inst = _instance(args)
    init = None
    if args.point:
        init = point_from_document(_load_yaml(args.point), inst.graph, inst.routing)
    schedule = args.schedule
    try:
        schedule = float(schedule)
    except ValueError:
        pass
    traj = run_fluid_mindelay(inst.graph, inst.routing, inst.demand, init, schedule,
                              steps=args.steps)
    out = _out_dir(args)
    with open(out / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "cost", "violations", "stepsize"])
        for n, cost, viol, a in traj.rows():
            w.writerow([n, repr(cost), viol, repr(a)])
    final = point_to_document(inst.graph, inst.routing, traj.final)
    (out / "final_point.yaml").write_text(yaml.safe_dump(final, sort_keys=True))
    plot_trajectory(traj, out / "trajectory.png")
    g = inst.graph
    cached = {g.nodes[i]: [k + 1 for k in range(g.object_count) if traj.final.rho[i, k] >= 0.5]
              for i in range(g.n) if traj.final.rho[i].any()}
    _emit({"status": traj.status, "iterations": len(traj.iterates) - 1,
           "final_cost": traj.final_cost, "best_cost": traj.best_cost,
           "cached": cached, "out": str(out)})
    return 0


def _load_yaml(path):
    from .topology import _read_document
    return _read_document(_existing(path))


def cmd_check_conditions(args):
    from .fluid import check_modified_conditions, evaluate, point_from_document

    inst = _instance(args)
    g = inst.graph
    point = point_from_document(_load_yaml(args.point), g, inst.routing)
    sol = evaluate(g, inst.routing, inst.demand, point)
    report = check_modified_conditions(g, inst.routing, point, sol)

    def row(v):
        return {"condition": v.condition, "node": g.nodes[v.node],
                "object": v.obj + 1 if v.obj >= 0 else None,
                "hop": g.nodes[v.hop] if v.hop is not None else None,
                "value": v.value, "bound": v.bound}

    doc = {
        "cost": sol.cost if sol.cost != float("inf") else "inf",
        "clean": report.clean,
        "violations": [row(v) for v in report.violations],
        "raw_violations": [row(v) for v in report.raw],
        "disagreements": [{"node": g.nodes[i], "object": k + 1} for i, k in report.disagreements],
        "tolerance": report.tol,
    }
    out = _out_dir(args)
    (out / "conditions.yaml").write_text(yaml.safe_dump(doc, sort_keys=False))
    with open(out / "conditions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "condition", "node", "object", "hop", "value", "bound"])
        for kind, pool in (("modified", report.violations), ("raw", report.raw)):
            for v in pool:
                r = row(v)
                w.writerow([kind, r["condition"], r["node"], r["object"] or "",
                            r["hop"] or "", repr(r["value"]), repr(r["bound"])])
    for v in doc["violations"]:
        print(f"violation\t{v['condition']}\tnode={v['node']}\tobject={v['object']}"
              f"\thop={v['hop']}\tvalue={v['value']:.6g}\tbound={v['bound']:.6g}")
    _emit({"clean": report.clean, "violations": len(report.violations),
           "raw_violations": len(report.raw), "cost": doc["cost"], "out": str(out)})
    return 0


def cmd_simulate(args):
    from .sim.engine import Scenario, run

    p = preset(args.preset)
    if args.rate is None:
        raise ConfigError("simulate needs --rate")
    args.instance = args.topology
    inst = _instance(args)
    horizon = args.horizon if args.horizon is not None else p["horizon"]
    interval = args.update_interval if args.update_interval is not None else p["update_interval"]
    scenario = Scenario(inst.graph, inst.routing, inst.demand, args.strategy, horizon=horizon,
                        update_interval=interval, seed=args.seed, measure=args.measure)
    log = run(scenario)
    out = _out_dir(args)
    stem = f"{Path(str(args.topology)).stem}_{args.strategy}_r{args.rate:g}_s{args.seed}"
    path = log.write(out / f"{stem}.csv")
    summary = log.summary()
    summary.update(metrics=str(path), digest=log.digest(), topology=str(args.topology),
                   strategy=args.strategy, rate=args.rate, seed=args.seed)
    (out / f"{stem}.json").write_text(json.dumps(summary, sort_keys=True, indent=1))
    _emit(summary)
    if not log.clean:
        bad = {k: v for k, v in log.anomalies.items() if v}
        raise AnomalyError(f"simulation anomalies: {bad}", bad)
    return 0


def cmd_experiment(args):
    from .experiments import ExperimentPlan, run_plan
    from .plotting import plot_experiment

    out = _out_dir(args)
    overrides = dict(horizon=args.horizon, update_interval=args.update_interval,
                     capacity_mbps=args.capacity_mbps, objects=args.objects,
                     cache_size=args.cache_size, workers=args.workers, out_dir=str(out))
    if args.seeds is not None:
        overrides["seeds"] = args.seeds
    if args.plan:
        plan = ExperimentPlan.from_document(_existing(args.plan), **overrides)
    else:
        if not args.topology or args.rates is None:
            raise ConfigError("experiment needs --plan or --topology and --rates")
        overrides.setdefault("seeds", preset(args.preset)["seeds"])
        plan = ExperimentPlan(args.topology, args.strategy or list(STRATEGIES), args.rates,
                              preset=args.preset,
                              **{k: v for k, v in overrides.items() if v is not None})
    result = run_plan(plan)
    figures = [str(f) for f in plot_experiment(result.aggregates, out)]
    for a in result.aggregates:
        print(f"{a.topology}\t{a.strategy}\t{a.rate:g}\tseeds={a.seed_count}"
              f"\tdelay={a.delay_mean:.4f}\thits={a.hits_mean:.4f}")
    _emit({"cells": len(result.cells), "failures": len(result.failures),
           "tables": [str(f) for f in result.files], "figures": figures})
    return 0


# parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="icnjfc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
        p.add_argument("--capacity-mbps", type=_positive(float))
        p.add_argument("--objects", type=_positive(int))
        p.add_argument("--cache-size", type=_positive(int))
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")

    p = sub.add_parser("list-topologies", help="show the built-in topologies")
    common(p)
    p.set_defaults(func=cmd_list_topologies)

    for name, func, helptext in (("solve-fluid", cmd_solve_fluid, "run the fluid iteration"),
                                 ("check-conditions", cmd_check_conditions,
                                  "check optimality conditions at a point")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--instance", required=True, help="instance document or built-in name")
        p.add_argument("--point", required=(name == "check-conditions"),
                       help="point document (caching/forwarding)")
        p.add_argument("--rate", type=_positive(float), help="per-node rate for Zipf demand")
        if name == "solve-fluid":
            p.add_argument("--steps", type=_positive(int), default=100)
            p.add_argument("--schedule", default="unit",
                           help="unit, diminishing, or a constant in (0, 1]")
        p.set_defaults(func=func)

    p = sub.add_parser("simulate", help="run one packet-level simulation")
    common(p)
    p.add_argument("-t", "--topology", required=True)
    p.add_argument("-s", "--strategy", choices=STRATEGIES, default="mindelay")
    p.add_argument("--rate", type=_positive(float))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=_positive(float))
    p.add_argument("--update-interval", type=_positive(float))
    p.add_argument("--measure", choices=("interest", "data"), default="interest")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run a strategy/topology/rate sweep")
    common(p)
    p.add_argument("--plan", help="plan document")
    p.add_argument("-t", "--topology", action="append")
    p.add_argument("-s", "--strategy", action="append", choices=STRATEGIES)
    p.add_argument("--rates", type=lambda s: [float(x) for x in s.split(",")])
    p.add_argument("--seeds", type=_positive(int))
    p.add_argument("--horizon", type=_positive(float))
    p.add_argument("--update-interval", type=_positive(float))
    p.add_argument("--workers", type=_positive(int), default=1)
    p.set_defaults(func=cmd_experiment)
    return parser


def _fail(kind, code, exc):
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        return _fail("config", 2, exc)
    except AnomalyError as exc:
        return _fail("anomaly", 3, exc)
    except LivelockError as exc:
        return _fail("livelock", 4, exc)
    except OSError as exc:
        return _fail("io", 2, exc)


if __name__ == "__main__":
    sys.exit(main())
