"""Strategy x topology x arrival-rate sweeps averaged over seeds."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .builtin import TOPOLOGIES, builtin_document, preset
from .errors import ConfigError
from .sim.engine import MetricsLog, Scenario, run
from .sim.strategies import STRATEGIES
from .topology import Instance, _read_document, load_instance

RESULT_COLUMNS = ("topology", "strategy", "rate", "seed_count",
                  "delay_mean", "delay_std", "hits_mean", "hits_std")


def resolve_instance(topology, preset_name: str = "desk", capacity_mbps=None,
                     objects=None, cache_size=None, rate=None) -> Instance:
    """Built-in name (sized by the preset) or a topology document path."""
    if isinstance(topology, str) and topology in TOPOLOGIES + ("fig1",):
        doc = builtin_document(topology, preset_name, capacity_mbps)
        return load_instance(doc, rate=rate, objects=objects, cache_size=cache_size)
    doc = _read_document(topology)
    return load_instance(doc, rate=rate, capacity_mbps=capacity_mbps, objects=objects,
                         cache_size=cache_size)


def total_delay(log: MetricsLog) -> float:
    """Sum of per-request delays; the log must cover every request."""
    if not log.complete:
        raise ValueError(
            f"incomplete log: {log.fulfilled} of {log.generated} requests fulfilled, "
            f"{log.pit_remaining} PIT entries left")
    return float(sum(f - c for c, f, _, _ in log.requests))


def cache_hit_rate(log: MetricsLog, node_count: int, horizon: float) -> float:
    if node_count <= 0 or horizon <= 0:
        raise ValueError("node count and horizon must be positive")
    return len(log.hits) / (node_count * horizon)


@dataclass
class ExperimentPlan:
    topologies: Sequence[str]
    strategies: Sequence[str]
    rates: Sequence[float]
    seeds: Sequence[int] = tuple(range(10))
    horizon: float | None = None
    out_dir: str | None = None
    preset: str = "desk"
    update_interval: float | None = None
    capacity_mbps: float | None = None
    objects: int | None = None
    cache_size: int | None = None
    workers: int = 1

    def __post_init__(self):
        p = preset(self.preset)
        if self.horizon is None:
            self.horizon = p["horizon"]
        if self.update_interval is None:
            self.update_interval = p["update_interval"]
        if isinstance(self.seeds, int):
            self.seeds = tuple(range(self.seeds))
        self.topologies = tuple(self.topologies)
        self.strategies = tuple(self.strategies)
        self.rates = tuple(float(r) for r in self.rates)
        self.seeds = tuple(int(s) for s in self.seeds)
        for name, grid in (("topologies", self.topologies), ("strategies", self.strategies),
                           ("rates", self.rates), ("seeds", self.seeds)):
            if not grid:
                raise ConfigError(f"plan {name} must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("plan seeds must be distinct")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}; choose from {', '.join(STRATEGIES)}")
        if any(r < 0 for r in self.rates):
            raise ConfigError("rates must be nonnegative")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")

    @classmethod
    def from_document(cls, source, **overrides) -> "ExperimentPlan":
        doc = _read_document(source) if not isinstance(source, Mapping) else dict(source)
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown plan fields: {', '.join(sorted(extra))}")
        doc.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"malformed plan: {exc}") from None

    def cells(self):
        for topo in self.topologies:
            for strategy in self.strategies:
                for rate in self.rates:
                    for seed in self.seeds:
                        yield topo, strategy, rate, seed


@dataclass(frozen=True)
class CellResult:
    topology: str
    strategy: str
    rate: float
    seed: int
    total_delay: float = math.nan
    mean_delay: float = math.nan
    hit_rate: float = math.nan
    generated: int = 0
    error: str | None = None


@dataclass
class Aggregate:
    topology: str
    strategy: str
    rate: float
    seed_count: int
    delay_mean: float
    delay_std: float
    hits_mean: float
    hits_std: float
    mean_delay_mean: float


@dataclass
class ExperimentResult:
    plan: ExperimentPlan
    cells: list
    aggregates: list = field(default_factory=list)
    files: list = field(default_factory=list)

    @property
    def failures(self):
        return [c for c in self.cells if c.error is not None]

    def lookup(self, topology, strategy, rate) -> Aggregate:
        for a in self.aggregates:
            if (a.topology, a.strategy, a.rate) == (topology, strategy, float(rate)):
                return a
        raise KeyError((topology, strategy, rate))


def _mean_std(values):
    n = len(values)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def aggregate(cells: Sequence[CellResult]) -> list[Aggregate]:
    groups = {}
    for c in cells:
        groups.setdefault((c.topology, c.strategy, c.rate), []).append(c)
    out = []
    for (topo, strategy, rate), group in groups.items():
        ok = sorted((c for c in group if c.error is None), key=lambda c: c.seed)
        dm, ds = _mean_std([c.total_delay for c in ok])
        hm, hs = _mean_std([c.hit_rate for c in ok])
        mm, _ = _mean_std([c.mean_delay for c in ok])
        out.append(Aggregate(topo, strategy, rate, len(ok), dm, ds, hm, hs, mm))
    return out


def run_cell(plan: ExperimentPlan, topology, strategy, rate, seed) -> CellResult:
    try:
        inst = resolve_instance(topology, plan.preset, plan.capacity_mbps, plan.objects,
                                plan.cache_size, rate=rate)
        scenario = Scenario(inst.graph, inst.routing, inst.demand, strategy,
                            horizon=plan.horizon, update_interval=plan.update_interval,
                            seed=seed)
        log = run(scenario)
        if not log.clean:
            bad = {k: v for k, v in log.anomalies.items() if v}
            return CellResult(topology, strategy, rate, seed, error=f"anomalies {bad}")
        return CellResult(topology, strategy, rate, seed, total_delay(log),
                          log.summary()["mean_delay"],
                          cache_hit_rate(log, inst.graph.n, plan.horizon), log.generated)
    except Exception as exc:  # a failed cell is reported, not fatal
        return CellResult(topology, strategy, rate, seed, error=f"{type(exc).__name__}: {exc}")


def _run_cell_args(args):
    return run_cell(*args)


def _fmt(x):
    return "" if isinstance(x, float) and math.isnan(x) else repr(x)


def result_table(aggregates, extra=()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS + tuple(extra))
    for a in aggregates:
        w.writerow([a.topology, a.strategy, _fmt(a.rate), a.seed_count, _fmt(a.delay_mean),
                    _fmt(a.delay_std), _fmt(a.hits_mean), _fmt(a.hits_std)]
                   + [_fmt(getattr(a, e)) for e in extra])
    return buf.getvalue()


def write_results(result: ExperimentResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "delay_vs_rate.csv", out / "cache_hits_vs_rate.csv"]
    files[0].write_text(result_table(result.aggregates, extra=("mean_delay_mean",)))
    files[1].write_text(result_table(result.aggregates))
    if result.failures:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["topology", "strategy", "rate", "seed", "error"])
        for c in result.failures:
            w.writerow([c.topology, c.strategy, repr(c.rate), c.seed, c.error])
        path = out / "failures.csv"
        path.write_text(buf.getvalue())
        files.append(path)
    return files


def run_plan(plan: ExperimentPlan, write: bool = True) -> ExperimentResult:
    """Run every cell, aggregate over seeds and write the result tables."""
    jobs = [(plan,) + cell for cell in plan.cells()]
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            cells = list(pool.map(_run_cell_args, jobs))
    else:
        cells = [_run_cell_args(j) for j in jobs]
    result = ExperimentResult(plan, cells, aggregate(cells))
    if write and plan.out_dir is not None:
        result.files = write_results(result, plan.out_dir)
    return result
