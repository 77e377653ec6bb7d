"""Network graph, object catalog, demand and loop-free per-object routing.

Nodes are addressed internally by their position in ``NetworkGraph.nodes``;
that position is also the "node id" used for every tie-break. Objects are
addressed by a 0-based index; documents and reports use 1-based object ids.
"""
from __future__ import annotations

import graphlib
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .errors import ConfigError

BITS_PER_KBYTE = 8_000.0
BITS_PER_MBIT = 1_000_000.0


@dataclass(frozen=True, eq=False)
class NetworkGraph:
    nodes: tuple[str, ...]
    capacity: Mapping[tuple[int, int], float]  # directed link i->j, bits/sec
    cache_capacity: tuple[int, ...]  # object units per node
    object_count: int
    object_size: float  # bits
    sources: tuple[frozenset[int], ...]  # per object
    name: str = ""
    _index: dict = field(init=False, repr=False, compare=False)
    _succ: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.nodes)
        if n == 0:
            raise ConfigError("graph has no nodes")
        if len(set(self.nodes)) != n:
            raise ConfigError("duplicate node ids")
        index = {label: i for i, label in enumerate(self.nodes)}
        object.__setattr__(self, "_index", index)
        succ = [[] for _ in range(n)]
        for (i, j), c in self.capacity.items():
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ConfigError(f"invalid link ({i}, {j})")
            if not c > 0:
                raise ConfigError(
                    f"link {self.nodes[i]}->{self.nodes[j]} has nonpositive capacity {c}"
                )
            succ[i].append(j)
        object.__setattr__(self, "_succ", tuple(tuple(sorted(s)) for s in succ))
        if len(self.cache_capacity) != n:
            raise ConfigError("cache_capacity length does not match node count")
        for c in self.cache_capacity:
            if int(c) != c or c < 0:
                raise ConfigError(f"cache capacity must be a nonnegative integer, got {c}")
        if not self.object_size > 0:
            raise ConfigError("object size must be positive")
        if self.object_count < 0 or len(self.sources) != self.object_count:
            raise ConfigError("every object needs a source set")
        for k, src in enumerate(self.sources):
            if not src:
                raise ConfigError(f"object {k + 1} has no source")
            if any(not 0 <= s < n for s in src):
                raise ConfigError(f"object {k + 1} has a source outside the graph")
        if not _strongly_connected(self._succ):
            raise ConfigError("graph is not strongly connected")

    @property
    def n(self) -> int:
        return len(self.nodes)

    def index(self, label) -> int:
        try:
            return self._index[str(label)]
        except KeyError:
            raise ConfigError(f"unknown node {label!r}") from None

    def successors(self, i: int) -> tuple[int, ...]:
        return self._succ[i]

    def links(self) -> list[tuple[int, int]]:
        return sorted(self.capacity)

    def capacity_matrix(self) -> np.ndarray:
        cap = np.zeros((self.n, self.n))
        for (i, j), c in self.capacity.items():
            cap[i, j] = c
        return cap

    def is_source(self, i: int, k: int) -> bool:
        return i in self.sources[k]


def _strongly_connected(succ) -> bool:
    n = len(succ)
    pred = [[] for _ in range(n)]
    for i, js in enumerate(succ):
        for j in js:
            pred[j].append(i)
    for adj in (succ, pred):
        seen = {0}
        todo = [0]
        while todo:
            u = todo.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    todo.append(v)
        if len(seen) != n:
            return False
    return True


def zipf_probabilities(count: int, alpha: float) -> np.ndarray:
    """Popularity of ranks 1..count, p(k) proportional to k**-alpha."""
    weights = np.arange(1, count + 1, dtype=float) ** -alpha
    return weights / weights.sum()


@dataclass(frozen=True, eq=False)
class DemandConfig:
    """Exogenous request rates ``rates[i, k]`` in requests/sec."""

    rates: np.ndarray
    requesters: tuple[int, ...] = ()
    rate_per_node: float | None = None
    zipf_alpha: float | None = None

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float)
        if r.ndim != 2:
            raise ConfigError("demand rates must be a node x object matrix")
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ConfigError("demand rates must be finite and nonnegative")
        object.__setattr__(self, "rates", r)

    @classmethod
    def zipf(cls, graph: NetworkGraph, requesters: Sequence[int], rate: float,
             alpha: float = 0.75) -> "DemandConfig":
        if rate < 0:
            raise ConfigError("rate_per_node must be nonnegative")
        p = zipf_probabilities(graph.object_count, alpha)
        r = np.zeros((graph.n, graph.object_count))
        for i in requesters:
            r[i] = rate * p
        return cls(r, tuple(requesters), float(rate), float(alpha))

    @classmethod
    def zeros(cls, graph: NetworkGraph) -> "DemandConfig":
        return cls(np.zeros((graph.n, graph.object_count)))

    def with_rate(self, rate: float) -> "DemandConfig":
        if self.zipf_alpha is None:
            raise ConfigError("only Zipf demand can be rescaled by rate")
        p = zipf_probabilities(self.rates.shape[1], self.zipf_alpha)
        r = np.zeros_like(self.rates)
        for i in self.requesters:
            r[i] = rate * p
        return DemandConfig(r, self.requesters, float(rate), self.zipf_alpha)


@dataclass(frozen=True, eq=False)
class RoutingGraph:
    """Per-object FIB: ``out[k][i]`` permitted next hops, ``inc[k][i]`` the
    neighbours that forward object ``k`` to ``i``; ``order[k]`` lists nodes
    with sources first, every next hop before the nodes using it."""

    out: tuple[tuple[tuple[int, ...], ...], ...]
    inc: tuple[tuple[tuple[int, ...], ...], ...]
    order: tuple[tuple[int, ...], ...]

    @property
    def object_count(self) -> int:
        return len(self.out)


def hop_distances(graph: NetworkGraph, sources) -> list[float]:
    """Hop count from each node to its nearest source over usable links.

    A link i->j is usable for requests only if the reverse link j->i exists
    to carry the Data back.
    """
    dist = [float("inf")] * graph.n
    todo = deque()
    for s in sorted(sources):
        dist[s] = 0
        todo.append(s)
    while todo:
        j = todo.popleft()
        # predecessors i of j over usable links: i->j and j->i both present
        for i in graph.successors(j):
            if (i, j) in graph.capacity and dist[i] == float("inf"):
                dist[i] = dist[j] + 1
                todo.append(i)
    return dist


def build_fib(graph: NetworkGraph, k: int) -> tuple[tuple[int, ...], ...]:
    """Next hops of every node for object ``k``: the neighbours strictly
    closer (in hops) to the nearest source, in ascending node id."""
    dist = hop_distances(graph, graph.sources[k])
    out = []
    for i in range(graph.n):
        if dist[i] == float("inf"):
            raise ConfigError(
                f"source of object {k + 1} unreachable from node {graph.nodes[i]}"
            )
        if dist[i] == 0:
            out.append(())
            continue
        out.append(tuple(
            j for j in graph.successors(i)
            if (j, i) in graph.capacity and dist[j] < dist[i]
        ))
    return tuple(out)


def build_routing(graph: NetworkGraph,
                  overrides: Mapping[int, Mapping[int, Sequence[int]]] | None = None
                  ) -> RoutingGraph:
    """FIBs for all objects; ``overrides[k][i]`` replaces node ``i``'s next hops."""
    overrides = overrides or {}
    cache = {}
    outs = []
    for k in range(graph.object_count):
        key = graph.sources[k]
        if key not in cache:
            cache[key] = build_fib(graph, k)
        out = cache[key]
        if k in overrides:
            out = list(out)
            for i, hops in overrides[k].items():
                out[i] = tuple(sorted(hops))
            out = tuple(out)
        outs.append(out)
    return make_routing(graph, outs)


def make_routing(graph: NetworkGraph, outs) -> RoutingGraph:
    """Validate explicit next-hop lists and derive incoming sets and order."""
    n = graph.n
    if len(outs) != graph.object_count:
        raise ConfigError("routing must cover every object")
    orders = []
    incs = []
    done = {}
    for k, out in enumerate(outs):
        out = tuple(tuple(h) for h in out)
        key = (graph.sources[k], out)
        if key in done:
            inc, order = done[key]
        else:
            inc, order = _check_object_routing(graph, k, out)
            done[key] = (inc, order)
        incs.append(inc)
        orders.append(order)
    return RoutingGraph(tuple(tuple(tuple(h) for h in o) for o in outs),
                        tuple(incs), tuple(orders))


def _check_object_routing(graph, k, out):
    n = graph.n
    if len(out) != n:
        raise ConfigError(f"routing for object {k + 1} must list every node")
    inc = [[] for _ in range(n)]
    sorter = graphlib.TopologicalSorter()
    for i in range(n):
        hops = out[i]
        if graph.is_source(i, k):
            if hops:
                raise ConfigError(
                    f"source {graph.nodes[i]} must not forward requests for object {k + 1}"
                )
        elif not hops:
            raise ConfigError(
                f"node {graph.nodes[i]} has no next hop for object {k + 1}"
            )
        if len(set(hops)) != len(hops):
            raise ConfigError(f"duplicate next hop at node {graph.nodes[i]}")
        for j in hops:
            if (i, j) not in graph.capacity or (j, i) not in graph.capacity:
                raise ConfigError(
                    f"next hop {graph.nodes[i]}->{graph.nodes[j]} needs links in both directions"
                )
            inc[j].append(i)
        # node i depends on its next hops being processed first
        sorter.add(i, *hops)
    try:
        order = tuple(sorter.static_order())
    except graphlib.CycleError as exc:
        raise ConfigError(f"routing for object {k + 1} has a loop: {exc.args[1]}") from None
    return tuple(tuple(sorted(s)) for s in inc), order


# --------------------------------------------------------------------------
# documents


@dataclass(frozen=True, eq=False)
class Instance:
    graph: NetworkGraph
    routing: RoutingGraph
    demand: DemandConfig


def _read_document(source):
    if isinstance(source, Mapping):
        return dict(source)
    path = Path(source)
    if path.suffix in {".yaml", ".yml", ".json", ".cfg"} or path.exists():
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path} is not valid YAML/JSON: {exc}") from None
        if not isinstance(doc, Mapping):
            raise ConfigError(f"{path} must contain a mapping")
        return dict(doc)
    from .builtin import builtin_document
    return builtin_document(str(source))


def _capacity_bits(entry, default_mbps):
    if "capacity_bps" in entry:
        return float(entry["capacity_bps"])
    if "capacity_mbps" in entry:
        return float(entry["capacity_mbps"]) * BITS_PER_MBIT
    if default_mbps is not None:
        return float(default_mbps) * BITS_PER_MBIT
    raise ConfigError(
        f"link {entry.get('from')}->{entry.get('to')} has no capacity; "
        "set capacity_mbps in the document or pass a capacity override"
    )


def graph_from_document(doc: Mapping, capacity_mbps: float | None = None,
                        objects: int | None = None, cache_size: int | None = None,
                        ) -> NetworkGraph:
    """Build a validated graph; keyword overrides replace document fields."""
    for key in ("nodes", "links", "catalog"):
        if key not in doc:
            raise ConfigError(f"topology document missing '{key}'")
    nodes = tuple(str(x) for x in doc["nodes"])
    try:
        index = {label: i for i, label in enumerate(nodes)}
    except TypeError:
        raise ConfigError("nodes must be a list of ids") from None

    def node(label):
        try:
            return index[str(label)]
        except KeyError:
            raise ConfigError(f"link endpoint {label!r} is not a declared node") from None

    default_mbps = capacity_mbps if capacity_mbps is not None else doc.get("capacity_mbps")
    capacity = {}
    for entry in doc["links"]:
        if not isinstance(entry, Mapping) or "from" not in entry or "to" not in entry:
            raise ConfigError(f"malformed link entry {entry!r}")
        i, j = node(entry["from"]), node(entry["to"])
        c = _capacity_bits(entry, default_mbps)
        if capacity_mbps is not None:
            c = float(capacity_mbps) * BITS_PER_MBIT
        if not c > 0:
            raise ConfigError(f"link {entry['from']}->{entry['to']} has nonpositive capacity")
        capacity[(i, j)] = c
        if entry.get("bidirectional", False):
            capacity[(j, i)] = c

    caches = [0] * len(nodes)
    raw_caches = doc.get("caches") or {}
    if not isinstance(raw_caches, Mapping):
        raise ConfigError("caches must map node -> object units")
    for label, units in raw_caches.items():
        caches[node(label)] = units
    if cache_size is not None:
        caches = [cache_size if c > 0 else 0 for c in caches]

    catalog = doc["catalog"]
    count = int(objects if objects is not None else catalog.get("count", 0))
    if count <= 0:
        raise ConfigError("catalog count must be positive")
    if "size_bits" in catalog:
        size = float(catalog["size_bits"])
    elif "size_kbytes" in catalog:
        size = float(catalog["size_kbytes"]) * BITS_PER_KBYTE
    else:
        raise ConfigError("catalog needs size_kbytes or size_bits")
    sources = _assign_sources(catalog, count, node, len(nodes))
    return NetworkGraph(nodes, capacity, tuple(caches), count, size, sources,
                        name=str(doc.get("name", "")))


def _assign_sources(catalog, count, node, n):
    mode = catalog.get("source_assignment", "explicit")
    servers = [node(s) for s in catalog.get("servers", [])] or list(range(n))
    if mode == "explicit":
        raw = catalog.get("sources")
        if not isinstance(raw, Mapping):
            raise ConfigError("explicit source assignment needs a 'sources' mapping")
        out = []
        for k in range(1, count + 1):
            if k not in raw and str(k) not in raw:
                raise ConfigError(f"object {k} has no source")
            v = raw.get(k, raw.get(str(k)))
            labels = v if isinstance(v, (list, tuple)) else [v]
            out.append(frozenset(node(s) for s in labels))
        return tuple(out)
    if mode == "modulo":
        return tuple(frozenset([servers[k % len(servers)]]) for k in range(1, count + 1))
    if mode == "random_uniform":
        rng = np.random.default_rng(int(catalog.get("seed", 0)))
        groups = catalog.get("server_groups")
        if groups:
            groups = [[node(s) for s in g] for g in groups]
            return tuple(
                frozenset(int(g[rng.integers(len(g))]) for g in groups)
                for _ in range(count)
            )
        picks = rng.integers(len(servers), size=count)
        return tuple(frozenset([servers[p]]) for p in picks)
    raise ConfigError(f"unknown source_assignment {mode!r}")


def demand_from_document(doc: Mapping, graph: NetworkGraph,
                         rate: float | None = None) -> DemandConfig:
    spec = doc.get("demand")
    if spec is None:
        return DemandConfig.zeros(graph)
    if not isinstance(spec, Mapping):
        raise ConfigError("demand must be a mapping")
    if "rates" in spec:
        r = np.zeros((graph.n, graph.object_count))
        for label, per_object in (spec["rates"] or {}).items():
            i = graph.index(label)
            for obj, value in per_object.items():
                k = int(obj) - 1
                if not 0 <= k < graph.object_count:
                    raise ConfigError(f"demand names unknown object {obj}")
                r[i, k] = float(value)
        return DemandConfig(r)
    requesters = spec.get("requesters", "all")
    if requesters == "all":
        req = tuple(range(graph.n))
    else:
        req = tuple(graph.index(x) for x in requesters)
    lam = rate if rate is not None else float(spec.get("rate_per_node", 0.0))
    return DemandConfig.zipf(graph, req, lam, float(spec.get("zipf_alpha", 0.75)))


def routing_from_document(doc: Mapping, graph: NetworkGraph) -> RoutingGraph:
    raw = doc.get("fib") or {}
    overrides = {}
    for obj, per_node in raw.items():
        k = int(obj) - 1
        if not 0 <= k < graph.object_count:
            raise ConfigError(f"fib names unknown object {obj}")
        overrides[k] = {graph.index(i): [graph.index(j) for j in hops]
                        for i, hops in per_node.items()}
    return build_routing(graph, overrides)


def load_topology(source, **overrides) -> NetworkGraph:
    """Load a topology document (path, mapping, or built-in name)."""
    return graph_from_document(_read_document(source), **overrides)


def load_instance(source, rate: float | None = None, **overrides) -> Instance:
    doc = _read_document(source)
    graph = graph_from_document(doc, **overrides)
    return Instance(graph, routing_from_document(doc, graph),
                    demand_from_document(doc, graph, rate))
