"""Fluid model of request/data traffic under a forwarding/caching point.

Units: rates in requests/sec, flows in bits/sec, capacities in bits/sec.
``delta`` holds marginal forwarding costs per bit of data returned over a
next-hop arc; ``dDdr`` holds marginal cost per unit request rate. With those
units the analytic derivatives below are exact partial derivatives of the
total cost.

Forwarding fractions are stored per *arc* (object k, node i, next hop j), in
the order given by :func:`arcs_of`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .topology import NetworkGraph, RoutingGraph, DemandConfig

SATURATED = math.inf


@dataclass(frozen=True, eq=False)
class Arcs:
    obj: np.ndarray
    tail: np.ndarray
    head: np.ndarray
    link: np.ndarray  # index into ``links``
    start: np.ndarray  # (K, N): first arc of (k, i)
    stop: np.ndarray
    links: tuple[tuple[int, int], ...]
    lookup: dict

    @property
    def size(self) -> int:
        return len(self.obj)

    def span(self, k: int, i: int) -> range:
        return range(self.start[k, i], self.stop[k, i])


_ARCS = {}


def arcs_of(graph: NetworkGraph, routing: RoutingGraph) -> Arcs:
    key = (id(graph), id(routing))
    hit = _ARCS.get(key)
    if hit is not None and hit[0] is graph and hit[1] is routing:
        return hit[2]
    links = tuple(graph.links())
    link_id = {l: x for x, l in enumerate(links)}
    K, N = routing.object_count, graph.n
    obj, tail, head, lid = [], [], [], []
    start = np.zeros((K, N), dtype=np.int64)
    stop = np.zeros((K, N), dtype=np.int64)
    lookup = {}
    for k in range(K):
        for i in range(N):
            start[k, i] = len(obj)
            for j in routing.out[k][i]:
                lookup[(k, i, j)] = len(obj)
                obj.append(k)
                tail.append(i)
                head.append(j)
                lid.append(link_id[(i, j)])
            stop[k, i] = len(obj)
    arcs = Arcs(np.array(obj, dtype=np.int64), np.array(tail, dtype=np.int64),
                np.array(head, dtype=np.int64), np.array(lid, dtype=np.int64),
                start, stop, links, lookup)
    _ARCS[key] = (graph, routing, arcs)
    return arcs


# --------------------------------------------------------------------------
# link cost


class MM1Cost:
    """Average packets queued or in service on a link fed at rate F."""

    name = "mm1"

    @staticmethod
    def cost(F, C):
        F = np.asarray(F, dtype=float)
        C = np.asarray(C, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(F < C, F / (C - F), SATURATED)
        return out if out.ndim else float(out)

    @staticmethod
    def derivative(F, C):
        F = np.asarray(F, dtype=float)
        C = np.asarray(C, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(F < C, C / (C - F) ** 2, SATURATED)
        return out if out.ndim else float(out)


def link_cost(F, C, model=MM1Cost):
    return model.cost(F, C)


def link_cost_derivative(F, C, model=MM1Cost):
    return model.derivative(F, C)


# --------------------------------------------------------------------------
# operating point


@dataclass(eq=False)
class ForwardingCachingPoint:
    phi: np.ndarray  # per arc
    rho: np.ndarray  # (N, K)

    def copy(self) -> "ForwardingCachingPoint":
        return ForwardingCachingPoint(self.phi.copy(), self.rho.copy())

    @classmethod
    def uniform(cls, graph: NetworkGraph, routing: RoutingGraph) -> "ForwardingCachingPoint":
        arcs = arcs_of(graph, routing)
        width = (arcs.stop - arcs.start)[arcs.obj, arcs.tail]
        return cls(1.0 / width.astype(float),
                   np.zeros((graph.n, routing.object_count)))

    def phi_of(self, graph, routing, i, j, k) -> float:
        m = arcs_of(graph, routing).lookup.get((k, i, j))
        return 0.0 if m is None else float(self.phi[m])

    def violations(self, graph: NetworkGraph, routing: RoutingGraph,
                   tol: float = 1e-9) -> list[str]:
        arcs = arcs_of(graph, routing)
        problems = []
        if self.phi.shape != (arcs.size,):
            return [f"phi has shape {self.phi.shape}, expected ({arcs.size},)"]
        if self.rho.shape != (graph.n, routing.object_count):
            return [f"rho has shape {self.rho.shape}"]
        if np.any(self.phi < -tol) or np.any(self.phi > 1 + tol):
            problems.append("forwarding fraction outside [0, 1]")
        if np.any(self.rho < -tol) or np.any(self.rho > 1 + tol):
            problems.append("caching variable outside [0, 1]")
        sums = np.bincount(arcs.obj * graph.n + arcs.tail, weights=self.phi,
                           minlength=routing.object_count * graph.n)
        sums = sums.reshape(routing.object_count, graph.n)
        has_hops = arcs.stop > arcs.start
        bad = np.argwhere(has_hops & (np.abs(sums - 1.0) > 1e-6))
        for k, i in bad[:5]:
            problems.append(f"forwarding fractions at node {graph.nodes[i]} "
                            f"for object {k + 1} sum to {sums[k, i]:.6g}")
        cap = np.array(graph.cache_capacity, dtype=float)
        over = np.flatnonzero(self.rho.sum(axis=1) > cap + 1e-6)
        for i in over[:5]:
            problems.append(f"node {graph.nodes[i]} caches more than {int(cap[i])} objects")
        return problems

    def check(self, graph, routing):
        problems = self.violations(graph, routing)
        if problems:
            raise ConfigError("infeasible point: " + "; ".join(problems))


# --------------------------------------------------------------------------
# traffic, flows, cost


def compute_traffic(graph: NetworkGraph, routing: RoutingGraph, demand,
                    point: ForwardingCachingPoint) -> np.ndarray:
    """Total request rate t[i, k] including forwarded traffic."""
    rates = demand.rates if isinstance(demand, DemandConfig) else np.asarray(demand, float)
    arcs = arcs_of(graph, routing)
    t = np.array(rates, dtype=float, copy=True)
    phi, rho = point.phi, point.rho
    for k in range(routing.object_count):
        col = t[:, k]
        for i in reversed(routing.order[k]):
            a, b = arcs.start[k, i], arcs.stop[k, i]
            if a == b:
                continue
            fwd = col[i] * (1.0 - rho[i, k])
            if fwd == 0.0:
                continue
            for m in range(a, b):
                col[arcs.head[m]] += fwd * phi[m]
    return t


def compute_link_flows(graph: NetworkGraph, routing: RoutingGraph, t: np.ndarray,
                       point: ForwardingCachingPoint) -> np.ndarray:
    """Data rate F per link (i, j), in ``arcs_of(...).links`` order.

    F for link (i, j) is the data returned over the reverse link (j, i).
    """
    arcs = arcs_of(graph, routing)
    per_arc = (graph.object_size * t[arcs.tail, arcs.obj]
               * (1.0 - point.rho[arcs.tail, arcs.obj]) * point.phi)
    return np.bincount(arcs.link, weights=per_arc, minlength=len(arcs.links))


def reverse_capacities(graph: NetworkGraph, routing: RoutingGraph) -> np.ndarray:
    arcs = arcs_of(graph, routing)
    return np.array([graph.capacity[(j, i)] for i, j in arcs.links])


def total_cost(F, C, model=MM1Cost) -> float:
    """Sum of link costs; ``SATURATED`` if any link is at or over capacity."""
    F = np.asarray(F, dtype=float)
    C = np.asarray(C, dtype=float)
    if F.size == 0:
        return 0.0
    if np.any(F >= C):
        return SATURATED
    return float(np.sum(model.cost(F, C)))


def compute_marginals(graph: NetworkGraph, routing: RoutingGraph,
                      point: ForwardingCachingPoint, t: np.ndarray, F: np.ndarray,
                      model=MM1Cost):
    """Marginal costs by recursion outward from the sources.

    Returns ``(dDdr, delta, delta_min)``: ``dDdr[i, k]`` per unit request
    rate, ``delta[m]`` per bit for each arc, ``delta_min[i, k]`` the minimum
    over node i's next hops (0 at sources).
    """
    arcs = arcs_of(graph, routing)
    L = graph.object_size
    Dp = model.derivative(F, reverse_capacities(graph, routing))
    Dp = np.atleast_1d(Dp)
    N, K = graph.n, routing.object_count
    dDdr = np.zeros((N, K))
    delta = np.zeros(arcs.size)
    delta_min = np.zeros((N, K))
    phi, rho = point.phi, point.rho
    for k in range(K):
        for i in routing.order[k]:
            a, b = arcs.start[k, i], arcs.stop[k, i]
            if a == b:
                continue  # source: dDdr stays 0
            acc = 0.0
            best = SATURATED
            for m in range(a, b):
                d = Dp[arcs.link[m]] + dDdr[arcs.head[m], k] / L
                delta[m] = d
                if d < best:
                    best = d
                if phi[m] > 0.0:
                    acc += phi[m] * d
            delta_min[i, k] = best
            keep = 1.0 - rho[i, k]
            dDdr[i, k] = keep * L * acc if keep > 0.0 else 0.0
    return dDdr, delta, delta_min


def partial_wrt_phi(graph, routing, point, t, delta) -> np.ndarray:
    """dD/dphi per arc: (1 - rho) * L * t * delta."""
    arcs = arcs_of(graph, routing)
    factor = (1.0 - point.rho[arcs.tail, arcs.obj]) * graph.object_size * t[arcs.tail, arcs.obj]
    with np.errstate(invalid="ignore"):
        out = factor * delta
    return np.where(factor == 0.0, 0.0, out)


def forwarded_marginal(graph, routing, point, delta) -> np.ndarray:
    """sum_j phi_ij(k) delta_ij(k) per (i, k)."""
    arcs = arcs_of(graph, routing)
    with np.errstate(invalid="ignore"):
        w = np.where(point.phi > 0.0, point.phi * delta, 0.0)
    out = np.zeros((graph.n, routing.object_count))
    np.add.at(out, (arcs.tail, arcs.obj), w)
    return out


def partial_wrt_rho(graph, routing, point, t, delta) -> np.ndarray:
    """dD/drho per (i, k): -L * t * sum_j phi * delta."""
    s = forwarded_marginal(graph, routing, point, delta)
    with np.errstate(invalid="ignore"):
        out = -graph.object_size * t * s
    return np.where(t == 0.0, 0.0, out)


@dataclass(eq=False)
class FluidSolution:
    t: np.ndarray
    F: np.ndarray
    cost: float
    delta: np.ndarray
    dDdr: np.ndarray
    delta_min: np.ndarray
    cache_scores: np.ndarray

    @property
    def saturated(self) -> bool:
        return math.isinf(self.cost)


def evaluate(graph: NetworkGraph, routing: RoutingGraph, demand,
             point: ForwardingCachingPoint, model=MM1Cost) -> FluidSolution:
    t = compute_traffic(graph, routing, demand, point)
    F = compute_link_flows(graph, routing, t, point)
    cost = total_cost(F, reverse_capacities(graph, routing), model)
    dDdr, delta, delta_min = compute_marginals(graph, routing, point, t, F, model)
    with np.errstate(invalid="ignore"):
        scores = np.where(t == 0.0, 0.0, t * delta_min)
    return FluidSolution(t, F, cost, delta, dDdr, delta_min, scores)


def cost_at(graph, routing, demand, point, model=MM1Cost) -> float:
    t = compute_traffic(graph, routing, demand, point)
    F = compute_link_flows(graph, routing, t, point)
    return total_cost(F, reverse_capacities(graph, routing), model)


# --------------------------------------------------------------------------
# optimality conditions


@dataclass(frozen=True)
class Violation:
    condition: str  # forwarding | caching | slackness | raw-*
    node: int
    obj: int
    hop: int | None
    value: float
    bound: float


@dataclass(eq=False)
class ConditionReport:
    tol: float
    violations: list = field(default_factory=list)  # modified conditions
    raw: list = field(default_factory=list)  # classical necessary conditions
    disagreements: list = field(default_factory=list)  # (i, k) where raw and modified caching verdicts differ
    mu: np.ndarray | None = None
    raw_mu: np.ndarray | None = None

    @property
    def clean(self) -> bool:
        return not self.violations

    def count(self, condition: str) -> int:
        pool = self.raw if condition.startswith("raw") else self.violations
        return sum(1 for v in pool if v.condition == condition)


def _threshold(scores, capacity):
    if capacity <= 0:
        return float(np.max(scores)) if scores.size else 0.0
    if capacity >= scores.size:
        return 0.0
    return float(np.sort(scores)[::-1][capacity - 1])


def _caching_check(i, scores, rho_row, candidates, capacity, tol, label):
    """Threshold test shared by the raw and modified caching conditions."""
    found = []
    s = scores[candidates]
    mu = _threshold(s, capacity)
    for k in candidates:
        v, r = scores[k], rho_row[k]
        if r >= 1.0 - 1e-12:
            bad = v < mu - tol
        elif r <= 1e-12:
            bad = v > mu + tol
        else:
            bad = abs(v - mu) > tol
        if bad:
            found.append(Violation(label, i, int(k), None, float(v), mu))
    if mu > tol and rho_row.sum() < capacity - 1e-9:
        slack = "raw-slackness" if label.startswith("raw") else "slackness"
        found.append(Violation(slack, i, -1, None, float(rho_row.sum()), float(capacity)))
    return found, mu


def check_modified_conditions(graph: NetworkGraph, routing: RoutingGraph,
                              point: ForwardingCachingPoint, solution: FluidSolution,
                              tol: float | None = None) -> ConditionReport:
    """Check the modified optimality conditions at ``point``.

    Marginal costs are compared per unit request (``L * delta``), cache
    scores as ``t * L * delta_min``. The per-node multiplier is the
    ``c_i``-th largest cache score.
    """
    if tol is None:
        base = 0.0 if math.isinf(solution.cost) else abs(solution.cost)
        tol = 1e-9 * (1.0 + base)
    arcs = arcs_of(graph, routing)
    L = graph.object_size
    report = ConditionReport(tol=tol)
    N, K = graph.n, routing.object_count
    d_req = L * solution.delta
    dphi = partial_wrt_phi(graph, routing, point, solution.t, solution.delta)

    for k in range(K):
        for i in range(N):
            a, b = arcs.start[k, i], arcs.stop[k, i]
            if a == b:
                continue
            span = slice(a, b)
            best = float(np.min(d_req[span]))
            lam = float(np.min(dphi[span]))
            for m in range(a, b):
                if point.phi[m] <= 0.0:
                    continue
                if not math.isinf(best) and d_req[m] - best > tol:
                    report.violations.append(
                        Violation("forwarding", i, k, int(arcs.head[m]), float(d_req[m]), best))
                if not math.isinf(lam) and dphi[m] - lam > tol:
                    report.raw.append(
                        Violation("raw-forwarding", i, k, int(arcs.head[m]), float(dphi[m]), lam))

    scores = L * solution.cache_scores
    raw_scores = -partial_wrt_rho(graph, routing, point, solution.t, solution.delta)
    mu = np.zeros(N)
    raw_mu = np.zeros(N)
    for i in range(N):
        candidates = np.array([k for k in range(K) if not graph.is_source(i, k)], dtype=int)
        cap = int(graph.cache_capacity[i])
        found, mu[i] = _caching_check(i, scores[i], point.rho[i], candidates, cap, tol, "caching")
        raw_found, raw_mu[i] = _caching_check(i, raw_scores[i], point.rho[i], candidates, cap,
                                              tol, "raw-caching")
        report.violations.extend(found)
        report.raw.extend(raw_found)
        mod_bad = {v.obj for v in found if v.condition == "caching"}
        raw_bad = {v.obj for v in raw_found if v.condition == "raw-caching"}
        for k in sorted(mod_bad ^ raw_bad):
            report.disagreements.append((i, k))
    report.mu = mu
    report.raw_mu = raw_mu
    return report


# --------------------------------------------------------------------------
# documents


def point_from_document(doc, graph: NetworkGraph, routing: RoutingGraph) -> ForwardingCachingPoint:
    """Build a point from ``caching``/``rho`` and ``forwarding`` sections.

    Pairs (node, object) without a forwarding entry get uniform fractions.
    """
    point = ForwardingCachingPoint.uniform(graph, routing)
    arcs = arcs_of(graph, routing)

    def obj_index(x):
        k = int(x) - 1
        if not 0 <= k < routing.object_count:
            raise ConfigError(f"unknown object {x}")
        return k

    for label, objs in (doc.get("caching") or {}).items():
        i = graph.index(label)
        for x in objs:
            point.rho[i, obj_index(x)] = 1.0
    for label, per_obj in (doc.get("rho") or {}).items():
        i = graph.index(label)
        for x, value in per_obj.items():
            point.rho[i, obj_index(x)] = float(value)
    for x, per_node in (doc.get("forwarding") or {}).items():
        k = obj_index(x)
        for label, split in per_node.items():
            i = graph.index(label)
            point.phi[arcs.start[k, i]:arcs.stop[k, i]] = 0.0
            for hop, frac in split.items():
                j = graph.index(hop)
                m = arcs.lookup.get((k, i, j))
                if m is None:
                    raise ConfigError(
                        f"{graph.nodes[j]} is not a next hop of {graph.nodes[i]} for object {k + 1}")
                point.phi[m] = float(frac)
    point.check(graph, routing)
    return point


def point_to_document(graph, routing, point) -> dict:
    arcs = arcs_of(graph, routing)
    forwarding = {}
    for m in range(arcs.size):
        if point.phi[m] > 0.0:
            k, i, j = int(arcs.obj[m]), int(arcs.tail[m]), int(arcs.head[m])
            per_node = forwarding.setdefault(k + 1, {})
            per_node.setdefault(graph.nodes[i], {})[graph.nodes[j]] = float(point.phi[m])
    rho = {}
    for i, k in zip(*np.nonzero(point.rho)):
        rho.setdefault(graph.nodes[i], {})[int(k) + 1] = float(point.rho[i, k])
    return {"rho": rho, "forwarding": forwarding}


def solution_to_document(graph, routing, solution: FluidSolution) -> dict:
    """Structured dump of a solution, for fixtures and debugging."""
    arcs = arcs_of(graph, routing)
    nodes = graph.nodes
    cost = solution.cost if not math.isinf(solution.cost) else "inf"
    return {
        "cost": cost,
        "flows": {f"{nodes[i]}->{nodes[j]}": float(f)
                  for (i, j), f in zip(arcs.links, solution.F)},
        "traffic": {nodes[i]: {k + 1: float(solution.t[i, k])
                               for k in range(solution.t.shape[1]) if solution.t[i, k]}
                    for i in range(graph.n)},
        "dDdr": {nodes[i]: {k + 1: float(solution.dDdr[i, k])
                            for k in range(solution.t.shape[1])}
                 for i in range(graph.n)},
        "delta": [{"object": int(arcs.obj[m]) + 1, "node": nodes[arcs.tail[m]],
                   "hop": nodes[arcs.head[m]], "value": float(solution.delta[m])}
                  for m in range(arcs.size)],
    }
