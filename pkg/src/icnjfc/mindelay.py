"""MinDelay: conditional-gradient forwarding/caching on the fluid model, and
the per-node online tables used by the packet simulator."""
from __future__ import annotations

import heapq
import math
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError
from .fluid import (SATURATED, ForwardingCachingPoint, MM1Cost, arcs_of,
                    check_modified_conditions, evaluate, forwarded_marginal)
from .topology import NetworkGraph, RoutingGraph

# --------------------------------------------------------------------------
# direction subproblems


def choose_next_hop(costs: Mapping[int, float]) -> int:
    """Next hop with the smallest marginal cost; ties go to the lowest id."""
    if not costs:
        raise ConfigError("no next hop available")
    return min(costs, key=lambda j: (costs[j], j))


def solve_forwarding_direction(graph: NetworkGraph, routing: RoutingGraph,
                               delta: np.ndarray) -> np.ndarray:
    """One-hot forwarding per (node, object) on a minimum-delta next hop."""
    arcs = arcs_of(graph, routing)
    phi_bar = np.zeros(arcs.size)
    for k in range(routing.object_count):
        for i in range(graph.n):
            a, b = arcs.start[k, i], arcs.stop[k, i]
            if a == b:
                if not graph.is_source(i, k):
                    raise ConfigError(
                        f"node {graph.nodes[i]} has no next hop for object {k + 1}")
                continue
            # hops are stored in ascending id, so argmin's first hit is the tie-break
            phi_bar[a + int(np.argmin(delta[a:b]))] = 1.0
    return phi_bar


def solve_caching_direction(omega, capacity: int) -> np.ndarray:
    """Cache the ``capacity`` objects with the largest weights."""
    omega = np.asarray(omega, dtype=float)
    rho_bar = np.zeros(omega.shape)
    if capacity <= 0:
        return rho_bar
    top = np.argsort(-omega, kind="stable")[:capacity]
    rho_bar[top] = 1.0
    return rho_bar


def caching_weights(graph, routing, point, solution) -> np.ndarray:
    """omega[i, k] = t_i(k) * sum_j phi_ij(k) delta_ij(k)."""
    s = forwarded_marginal(graph, routing, point, solution.delta)
    with np.errstate(invalid="ignore"):
        return np.where(solution.t == 0.0, 0.0, solution.t * s)


def direction(graph, routing, point, solution) -> ForwardingCachingPoint:
    phi_bar = solve_forwarding_direction(graph, routing, solution.delta)
    omega = caching_weights(graph, routing, point, solution)
    rho_bar = np.vstack([solve_caching_direction(omega[i], graph.cache_capacity[i])
                         for i in range(graph.n)])
    return ForwardingCachingPoint(phi_bar, rho_bar)


def frank_wolfe_step(graph: NetworkGraph, routing: RoutingGraph, demand,
                     point: ForwardingCachingPoint, stepsize: float = 1.0,
                     model=MM1Cost, solution=None):
    """One modified conditional-gradient step.

    Returns ``(next_point, solution_at_point, direction_point)``.
    """
    if not 0.0 < stepsize <= 1.0:
        raise ConfigError(f"stepsize must lie in (0, 1], got {stepsize}")
    point.check(graph, routing)
    if solution is None:
        solution = evaluate(graph, routing, demand, point, model)
    bar = direction(graph, routing, point, solution)
    if stepsize == 1.0:
        nxt = bar.copy()
    else:
        nxt = ForwardingCachingPoint(point.phi + stepsize * (bar.phi - point.phi),
                                     point.rho + stepsize * (bar.rho - point.rho))
    return nxt, solution, bar


# --------------------------------------------------------------------------
# fluid iteration


def unit_stepsize(n: int) -> float:
    return 1.0


def diminishing_stepsize(n: int) -> float:
    return 2.0 / (n + 2.0)


SCHEDULES = {"unit": unit_stepsize, "diminishing": diminishing_stepsize}


@dataclass
class Iterate:
    n: int
    cost: float
    violations: int
    stepsize: float


@dataclass(eq=False)
class Trajectory:
    iterates: list = field(default_factory=list)
    points: list = field(default_factory=list)
    status: str = "max-steps"  # clean | fixed-point | cycle | max-steps
    cycle_length: int = 0

    @property
    def final(self) -> ForwardingCachingPoint:
        return self.points[-1]

    @property
    def final_cost(self) -> float:
        return self.iterates[-1].cost

    @property
    def best(self) -> int:
        costs = [it.cost for it in self.iterates]
        return int(np.argmin(costs))

    @property
    def best_cost(self) -> float:
        return self.iterates[self.best].cost

    @property
    def oscillating(self) -> bool:
        return self.status == "cycle"

    def rows(self):
        for it in self.iterates:
            yield it.n, it.cost, it.violations, it.stepsize


def _resolve_schedule(schedule) -> Callable[[int], float]:
    if callable(schedule):
        return schedule
    if isinstance(schedule, str):
        try:
            return SCHEDULES[schedule]
        except KeyError:
            raise ConfigError(f"unknown stepsize schedule {schedule!r}") from None
    a = float(schedule)
    return lambda n: a


def _same(p, q) -> bool:
    return np.array_equal(p.phi, q.phi) and np.array_equal(p.rho, q.rho)


def run_fluid_mindelay(graph: NetworkGraph, routing: RoutingGraph, demand,
                       init: ForwardingCachingPoint | None = None,
                       schedule="unit", steps: int = 100, tol: float | None = None,
                       model=MM1Cost) -> Trajectory:
    """Iterate conditional-gradient steps from ``init`` (uniform, empty caches).

    Stops when the modified conditions hold, at a fixed point, when a unit
    stepsize revisits an earlier iterate (a cycle), or after ``steps``.
    """
    stepsize = _resolve_schedule(schedule)
    point = init.copy() if init is not None else ForwardingCachingPoint.uniform(graph, routing)
    point.check(graph, routing)
    traj = Trajectory()
    seen = {}
    for n in range(steps + 1):
        sol = evaluate(graph, routing, demand, point, model)
        report = check_modified_conditions(graph, routing, point, sol, tol)
        a = stepsize(n)
        traj.iterates.append(Iterate(n, sol.cost, len(report.violations), a))
        traj.points.append(point)
        if report.clean:
            traj.status = "clean"
            break
        key = (point.phi.tobytes(), point.rho.tobytes())
        if key in seen:
            traj.status = "cycle"
            traj.cycle_length = n - seen[key]
            break
        seen[key] = n
        if n == steps:
            break
        nxt, _, _ = frank_wolfe_step(graph, routing, demand, point, a, model, sol)
        if _same(nxt, point):
            traj.status = "fixed-point"
            break
        point = nxt
    return traj


# --------------------------------------------------------------------------
# online tables


Decision = namedtuple("Decision", "admit evict")
KEEP = Decision(False, None)
ADMIT = Decision(True, None)


class ScoredSet:
    """Cached objects keyed by score with O(1) access to the minimum.

    A dict holds current scores; a heap holds (score, object) entries and
    stale entries are skipped lazily.
    """

    def __init__(self):
        self.score = {}
        self._heap = []

    def __len__(self):
        return len(self.score)

    def __contains__(self, k):
        return k in self.score

    def set(self, k, value):
        if self.score.get(k) == value:
            return
        self.score[k] = value
        heapq.heappush(self._heap, (value, k))
        if len(self._heap) > 4 * len(self.score) + 16:
            self._heap = [(v, x) for x, v in self.score.items()]
            heapq.heapify(self._heap)

    def remove(self, k):
        del self.score[k]

    def min(self):
        heap = self._heap
        while heap:
            value, k = heap[0]
            if self.score.get(k) == value:
                return value, k
            heapq.heappop(heap)
        raise KeyError("empty")


def online_cache_decision(cached: ScoredSet, capacity: int, score_new: float) -> Decision:
    """Admit when there is room; otherwise replace the lowest-scored object
    only if the newcomer scores strictly higher."""
    if len(cached) < capacity:
        return ADMIT
    if capacity <= 0 or not len(cached):
        return KEEP
    low, k_min = cached.min()
    if score_new > low:
        return Decision(True, k_min)
    return KEEP


RATE_ESTIMATORS = ("running", "window")


class MarginalCostTable:
    """Per-node marginal-cost state refreshed once per update interval.

    ``hops[k]`` are the node's next hops for object k. ``link_capacity[j]``
    is the capacity of the data link j -> node. Request rates are either the
    time average over all closed intervals (``running``) or the count of the
    last interval alone (``window``); link rates always use the last interval.
    """

    def __init__(self, node: int, hops, link_capacity: Mapping[int, float],
                 object_size: float, sources=frozenset(), measure: str = "interest",
                 model=MM1Cost, rate_estimator: str = "running"):
        if measure not in ("interest", "data"):
            raise ConfigError(f"unknown rate measurement {measure!r}")
        if rate_estimator not in RATE_ESTIMATORS:
            raise ConfigError(f"unknown rate estimator {rate_estimator!r}")
        self.node = node
        self.hops = [tuple(h) for h in hops]
        self.K = len(self.hops)
        self.L = float(object_size)
        self.measure = measure
        self.rate_estimator = rate_estimator
        self.model = model
        self.sources = frozenset(sources)  # objects this node serves
        self.neighbors = sorted(link_capacity)
        self.capacity = dict(link_capacity)
        # interval counters
        self.req_count = np.zeros(self.K)
        self.req_total = np.zeros(self.K)
        self.elapsed = 0.0
        self.fwd_count = [[0] * len(h) for h in self.hops]
        self.link_bits = dict.fromkeys(self.neighbors, 0.0)
        # estimates
        self.t = np.zeros(self.K)
        self.F = dict.fromkeys(self.neighbors, 0.0)
        self.Dp = {j: float(model.derivative(0.0, c)) for j, c in self.capacity.items()}
        self.split = [None] * self.K
        self.received = {}  # (j, k) -> dD/dr_j(k) per unit request rate
        self.dDdr = np.zeros(self.K)
        self.delta = [[0.0] * len(h) for h in self.hops]
        self.best = [h[0] if h else -1 for h in self.hops]
        self.delta_min = np.zeros(self.K)
        self.stale = np.zeros(self.K, dtype=bool)
        self.pending = {}
        self.cached = set()
        self.updated_at = None
        self.interval = None
        for k in range(self.K):
            self._refresh_delta(k)

    # measurements --------------------------------------------------------

    def record_interest(self, k):
        self.req_count[k] += 1

    def record_forward(self, k, hop_index):
        self.fwd_count[k][hop_index] += 1
        if self.measure == "interest":
            self.link_bits[self.hops[k][hop_index]] += self.L

    def record_data(self, j, bits):
        if self.measure == "data" and j in self.link_bits:
            self.link_bits[j] += bits

    # protocol ------------------------------------------------------------

    def begin_update(self, now: float, interval: float, cached=()):
        """Close the measurement window and start a new marginal-cost round.

        Returns the objects this node serves; their marginal cost is zero
        and can be announced immediately.
        """
        self.updated_at = now
        self.interval = interval
        self.req_total += self.req_count
        self.elapsed += interval
        if self.rate_estimator == "window":
            self.t = self.req_count / interval
        else:
            self.t = self.req_total / self.elapsed
        self.req_count = np.zeros(self.K)
        for j in self.neighbors:
            self.F[j] = self.link_bits[j] / interval
            self.link_bits[j] = 0.0
            self.Dp[j] = float(self.model.derivative(self.F[j], self.capacity[j]))
        for k, hops in enumerate(self.hops):
            if not hops:
                continue
            counts = self.fwd_count[k]
            total = sum(counts)
            if total > 0:
                self.split[k] = [c / total for c in counts]
            else:
                self.split[k] = [1.0 if j == self.best[k] else 0.0 for j in hops]
            self.fwd_count[k] = [0] * len(hops)
        self.cached = set(cached)
        self.pending = {k: set(self.hops[k]) for k in range(self.K) if self.hops[k]}
        return [k for k in range(self.K) if not self.hops[k]]

    def receive(self, j, values: Mapping[int, float]):
        """Store dD/dr values from next hop ``j``; return objects now complete."""
        ready = []
        for k, v in values.items():
            self.received[(j, k)] = v
            waiting = self.pending.get(k)
            if waiting is not None:
                waiting.discard(j)
                if not waiting:
                    del self.pending[k]
                    ready.append(k)
        for k in ready:
            self.stale[k] = False
            self._finish(k)
        return ready

    def end_update(self):
        """Objects still missing next-hop values reuse the previous ones."""
        for k in list(self.pending):
            self.stale[k] = True
            self._finish(k)
        self.pending = {}

    def _refresh_delta(self, k):
        hops = self.hops[k]
        if not hops:
            self.delta_min[k] = 0.0
            return
        Dp, got, L = self.Dp, self.received, self.L
        d = [Dp[j] + got.get((j, k), 0.0) / L for j in hops]
        self.delta[k] = d
        low = min(d)
        self.best[k] = hops[d.index(low)]
        self.delta_min[k] = low

    def _finish(self, k):
        self._refresh_delta(k)
        if k in self.cached:
            self.dDdr[k] = 0.0
            return
        split = self.split[k]
        d = self.delta[k]
        acc = 0.0
        for f, v in zip(split, d):
            if f > 0.0:
                acc += f * v
        self.dDdr[k] = self.L * acc

    def value(self, k) -> float:
        """This node's marginal cost per unit request rate for object k."""
        if k in self.sources:
            return 0.0
        return float(self.dDdr[k])

    def update(self, now, interval, upstream: Mapping[int, Mapping[int, float]], cached=()):
        """Run a whole refresh with all next-hop values at once.

        ``upstream[j][k]`` is next hop j's marginal cost for object k.
        """
        self.begin_update(now, interval, cached)
        for j in sorted(upstream):
            self.receive(j, upstream[j])
        self.end_update()
        return self

    # decisions -----------------------------------------------------------

    def next_hop(self, k) -> int:
        return self.best[k]

    def cache_score(self, k) -> float:
        t = self.t[k]
        return float(t * self.delta_min[k]) if t > 0.0 else 0.0


def online_forwarding_decision(table: MarginalCostTable, k: int) -> int:
    return table.next_hop(k)
