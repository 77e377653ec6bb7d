"""Forwarding/caching strategy pairs plugged into the packet engine.

The engine calls, per node ``i`` and object ``k``:

* ``on_request(i, k)`` when a requester issues a new request,
* ``on_interest(i, k)`` for every Interest reaching ``i``,
* ``forward(i, k)`` to choose the next hop of a non-served Interest,
* ``on_data(i, k, j, rtt)`` when Data from next hop ``j`` reaches ``i``,
* ``admit(i, k, cache)`` before relaying Data for an uncached object,
* ``cached(i, k)`` / ``evicted(i, k)`` after the engine applies a decision,
* ``update(now, caches)`` at every interval boundary.
"""
from __future__ import annotations

from collections import deque

from ..baselines import (LfuCacheState, PendingInterestCounters, RttEstimators, VipState,
                         lfu_admit, lfum_pi_forward, lfum_rtt_forward)
from ..errors import ConfigError
from ..mindelay import KEEP, MarginalCostTable, ScoredSet, online_cache_decision
from ..topology import NetworkGraph, RoutingGraph

STRATEGIES = ("mindelay", "bp", "lfum-pi", "lfum-rtt")


class Strategy:
    name = ""

    def __init__(self, graph: NetworkGraph, routing: RoutingGraph, rng, **options):
        self.graph = graph
        self.routing = routing
        self.rng = rng
        self.control_messages = 0
        self.hops = [[routing.out[k][i] for k in range(routing.object_count)]
                     for i in range(graph.n)]

    def on_request(self, i, k):
        pass

    def on_interest(self, i, k):
        pass

    def forward(self, i, k) -> int:
        raise NotImplementedError

    def on_data(self, i, k, j, rtt):
        pass

    def admit(self, i, k, cache):
        return KEEP

    def cached(self, i, k):
        pass

    def evicted(self, i, k):
        pass

    def update(self, now, caches):
        pass


class MinDelayStrategy(Strategy):
    """Minimum marginal-cost forwarding and cache-score replacement.

    Marginal costs travel upstream-to-downstream as control messages at
    each interval boundary; they take no simulated time.
    """

    name = "mindelay"

    def __init__(self, graph, routing, rng, interval=3.0, measure="interest",
                 rate_estimator="running", **options):
        super().__init__(graph, routing, rng)
        self.interval = float(interval)
        self.tables = []
        for i in range(graph.n):
            served = frozenset(k for k in range(routing.object_count) if graph.is_source(i, k))
            links = {j: graph.capacity[(j, i)] for j in graph.successors(i)}
            self.tables.append(MarginalCostTable(i, self.hops[i], links, graph.object_size,
                                                 served, measure=measure,
                                                 rate_estimator=rate_estimator))
        self.scores = [ScoredSet() for _ in range(graph.n)]

    def on_interest(self, i, k):
        self.tables[i].record_interest(k)

    def forward(self, i, k):
        table = self.tables[i]
        j = table.best[k]
        table.record_forward(k, self.hops[i][k].index(j))
        return j

    def on_data(self, i, k, j, rtt):
        self.tables[i].record_data(j, self.graph.object_size)

    def admit(self, i, k, cache):
        score = self.tables[i].cache_score(k)
        return online_cache_decision(self.scores[i], self.graph.cache_capacity[i], score)

    def cached(self, i, k):
        self.scores[i].set(k, self.tables[i].cache_score(k))

    def evicted(self, i, k):
        self.scores[i].remove(k)

    def update(self, now, caches):
        routing = self.routing
        queue = deque()
        for i, table in enumerate(self.tables):
            ready = table.begin_update(now, self.interval, caches[i])
            if ready:
                queue.append((i, ready))
        while queue:
            i, ready = queue.popleft()
            table = self.tables[i]
            outbox = {}
            for k in ready:
                v = table.value(k)
                for m in routing.inc[k][i]:
                    outbox.setdefault(m, {})[k] = v
            for m in sorted(outbox):
                self.control_messages += 1
                done = self.tables[m].receive(i, outbox[m])
                if done:
                    queue.append((m, done))
        for i, table in enumerate(self.tables):
            table.end_update()
            scores = ScoredSet()
            for k in sorted(caches[i]):
                scores.set(k, table.cache_score(k))
            self.scores[i] = scores


class BackpressureStrategy(Strategy):
    """VIP backpressure forwarding with VIP-inflow caching."""

    name = "bp"

    def __init__(self, graph, routing, rng, interval=3.0, **options):
        super().__init__(graph, routing, rng)
        self.vip = VipState(graph, routing, interval)

    def on_request(self, i, k):
        if not self.graph.is_source(i, k):
            self.vip.record_arrival(i, k)

    def forward(self, i, k):
        return self.vip.forward(i, k)

    def admit(self, i, k, cache):
        return self.vip.admit(i, k, cache, self.graph.cache_capacity[i])

    def update(self, now, caches):
        self.vip.slot_update(caches)


class _LfuStrategy(Strategy):
    def __init__(self, graph, routing, rng, **options):
        super().__init__(graph, routing, rng)
        self.lfu = [LfuCacheState(c) for c in graph.cache_capacity]

    def on_interest(self, i, k):
        self.lfu[i].record(k)

    def admit(self, i, k, cache):
        return lfu_admit(self.lfu[i], k)

    def cached(self, i, k):
        self.lfu[i].admit(k)

    def evicted(self, i, k):
        self.lfu[i].evict(k)


class LfumPiStrategy(_LfuStrategy):
    name = "lfum-pi"

    def __init__(self, graph, routing, rng, **options):
        super().__init__(graph, routing, rng)
        self.pending = [PendingInterestCounters() for _ in range(graph.n)]

    def forward(self, i, k):
        j = lfum_pi_forward(self.pending[i], k, self.hops[i][k], self.rng)
        self.pending[i].increment(k, j)
        return j

    def on_data(self, i, k, j, rtt):
        self.pending[i].decrement(k, j)

    def outstanding(self) -> int:
        return sum(len(p) for p in self.pending)


class LfumRttStrategy(_LfuStrategy):
    name = "lfum-rtt"

    def __init__(self, graph, routing, rng, rtt_beta=0.125, **options):
        super().__init__(graph, routing, rng)
        self.rtt = [RttEstimators(rtt_beta) for _ in range(graph.n)]

    def forward(self, i, k):
        return lfum_rtt_forward(self.rtt[i], k, self.hops[i][k], self.rng)

    def on_data(self, i, k, j, rtt):
        self.rtt[i].update(k, j, rtt)


_CLASSES = {"mindelay": MinDelayStrategy, "bp": BackpressureStrategy,
            "lfum-pi": LfumPiStrategy, "lfum-rtt": LfumRttStrategy}


def make_strategy(name: str, graph, routing, rng, **options) -> Strategy:
    try:
        cls = _CLASSES[name]
    except KeyError:
        raise ConfigError(f"unknown strategy {name!r}; choose from {', '.join(STRATEGIES)}") from None
    return cls(graph, routing, rng, **options)
