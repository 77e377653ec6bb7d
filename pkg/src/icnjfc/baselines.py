"""Comparison strategies: backpressure on VIP counters (BP), and LFU caching
with multipath forwarding driven by pending Interests (LFUM-PI) or by
per-interface round-trip times (LFUM-RTT)."""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .mindelay import ADMIT, KEEP, Decision, ScoredSet
from .topology import NetworkGraph, RoutingGraph


# --------------------------------------------------------------------------
# BP / VIP


def bp_choice(local: float, neighbors: Mapping[int, float]) -> int:
    """Interface with the largest positive counter differential.

    Ties and the all-nonpositive case go to the lowest interface id.
    """
    best, best_w = None, 0.0
    for j in sorted(neighbors):
        w = local - neighbors[j]
        if w > best_w:
            best, best_w = j, w
    return min(neighbors) if best is None else best


def top_objects(metric, capacity: int) -> list[int]:
    """Indices of the ``capacity`` largest values, lowest index on ties."""
    if capacity <= 0:
        return []
    order = np.argsort(-np.asarray(metric, dtype=float), kind="stable")
    return sorted(int(k) for k in order[:capacity])


class VipState:
    """Virtual Interest Packet counters for every node and object.

    One slot lasts ``slot`` seconds. Link (i, j) moves up to
    ``C_ji * slot / L`` VIPs per slot toward the source; a cached object
    drains up to the node's largest per-slot link allocation.
    """

    def __init__(self, graph: NetworkGraph, routing: RoutingGraph, slot: float):
        self.graph = graph
        self.routing = routing
        self.slot = float(slot)
        N, K = graph.n, routing.object_count
        self.counters = np.zeros((N, K))
        self.arrivals = np.zeros((N, K))
        self.metric = np.zeros((N, K))
        self.source_mask = np.zeros((N, K), dtype=bool)
        for k, src in enumerate(graph.sources):
            for s in src:
                self.source_mask[s, k] = True
        objs = {}
        for k in range(K):
            for i in range(N):
                for j in routing.out[k][i]:
                    objs.setdefault((i, j), []).append(k)
        self.link_objects = {l: np.array(v, dtype=np.int64) for l, v in sorted(objs.items())}
        L = graph.object_size
        self.allocation = {(i, j): graph.capacity[(j, i)] * self.slot / L
                           for (i, j) in self.link_objects}
        self.cache_drain = np.zeros(N)
        for (i, j), c in graph.capacity.items():
            self.cache_drain[i] = max(self.cache_drain[i], c * self.slot / L)
        self.designated = [set() for _ in range(N)]

    def record_arrival(self, i: int, k: int, amount: float = 1.0):
        self.arrivals[i, k] += amount

    def forward(self, i: int, k: int) -> int:
        hops = self.routing.out[k][i]
        if len(hops) == 1:
            return hops[0]
        V = self.counters
        return bp_choice(V[i, k], {j: V[j, k] for j in hops})

    def slot_update(self, cached: Sequence[set] | None = None):
        """Advance counters by one slot; returns the new counters."""
        V = self.counters
        out = np.zeros_like(V)
        inn = np.zeros_like(V)
        for (i, j), objs in self.link_objects.items():
            diff = V[i, objs] - V[j, objs]
            x = int(np.argmax(diff))
            if diff[x] <= 0.0:
                continue
            k = objs[x]
            amount = min(self.allocation[(i, j)], V[i, k] - out[i, k])
            if amount > 0.0:
                out[i, k] += amount
                inn[j, k] += amount
        if cached is not None:
            for i, objs in enumerate(cached):
                for k in objs:
                    out[i, k] += self.cache_drain[i]
        A = self.arrivals
        self.counters = np.maximum(V - out, 0.0) + A + inn
        self.counters[self.source_mask] = 0.0
        self.metric = A + inn
        self.arrivals = np.zeros_like(A)
        for i in range(self.graph.n):
            self.designated[i] = set(self.cache_update(i))
        return self.counters

    def cache_update(self, i: int) -> list[int]:
        metric = np.where(self.source_mask[i], -np.inf, self.metric[i])
        return top_objects(metric, self.graph.cache_capacity[i])

    def admit(self, i: int, k_new: int, cached: set, capacity: int) -> Decision:
        """Admit designated objects, displacing a non-designated one."""
        if len(cached) < capacity:
            return ADMIT
        if capacity <= 0 or k_new not in self.designated[i]:
            return KEEP
        others = [k for k in cached if k not in self.designated[i]]
        if not others:
            return KEEP
        victim = min(others, key=lambda k: (self.metric[i, k], k))
        return Decision(True, victim)


def bp_forward(vip: VipState, i: int, k: int) -> int:
    return vip.forward(i, k)


def vip_cache_update(vip: VipState, i: int) -> list[int]:
    return vip.cache_update(i)


def vip_slot_update(vip: VipState, cached=None) -> np.ndarray:
    return vip.slot_update(cached)


# --------------------------------------------------------------------------
# randomized multipath forwarding


def sample_index(rng, probs) -> int:
    u = rng.random()
    acc = 0.0
    for x, p in enumerate(probs):
        acc += p
        if u < acc:
            return x
    return len(probs) - 1


def pi_probabilities(counts: Sequence[float]) -> list[float]:
    """Selection probability proportional to 1 / (pending + 1)."""
    w = [1.0 / (c + 1.0) for c in counts]
    s = sum(w)
    return [x / s for x in w]


def rtt_probabilities(estimates: Sequence[float | None]) -> list[float]:
    """Selection probability proportional to 1 / RTT.

    With no samples anywhere the choice is uniform; an interface without a
    sample is scored at the mean of the sampled ones.
    """
    known = [e for e in estimates if e is not None]
    if not known:
        return [1.0 / len(estimates)] * len(estimates)
    fill = sum(known) / len(known)
    w = [1.0 / (fill if e is None else e) for e in estimates]
    s = sum(w)
    return [x / s for x in w]


class PendingInterestCounters:
    """Outstanding Interests per (object, outgoing interface) at one node."""

    def __init__(self):
        self.counts = {}

    def increment(self, k, j):
        self.counts[(k, j)] = self.counts.get((k, j), 0) + 1

    def decrement(self, k, j):
        c = self.counts.get((k, j), 0)
        if c <= 1:
            self.counts.pop((k, j), None)
        else:
            self.counts[(k, j)] = c - 1

    def get(self, k, j) -> int:
        return self.counts.get((k, j), 0)

    def total(self, k) -> int:
        return sum(c for (x, _), c in self.counts.items() if x == k)

    def __len__(self):
        return sum(self.counts.values())


def lfum_pi_forward(counters: PendingInterestCounters, k: int, hops, rng) -> int:
    if len(hops) == 1:
        return hops[0]
    probs = pi_probabilities([counters.get(k, j) for j in hops])
    return hops[sample_index(rng, probs)]


class RttEstimators:
    """EWMA of round-trip time per (object, outgoing interface)."""

    def __init__(self, beta: float = 0.125):
        if not 0.0 < beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        self.beta = beta
        self.avg = {}

    def update(self, k, j, sample: float):
        old = self.avg.get((k, j))
        self.avg[(k, j)] = sample if old is None else (1.0 - self.beta) * old + self.beta * sample

    def get(self, k, j):
        return self.avg.get((k, j))


def lfum_rtt_forward(est: RttEstimators, k: int, hops, rng) -> int:
    if len(hops) == 1:
        return hops[0]
    probs = rtt_probabilities([est.get(k, j) for j in hops])
    return hops[sample_index(rng, probs)]


# --------------------------------------------------------------------------
# LFU


class LfuCacheState:
    """Request frequencies since start and the cached set of one node."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self.freq = {}
        self.cached = ScoredSet()

    def record(self, k):
        f = self.freq.get(k, 0) + 1
        self.freq[k] = f
        if k in self.cached:
            self.cached.set(k, f)

    def admit(self, k):
        self.cached.set(k, self.freq.get(k, 0))

    def evict(self, k):
        self.cached.remove(k)


def lfu_admit(state: LfuCacheState, k_new: int) -> Decision:
    """Admit if there is room; otherwise evict the least-frequent cached
    object only when the newcomer's count is strictly higher."""
    if len(state.cached) < state.capacity:
        return ADMIT
    if state.capacity <= 0:
        return KEEP
    low, k_min = state.cached.min()
    if state.freq.get(k_new, 0) > low:
        return Decision(True, k_min)
    return KEEP
