"""Discrete-event packet simulator with per-request PIT entries and FIFO
link queues.

Each request is a single Interest carrying a random nonce. Served
Interests turn into Data that retraces the Interest's path hop by hop.
Transmission takes ``size / capacity`` seconds; queues are unbounded.
"""
from __future__ import annotations

import csv
import hashlib
import heapq
import io
import time as wallclock
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import AnomalyError, ConfigError, LivelockError
from ..topology import DemandConfig, NetworkGraph, RoutingGraph
from .strategies import make_strategy
from .workload import INTEREST_BITS, Workload, generate_requests

# event kinds; the order only matters for readability, ties use sequence numbers
REQUEST, DONE, ARRIVE, UPDATE = 0, 1, 2, 3

LOCAL = -1  # in-interface of an Interest issued by the node itself

ANOMALIES = ("no_fib", "orphan_data", "wrong_interface", "nonce_collision",
             "cache_overflow", "causality")


@dataclass
class Scenario:
    graph: NetworkGraph
    routing: RoutingGraph
    demand: DemandConfig
    strategy: str = "mindelay"
    horizon: float = 1000.0
    update_interval: float = 3.0
    seed: int = 0
    interest_bits: float = INTEREST_BITS
    data_bits: float | None = None  # defaults to the object size
    propagation_delay: float = 0.0
    measure: str = "interest"
    rate_estimator: str = "running"
    rtt_beta: float = 0.125
    wall_clock_limit: float = 600.0

    def __post_init__(self):
        if self.horizon < 0:
            raise ConfigError("horizon must be nonnegative")
        if not self.update_interval > 0:
            raise ConfigError("update interval must be positive")
        if not self.interest_bits > 0 or (self.data_bits is not None and not self.data_bits > 0):
            raise ConfigError("packet sizes must be positive")
        if self.propagation_delay < 0:
            raise ConfigError("propagation delay must be nonnegative")
        if self.demand.rates.shape != (self.graph.n, self.graph.object_count):
            raise ConfigError("demand shape does not match the topology")


class Packet:
    __slots__ = ("data", "obj", "nonce", "created", "requester", "size", "queued")

    def __init__(self, data, obj, nonce, created, requester, size):
        self.data = data
        self.obj = obj
        self.nonce = nonce
        self.created = created
        self.requester = requester
        self.size = size
        self.queued = 0.0


class LinkQueue:
    """FIFO transmitter for one directed link."""

    __slots__ = ("tail", "head", "capacity", "queue", "busy", "sent")

    def __init__(self, tail, head, capacity):
        self.tail = tail
        self.head = head
        self.capacity = capacity
        self.queue = deque()
        self.busy = False
        self.sent = 0


@dataclass
class MetricsLog:
    graph: NetworkGraph
    horizon: float
    requests: list = field(default_factory=list)  # (created, fulfilled, obj, requester)
    hits: list = field(default_factory=list)  # (time, node, obj, requester)
    generated: int = 0
    anomalies: dict = field(default_factory=lambda: dict.fromkeys(ANOMALIES, 0))
    pit_remaining: int = 0
    events: int = 0
    control_messages: int = 0
    end_time: float = 0.0

    @property
    def fulfilled(self) -> int:
        return len(self.requests)

    @property
    def clean(self) -> bool:
        return not any(self.anomalies.values())

    @property
    def complete(self) -> bool:
        return self.fulfilled == self.generated and self.pit_remaining == 0

    def delays(self) -> np.ndarray:
        if not self.requests:
            return np.empty(0)
        a = np.array([(c, f) for c, f, _, _ in self.requests])
        return a[:, 1] - a[:, 0]

    def to_csv(self) -> str:
        labels = self.graph.nodes
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "time", "fulfill_time", "object", "requester", "node"])
        for c, f, k, i in self.requests:
            w.writerow(["request", repr(c), repr(f), k + 1, labels[i], labels[i]])
        for t, node, k, i in self.hits:
            w.writerow(["hit", repr(t), "", k + 1, labels[i], labels[node]])
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv())
        return path

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()

    def summary(self) -> dict:
        d = self.delays()
        return {
            "generated": self.generated,
            "fulfilled": self.fulfilled,
            "total_delay": float(d.sum()),
            "mean_delay": float(d.mean()) if len(d) else 0.0,
            "cache_hits": len(self.hits),
            "pit_remaining": self.pit_remaining,
            "anomalies": dict(self.anomalies),
            "events": self.events,
            "control_messages": self.control_messages,
            "end_time": self.end_time,
        }


def rng_streams(seed: int):
    """Independent generators for workload, nonces and strategy draws."""
    ws, ns, ss = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(ws), np.random.default_rng(ns), np.random.default_rng(ss)


class Simulator:
    def __init__(self, scenario: Scenario, workload: Workload | None = None):
        sc = scenario
        g = sc.graph
        self.scenario = sc
        self.graph = g
        self.routing = sc.routing
        wrng, nrng, srng = rng_streams(sc.seed)
        self.workload = workload if workload is not None else generate_requests(
            sc.demand, sc.horizon, wrng, nrng)
        self.strategy = make_strategy(sc.strategy, g, sc.routing, srng,
                                      interval=sc.update_interval, measure=sc.measure,
                                      rate_estimator=sc.rate_estimator,
                                      rtt_beta=sc.rtt_beta)
        self.data_bits = float(sc.data_bits if sc.data_bits is not None else g.object_size)
        self.links = {(i, j): LinkQueue(i, j, c) for (i, j), c in sorted(g.capacity.items())}
        self.served = [frozenset(k for k in range(g.object_count) if g.is_source(i, k))
                       for i in range(g.n)]
        self.caches = [set() for _ in range(g.n)]
        self.pit = [dict() for _ in range(g.n)]
        self.log = MetricsLog(g, sc.horizon)
        self.heap = []
        self.seq = 0
        self.now = 0.0
        self.outstanding = 0
        self.packet_events = 0  # queued events other than UPDATE

    # scheduling ----------------------------------------------------------

    def push(self, t, kind, a=None, b=None):
        self.seq += 1
        if kind != UPDATE:
            self.packet_events += 1
        heapq.heappush(self.heap, (t, self.seq, kind, a, b))

    def transmit(self, link: LinkQueue, packet: Packet):
        packet.queued = self.now
        if link.busy:
            link.queue.append(packet)
        else:
            self._start(link, packet)

    def _start(self, link, packet):
        link.busy = True
        self.push(self.now + packet.size / link.capacity, DONE, link, packet)

    def _complete(self, link, packet):
        if self.now - packet.queued < packet.size / link.capacity - 1e-9:
            self.log.anomalies["causality"] += 1
        link.sent += 1
        if link.queue:
            self._start(link, link.queue.popleft())
        else:
            link.busy = False
        delay = self.scenario.propagation_delay
        if delay > 0.0:
            self.push(self.now + delay, ARRIVE, link, packet)
        else:
            self._arrive(link, packet)

    def _arrive(self, link, packet):
        if packet.data:
            self.on_data(link.head, packet, link.tail)
        else:
            self.on_interest(link.head, packet, link.tail)

    # packet handling -----------------------------------------------------

    def on_interest(self, i, packet, in_iface):
        k = packet.obj
        strat = self.strategy
        strat.on_interest(i, k)
        source = k in self.served[i]
        if source or k in self.caches[i]:
            if not source:
                self.log.hits.append((self.now, i, k, packet.requester))
            if in_iface == LOCAL:
                self._fulfil(packet)
                return
            data = Packet(True, k, packet.nonce, packet.created, packet.requester,
                          self.data_bits)
            self.transmit(self.links[(i, in_iface)], data)
            return
        hops = self.routing.out[k][i]
        if not hops:
            self.log.anomalies["no_fib"] += 1
            self.outstanding -= 1
            return
        j = strat.forward(i, k)
        key = (k, packet.nonce)
        pit = self.pit[i]
        if key in pit:
            self.log.anomalies["nonce_collision"] += 1
            self.outstanding -= 1
            return
        pit[key] = (in_iface, j, self.now)
        self.transmit(self.links[(i, j)], packet)

    def on_data(self, i, packet, in_iface):
        k = packet.obj
        entry = self.pit[i].pop((k, packet.nonce), None)
        if entry is None:
            self.log.anomalies["orphan_data"] += 1
            self.outstanding -= 1  # the request's Data is gone
            return
        back, out, sent = entry
        if out != in_iface:
            self.log.anomalies["wrong_interface"] += 1
        strat = self.strategy
        strat.on_data(i, k, in_iface, self.now - sent)
        cache = self.caches[i]
        capacity = self.graph.cache_capacity[i]
        if capacity > 0 and k not in cache and k not in self.served[i]:
            decision = strat.admit(i, k, cache)
            if decision.admit:
                if decision.evict is not None:
                    cache.discard(decision.evict)
                    strat.evicted(i, decision.evict)
                if len(cache) < capacity:
                    cache.add(k)
                    strat.cached(i, k)
            if len(cache) > capacity:
                self.log.anomalies["cache_overflow"] += 1
        if back == LOCAL:
            self._fulfil(packet)
        else:
            self.transmit(self.links[(i, back)], packet)

    def _fulfil(self, packet):
        self.log.requests.append((packet.created, self.now, packet.obj, packet.requester))
        self.outstanding -= 1

    # main loop -----------------------------------------------------------

    def run(self) -> MetricsLog:
        sc = self.scenario
        w = self.workload
        total = len(w)
        self.log.generated = total
        if total:
            self.push(float(w.time[0]), REQUEST, 0)
            self.push(sc.update_interval, UPDATE)
        next_request = 0
        started = wallclock.monotonic()
        heap = self.heap
        events = 0
        while heap:
            t, _, kind, a, b = heapq.heappop(heap)
            self.now = t
            events += 1
            if kind != UPDATE:
                self.packet_events -= 1
            if kind == DONE:
                self._complete(a, b)
            elif kind == ARRIVE:
                self._arrive(a, b)
            elif kind == REQUEST:
                x = a
                i, k = int(w.requester[x]), int(w.obj[x])
                self.outstanding += 1
                next_request = x + 1
                if next_request < total:
                    self.push(float(w.time[next_request]), REQUEST, next_request)
                self.strategy.on_request(i, k)
                self.on_interest(i, Packet(False, k, int(w.nonce[x]), t, i,
                                           sc.interest_bits), LOCAL)
            elif kind == UPDATE:
                self.strategy.update(t, self.caches)
                if self.packet_events == 0 and next_request >= total:
                    break  # nothing in flight can fulfil what is left
                if next_request < total or self.outstanding > 0:
                    self.push(t + sc.update_interval, UPDATE)
            if next_request >= total and self.outstanding == 0:
                break
            if not events & 0xFFF and wallclock.monotonic() - started > sc.wall_clock_limit:
                raise LivelockError(
                    f"wall-clock bound {sc.wall_clock_limit:g}s exceeded at t={t:.3f} "
                    f"with {self.outstanding} outstanding requests")
        if next_request < total or self.outstanding > 0:
            if not any(self.log.anomalies.values()):
                raise LivelockError(
                    f"event queue empty with {self.outstanding} outstanding requests")
        self.log.events = events
        self.log.end_time = self.now
        self.log.pit_remaining = sum(len(p) for p in self.pit)
        self.log.control_messages = self.strategy.control_messages
        return self.log


def run(scenario: Scenario, strict: bool = False) -> MetricsLog:
    """Simulate until every generated request is fulfilled.

    With ``strict`` a run with nonzero anomaly counters raises AnomalyError.
    """
    log = Simulator(scenario).run()
    if strict and not log.clean:
        bad = {k: v for k, v in log.anomalies.items() if v}
        raise AnomalyError(f"simulation anomalies: {bad}", bad)
    return log
