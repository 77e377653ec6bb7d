"""Request arrivals: a Poisson process per requester with objects drawn
from that requester's popularity vector."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..topology import DemandConfig

INTEREST_BITS = 10_000.0


@dataclass(frozen=True, eq=False)
class Workload:
    """Requests sorted by time. ``nonce`` values are unsigned 64-bit."""

    time: np.ndarray
    requester: np.ndarray
    obj: np.ndarray
    nonce: np.ndarray

    def __len__(self):
        return len(self.time)


def poisson_arrivals(rng, rate: float, horizon: float) -> np.ndarray:
    if rate <= 0.0 or horizon <= 0.0:
        return np.empty(0)
    count = rng.poisson(rate * horizon)
    return np.sort(rng.uniform(0.0, horizon, size=count))


def generate_requests(demand: DemandConfig, horizon: float, rng, nonce_rng=None) -> Workload:
    """Draw all requests in [0, horizon].

    Node i issues requests at rate ``sum_k rates[i, k]``; each names object
    k with probability ``rates[i, k] / sum_k rates[i, k]``.
    """
    nonce_rng = rng if nonce_rng is None else nonce_rng
    times, who, objs = [], [], []
    rates = demand.rates
    for i in range(rates.shape[0]):
        lam = float(rates[i].sum())
        t = poisson_arrivals(rng, lam, horizon)
        if not len(t):
            continue
        times.append(t)
        who.append(np.full(len(t), i, dtype=np.int64))
        objs.append(rng.choice(rates.shape[1], size=len(t), p=rates[i] / lam))
    if not times:
        empty = np.empty(0, dtype=np.int64)
        return Workload(np.empty(0), empty, empty, np.empty(0, dtype=np.uint64))
    time = np.concatenate(times)
    requester = np.concatenate(who)
    obj = np.concatenate(objs).astype(np.int64)
    order = np.lexsort((requester, time))
    nonce = nonce_rng.integers(0, 2**64, size=len(time), dtype=np.uint64, endpoint=False)
    return Workload(time[order], requester[order], obj[order], nonce)
