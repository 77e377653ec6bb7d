"""Built-in topology documents and the desk/paper presets.

The six evaluation topologies are reconstructed from their textual
descriptions (node roles, server placement, cache sizes). GEANT and
DTelekom edge lists are not machine-readable in any published form we
ship, so GEANT uses a 22-PoP European backbone and DTelekom a seeded
68-node mesh with the same node/link counts.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError

PRESETS = {
    "paper": {
        "objects": 5000,
        "object_kbytes": 500.0,
        "interest_kbytes": 1.25,
        "capacity_mbps": 50.0,
        "abilene_capacity_mbps": None,  # never published; must be supplied
        "large_cache": 500,
        "small_cache": 250,
        "horizon": 1000.0,
        "update_interval": 3.0,
        "zipf_alpha": 0.75,
        "seeds": 10,
    },
    "desk": {
        "objects": 100,
        "object_kbytes": 500.0,
        "interest_kbytes": 1.25,
        "capacity_mbps": 50.0,
        "abilene_capacity_mbps": 50.0,
        "large_cache": 20,
        "small_cache": 10,
        "horizon": 100.0,
        "update_interval": 3.0,
        "zipf_alpha": 0.75,
        "seeds": 10,
    },
}

TOPOLOGIES = ("abilene", "geant", "dtelekom", "tree", "ladder", "fattree")


def preset(name: str) -> dict:
    try:
        return dict(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def _bidir(pairs, capacity_mbps=None):
    links = []
    for a, b in pairs:
        entry = {"from": a, "to": b, "bidirectional": True}
        if capacity_mbps is not None:
            entry["capacity_mbps"] = capacity_mbps
        links.append(entry)
    return links


def _doc(name, nodes, pairs, caches, catalog, requesters, p, capacity_mbps):
    return {
        "name": name,
        "nodes": list(nodes),
        "links": _bidir(pairs, capacity_mbps),
        "caches": caches,
        "catalog": dict(count=p["objects"], size_kbytes=p["object_kbytes"], **catalog),
        "demand": {"requesters": requesters, "rate_per_node": 0.0,
                   "zipf_alpha": p["zipf_alpha"]},
    }


def abilene(p, capacity_mbps=None):
    # 1 Seattle, 2 Sunnyvale, 3 Los Angeles, 4 Denver, 5 Kansas City,
    # 6 Houston, 7 Chicago, 8 Indianapolis, 9 Atlanta, 10 Washington, 11 New York
    nodes = [str(i) for i in range(1, 12)]
    pairs = [(1, 2), (1, 4), (2, 3), (2, 4), (3, 6), (4, 5), (5, 6), (5, 8),
             (6, 9), (8, 7), (8, 9), (7, 11), (9, 10), (11, 10)]
    servers = ["1", "5", "8"]
    requesters = [x for x in nodes if x not in servers]
    cap = capacity_mbps if capacity_mbps is not None else p["abilene_capacity_mbps"]
    return _doc("abilene", nodes, pairs, {x: p["large_cache"] for x in requesters},
                {"source_assignment": "modulo", "servers": servers},
                requesters, p, cap)


def geant(p, capacity_mbps=None):
    nodes = ["UK", "NL", "FR", "IE", "PT", "SE", "BE", "DE", "LU", "ES", "CH",
             "IT", "GR", "IL", "AT", "CZ", "HU", "SI", "SK", "PL", "HR", "NY"]
    pairs = [("UK", "NL"), ("UK", "FR"), ("UK", "IE"), ("UK", "PT"), ("UK", "SE"),
             ("NL", "BE"), ("NL", "DE"), ("BE", "FR"), ("BE", "LU"), ("LU", "DE"),
             ("FR", "ES"), ("FR", "CH"), ("ES", "PT"), ("ES", "IT"), ("CH", "IT"),
             ("CH", "DE"), ("IT", "DE"), ("IT", "GR"), ("IT", "IL"), ("DE", "AT"),
             ("DE", "CZ"), ("DE", "SE"), ("AT", "HU"), ("AT", "SI"), ("CZ", "PL"),
             ("CZ", "SK"), ("SK", "HU"), ("HU", "HR"), ("SI", "HR"), ("SE", "PL"),
             ("GR", "AT"), ("UK", "NY"), ("DE", "NY")]
    return _doc("geant", nodes, pairs, {x: p["large_cache"] for x in nodes},
                {"source_assignment": "random_uniform", "seed": 22},
                "all", p, capacity_mbps or p["capacity_mbps"])


def dtelekom_pairs(n=68, links=273, seed=68):
    rng = np.random.default_rng(seed)
    pairs = set()
    for v in range(1, n):
        u = int(rng.integers(v))
        pairs.add((u, v))
    while len(pairs) < links:
        u, v = (int(x) for x in rng.integers(n, size=2))
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    return sorted(pairs)


def dtelekom(p, capacity_mbps=None):
    nodes = [str(i) for i in range(1, 69)]
    pairs = [(nodes[u], nodes[v]) for u, v in dtelekom_pairs()]
    return _doc("dtelekom", nodes, pairs, {x: p["large_cache"] for x in nodes},
                {"source_assignment": "random_uniform", "seed": 68},
                "all", p, capacity_mbps or p["capacity_mbps"])


def tree(p, capacity_mbps=None):
    nodes = ["S1", "S2", "E1", "E2", "E3", "C1", "C2", "C3", "C4"]
    pairs = [("S1", "E1"), ("S2", "E1"), ("E1", "E2"), ("E1", "E3"),
             ("E2", "C1"), ("E2", "C2"), ("E3", "C3"), ("E3", "C4")]
    cached = ["E1", "E2", "E3", "C1", "C2", "C3", "C4"]
    return _doc("tree", nodes, pairs, {x: p["small_cache"] for x in cached},
                {"source_assignment": "random_uniform", "servers": ["S1", "S2"],
                 "seed": 9},
                ["C1", "C2", "C3", "C4"], p, capacity_mbps or p["capacity_mbps"])


def ladder(p, capacity_mbps=None):
    cols, rows = "ABCD", (1, 2, 3)
    nodes = [f"{c}{r}" for r in rows for c in cols]
    pairs = []
    for r in rows:
        pairs += [(f"{a}{r}", f"{b}{r}") for a, b in zip(cols, cols[1:])]
    for c in cols:
        pairs += [(f"{c}1", f"{c}2"), (f"{c}2", f"{c}3")]
    return _doc("ladder", nodes, pairs,
                {x: p["small_cache"] for x in nodes if x != "D3"},
                {"source_assignment": "explicit",
                 "sources": {k: "D3" for k in range(1, p["objects"] + 1)}},
                ["A1", "A2", "A3"], p, capacity_mbps or p["capacity_mbps"])


def fattree(p, capacity_mbps=None):
    core = [f"C{i}" for i in range(1, 5)]
    agg = [f"A{i}" for i in range(1, 9)]
    edge = [f"E{i}" for i in range(1, 9)]
    servers = [f"S{i}" for i in range(1, 17)]
    pairs = []
    for pod in range(4):
        a1, a2 = agg[2 * pod], agg[2 * pod + 1]
        pairs += [("C1", a1), ("C2", a1), ("C3", a2), ("C4", a2)]
        for e in edge[2 * pod: 2 * pod + 2]:
            pairs += [(a1, e), (a2, e)]
    for i, e in enumerate(edge):
        pairs += [(e, servers[2 * i]), (e, servers[2 * i + 1])]
    nodes = core + agg + edge + servers
    return _doc("fattree", nodes, pairs, {x: p["small_cache"] for x in core + agg + edge},
                {"source_assignment": "random_uniform",
                 "server_groups": [servers[:8], servers[8:]], "seed": 16},
                core, p, capacity_mbps or p["capacity_mbps"])


def fig1():
    """Three-node example with two objects served by node 3."""
    return {
        "name": "fig1",
        "nodes": [1, 2, 3],
        "links": _bidir([(1, 2), (1, 3), (2, 3)], 20.0),
        "caches": {1: 1, 2: 0},
        "catalog": {"count": 2, "size_bits": 1.0e6, "source_assignment": "explicit",
                    "sources": {1: 3, 2: 3}},
        "demand": {"rates": {1: {1: 1.0, 2: 1.5}}},
        "fib": {1: {1: [2, 3], 2: [3]}, 2: {1: [2, 3], 2: [3]}},
    }


_BUILDERS = {"abilene": abilene, "geant": geant, "dtelekom": dtelekom,
             "tree": tree, "ladder": ladder, "fattree": fattree}


def builtin_document(name: str, preset_name: str = "paper",
                     capacity_mbps: float | None = None) -> dict:
    if name == "fig1":
        return fig1()
    try:
        build = _BUILDERS[name]
    except KeyError:
        raise ConfigError(
            f"unknown topology {name!r}; built-ins are {', '.join(TOPOLOGIES)}"
        ) from None
    return build(preset(preset_name), capacity_mbps)
