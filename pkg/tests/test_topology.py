import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icnjfc.builtin import TOPOLOGIES, builtin_document
from icnjfc.errors import ConfigError
from icnjfc.topology import (DemandConfig, NetworkGraph, build_fib, build_routing,
                             hop_distances, load_instance, load_topology, make_routing,
                             zipf_probabilities)

from conftest import line_graph


def test_zipf_ratio_of_first_two_ranks():
    p = zipf_probabilities(5000, 0.75)
    assert p[0] / p[1] == pytest.approx(2 ** 0.75, rel=1e-12)
    assert p.sum() == pytest.approx(1.0)


def test_zipf_first_rank_matches_harmonic_sum():
    h = math.fsum(k ** -0.75 for k in range(1, 101))
    assert zipf_probabilities(100, 0.75)[0] == pytest.approx(1 / h, rel=1e-12)


@pytest.mark.parametrize("capacity, message", [
    ({(0, 1): 0.0, (1, 0): 1.0}, "nonpositive"),
    ({(0, 0): 1.0}, "invalid link"),
    ({(0, 1): 1.0}, "strongly connected"),
])
def test_graph_rejects_bad_links(capacity, message):
    with pytest.raises(ConfigError, match=message):
        NetworkGraph(("a", "b"), capacity, (0, 0), 1, 1.0, (frozenset([1]),))


def test_graph_rejects_missing_source_and_bad_cache():
    cap = {(0, 1): 1.0, (1, 0): 1.0}
    with pytest.raises(ConfigError, match="no source"):
        NetworkGraph(("a", "b"), cap, (0, 0), 1, 1.0, (frozenset(),))
    with pytest.raises(ConfigError, match="nonnegative integer"):
        NetworkGraph(("a", "b"), cap, (1.5, 0), 1, 1.0, (frozenset([1]),))


def test_line_fib_points_toward_source():
    g = line_graph(4)
    assert build_fib(g, 0) == ((1,), (2,), (3,), ())
    assert hop_distances(g, {3}) == [3, 2, 1, 0]


def test_fib_keeps_every_strictly_closer_neighbour():
    doc = builtin_document("ladder", "desk")
    inst = load_instance(doc)
    g, r = inst.graph, inst.routing
    # C2 is two hops from D3 both via C3 and via D2
    c2 = g.index("C2")
    assert r.out[0][c2] == tuple(sorted((g.index("C3"), g.index("D2"))))
    assert r.out[0][g.index("D3")] == ()


def test_fig1_explicit_fib(fig1):
    g, r = fig1.graph, fig1.routing
    assert r.out[0][g.index(1)] == (g.index(2), g.index(3))
    assert r.out[1][g.index(2)] == (g.index(3),)
    assert r.order[0][0] == g.index(3)


def test_make_routing_rejects_loops_and_missing_hops():
    g = NetworkGraph(("a", "b", "c"),
                     {(x, y): 1.0 for x in range(3) for y in range(3) if x != y},
                     (0, 0, 0), 1, 1.0, (frozenset([2]),))
    with pytest.raises(ConfigError, match="loop"):
        make_routing(g, [((1,), (0,), ())])
    with pytest.raises(ConfigError, match="no next hop"):
        make_routing(g, [((2,), (), ())])
    with pytest.raises(ConfigError, match="must not forward"):
        make_routing(g, [((2,), (2,), (0,))])


def test_builtin_sizes():
    counts = {}
    for name in TOPOLOGIES:
        g = load_topology(builtin_document(name, "desk"))
        counts[name] = (g.n, len(g.capacity) // 2)
    assert counts == {"abilene": (11, 14), "geant": (22, 33), "dtelekom": (68, 273),
                      "tree": (9, 8), "ladder": (12, 17), "fattree": (36, 48)}


def test_abilene_paper_preset_needs_capacity():
    with pytest.raises(ConfigError, match="capacity"):
        load_topology(builtin_document("abilene", "paper"))
    g = load_topology(builtin_document("abilene", "paper", capacity_mbps=100))
    assert g.object_count == 5000
    assert set(g.capacity.values()) == {1e8}


def test_abilene_modulo_servers():
    g = load_topology(builtin_document("abilene", "desk"))
    # object k is served by the (k mod 3)-th server of (1, 5, 8)
    assert [g.nodes[next(iter(g.sources[k]))] for k in range(6)] == ["5", "8", "1", "5", "8", "1"]


def test_fattree_objects_have_one_server_per_group():
    g = load_topology(builtin_document("fattree", "desk"))
    first = {g.index(f"S{i}") for i in range(1, 9)}
    second = {g.index(f"S{i}") for i in range(9, 17)}
    for src in g.sources:
        assert len(src & first) == 1 and len(src & second) == 1


def test_demand_zipf_and_rescale():
    g = line_graph(3, objects=4)
    d = DemandConfig.zipf(g, [0], 2.0, 0.75)
    assert d.rates[0].sum() == pytest.approx(2.0)
    assert not d.rates[1:].any()
    assert d.with_rate(4.0).rates[0].sum() == pytest.approx(4.0)
    with pytest.raises(ConfigError):
        DemandConfig(np.array([[-1.0]]))


def test_document_errors():
    with pytest.raises(ConfigError, match="missing 'links'"):
        load_topology({"nodes": [1], "catalog": {}})
    with pytest.raises(ConfigError, match="not a declared node"):
        load_topology({"nodes": [1, 2], "links": [{"from": 1, "to": 3, "capacity_mbps": 1}],
                       "catalog": {"count": 1, "size_bits": 1, "sources": {1: 1}}})


def test_overrides_replace_catalog_and_caches():
    g = load_topology(builtin_document("tree", "desk"), objects=7, cache_size=3)
    assert g.object_count == 7
    assert sorted(set(g.cache_capacity)) == [0, 3]


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 7))
    # a random spanning tree plus extra chords keeps the graph connected
    pairs = {(draw(st.integers(0, v - 1)), v) for v in range(1, n)}
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=6))
    pairs |= {(min(a, b), max(a, b)) for a, b in extra if a != b}
    cap = {}
    for a, b in pairs:
        cap[(a, b)] = cap[(b, a)] = 1.0
    objects = draw(st.integers(1, 3))
    sources = tuple(frozenset(draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=2)))
                    for _ in range(objects))
    return NetworkGraph(tuple(map(str, range(n))), cap, (0,) * n, objects, 1.0, sources)


@settings(max_examples=60, deadline=None)
@given(connected_graphs())
def test_generated_fibs_are_loop_free_and_descend(g):
    r = build_routing(g)
    for k in range(g.object_count):
        dist = hop_distances(g, g.sources[k])
        for i in range(g.n):
            for j in r.out[k][i]:
                assert dist[j] < dist[i]
            if not g.is_source(i, k):
                assert r.out[k][i]
        position = {v: x for x, v in enumerate(r.order[k])}
        for i in range(g.n):
            for j in r.out[k][i]:
                assert position[j] < position[i]
