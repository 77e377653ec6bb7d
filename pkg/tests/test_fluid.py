import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icnjfc.errors import ConfigError
from icnjfc.fluid import (MM1Cost, ForwardingCachingPoint, SATURATED, arcs_of,
                          check_modified_conditions, compute_traffic, cost_at, evaluate,
                          partial_wrt_phi, partial_wrt_rho, point_from_document,
                          point_to_document, solution_to_document)
from icnjfc.topology import DemandConfig

from conftest import line_graph
from oracles import (dense_cost, fd_gradients, interior_point, phi_dict, random_instance,
                     relative_error)


def test_mm1_cost_and_derivative():
    assert MM1Cost.cost(0.0, 10.0) == 0.0
    assert MM1Cost.cost(5.0, 10.0) == 1.0
    assert MM1Cost.derivative(0.0, 10.0) == pytest.approx(0.1)
    assert MM1Cost.derivative(5.0, 10.0) == pytest.approx(0.4)
    assert MM1Cost.cost(10.0, 10.0) == SATURATED
    assert MM1Cost.derivative(12.0, 10.0) == SATURATED


def test_line_traffic_accumulates_toward_source():
    g = line_graph(3)
    from icnjfc.topology import build_routing
    r = build_routing(g)
    d = DemandConfig(np.array([[2.0], [1.0], [0.0]]))
    p = ForwardingCachingPoint.uniform(g, r)
    t = compute_traffic(g, r, d, p)
    assert t[:, 0].tolist() == [2.0, 3.0, 3.0]
    p.rho[1, 0] = 1.0
    t = compute_traffic(g, r, d, p)
    assert t[:, 0].tolist() == [2.0, 3.0, 0.0]


def test_two_hop_cost_by_hand():
    # node 0 requests 1 object/s of 1 Mbit via node 1 from node 2; links 10 Mbps
    g = line_graph(3, capacity=1e7)
    from icnjfc.topology import build_routing
    r = build_routing(g)
    d = DemandConfig(np.array([[1.0], [0.0], [0.0]]))
    p = ForwardingCachingPoint.uniform(g, r)
    # two links each carry 1 Mbps: 2 * 1/(10-1)
    assert cost_at(g, r, d, p) == pytest.approx(2 / 9)


def test_cost_matches_dense_oracle():
    rng = np.random.default_rng(3)
    for _ in range(15):
        g, r, d = random_instance(rng, int(rng.integers(3, 7)), 3, max_cache=2, load=0.4)
        p = interior_point(g, r, rng)
        expected = dense_cost(g, r, d.rates, phi_dict(g, r, p), p.rho)
        assert cost_at(g, r, d, p) == pytest.approx(expected, rel=1e-12)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(6):
        g, r, d = random_instance(rng, int(rng.integers(3, 6)), 2, max_cache=1, load=0.4)
        p = interior_point(g, r, rng)
        sol = evaluate(g, r, d, p)
        d_r, d_phi, d_rho = fd_gradients(g, r, d.rates, p)
        floor = 1e-9 * (1 + sol.cost)
        assert relative_error(sol.dDdr, d_r, floor).max() <= 1e-6
        assert relative_error(partial_wrt_phi(g, r, p, sol.t, sol.delta), d_phi, floor).max() <= 1e-6
        assert relative_error(partial_wrt_rho(g, r, p, sol.t, sol.delta), d_rho, floor).max() <= 1e-6


def test_sources_have_zero_marginal_cost(fig1):
    sol = evaluate(fig1.graph, fig1.routing, fig1.demand,
                   ForwardingCachingPoint.uniform(fig1.graph, fig1.routing))
    src = fig1.graph.index(3)
    assert not sol.dDdr[src].any()
    assert not sol.delta_min[src].any()


def test_point_validation(fig1):
    g, r = fig1.graph, fig1.routing
    p = ForwardingCachingPoint.uniform(g, r)
    p.phi[0] = 0.9
    with pytest.raises(ConfigError, match="infeasible"):
        p.check(g, r)
    q = ForwardingCachingPoint.uniform(g, r)
    q.rho[0, :] = 1.0  # node 1 holds one object only
    with pytest.raises(ConfigError):
        q.check(g, r)


def test_fig1_condition_reports(fig1):
    g, r, d = fig1.graph, fig1.routing, fig1.demand
    bad = point_from_document({"caching": {1: [1]},
                               "forwarding": {1: {1: {2: 1.0}}, 2: {1: {3: 1.0}}}}, g, r)
    report = check_modified_conditions(g, r, bad, evaluate(g, r, d, bad))
    kinds = {(v.condition, g.nodes[v.node], v.obj + 1) for v in report.violations}
    assert ("caching", "1", 1) in kinds
    assert not report.raw  # classical conditions are satisfied here
    good = point_from_document({"caching": {1: [2]},
                                "forwarding": {1: {1: {3: 1.0}}, 2: {1: {3: 1.0}}}}, g, r)
    sol = evaluate(g, r, d, good)
    assert check_modified_conditions(g, r, good, sol).clean
    # 20 Mbps links, 1 Mbit objects: object 1 (1 req/s) over 1->3 costs 1/19
    assert sol.cost == pytest.approx(1 / 19)


def test_point_document_round_trip(fig1):
    g, r = fig1.graph, fig1.routing
    rng = np.random.default_rng(0)
    p = interior_point(g, r, rng, rho_max=0.5)
    q = point_from_document(point_to_document(g, r, p), g, r)
    assert np.allclose(p.phi, q.phi) and np.allclose(p.rho, q.rho)


def test_solution_dump_is_plain_data(fig1):
    sol = evaluate(fig1.graph, fig1.routing, fig1.demand,
                   ForwardingCachingPoint.uniform(fig1.graph, fig1.routing))
    doc = solution_to_document(fig1.graph, fig1.routing, sol)
    import yaml
    assert yaml.safe_load(yaml.safe_dump(doc))["cost"] == pytest.approx(sol.cost)


def test_zero_demand_costs_nothing(fig1):
    g, r = fig1.graph, fig1.routing
    sol = evaluate(g, r, DemandConfig.zeros(g), ForwardingCachingPoint.uniform(g, r))
    assert sol.cost == 0.0
    assert not sol.t.any()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), load=st.floats(0.05, 3.0))
def test_cost_infinite_exactly_when_saturated(seed, load):
    rng = np.random.default_rng(seed)
    g, r, d = random_instance(rng, 4, 2, max_cache=1, load=load)
    p = interior_point(g, r, rng)
    sol = evaluate(g, r, d, p)
    arcs = arcs_of(g, r)
    caps = np.array([g.capacity[(j, i)] for i, j in arcs.links])
    assert math.isinf(sol.cost) == bool(np.any(sol.F >= caps))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), bump=st.floats(1e-3, 0.5))
def test_cost_increases_with_any_single_rate(seed, bump):
    rng = np.random.default_rng(seed)
    g, r, d = random_instance(rng, 4, 2, max_cache=1, load=0.3)
    p = interior_point(g, r, rng, rho_max=0.5)
    base = cost_at(g, r, d, p)
    i = int(rng.integers(g.n))
    k = int(rng.integers(g.object_count))
    if g.is_source(i, k):
        return
    rates = d.rates.copy()
    rates[i, k] += bump * max(d.rates.max(), 1e-3)
    bumped = cost_at(g, r, DemandConfig(rates), p)
    assert math.isinf(bumped) or bumped > base
