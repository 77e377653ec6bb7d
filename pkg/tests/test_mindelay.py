import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icnjfc.errors import ConfigError
from icnjfc.fluid import ForwardingCachingPoint, arcs_of, evaluate
from icnjfc.mindelay import (ADMIT, KEEP, MarginalCostTable, ScoredSet, caching_weights,
                             choose_next_hop, frank_wolfe_step, online_cache_decision,
                             online_forwarding_decision, run_fluid_mindelay,
                             solve_caching_direction, solve_forwarding_direction)
from icnjfc.topology import DemandConfig, build_routing

from conftest import line_graph
from oracles import interior_point, linearization_minimum, random_instance


def test_next_hop_argmin_and_ties():
    assert choose_next_hop({2: 3.0, 5: 1.5, 7: 2.2}) == 5
    assert choose_next_hop({2: 1.0, 5: 1.0}) == 2
    assert choose_next_hop({4: 99.0}) == 4
    with pytest.raises(ConfigError):
        choose_next_hop({})


def test_caching_direction_examples():
    assert solve_caching_direction([5, 3, 1], 1).tolist() == [1, 0, 0]
    assert solve_caching_direction([5, 3, 1], 0).tolist() == [0, 0, 0]
    assert solve_caching_direction([5, 3, 1], 4).tolist() == [1, 1, 1]
    assert solve_caching_direction([2, 7, 7, 7], 2).tolist() == [0, 1, 1, 0]


def _arc(g, r, k, i, j):
    return arcs_of(g, r).lookup[(k, g.index(i), g.index(j))]


def test_step_examples(fig1):
    g, r, d = fig1.graph, fig1.routing, fig1.demand
    p = ForwardingCachingPoint.uniform(g, r)
    m2, m3 = _arc(g, r, 0, 1, 2), _arc(g, r, 0, 1, 3)
    p.phi[m2], p.phi[m3] = 1.0, 0.0
    nxt, _, bar = frank_wolfe_step(g, r, d, p, 0.5)
    assert (bar.phi[m2], bar.phi[m3]) == (0.0, 1.0)
    assert (nxt.phi[m2], nxt.phi[m3]) == (0.5, 0.5)
    unit, _, bar = frank_wolfe_step(g, r, d, p, 1.0)
    assert np.array_equal(unit.phi, bar.phi) and np.array_equal(unit.rho, bar.rho)
    # at the direction point itself the step is stationary for any stepsize
    fixed, _, _ = frank_wolfe_step(g, r, d, unit, 0.3)
    again, _, bar2 = frank_wolfe_step(g, r, d, unit, 1.0)
    if np.array_equal(bar2.phi, unit.phi) and np.array_equal(bar2.rho, unit.rho):
        assert np.allclose(fixed.phi, unit.phi) and np.allclose(fixed.rho, unit.rho)


def test_step_rejects_bad_input(fig1):
    g, r, d = fig1.graph, fig1.routing, fig1.demand
    p = ForwardingCachingPoint.uniform(g, r)
    for a in (0.0, 1.5, -0.1):
        with pytest.raises(ConfigError):
            frank_wolfe_step(g, r, d, p, a)
    p.phi[0] = 5.0
    with pytest.raises(ConfigError):
        frank_wolfe_step(g, r, d, p, 1.0)


def test_fig1_reaches_object_two_cached(fig1):
    g, r, d = fig1.graph, fig1.routing, fig1.demand
    traj = run_fluid_mindelay(g, r, d, steps=50)
    assert traj.status == "clean"
    node1 = g.index(1)
    assert traj.final.rho[node1].tolist() == [0.0, 1.0]
    for k in (0, 1):
        assert traj.final.phi[_arc(g, r, k, 1, 3)] == 1.0
    assert traj.final_cost == pytest.approx(1 / 19, rel=1e-12)


def test_diminishing_schedule_also_settles(fig1):
    traj = run_fluid_mindelay(fig1.graph, fig1.routing, fig1.demand, schedule="diminishing",
                              steps=200)
    assert traj.status in ("clean", "fixed-point", "max-steps")
    assert traj.best_cost <= traj.iterates[0].cost
    assert [row[0] for row in traj.rows()] == list(range(len(traj.iterates)))


def test_zero_demand_stays_at_zero_cost(fig1):
    g, r = fig1.graph, fig1.routing
    traj = run_fluid_mindelay(g, r, DemandConfig.zeros(g))
    assert traj.status == "clean" and traj.final_cost == 0.0
    assert all(it.cost == 0.0 for it in traj.iterates)


def test_unknown_schedule_rejected(fig1):
    with pytest.raises(ConfigError):
        run_fluid_mindelay(fig1.graph, fig1.routing, fig1.demand, schedule="warp")


def test_direction_attains_exhaustive_minimum():
    rng = np.random.default_rng(5)
    for _ in range(30):
        g, r, d = random_instance(rng, int(rng.integers(3, 5)), int(rng.integers(1, 6)),
                                  max_cache=3, load=0.4)
        p = interior_point(g, r, rng)
        sol = evaluate(g, r, d, p)
        phi_bar = solve_forwarding_direction(g, r, sol.delta)
        fwd, cache = linearization_minimum(g, r, p, sol)
        arcs = arcs_of(g, r)
        for (i, k), low in fwd.items():
            chosen = [m for m in arcs.span(k, i) if phi_bar[m] == 1.0]
            assert len(chosen) == 1 and sol.delta[chosen[0]] == low
        omega = caching_weights(g, r, p, sol)
        for i in range(g.n):
            rho_bar = solve_caching_direction(omega[i], g.cache_capacity[i])
            low, w = cache[i]
            assert -math.fsum(w[k] for k in np.flatnonzero(rho_bar)) == low


def test_true_gradient_gives_same_direction_when_traffic_flows():
    rng = np.random.default_rng(8)
    for _ in range(20):
        g, r, d = random_instance(rng, 4, 3, max_cache=1, load=0.4)
        # every node requests everything it does not serve, so t > 0
        rates = np.where(d.rates > 0, d.rates, 1e-3)
        for k in range(g.object_count):
            for s in g.sources[k]:
                rates[s, k] = 0.0
        d = DemandConfig(rates)
        p = interior_point(g, r, rng, rho_max=0.5)
        sol = evaluate(g, r, d, p)
        arcs = arcs_of(g, r)
        phi_bar = solve_forwarding_direction(g, r, sol.delta)
        from icnjfc.fluid import partial_wrt_phi
        grad = partial_wrt_phi(g, r, p, sol.t, sol.delta)
        for k in range(g.object_count):
            for i in range(g.n):
                span = list(arcs.span(k, i))
                if span:
                    ours = [m for m in span if phi_bar[m] == 1.0][0]
                    assert grad[ours] == min(grad[m] for m in span)


def test_degenerate_nodes_still_pick_a_minimum_hop(fig1):
    g, r, d = fig1.graph, fig1.routing, fig1.demand
    p = ForwardingCachingPoint.uniform(g, r)
    p.rho[g.index(1), 0] = 1.0  # object 1 fully cached at node 1
    sol = evaluate(g, r, d, p)
    phi_bar = solve_forwarding_direction(g, r, sol.delta)
    arcs = arcs_of(g, r)
    i = g.index(1)
    for k in (0, 1):
        ours = [m for m in arcs.span(k, i) if phi_bar[m] == 1.0][0]
        assert sol.delta[ours] == sol.delta_min[i, k]
    # node 2 carries no object-2 traffic (t = 0) yet still gets a minimal hop
    j = g.index(2)
    ours = [m for m in arcs.span(1, j) if phi_bar[m] == 1.0][0]
    assert sol.delta[ours] == sol.delta_min[j, 1]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), a=st.floats(0.01, 1.0))
def test_steps_stay_feasible(seed, a):
    rng = np.random.default_rng(seed)
    g, r, d = random_instance(rng, 4, 3, max_cache=2, load=0.4)
    p = interior_point(g, r, rng)
    nxt, _, _ = frank_wolfe_step(g, r, d, p, a)
    assert not nxt.violations(g, r)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_unit_steps_keep_caching_integral(seed):
    rng = np.random.default_rng(seed)
    g, r, d = random_instance(rng, 4, 3, max_cache=2, load=0.4)
    traj = run_fluid_mindelay(g, r, d, steps=10)
    for point in traj.points:
        assert set(np.unique(point.rho)) <= {0.0, 1.0}


# online rules ----------------------------------------------------------


def test_online_cache_decision_examples():
    cached = ScoredSet()
    assert online_cache_decision(cached, 2, 0.0) == ADMIT
    cached.set(1, 2.5)
    cached.set(2, 9.0)
    assert online_cache_decision(cached, 2, 4.0) == (True, 1)
    assert online_cache_decision(cached, 2, 2.5) == KEEP
    assert online_cache_decision(ScoredSet(), 0, 10.0) == KEEP


def test_scored_set_tracks_minimum_through_updates():
    s = ScoredSet()
    for k, v in [(1, 5.0), (2, 3.0), (3, 4.0)]:
        s.set(k, v)
    assert s.min() == (3.0, 2)
    s.set(2, 10.0)
    assert s.min() == (4.0, 3)
    s.remove(3)
    assert s.min() == (5.0, 1)
    assert len(s) == 2 and 3 not in s


def _chain_tables(interval=10.0, measure="interest"):
    g = line_graph(3, capacity=1e7)
    L = g.object_size
    tables = [MarginalCostTable(i, [build_routing(g).out[0][i]],
                                {j: g.capacity[(j, i)] for j in g.successors(i)}, L,
                                {0} if i == 2 else (), measure=measure)
              for i in range(3)]
    return g, tables


def test_table_bootstrap_and_source():
    g, tables = _chain_tables()
    assert online_forwarding_decision(tables[0], 0) == 1
    assert tables[0].delta[0][0] == pytest.approx(1 / 1e7)  # D'(0) = 1/C
    assert tables[2].value(0) == 0.0
    assert tables[2].begin_update(10.0, 10.0) == [0]


def test_table_matches_fluid_marginals_on_a_chain():
    g, tables = _chain_tables()
    r = build_routing(g)
    rate0, rate1, interval = 1.5, 0.5, 10.0
    for _ in range(int(rate0 * interval)):
        tables[0].record_interest(0)
        tables[0].record_forward(0, 0)
        tables[1].record_interest(0)
        tables[1].record_forward(0, 0)
    for _ in range(int(rate1 * interval)):
        tables[1].record_interest(0)
        tables[1].record_forward(0, 0)
    tables[2].update(interval, interval, {})
    tables[1].update(interval, interval, {2: {0: tables[2].value(0)}})
    tables[0].update(interval, interval, {1: {0: tables[1].value(0)}})

    d = DemandConfig(np.array([[rate0], [rate1], [0.0]]))
    p = ForwardingCachingPoint.uniform(g, r)
    sol = evaluate(g, r, d, p)
    arcs = arcs_of(g, r)
    for i in (0, 1):
        m = arcs.lookup[(0, i, i + 1)]
        assert tables[i].delta[0][0] == pytest.approx(sol.delta[m], rel=1e-12)
        assert tables[i].value(0) == pytest.approx(sol.dDdr[i, 0], rel=1e-12)
        assert tables[i].t[0] == pytest.approx(sol.t[i, 0])


def test_table_data_measurement_matches_interest_measurement():
    _, a = _chain_tables(measure="interest")
    _, b = _chain_tables(measure="data")
    for _ in range(20):
        a[0].record_forward(0, 0)
        b[0].record_forward(0, 0)
        b[0].record_data(1, b[0].L)
    a[0].update(10.0, 10.0, {1: {0: 0.0}})
    b[0].update(10.0, 10.0, {1: {0: 0.0}})
    assert a[0].F == b[0].F


def test_missing_upstream_value_is_reused_and_marked_stale():
    g, tables = _chain_tables()
    tables[0].update(10.0, 10.0, {1: {0: 3.0}})
    before = tables[0].delta[0][0]
    tables[0].begin_update(20.0, 10.0)
    tables[0].end_update()
    assert tables[0].stale[0]
    assert tables[0].delta[0][0] == pytest.approx(before)


def test_cached_object_reports_zero_marginal_cost():
    g, tables = _chain_tables()
    for _ in range(10):
        tables[1].record_interest(0)
        tables[1].record_forward(0, 0)
    tables[1].update(10.0, 10.0, {2: {0: 0.0}}, cached={0})
    assert tables[1].value(0) == 0.0
    assert tables[1].cache_score(0) > 0.0


def test_rate_estimators():
    _, run = _chain_tables()
    g = line_graph(3)
    window = MarginalCostTable(0, [(1,)], {1: 1e7}, g.object_size, rate_estimator="window")
    for table in (run[0], window):
        for _ in range(30):
            table.record_interest(0)
        table.update(10.0, 10.0, {1: {0: 0.0}})
        table.update(20.0, 10.0, {1: {0: 0.0}})
    assert run[0].t[0] == pytest.approx(1.5)  # 30 requests over 20 s
    assert window.t[0] == 0.0  # nothing in the last interval
    with pytest.raises(ConfigError):
        MarginalCostTable(0, [(1,)], {1: 1.0}, 1.0, rate_estimator="ewma")
