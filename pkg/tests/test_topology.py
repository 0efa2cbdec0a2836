import numpy as np
import pytest

from dsrslab import graphs as G
from dsrslab import topology as T
from dsrslab import experiments as xp


def tiny_topology():
    g = G.Graph(["a", "b"], [("a", "b")])
    return T.build_topology(g, ["p"], [("p", "a")])


def test_build_validation_errors():
    g = G.Graph(["a", "b"], [("a", "b")])
    with pytest.raises(T.TopologyError):
        T.build_topology(g, ["p"], [])  # orphan position
    with pytest.raises(T.TopologyError):
        T.build_topology(g, ["p"], [("p", "zz")])  # unknown agent
    with pytest.raises(T.TopologyError):
        T.build_topology(g, ["q"], [("p", "a")])  # unknown position
    with pytest.raises(T.TopologyError):
        T.build_topology(g, ["a"], [("a", "a")])  # id clash


def test_single_association_edge():
    t = tiny_topology()
    assert t.h_graph.n == 3
    assert t.signal_edges == ()
    assert t.h_distance("p", "a") == 1
    assert t.h_distance("p", "b") == 2


def test_cycle_scenario_counts(cycle80):
    t, _, _, _ = cycle80
    assert t.n_agents == 80
    assert t.n_positions == 80
    assert len(t.associations) == 240
    assert all(len(t.anchors_of(p)) == 3 for p in t.positions)


def test_prism_scenario_counts(prism160):
    t, _, _, _ = prism160
    assert t.n_agents == 160
    assert t.n_positions == 80
    assert len(t.associations) == 320
    assert all(len(t.anchors_of(p)) == 4 for p in t.positions)
    assert all(t.agent_graph.degree(a) == 3 for a in t.agents)


def test_h_distance_examples(cycle80):
    t, _, _, _ = cycle80
    # on agent pairs the combined-graph metric equals the agent-graph metric
    dg = t.agent_graph.distance_matrix
    idx = [t.h_graph.index(a) for a in t.agents]
    dh = t.h_graph.distance_matrix[np.ix_(idx, idx)]
    assert (dg == dh).all()
    assert t.h_distance("p1", "a1") == 1
    assert t.h_distance("p1", "p4") == 3


def test_signal_distance_examples(cycle80):
    t, _, _, _ = cycle80
    assert t.signal_distance("p3", "p3") == 0
    assert t.signal_distance("p3", "p4") == 1  # shared anchor
    assert t.signal_distance("p1", "p4") == 2


def test_signal_metric_axioms(cycle80, prism160):
    # nonnegativity, symmetry, and identity of indiscernibles hold always
    for t in (cycle80[0], prism160[0]):
        d = t.signal_distance_matrix()
        assert (d >= 0).all()
        assert (d == d.T).all()
        assert (np.diag(d) == 0).all()
        off = d + np.eye(len(d)) * 10**9
        assert (off > 0).all()


def test_signal_triangle_inequality_under_clique_anchors():
    # the triangle inequality relies on anchor sets being cliques; build a
    # compliant deployment (adjacent anchor pairs) and check it exhaustively
    n = 12
    g = G.cycle_graph(n)
    positions = [f"p{i}" for i in range(1, n + 1)]
    assoc = []
    for i in range(1, n + 1):
        assoc.append((f"p{i}", i))
        assoc.append((f"p{i}", i % n + 1))
    t = T.build_topology(g, positions, assoc)
    assert T.validate_assumptions(t).anchor_clique_ok
    d = t.signal_distance_matrix()
    for k in range(len(d)):
        assert (d <= d[:, [k]] + d[[k], :]).all()


def test_signal_triangle_fails_without_cliques(cycle80):
    # the bundled ring deployment has non-adjacent outer anchors, and its
    # inherited position metric indeed loses the triangle inequality
    t = cycle80[0]
    assert t.signal_distance("p1", "p5") > t.signal_distance("p1", "p3") + t.signal_distance("p3", "p5")


def test_shortest_paths_route_through_agents():
    # BFS predecessor reconstruction on a small scenario: intermediates in G
    t, _ = xp.gen_cycle_scenario(10, seed=5)
    h = t.h_graph
    agents = set(t.agents)
    import collections

    for src in h.vertices:
        parent = {src: None}
        queue = collections.deque([src])
        while queue:
            u = queue.popleft()
            for v in h.neighbors(u):
                if v not in parent:
                    parent[v] = u
                    queue.append(v)
        for dst in h.vertices:
            if dst == src:
                continue
            node, path = dst, []
            while node is not None:
                path.append(node)
                node = parent[node]
            for inner in path[1:-1]:
                assert inner in agents


def test_validate_assumptions_cycle(cycle80):
    t, _, _, _ = cycle80
    report = T.validate_assumptions(t)
    assert report.doubling_ok
    assert report.doubling_constant == 3.0
    assert report.L == 3
    assert report.M == 0
    # the two outer anchors of each position sit two hops apart on the ring,
    # so the anchor sets do not induce cliques
    assert not report.anchor_clique_ok
    assert len(report.clique_violations) == 80


def test_validate_assumptions_prism(prism160):
    t, _, _, _ = prism160
    report = T.validate_assumptions(t)
    assert report.L == 2
    assert report.M == 0
    assert not report.anchor_clique_ok  # diagonal anchor pairs are not linked
    viol_pairs = {frozenset((a, b)) for _, a, b in report.clique_violations}
    assert frozenset(("a1", "a82")) in viol_pairs


def test_validate_assumptions_clique_positive():
    g = G.Graph(["a", "b", "c"], [("a", "b"), ("b", "c"), ("a", "c")])
    t = T.build_topology(g, ["p"], [("p", "a"), ("p", "b"), ("p", "c")])
    report = T.validate_assumptions(t)
    assert report.anchor_clique_ok
    assert report.L == 1
    assert report.M == 0


def test_constructed_clique_violation():
    g = G.Graph(["a", "b", "c"], [("a", "b"), ("b", "c")])
    t = T.build_topology(g, ["p"], [("p", "a"), ("p", "c")])
    report = T.validate_assumptions(t)
    assert not report.anchor_clique_ok
    assert report.clique_violations == (("p", "a", "c"),)


def test_m_counts_non_anchor_agents():
    g = G.path_graph(4)
    t = T.build_topology(g, ["p"], [("p", 1)])
    assert T.validate_assumptions(t).M == 3


def test_innovation_stats(cycle80, prism160):
    for t in (cycle80[0], prism160[0]):
        d, d1, deg_v = T.innovation_stats(t)
        agent_d = t.growth.dimension_estimate
        assert abs(d - agent_d) <= 0.2
        L = max(len(t.anchored_by(a)) for a in t.agents)
        assert deg_v <= L * (t.agent_graph.max_degree + 1)
    t80 = cycle80[0]
    assert abs(T.innovation_stats(t80)[0] - t80.growth.dimension_estimate) <= 0.15
    assert T.innovation_stats(t80)[2] == 4


def test_innovation_stats_single_position():
    t = tiny_topology()
    d, d1, deg_v = T.innovation_stats(t)
    assert d == 1.0
    assert d1 == 1.0
    assert deg_v == 0


def test_signal_doubling_bounded(cycle80, prism160):
    # measure doubling of the signal metric and compare with the explicit bound
    for t in (cycle80[0], prism160[0]):
        d = t.signal_distance_matrix()
        diam = int(d.max())
        n = len(d)
        sizes = np.zeros((n, diam + 1), dtype=int)
        np.add.at(sizes, (np.repeat(np.arange(n), n), d.ravel()), 1)
        sizes = sizes.cumsum(axis=1)
        best = 1.0
        for k in range(1, 2 * diam + 1):
            outer = sizes[:, min(k, diam)]
            inner = sizes[:, min(k // 2, diam)]
            best = max(best, float((outer / inner).max()))
        rep = T.validate_assumptions(t)
        deg = t.agent_graph.max_degree
        bound = rep.L * rep.doubling_constant**2 * ((deg ** (2 * rep.M + 3) - 1) / (deg - 1))
        assert best <= bound


def test_topology_round_trip(tmp_path, cycle80):
    t, _, _, _ = cycle80
    path = tmp_path / "topo.txt"
    T.write_topology(t, path)
    back = T.read_topology(path)
    assert back.agents == t.agents
    assert back.positions == t.positions
    assert back.associations == t.associations
    assert set(back.agent_graph.edges) == set(t.agent_graph.edges)
    assert back.coords == t.coords


def test_topology_round_trip_without_coords(tmp_path):
    t = tiny_topology()
    path = tmp_path / "topo.txt"
    T.write_topology(t, path)
    back = T.read_topology(path)
    assert back.coords is None
    assert back.positions == ("p",)
