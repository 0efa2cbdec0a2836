import itertools
import math

import numpy as np
import pytest

from dsrslab import graphs as G


def brute_distances(g):
    """Floyd-Warshall oracle, independent of the BFS implementation."""
    n = g.n
    ids = g.vertices
    dist = [[0 if i == j else math.inf for j in range(n)] for i in range(n)]
    for u, v in g.edges:
        a, b = ids.index(u), ids.index(v)
        dist[a][b] = dist[b][a] = 1
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if dist[i][k] + dist[k][j] < dist[i][j]:
                    dist[i][j] = dist[i][k] + dist[k][j]
    return dist


def random_connected_graph(n, extra_edges, seed):
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    edges = [(int(order[k]), int(order[k + 1])) for k in range(n - 1)]
    while len(edges) < n - 1 + extra_edges:
        u, v = rng.integers(0, n, 2)
        if u != v:
            edges.append((int(u), int(v)))
    return G.Graph(range(n), edges)


def test_construction_errors():
    with pytest.raises(G.GraphError):
        G.Graph([1, 2], [(1, 1)])  # self loop
    with pytest.raises(G.GraphError):
        G.Graph([1, 2], [(1, 3)])  # unknown endpoint
    with pytest.raises(G.GraphError):
        G.Graph([1, 1, 2], [(1, 2)])  # duplicate id
    with pytest.raises(G.GraphError):
        G.Graph([1, 2, 3], [(1, 2)])  # disconnected
    with pytest.raises(G.GraphError):
        G.Graph([], [])


def test_geodesic_distance_examples():
    c80 = G.cycle_graph(80)
    assert G.geodesic_distance(c80, 5, 5) == 0
    assert G.geodesic_distance(c80, 1, 2) == 1
    assert G.geodesic_distance(c80, 1, 41) == 40
    with pytest.raises(G.GraphError):
        G.geodesic_distance(c80, 1, 99)


def test_distance_matches_brute_force():
    for seed in range(4):
        g = random_connected_graph(12, 6, seed)
        oracle = brute_distances(g)
        for i, u in enumerate(g.vertices):
            for j, v in enumerate(g.vertices):
                assert g.distance(u, v) == oracle[i][j]


def test_metric_axioms_exhaustive():
    # graphs up to 30 vertices: nonnegativity, symmetry, identity, triangle
    graphs = [G.cycle_graph(9), G.two_stage_tree(3), random_connected_graph(30, 12, 7)]
    for g in graphs:
        d = g.distance_matrix
        assert (d >= 0).all()
        assert (d == d.T).all()
        assert all(d[i, i] == 0 for i in range(g.n))
        assert all(d[i, j] > 0 for i in range(g.n) for j in range(g.n) if i != j)
        for k in range(g.n):
            assert (d <= d[:, [k]] + d[[k], :]).all()


def test_ball_examples():
    c80 = G.cycle_graph(80)
    assert G.ball(c80, 7, 0) == (7,)
    assert len(G.ball(c80, 1, 2)) == 5
    assert len(G.ball(c80, 1, c80.diameter)) == 80
    assert set(G.ball(c80, 1, 1.5)) == set(G.ball(c80, 1, 1))


def test_doubling_constant_examples():
    single = G.Graph([0], [])
    assert G.doubling_constant(single) == 1.0
    assert G.doubling_constant(G.cycle_graph(80)) == 3.0  # attained at r = 0.5
    assert G.doubling_constant(G.two_stage_tree(3)) == 4.5


def test_doubling_dominates_max_degree():
    for seed in range(5):
        g = random_connected_graph(15, 8, seed)
        assert G.doubling_constant(g) >= g.max_degree


def test_growth_fit_cycle():
    report = G.growth_fit(G.cycle_graph(80))
    assert abs(report.dimension_estimate - 1.0) <= 0.1
    assert report.max_degree == 2
    assert report.diameter == 40


def test_growth_fit_grid():
    report = G.growth_fit(G.grid_graph(10, 10))
    assert abs(report.dimension_estimate - 2.0) <= 0.3


def test_growth_fit_path2():
    report = G.growth_fit(G.path_graph(2))
    assert report.dimension_estimate == 1.0
    assert report.density_estimate == 1.0


def test_growth_fit_degenerate():
    report = G.growth_fit(G.Graph(["v"], []))
    assert report.dimension_estimate == 1.0
    assert report.density_estimate == 1.0
    assert report.diameter == 0


def test_growth_bound_holds_everywhere():
    # the fitted (d, D1) pair must satisfy |B(v,r)| <= D1 (1+r)^d for all v, r
    for g in (G.cycle_graph(17), G.grid_graph(5, 6), G.two_stage_tree(3)):
        rep = G.growth_fit(g)
        sizes = g.ball_sizes()
        for r in range(g.diameter + 1):
            assert (sizes[:, r] <= rep.density_estimate * (1 + r) ** rep.dimension_estimate + 1e-9).all()


def test_doubling_bound_of_growth():
    # |B(v,r)| <= D0 (1+r)^(log2 D0) for all v, r
    for seed in range(3):
        g = random_connected_graph(14, 6, seed)
        d0 = G.doubling_constant(g)
        sizes = g.ball_sizes()
        for r in range(g.diameter + 1):
            assert (sizes[:, r] <= d0 * (1 + r) ** math.log2(d0) + 1e-9).all()


def test_exponential_growth_bound():
    for seed in range(3):
        g = random_connected_graph(14, 8, seed)
        deg = g.max_degree
        if deg < 2:
            continue
        sizes = g.ball_sizes()
        for r in range(g.diameter + 1):
            bound = (deg ** (r + 1) - 1) / (deg - 1)
            assert (sizes[:, r] <= bound + 1e-9).all()


def disjointness_and_coverage(g, centers, radius):
    r = int(radius)
    balls = [set(G.ball(g, c, r)) for c in centers]
    for b1, b2 in itertools.combinations(balls, 2):
        if b1 & b2:
            return False
    union = set().union(*balls)
    for v in g.vertices:
        if not set(G.ball(g, v, r)) & union:
            return False
    return True


def test_maximal_disjoint_subset_small_radius():
    g = G.cycle_graph(12)
    assert set(G.maximal_disjoint_subset(g, 0.5)) == set(g.vertices)
    assert set(G.maximal_disjoint_subset(g, 0)) == set(g.vertices)


def test_maximal_disjoint_subset_cycle12():
    got = G.maximal_disjoint_subset(G.cycle_graph(12), 1)
    assert set(got) == {1, 4, 7, 10}
    assert got[0] == 1


def test_maximal_disjoint_subset_checker():
    for seed in range(6):
        g = random_connected_graph(12 + seed, 5, seed)
        for radius in (1, 1.5, 2, 3):
            centers = G.maximal_disjoint_subset(g, radius)
            assert disjointness_and_coverage(g, centers, radius)


def test_covering_multiplicity():
    g = G.cycle_graph(12)
    assert G.covering_multiplicity(g, g.vertices, 0) == (1, 1)
    assert G.covering_multiplicity(g, [1, 4, 7, 10], 2) == (1, 2)
    with pytest.raises(G.GraphError):
        G.covering_multiplicity(g, [], 1)


def test_covering_bound_from_disjoint_subset():
    # min coverage >= 1 whenever N' >= 2N and centers are a maximal family
    for seed in range(4):
        g = random_connected_graph(16, 6, seed)
        for n in (1, 2):
            centers = G.maximal_disjoint_subset(g, n)
            lo, hi = G.covering_multiplicity(g, centers, 2 * n)
            assert lo >= 1
            d0 = G.doubling_constant(g)
            assert hi <= d0 ** math.ceil(math.log2(2 * (2 * n) / n + 1))


def test_edge_list_round_trip(tmp_path):
    g = G.cycle_graph(7)
    path = tmp_path / "g.txt"
    G.write_edge_list(g, path)
    back = G.read_edge_list(path)
    assert back.n == 7
    assert {frozenset(e) for e in back.edges} == {frozenset((str(u), str(v))) for u, v in g.edges}


def test_edge_list_comments_and_singleton():
    g = G.parse_edge_list("# a comment\n a b \nb c # trailing\n")
    assert g.n == 3
    single = G.parse_edge_list("lonely\n")
    assert single.n == 1
    with pytest.raises(G.GraphError):
        G.parse_edge_list("a b c\n")


def test_growth_report_exports():
    rep = G.growth_fit(G.cycle_graph(8))
    kv = rep.to_kv()
    assert "doubling_constant=" in kv and "diameter=4" in kv
    row = rep.to_csv_row()
    assert len(row.split(",")) == 5
