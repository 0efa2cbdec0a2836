import math

import numpy as np
import pytest

from dsrslab import graphs as G
from dsrslab import sensing as S
from dsrslab import topology as T


def two_point_topology(offset):
    g = G.Graph(["a"], [])
    coords = {"a": (0.0, 0.0), "p": offset}
    return T.build_topology(g, ["p"], [("p", "a")], coords)


def band_topology(n_agents, width):
    """Path of agents, one position per agent, anchored by its own agent."""
    g = G.path_graph(n_agents)
    positions = [f"p{i}" for i in range(1, n_agents + 1)]
    assoc = [(f"p{i}", i) for i in range(1, n_agents + 1)]
    t = T.build_topology(g, positions, assoc)
    entries = {}
    for i in range(1, n_agents + 1):
        for j in range(1, n_agents + 1):
            if t.h_distance(i, f"p{j}") <= width:
                entries[(i, f"p{j}")] = 1.0
    return t, entries


def test_gaussian_entries():
    t = two_point_topology((0.0, 0.0))
    m = S.assemble(t, S.GaussianKernel(1.0))
    assert m.entry("a", "p") == 1.0
    t2 = two_point_topology((1.0, 1.0))
    m2 = S.assemble(t2, S.GaussianKernel(1.0))
    assert m2.entry("a", "p") == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_missing_coordinates_error():
    g = G.Graph(["a"], [])
    t = T.build_topology(g, ["p"], [("p", "a")])
    with pytest.raises(S.SensingError):
        S.assemble(t, S.GaussianKernel())


def test_cutoff_pattern_matches_brute_force(cycle80):
    t, _, m, _ = cycle80
    coords = t.coords
    dist = m.dist
    coo = m.matrix.tocoo()
    # every retained entry respects the declared bandwidth
    assert (dist[coo.row, coo.col] <= m.bandwidth).all()
    # brute-force scan: every pair above the cutoff is present, rest absent
    present = set(zip(coo.row.tolist(), coo.col.tolist()))
    for r, a in enumerate(t.agents):
        pa = np.array(coords[a])
        for c, p in enumerate(t.positions):
            value = math.exp(-((pa - np.array(coords[p])) ** 2).sum() / 2)
            assert ((r, c) in present) == (value >= 1e-6)


def test_jaffard_norm_examples(cycle80):
    t = cycle80[0]
    zero = S.SensingMatrix(t, np.zeros((t.n_agents, t.n_positions)), alpha=3.0)
    assert S.jaffard_norm(zero) == 0.0

    width = 3
    bt, entries = band_topology(12, width)
    m = S.assemble(bt, S.EntryTable(entries), cutoff=0.0, alpha=2.0)
    assert m.bandwidth == width
    assert S.jaffard_norm(m, 2.0) == pytest.approx((1 + width) ** 2.0)
    # banded norm bound: |A|_a <= (s+1)^a |A|_0
    for alpha in (0.5, 1.0, 3.0):
        assert S.jaffard_norm(m, alpha) <= (m.bandwidth + 1) ** alpha * S.jaffard_norm(m, 0.0) + 1e-12


def test_band_truncate(cycle80):
    _, _, m, _ = cycle80
    assert S.band_truncate(m, m.bandwidth) is m
    assert S.band_truncate(m, m.bandwidth + 3) is m
    zero = S.band_truncate(m, 0)
    assert zero.nnz == 0  # agents and positions are distinct vertices
    one = S.band_truncate(m, 1)
    again = S.band_truncate(one, 1)
    assert (one.matrix != again.matrix).nnz == 0
    # monotone pattern inclusion
    two = S.band_truncate(m, 2)
    assert set(zip(*one.matrix.nonzero())) <= set(zip(*two.matrix.nonzero()))


def test_band_truncate_tail_bound(cycle80):
    t, _, m, _ = cycle80
    alpha = m.alpha
    d = t.growth.dimension_estimate
    d1g = t.growth.density_estimate
    L = max(len(t.anchored_by(a)) for a in t.agents)
    norm = S.jaffard_norm(m)
    rng = np.random.default_rng(0)
    for s in (1, 2, 3):
        trunc = S.band_truncate(m, s)
        diff = (m.matrix - trunc.matrix).toarray()
        bound = d1g * L * alpha / (alpha - d) * (s + 1) ** (-alpha + d) * norm
        for p in (1, 2, np.inf):
            for _ in range(5):
                c = rng.standard_normal(t.n_positions)
                lhs = np.linalg.norm(diff @ c, ord=p)
                assert lhs <= bound * np.linalg.norm(c, ord=p) + 1e-12


def test_apply_and_transpose(cycle80):
    t, _, m, _ = cycle80
    n_p, n_a = t.n_positions, t.n_agents
    assert np.all(S.apply(m, np.zeros(n_p)) == 0)
    e3 = np.zeros(n_p)
    e3[3] = 1.0
    col = S.apply(m, e3)
    assert np.allclose(col, m.toarray()[:, 3], atol=1e-15)

    rng = np.random.default_rng(1)
    dense = m.toarray()
    for _ in range(5):
        c = rng.standard_normal(n_p)
        y = rng.standard_normal(n_a)
        assert np.abs(S.apply(m, c) - dense @ c).max() <= 1e-12
        assert np.abs(S.apply_transpose(m, y) - dense.T @ y).max() <= 1e-12
        # adjointness
        assert abs(S.apply(m, c) @ y - c @ S.apply_transpose(m, y)) <= 1e-12 * max(
            1.0, abs(c @ S.apply_transpose(m, y))
        )
    with pytest.raises(S.SensingError):
        S.apply(m, np.zeros(n_p + 1))
    with pytest.raises(S.SensingError):
        S.apply_transpose(m, np.zeros(n_a + 1))


def test_apply_operator_bound(cycle80):
    t, _, m, _ = cycle80
    alpha = m.alpha
    d = t.growth.dimension_estimate
    const = t.growth.density_estimate * 3 * alpha / (alpha - d) * S.jaffard_norm(m)
    rng = np.random.default_rng(2)
    for p in (1, 2, np.inf):
        for _ in range(5):
            c = rng.standard_normal(t.n_positions)
            assert np.linalg.norm(S.apply(m, c), ord=p) <= const * np.linalg.norm(c, ord=p)


def test_gram(cycle80):
    t, _, m, _ = cycle80
    g = S.gram(m)
    dense = m.toarray()
    assert np.abs(g.toarray() - dense.T @ dense).max() <= 1e-12
    assert np.abs(g.toarray() - g.toarray().T).max() <= 1e-14

    # identity-like sensing gives the identity normal matrix
    bt, entries = band_topology(6, 1)
    ident = S.assemble(bt, S.EntryTable({k: v for k, v in entries.items() if k[0] == int(k[1][1:])}), cutoff=0.0)
    assert np.allclose(S.gram(ident).toarray(), np.eye(6))


def test_gram_bandwidth_and_norm_bound(cycle80):
    t, _, m, _ = cycle80
    g = S.gram(m)
    rho = t.signal_distance_matrix()
    rows, cols = g.nonzero()
    assert rho[rows, cols].max() <= 2 * m.bandwidth
    alpha = m.alpha
    d1g = t.growth.density_estimate
    d = t.growth.dimension_estimate
    lhs = S.signal_jaffard_norm(t, g, alpha)
    rhs = 2 ** (alpha + 1) * d1g * alpha / (alpha - d) * S.jaffard_norm(m) ** 2
    assert lhs <= rhs


def test_distance_tail_sum_lemma(cycle80, prism160):
    # sum over far agents of (1+dist)^-alpha is controlled by the growth fit
    for t in (cycle80[0], prism160[0]):
        d = t.growth.dimension_estimate
        d1g = t.growth.density_estimate
        dist = t.agent_graph.distance_matrix
        for alpha in (d + 0.5, d + 1.0, d + 2.0):
            for s in (0, 1, 3):
                tail = np.where(dist >= s, (1.0 + dist) ** (-alpha), 0.0).sum(axis=1).max()
                assert tail <= d1g * alpha / (alpha - d) * (s + 1) ** (-alpha + d) + 1e-12


def test_matrix_dump_round_trip(tmp_path, cycle20):
    t, _, m, _ = cycle20
    path = tmp_path / "m.txt"
    S.write_matrix(m, path)
    back = S.read_matrix(path, t)
    assert back.bandwidth == m.bandwidth
    assert back.alpha == m.alpha
    assert np.abs(back.toarray() - m.toarray()).max() == 0.0


def test_entry_table_validation(cycle20):
    t = cycle20[0]
    with pytest.raises(S.SensingError):
        S.assemble(t, S.EntryTable({("nope", "p1"): 1.0}))
    with pytest.raises(S.SensingError):
        S.assemble(t, S.EntryTable({("a1", "nope"): 1.0}))


def test_diagnostics_csv(cycle20):
    _, _, m, _ = cycle20
    rows = S.bound_diagnostics(m, alphas=(2.0, 3.0))
    text = S.diagnostics_csv(rows)
    assert text.startswith("alpha,")
    assert len(text.strip().splitlines()) == 3
