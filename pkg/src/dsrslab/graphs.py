"""Connected simple graphs with geodesic metrics and ball-growth statistics.

The central object is :class:`Graph`, an immutable undirected simple graph
over arbitrary hashable vertex ids.  On top of it this module provides the
counting-measure statistics used throughout the package: the doubling
constant of ball sizes, a polynomial ball-growth fit (dimension and density
estimates), greedy maximal disjoint-ball subsets, and covering
multiplicities of ball families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path


class GraphError(ValueError):
    """Malformed graph input or reference to an unknown vertex."""


class Graph:
    """Immutable connected simple graph.

    Vertices may be arbitrary hashable ids; they are mapped to dense integer
    indices in input order, and that order is the tie-breaking order used by
    every deterministic construction in this package.  All-pairs geodesic
    distances are computed eagerly, so instances are safe for concurrent
    read-only use.

    Parameters
    ----------
    vertices : iterable of hashable ids, order preserved
    edges : iterable of (u, v) pairs; duplicates and reversed copies of an
        edge collapse to one undirected edge

    Raises
    ------
    GraphError
        On duplicate ids, self-loops, unknown endpoints, or a disconnected
        graph.
    """

    __slots__ = ("_ids", "_index", "_adj", "_edges", "_dist")

    def __init__(self, vertices: Iterable[Hashable], edges: Iterable[tuple]):
        ids = tuple(vertices)
        if not ids:
            raise GraphError("graph needs at least one vertex")
        index = {u: k for k, u in enumerate(ids)}
        if len(index) != len(ids):
            raise GraphError("duplicate vertex ids")

        pairs = set()
        for u, v in edges:
            if u not in index or v not in index:
                raise GraphError(f"edge ({u!r}, {v!r}) references an unknown vertex")
            a, b = index[u], index[v]
            if a == b:
                raise GraphError(f"self-loop at vertex {u!r}")
            pairs.add((a, b) if a < b else (b, a))

        n = len(ids)
        adj: list[list[int]] = [[] for _ in range(n)]
        for a, b in pairs:
            adj[a].append(b)
            adj[b].append(a)
        self._ids = ids
        self._index = index
        self._adj = tuple(tuple(sorted(nbrs)) for nbrs in adj)
        self._edges = tuple(sorted(pairs))

        if n == 1:
            dist = np.zeros((1, 1))
        else:
            rows = [a for a, b in pairs] + [b for a, b in pairs]
            cols = [b for a, b in pairs] + [a for a, b in pairs]
            m = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
            dist = shortest_path(m, method="D", unweighted=True)
        if not np.isfinite(dist).all():
            raise GraphError("graph is not connected")
        self._dist = dist.astype(np.int32)
        self._dist.setflags(write=False)

    # -- basic accessors ---------------------------------------------------

    @property
    def vertices(self) -> tuple:
        return self._ids

    @property
    def n(self) -> int:
        return len(self._ids)

    @property
    def edges(self) -> tuple:
        """Edges as id pairs, ordered by (index(u), index(v))."""
        return tuple((self._ids[a], self._ids[b]) for a, b in self._edges)

    def __contains__(self, u) -> bool:
        return u in self._index

    def index(self, u) -> int:
        try:
            return self._index[u]
        except KeyError:
            raise GraphError(f"unknown vertex {u!r}") from None

    def neighbors(self, u) -> tuple:
        return tuple(self._ids[k] for k in self._adj[self.index(u)])

    def degree(self, u) -> int:
        return len(self._adj[self.index(u)])

    @property
    def max_degree(self) -> int:
        return max(len(nbrs) for nbrs in self._adj)

    @property
    def diameter(self) -> int:
        return int(self._dist.max())

    @property
    def distance_matrix(self) -> np.ndarray:
        """Read-only all-pairs hop-count matrix in vertex index order."""
        return self._dist

    # -- metric queries ----------------------------------------------------

    def distance(self, u, v) -> int:
        return int(self._dist[self.index(u), self.index(v)])

    def ball(self, center, r: float) -> tuple:
        """Vertices within hop distance ``r`` of ``center``, in index order."""
        if r < 0:
            return ()
        row = self._dist[self.index(center)]
        return tuple(self._ids[k] for k in np.flatnonzero(row <= r))

    def ball_sizes(self) -> np.ndarray:
        """``sizes[v, k]`` = number of vertices within distance k of vertex v."""
        n, diam = self.n, self.diameter
        counts = np.zeros((n, diam + 1), dtype=np.int64)
        rows = np.repeat(np.arange(n), n)
        np.add.at(counts, (rows, self._dist.ravel()), 1)
        return counts.cumsum(axis=1)


# -- spec operations -------------------------------------------------------


def geodesic_distance(g: Graph, u, v) -> int:
    """Hop count of a shortest path between ``u`` and ``v``."""
    return g.distance(u, v)


def ball(g: Graph, center, r: float) -> tuple:
    """Closed ball: vertices at geodesic distance at most ``r`` from center."""
    return g.ball(center, r)


def doubling_constant(g: Graph) -> float:
    """Largest ratio ``|B(v, 2r)| / |B(v, r)|`` over all centers and radii.

    Ball contents on an unweighted graph change only at half-integer radii,
    so the supremum over real r >= 0 is attained on the grid
    {0, 0.5, 1, ..., diameter} and is computed exactly.
    """
    sizes = g.ball_sizes()
    diam = g.diameter
    best = 1.0
    for k in range(1, 2 * diam + 1):  # r = k/2
        outer = sizes[:, min(k, diam)]
        inner = sizes[:, min(k // 2, diam)]
        best = max(best, float((outer / inner).max()))
    return best


@dataclass(frozen=True)
class GrowthReport:
    """Ball-growth statistics of a connected graph.

    ``dimension_estimate`` is the pooled log-log regression slope of ball
    size against 1 + radius (clamped below at 1); ``density_estimate`` is
    the exact maximum of ``|B(v, r)| / (1 + r)**dimension_estimate``, so the
    polynomial growth bound holds at every radius with these two constants.
    """

    doubling_constant: float
    dimension_estimate: float
    density_estimate: float
    max_degree: int
    diameter: int

    def to_kv(self) -> str:
        return "".join(
            f"{key}={format_float(getattr(self, key))}\n"
            for key in (
                "doubling_constant",
                "dimension_estimate",
                "density_estimate",
                "max_degree",
                "diameter",
            )
        )

    CSV_HEADER = "doubling_constant,dimension_estimate,density_estimate,max_degree,diameter"

    def to_csv_row(self) -> str:
        return ",".join(
            format_float(v)
            for v in (
                self.doubling_constant,
                self.dimension_estimate,
                self.density_estimate,
                self.max_degree,
                self.diameter,
            )
        )


def format_float(x) -> str:
    """Stable scalar formatting shared by all text/CSV emitters."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def growth_fit(g: Graph) -> GrowthReport:
    """Fit the polynomial ball-growth model and report its constants."""
    d0 = doubling_constant(g)
    diam = g.diameter
    if diam == 0:
        return GrowthReport(d0, 1.0, 1.0, g.max_degree, 0)

    sizes = g.ball_sizes()
    radii = np.arange(1, math.ceil(diam / 2) + 1)
    if len(radii) >= 2:
        x = np.log1p(np.repeat(radii, g.n))
        y = np.log(sizes[:, radii].T.ravel())
        slope = float(np.polyfit(x, y, 1)[0])
    else:
        slope = 1.0
    dim = max(slope, 1.0)

    all_r = np.arange(diam + 1)
    density = float((sizes / (1.0 + all_r) ** dim).max())
    return GrowthReport(d0, dim, density, g.max_degree, diam)


def maximal_disjoint_subset(g: Graph, n_radius: float) -> tuple:
    """Greedy maximal family of centers whose radius-``n_radius`` balls are disjoint.

    Starts from the first vertex in input order and repeatedly adds the
    eligible vertex closest to the start (ties broken by input order).  The
    result covers the graph in the sense that every ball of the same radius
    meets a selected ball.
    """
    if n_radius < 0:
        raise GraphError("radius must be nonnegative")
    sep = 2 * int(n_radius)  # balls disjoint iff centers are > 2*floor(N) apart
    dist = g.distance_matrix
    start = 0
    chosen = [start]
    eligible = dist[start] > sep
    eligible[start] = False
    while eligible.any():
        cand = np.flatnonzero(eligible)
        nxt = int(cand[np.argmin(dist[start, cand])])  # argmin keeps first (smallest index) on ties
        chosen.append(nxt)
        eligible &= dist[nxt] > sep
    return tuple(g.vertices[k] for k in chosen)


def covering_multiplicity(g: Graph, centers: Sequence, n_prime: float) -> tuple[int, int]:
    """(min, max) over vertices of how many radius-``n_prime`` center balls contain it."""
    centers = tuple(centers)
    if not centers:
        raise GraphError("centers must be nonempty")
    rows = g.distance_matrix[[g.index(c) for c in centers]]
    counts = (rows <= n_prime).sum(axis=0)
    return int(counts.min()), int(counts.max())


# -- generators ------------------------------------------------------------


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise GraphError("cycle needs at least 3 vertices")
    return Graph(range(1, n + 1), [(k, k % n + 1) for k in range(1, n + 1)])


def path_graph(n: int) -> Graph:
    if n < 1:
        raise GraphError("path needs at least 1 vertex")
    return Graph(range(1, n + 1), [(k, k + 1) for k in range(1, n)])


def grid_graph(rows: int, cols: int) -> Graph:
    verts = [(i, j) for i in range(rows) for j in range(cols)]
    edges = []
    for i in range(rows):
        for j in range(cols):
            if i + 1 < rows:
                edges.append(((i, j), (i + 1, j)))
            if j + 1 < cols:
                edges.append(((i, j), (i, j + 1)))
    return Graph(verts, edges)


def two_stage_tree(levels: int) -> Graph:
    """Chain of ``levels`` edges feeding a complete binary tree of the same depth.

    The mismatch between the linear first stage and the exponentially
    branching second stage makes the doubling constant
    ``(2**(levels+1) + levels - 1) / (levels + 1)`` while the maximum degree
    stays 3.
    """
    if levels < 1:
        raise GraphError("levels must be >= 1")
    edges = [(k, k + 1) for k in range(levels)]  # chain 0..levels
    root = levels
    n_binary = 2 ** (levels + 1) - 1  # nodes of the binary stage, heap-indexed
    for k in range(n_binary // 2):
        edges.append((root + k, root + 2 * k + 1))
        edges.append((root + k, root + 2 * k + 2))
    return Graph(range(levels + n_binary), edges)


# -- edge-list text format ---------------------------------------------------


def parse_edge_list(text: str) -> Graph:
    """Parse the "u v" per-line edge format; '#' starts a comment.

    A line with a single token declares an isolated vertex (useful only for
    the one-vertex graph, since the result must be connected).
    """
    vertices: list[str] = []
    seen = set()
    edges = []

    def add_vertex(tok: str):
        if tok not in seen:
            seen.add(tok)
            vertices.append(tok)

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if len(toks) == 1:
            add_vertex(toks[0])
        elif len(toks) == 2:
            add_vertex(toks[0])
            add_vertex(toks[1])
            edges.append((toks[0], toks[1]))
        else:
            raise GraphError(f"line {lineno}: expected 'u v', got {raw!r}")
    return Graph(vertices, edges)


def format_edge_list(g: Graph) -> str:
    if g.n == 1:
        return f"{g.vertices[0]}\n"
    return "".join(f"{u} {v}\n" for u, v in g.edges)


def read_edge_list(path) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_edge_list(fh.read())


def write_edge_list(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_edge_list(g))
