"""DSRS topologies: agents, innovative positions, and anchor associations.

A topology couples an agent communication graph with a set of signal
positions through (position, agent) anchor associations.  Agents and
positions share one id namespace, so the combined system graph reuses
:class:`~dsrslab.graphs.Graph` unchanged; the derived signal graph links two
positions whenever they share an anchor agent, and carries the metric
``rho(i, i') = h_distance(i, i') - 1`` (the signal graph itself is
disconnected in general, so its metric is inherited from the combined
graph rather than computed on it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .graphs import Graph, GraphError, format_float, growth_fit


class TopologyError(ValueError):
    """Invalid topology: orphaned position, id clash, or disconnection."""


class DsrsTopology:
    """Immutable sampling-system topology.

    Attributes
    ----------
    agent_graph : Graph over agent ids (the communication graph)
    positions : tuple of position ids, input order preserved
    associations : tuple of (position, agent) anchor pairs, canonical order
    h_graph : Graph over agents + positions with communication and anchor edges
    signal_edges : tuple of (position, position) pairs sharing an anchor
    coords : mapping id -> (x, y), or None; metadata used only by kernels
    """

    __slots__ = (
        "agent_graph",
        "positions",
        "associations",
        "h_graph",
        "signal_edges",
        "coords",
        "_anchors_of",
        "_anchored_by",
        "_pos_index",
        "growth",
        "signal_dimension",
        "signal_density",
        "signal_degree",
    )

    def __init__(self, agent_graph: Graph, positions, associations, coords=None):
        self.agent_graph = agent_graph
        self.positions = tuple(positions)
        agents = agent_graph.vertices

        pos_set = set(self.positions)
        if len(pos_set) != len(self.positions):
            raise TopologyError("duplicate position ids")
        if pos_set & set(agents):
            raise TopologyError("agent and position ids must be disjoint")
        if not self.positions:
            raise TopologyError("topology needs at least one position")

        agent_index = {a: k for k, a in enumerate(agents)}
        self._pos_index = {p: k for k, p in enumerate(self.positions)}
        anchors_of: dict = {p: [] for p in self.positions}
        anchored_by: dict = {a: [] for a in agents}
        seen = set()
        for pos, agent in associations:
            if pos not in anchors_of:
                raise TopologyError(f"association references unknown position {pos!r}")
            if agent not in anchored_by:
                raise TopologyError(f"association references unknown agent {agent!r}")
            if (pos, agent) in seen:
                continue
            seen.add((pos, agent))
            anchors_of[pos].append(agent)
            anchored_by[agent].append(pos)
        for pos, anchors in anchors_of.items():
            if not anchors:
                raise TopologyError(f"position {pos!r} has no anchor agent")

        self.associations = tuple(
            sorted(seen, key=lambda t: (self._pos_index[t[0]], agent_index[t[1]]))
        )
        self._anchors_of = {
            p: tuple(sorted(v, key=agent_index.__getitem__)) for p, v in anchors_of.items()
        }
        self._anchored_by = {
            a: tuple(sorted(v, key=self._pos_index.__getitem__)) for a, v in anchored_by.items()
        }

        h_edges = list(agent_graph.edges) + [(p, a) for p, a in self.associations]
        try:
            self.h_graph = Graph(tuple(agents) + self.positions, h_edges)
        except GraphError as exc:
            raise TopologyError(f"combined system graph is invalid: {exc}") from exc

        edges = set()
        for agent in agents:
            held = self._anchored_by[agent]
            for i in range(len(held)):
                for j in range(i + 1, len(held)):
                    edges.add((held[i], held[j]))
        self.signal_edges = tuple(
            sorted(edges, key=lambda e: (self._pos_index[e[0]], self._pos_index[e[1]]))
        )

        if coords is not None:
            coords = {u: (float(x), float(y)) for u, (x, y) in coords.items()}
        self.coords = coords

        # eager derived statistics (concurrency contract: no lazy mutation)
        self.growth = growth_fit(agent_graph)
        self.signal_dimension, self.signal_density, self.signal_degree = _signal_growth(self)

    # -- accessors -----------------------------------------------------------

    @property
    def agents(self) -> tuple:
        return self.agent_graph.vertices

    @property
    def n_agents(self) -> int:
        return self.agent_graph.n

    @property
    def n_positions(self) -> int:
        return len(self.positions)

    def anchors_of(self, pos) -> tuple:
        try:
            return self._anchors_of[pos]
        except KeyError:
            raise TopologyError(f"unknown position {pos!r}") from None

    def anchored_by(self, agent) -> tuple:
        try:
            return self._anchored_by[agent]
        except KeyError:
            raise TopologyError(f"unknown agent {agent!r}") from None

    def position_index(self, pos) -> int:
        try:
            return self._pos_index[pos]
        except KeyError:
            raise TopologyError(f"unknown position {pos!r}") from None

    # -- metrics ---------------------------------------------------------------

    def h_distance(self, u, v) -> int:
        """Geodesic distance in the combined agents+positions graph."""
        return self.h_graph.distance(u, v)

    def signal_distance(self, i, j) -> int:
        """Metric on positions: 0 on the diagonal, h_distance - 1 otherwise."""
        if i == j:
            self.position_index(i)
            return 0
        return self.h_graph.distance(i, j) - 1

    def signal_distance_matrix(self) -> np.ndarray:
        """All-pairs signal metric in position index order."""
        idx = [self.h_graph.index(p) for p in self.positions]
        d = self.h_graph.distance_matrix[np.ix_(idx, idx)].astype(np.int32)
        d = d - 1
        np.fill_diagonal(d, 0)
        return d

    def agent_position_distances(self) -> np.ndarray:
        """h-distance between every agent (rows) and position (columns)."""
        ai = [self.h_graph.index(a) for a in self.agents]
        pi = [self.h_graph.index(p) for p in self.positions]
        return self.h_graph.distance_matrix[np.ix_(ai, pi)].astype(np.int32)


def build_topology(agent_graph: Graph, positions, associations, coords=None) -> DsrsTopology:
    """Assemble and validate a topology; see :class:`DsrsTopology`."""
    return DsrsTopology(agent_graph, positions, associations, coords)


def h_distance(t: DsrsTopology, u, v) -> int:
    return t.h_distance(u, v)


def signal_distance(t: DsrsTopology, i, j) -> int:
    return t.signal_distance(i, j)


def _signal_growth(t: DsrsTopology) -> tuple[float, float, int]:
    """Growth fit of the signal metric: (dimension, density, max signal degree)."""
    deg: dict = {p: 0 for p in t.positions}
    for a, b in t.signal_edges:
        deg[a] += 1
        deg[b] += 1
    max_deg = max(deg.values()) if deg else 0

    d = t.signal_distance_matrix()
    diam = int(d.max())
    if diam == 0:
        return 1.0, 1.0, max_deg

    n = len(t.positions)
    counts = np.zeros((n, diam + 1), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(n), n), d.ravel()), 1)
    sizes = counts.cumsum(axis=1)

    radii = np.arange(1, math.ceil(diam / 2) + 1)
    if len(radii) >= 2:
        x = np.log1p(np.repeat(radii, n))
        y = np.log(sizes[:, radii].T.ravel())
        slope = float(np.polyfit(x, y, 1)[0])
    else:
        slope = 1.0
    dim = max(slope, 1.0)
    density = float((sizes / (1.0 + np.arange(diam + 1)) ** dim).max())
    return dim, density, max_deg


def innovation_stats(t: DsrsTopology) -> tuple[float, float, int]:
    """(dimension, density, max degree) of the signal graph under its metric."""
    return t.signal_dimension, t.signal_density, t.signal_degree


@dataclass(frozen=True)
class AssumptionReport:
    """Exact structural constants of a topology.

    ``anchor_clique_ok`` is true only when every pair of distinct anchors of
    each position is directly linked; violations are listed.  ``L`` is the
    largest number of positions anchored by one agent; ``M`` the largest
    hop distance from any agent to the nearest anchor agent.  The doubling
    constant is reported but never fails validation on a finite graph.
    """

    doubling_ok: bool
    doubling_constant: float
    anchor_clique_ok: bool
    clique_violations: tuple
    L: int
    M: int
    signal_dimension: float
    signal_density: float

    def to_kv(self) -> str:
        out = []
        for key in (
            "doubling_ok",
            "doubling_constant",
            "anchor_clique_ok",
            "L",
            "M",
            "signal_dimension",
            "signal_density",
        ):
            out.append(f"{key}={format_float(getattr(self, key)) if not isinstance(getattr(self, key), bool) else getattr(self, key)}\n")
        out.append(f"clique_violations={len(self.clique_violations)}\n")
        return "".join(out)


def validate_assumptions(t: DsrsTopology) -> AssumptionReport:
    """Check the structural assumptions and compute L, M, and growth constants."""
    d0 = t.growth.doubling_constant

    violations = []
    adjacency = {frozenset(e) for e in t.agent_graph.edges}
    for pos in t.positions:
        anchors = t.anchors_of(pos)
        for i in range(len(anchors)):
            for j in range(i + 1, len(anchors)):
                if frozenset((anchors[i], anchors[j])) not in adjacency:
                    violations.append((pos, anchors[i], anchors[j]))

    L = max(len(t.anchored_by(a)) for a in t.agents)

    anchor_agents = [a for a in t.agents if t.anchored_by(a)]
    rows = t.agent_graph.distance_matrix[[t.agent_graph.index(a) for a in anchor_agents]]
    M = int(rows.min(axis=0).max())

    return AssumptionReport(
        doubling_ok=math.isfinite(d0),
        doubling_constant=d0,
        anchor_clique_ok=not violations,
        clique_violations=tuple(violations),
        L=L,
        M=M,
        signal_dimension=t.signal_dimension,
        signal_density=t.signal_density,
    )


# -- topology text format ------------------------------------------------------


def format_topology(t: DsrsTopology) -> str:
    """Sectioned text form: AGENTS, EDGES, POSITIONS, ASSOC.  Round-trips losslessly."""
    lines = ["AGENTS"]
    for a in t.agents:
        lines.append(_vertex_line(a, t.coords))
    lines.append("EDGES")
    for u, v in t.agent_graph.edges:
        lines.append(f"{u} {v}")
    lines.append("POSITIONS")
    for p in t.positions:
        lines.append(_vertex_line(p, t.coords))
    lines.append("ASSOC")
    for pos, agent in t.associations:
        lines.append(f"{pos} {agent}")
    return "\n".join(lines) + "\n"


def _vertex_line(u, coords) -> str:
    if coords is not None and u in coords:
        x, y = coords[u]
        return f"{u} {format_float(x)} {format_float(y)}"
    return str(u)


def parse_topology(text: str) -> DsrsTopology:
    sections: dict[str, list[list[str]]] = {"AGENTS": [], "EDGES": [], "POSITIONS": [], "ASSOC": []}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line in sections:
            current = line
            continue
        if current is None:
            raise TopologyError(f"line {lineno}: content before any section header")
        sections[current].append(line.split())

    coords: dict = {}
    agents = []
    for toks in sections["AGENTS"]:
        agents.append(toks[0])
        if len(toks) == 3:
            coords[toks[0]] = (float(toks[1]), float(toks[2]))
    positions = []
    for toks in sections["POSITIONS"]:
        positions.append(toks[0])
        if len(toks) == 3:
            coords[toks[0]] = (float(toks[1]), float(toks[2]))
    edges = [(u, v) for u, v in sections["EDGES"]]
    assoc = [(p, a) for p, a in sections["ASSOC"]]
    try:
        agent_graph = Graph(agents, edges)
    except GraphError as exc:
        raise TopologyError(str(exc)) from exc
    return DsrsTopology(agent_graph, positions, assoc, coords or None)


def read_topology(path) -> DsrsTopology:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_topology(fh.read())


def write_topology(t: DsrsTopology, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_topology(t))
