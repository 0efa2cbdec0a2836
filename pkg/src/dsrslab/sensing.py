"""Sensing matrices: sparse banded assembly, decay norms, and mat-vec algebra.

A sensing matrix maps position amplitudes to agent samples.  Entries are
stored sparsely in row-major (agent) order with ascending position columns,
which fixes the floating-point summation order of every product.  The decay
norm ``sup (1 + dist)**alpha * |entry|`` over agent-position distances in
the combined graph quantifies off-diagonal localization, and band
truncation realizes the finite-bandwidth model for analytic kernels via an
entry cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.sparse import csr_matrix

from .graphs import format_float
from .topology import DsrsTopology, TopologyError, parse_topology, format_topology


class SensingError(ValueError):
    """Invalid sensing-matrix input (missing coordinates, shape mismatch)."""


@dataclass(frozen=True)
class GaussianKernel:
    """Ideal point sampling of a Gaussian bump: exp(-|x|^2 / (2 sigma^2))."""

    sigma: float = 1.0


@dataclass(frozen=True)
class EntryTable:
    """Explicit (agent, position) -> value acquisition model."""

    entries: Mapping


class SensingMatrix:
    """Sparse agent-by-position sensing matrix tied to a topology.

    ``bandwidth`` is the largest agent-position distance carrying a nonzero
    entry; ``alpha`` is the decay exponent attached as metadata (defaults to
    the topology's dimension estimate plus two).
    """

    __slots__ = ("topology", "matrix", "bandwidth", "alpha", "dist")

    def __init__(self, topology: DsrsTopology, matrix: csr_matrix, alpha: float | None = None):
        self.topology = topology
        m = csr_matrix(matrix)
        m.sum_duplicates()
        m.sort_indices()
        m.eliminate_zeros()
        if m.shape != (topology.n_agents, topology.n_positions):
            raise SensingError(
                f"matrix shape {m.shape} does not match topology "
                f"({topology.n_agents} agents x {topology.n_positions} positions)"
            )
        self.matrix = m
        self.dist = topology.agent_position_distances()
        rows, cols = m.nonzero()
        self.bandwidth = int(self.dist[rows, cols].max()) if len(rows) else 0
        self.alpha = float(alpha) if alpha is not None else topology.growth.dimension_estimate + 2.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def entry(self, agent, position) -> float:
        r = self.topology.agent_graph.index(agent)
        c = self.topology.position_index(position)
        return float(self.matrix[r, c])


def assemble(
    t: DsrsTopology,
    kernel: GaussianKernel | EntryTable = GaussianKernel(),
    cutoff: float = 1e-6,
    alpha: float | None = None,
) -> SensingMatrix:
    """Build the sensing matrix from an acquisition model.

    Gaussian kernels require coordinates on every agent and position; entries
    with magnitude below ``cutoff`` are dropped and the bandwidth recorded is
    the largest distance among the survivors.
    """
    if cutoff < 0:
        raise SensingError("cutoff must be nonnegative")
    n_a, n_p = t.n_agents, t.n_positions
    if isinstance(kernel, GaussianKernel):
        if t.coords is None:
            raise SensingError("gaussian kernel needs coordinates on the topology")
        try:
            pa = np.array([t.coords[a] for a in t.agents])
            pp = np.array([t.coords[p] for p in t.positions])
        except KeyError as exc:
            raise SensingError(f"missing coordinates for {exc.args[0]!r}") from None
        sq = ((pa[:, None, :] - pp[None, :, :]) ** 2).sum(axis=2)
        dense = np.exp(-sq / (2.0 * kernel.sigma**2))
    elif isinstance(kernel, EntryTable):
        dense = np.zeros((n_a, n_p))
        agent_index = {a: k for k, a in enumerate(t.agents)}
        for (agent, pos), value in kernel.entries.items():
            if agent not in agent_index:
                raise SensingError(f"entry references unknown agent {agent!r}")
            dense[agent_index[agent], t.position_index(pos)] = value
    else:
        raise SensingError(f"unsupported kernel spec {kernel!r}")

    dense = np.where(np.abs(dense) >= cutoff, dense, 0.0) if cutoff > 0 else dense
    return SensingMatrix(t, csr_matrix(dense), alpha)


def jaffard_norm(m: SensingMatrix, alpha: float | None = None) -> float:
    """Exact supremum of ``(1 + dist)**alpha * |entry|`` over stored entries."""
    a = m.alpha if alpha is None else float(alpha)
    if a < 0:
        raise SensingError("alpha must be nonnegative")
    coo = m.matrix.tocoo()
    if coo.nnz == 0:
        return 0.0
    return float(((1.0 + m.dist[coo.row, coo.col]) ** a * np.abs(coo.data)).max())


def signal_jaffard_norm(t: DsrsTopology, mat, alpha: float) -> float:
    """Decay norm of a position-by-position matrix under the signal metric."""
    dense = np.asarray(mat.toarray() if hasattr(mat, "toarray") else mat, dtype=float)
    d = t.signal_distance_matrix()
    return float(((1.0 + d) ** alpha * np.abs(dense)).max())


def band_truncate(m: SensingMatrix, s: int) -> SensingMatrix:
    """Keep entries at distance <= s verbatim, zero the rest."""
    if s < 0:
        raise SensingError("band parameter must be nonnegative")
    if s >= m.bandwidth:
        return m
    kept = m.matrix.multiply(csr_matrix(m.dist <= s))
    return SensingMatrix(m.topology, csr_matrix(kept), m.alpha)


def apply(m: SensingMatrix, c: np.ndarray) -> np.ndarray:
    """Samples from amplitudes: row-wise sparse product in column order."""
    c = np.asarray(c, dtype=float)
    if c.shape != (m.topology.n_positions,):
        raise SensingError(f"amplitude vector has shape {c.shape}, expected ({m.topology.n_positions},)")
    return m.matrix @ c


def apply_transpose(m: SensingMatrix, y: np.ndarray) -> np.ndarray:
    """Adjoint product: amplitudes-space image of a sample vector."""
    y = np.asarray(y, dtype=float)
    if y.shape != (m.topology.n_agents,):
        raise SensingError(f"sample vector has shape {y.shape}, expected ({m.topology.n_agents},)")
    return m.matrix.T @ y


def gram(m: SensingMatrix) -> csr_matrix:
    """Exact sparse normal-equations matrix on positions."""
    g = (m.matrix.T @ m.matrix).tocsr()
    g.sum_duplicates()
    g.sort_indices()
    return g


# -- text formats -----------------------------------------------------------


def format_matrix(m: SensingMatrix) -> str:
    """Header plus "agent position value" triplets in storage order."""
    lines = [f"# bandwidth={m.bandwidth} alpha={format_float(m.alpha)}"]
    coo = m.matrix.tocoo()
    agents, positions = m.topology.agents, m.topology.positions
    order = np.lexsort((coo.col, coo.row))
    for k in order:
        lines.append(f"{agents[coo.row[k]]} {positions[coo.col[k]]} {format_float(coo.data[k])}")
    return "\n".join(lines) + "\n"


def write_matrix(m: SensingMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_matrix(m))


def parse_matrix(text: str, t: DsrsTopology) -> SensingMatrix:
    alpha = None
    entries = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if tok.startswith("alpha="):
                    alpha = float(tok.split("=", 1)[1])
            continue
        agent, pos, value = line.split()
        entries[(agent, pos)] = float(value)
    return assemble(t, EntryTable(entries), cutoff=0.0, alpha=alpha)


def read_matrix(path, t: DsrsTopology) -> SensingMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_matrix(fh.read(), t)


def bound_diagnostics(m: SensingMatrix, alphas=None) -> list[dict]:
    """Decay-norm diagnostics rows for CSV export.

    For each alpha: the decay norm, the operator bound constant
    ``density * L * alpha / (alpha - d)``, and the band-truncation bound at
    the current bandwidth.
    """
    t = m.topology
    d = t.growth.dimension_estimate
    d1g = t.growth.density_estimate
    L = max(len(t.anchored_by(a)) for a in t.agents)
    if alphas is None:
        alphas = (m.alpha,)
    rows = []
    for a in alphas:
        norm = jaffard_norm(m, a)
        op_const = d1g * L * a / (a - d) if a > d else float("inf")
        rows.append(
            {
                "alpha": a,
                "jaffard_norm": norm,
                "bandwidth": m.bandwidth,
                "operator_bound": op_const * norm,
                "band_tail_bound": op_const * norm * (m.bandwidth + 1) ** (-a + d) if a > d else float("inf"),
            }
        )
    return rows


def diagnostics_csv(rows: list[dict]) -> str:
    header = "alpha,jaffard_norm,bandwidth,operator_bound,band_tail_bound"
    lines = [header]
    for r in rows:
        lines.append(",".join(format_float(r[k]) for k in header.split(",")))
    return "\n".join(lines) + "\n"
