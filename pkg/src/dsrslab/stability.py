"""Stability analysis: global two-sided bounds and the local certificate.

The lower/upper stability bounds of a sensing matrix are the extreme
singular values, computed here by power iteration and inverse iteration on
the normal matrix.  The distributed certificate instead measures, for each
fusion agent, the smallest singular value of the quasi-main submatrix
(rows in the radius-2N agent ball, columns in the radius-N position ball)
and compares the normalized minimum against an explicit threshold with
three regimes of the decay exponent; passing the threshold implies a global
lower bound of ``a0 * norm / (12 * doubling**2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse import issparse
from scipy.sparse.linalg import splu

from .graphs import format_float, maximal_disjoint_subset
from .sensing import SensingMatrix, gram, jaffard_norm


class StabilityError(ValueError):
    """Singular normal matrix or invalid certificate parameters."""


class ConvergenceError(RuntimeError):
    """Eigen-solve failed to converge; carries the last iterate and residual."""

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


def _as_dense_or_sparse(matrix):
    if isinstance(matrix, SensingMatrix):
        return matrix.matrix
    return matrix


def _start_vector(n: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=0x5EED))
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def global_l2_bounds(matrix, tol: float = 1e-10, max_iter: int = 10_000) -> tuple[float, float]:
    """(smallest, largest) singular value via iterations on the normal matrix.

    The largest eigenvalue comes from power iteration, the smallest from
    inverse iteration on a single factorization.  Raises
    :class:`ConvergenceError` when the residual has not dropped below
    ``tol`` within ``max_iter`` iterations.
    """
    a = _as_dense_or_sparse(matrix)
    g = (a.T @ a) if not issparse(a) else (a.T @ a).tocsc()
    n = g.shape[0]
    if n == 0:
        raise StabilityError("empty matrix")

    def matvec(v):
        return g @ v

    lam_max = _power_iteration(matvec, n, tol, max_iter)

    try:
        if issparse(g):
            lu = splu(g.tocsc())
            solve = lu.solve
        else:
            factor = cho_factor(np.asarray(g, dtype=float))
            solve = lambda v: cho_solve(factor, v)
    except Exception as exc:
        raise ConvergenceError(f"normal matrix factorization failed: {exc}") from exc
    lam_min = _inverse_iteration(matvec, solve, n, tol, max_iter)

    return math.sqrt(max(lam_min, 0.0)), math.sqrt(max(lam_max, 0.0))


def _power_iteration(matvec, n, tol, max_iter):
    v = _start_vector(n)
    theta = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v_new = w / norm
        theta = float(v_new @ matvec(v_new))
        residual = np.linalg.norm(matvec(v_new) - theta * v_new)
        v = v_new
        if residual <= tol * max(theta, 1e-300):
            return theta
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations",
        last_iterate=v,
        residual=float(residual),
    )


def _inverse_iteration(matvec, solve, n, tol, max_iter):
    v = _start_vector(n)
    for _ in range(max_iter):
        w = solve(v)
        norm = np.linalg.norm(w)
        if not np.isfinite(norm) or norm == 0.0:
            raise ConvergenceError("inverse iteration produced a degenerate iterate", last_iterate=v)
        v_new = w / norm
        theta = float(v_new @ matvec(v_new))
        residual = np.linalg.norm(matvec(v_new) - theta * v_new)
        v = v_new
        if residual <= tol * max(theta, 1e-300):
            return theta
    raise ConvergenceError(
        f"inverse iteration did not converge in {max_iter} iterations",
        last_iterate=v,
        residual=float(residual),
    )


def smallest_singular_value(block: np.ndarray, dense_limit: int = 512, tol: float = 1e-10) -> float:
    """Smallest singular value of a submatrix block.

    Dense SVD up to ``dense_limit`` rows/columns, inverse iteration on the
    block's normal matrix beyond that.
    """
    block = np.asarray(block, dtype=float)
    if block.size == 0:
        raise StabilityError("empty block has no singular values")
    if max(block.shape) <= dense_limit:
        return float(np.linalg.svd(block, compute_uv=False)[-1])
    g = block.T @ block
    factor = cho_factor(g)
    lam = _inverse_iteration(lambda v: g @ v, lambda v: cho_solve(factor, v), g.shape[0], tol, 10_000)
    return math.sqrt(max(lam, 0.0))


def difference_truncation(n0: int) -> np.ndarray:
    """First-difference operator restricted to 2*n0 + 1 consecutive columns.

    The (2*n0 + 2) x (2*n0 + 1) bidiagonal block whose smallest singular
    value is ``2 * sin(pi / (4*n0 + 4))`` exactly.
    """
    if n0 < 1:
        raise StabilityError("n0 must be >= 1")
    cols = 2 * n0 + 1
    block = np.zeros((cols + 1, cols))
    for j in range(cols):
        block[j, j] = 1.0
        block[j + 1, j] = -1.0
    return block


def truncate_domain(m: SensingMatrix, v: np.ndarray, center, n_radius: float, side: str) -> np.ndarray:
    """Zero a vector outside the radius-``n_radius`` ball around ``center``.

    ``side`` selects the index set: "G" for agent-indexed vectors, "V" for
    position-indexed ones; distances are taken in the combined graph.
    """
    t = m.topology
    v = np.asarray(v, dtype=float)
    h = t.h_graph
    ci = h.index(center)
    if side == "G":
        idx = [h.index(a) for a in t.agents]
        expected = t.n_agents
    elif side == "V":
        idx = [h.index(p) for p in t.positions]
        expected = t.n_positions
    else:
        raise StabilityError("side must be 'G' or 'V'")
    if v.shape != (expected,):
        raise StabilityError(f"vector has shape {v.shape}, expected ({expected},)")
    mask = h.distance_matrix[ci, idx] <= n_radius
    return np.where(mask, v, 0.0)


def stability_threshold(alpha: float, d: float, d0: float, d1g: float, L: int, n0: int) -> float:
    """Certificate threshold with the three decay regimes around alpha = d + 1."""
    if n0 < 3:
        raise StabilityError("n0 must be >= 3")
    if alpha <= d:
        raise StabilityError("alpha must exceed the dimension")
    base = 4.0 * d0**2 * d1g * L * n0 ** (-min(alpha - d, 1.0))
    if alpha > d + 1:
        factor = 4 * alpha / (3 * (alpha - d)) + 2 * (alpha - 1) * (alpha - d) / (alpha - d - 1)
    elif alpha == d + 1:
        factor = 10 * (d + 1) / 3 + 2 * d * math.log(n0)
    else:
        factor = 4 * alpha / (3 * (alpha - d)) + 4 * d / (d + 1 - alpha)
    return base * factor


@dataclass(frozen=True)
class StabilityCertificate:
    """Distributed stability verdict.

    ``a0`` is the minimum per-agent smallest singular value normalized by
    the decay norm; ``certified`` means it clears ``condition_rhs``, which
    implies the global lower stability bound ``implied_lower_bound``.
    Agents whose quasi-main submatrix was empty are listed in ``excluded``.
    """

    n0: int
    per_agent_sigma_min: dict
    a0: float
    condition_rhs: float
    certified: bool
    implied_lower_bound: float
    alpha: float
    norm: float
    excluded: tuple

    def to_csv(self) -> str:
        lines = ["agent,sigma_min"]
        for agent, sigma in self.per_agent_sigma_min.items():
            lines.append(f"{agent},{format_float(sigma)}")
        lines.append("")
        lines.append("key,value")
        lines.append(f"n0,{self.n0}")
        lines.append(f"a0,{format_float(self.a0)}")
        lines.append(f"condition_rhs,{format_float(self.condition_rhs)}")
        lines.append(f"certified,{self.certified}")
        lines.append(f"implied_lower_bound,{format_float(self.implied_lower_bound)}")
        lines.append(f"alpha,{format_float(self.alpha)}")
        lines.append(f"jaffard_norm,{format_float(self.norm)}")
        lines.append(f"excluded,{len(self.excluded)}")
        return "\n".join(lines) + "\n"


def _agent_balls(m: SensingMatrix, agent, n0: int):
    t = m.topology
    h = t.h_graph
    ci = h.index(agent)
    agent_idx = np.array([h.index(a) for a in t.agents])
    pos_idx = np.array([h.index(p) for p in t.positions])
    rows = np.flatnonzero(h.distance_matrix[ci, agent_idx] <= 2 * n0)
    cols = np.flatnonzero(h.distance_matrix[ci, pos_idx] <= n0)
    return rows, cols


def quasi_main_block(m: SensingMatrix, agent, n0: int) -> np.ndarray:
    """Dense block of rows within 2*n0 and columns within n0 of a fusion agent."""
    rows, cols = _agent_balls(m, agent, n0)
    return m.toarray()[np.ix_(rows, cols)]


def local_certificate(
    m: SensingMatrix,
    n0: int,
    fusion_agents=None,
    use_disjoint_subset: bool = False,
) -> StabilityCertificate:
    """Per-fusion-agent smallest singular values and the threshold verdict.

    By default every agent is a fusion agent; ``use_disjoint_subset``
    switches to a greedy maximal family with disjoint radius-``n0/4`` balls,
    which suffices for the same conclusion.
    """
    if n0 < 3:
        raise StabilityError("n0 must be >= 3")
    t = m.topology
    if fusion_agents is None:
        if use_disjoint_subset:
            fusion_agents = maximal_disjoint_subset(t.agent_graph, n0 / 4)
        else:
            fusion_agents = t.agents
    fusion_agents = tuple(fusion_agents)
    if not fusion_agents:
        raise StabilityError("fusion agent set must be nonempty")

    dense = m.toarray()
    sigmas: dict = {}
    excluded = []
    for agent in fusion_agents:
        rows, cols = _agent_balls(m, agent, n0)
        if len(rows) == 0 or len(cols) == 0:
            excluded.append(agent)
            continue
        sigmas[agent] = smallest_singular_value(dense[np.ix_(rows, cols)])
    if not sigmas:
        raise StabilityError("every fusion agent had an empty quasi-main block")

    norm = jaffard_norm(m)
    a0 = min(sigmas.values()) / norm
    growth = t.growth
    L = max(len(t.anchored_by(a)) for a in t.agents)
    rhs = stability_threshold(
        m.alpha, growth.dimension_estimate, growth.doubling_constant, growth.density_estimate, L, n0
    )
    certified = a0 >= rhs
    implied = a0 * norm / (12.0 * growth.doubling_constant**2)
    return StabilityCertificate(
        n0=n0,
        per_agent_sigma_min=sigmas,
        a0=a0,
        condition_rhs=rhs,
        certified=certified,
        implied_lower_bound=implied,
        alpha=m.alpha,
        norm=norm,
        excluded=tuple(excluded),
    )


@dataclass(frozen=True)
class LpStabilityReport:
    """Empirical lower stability ratios per p over random test vectors."""

    ratios: dict
    num_vectors: int

    def all_positive(self) -> bool:
        return all(r > 0 for r in self.ratios.values())


def verify_lp_transfer(m: SensingMatrix, p_list=(1, 2, math.inf), num_vectors: int = 1000, seed: int = 0) -> LpStabilityReport:
    """Minimum of ``|S c|_p / |c|_p`` over random sign and sparse vectors."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    n = m.topology.n_positions
    ratios = {p: math.inf for p in p_list}
    for k in range(num_vectors):
        if k % 2 == 0:
            c = rng.choice([-1.0, 1.0], size=n)
        else:
            c = np.zeros(n)
            support = rng.choice(n, size=rng.integers(1, max(n // 4, 2)), replace=False)
            c[support] = rng.choice([-1.0, 1.0], size=len(support))
        y = m.matrix @ c
        for p in p_list:
            ratios[p] = min(ratios[p], _pnorm(y, p) / _pnorm(c, p))
    return LpStabilityReport(ratios={p: float(r) for p, r in ratios.items()}, num_vectors=num_vectors)


def _pnorm(v, p):
    if p == math.inf:
        return float(np.abs(v).max())
    return float((np.abs(v) ** p).sum() ** (1.0 / p))


@dataclass(frozen=True)
class WienerDecayReport:
    """Off-diagonal decay of the inverse normal matrix.

    ``beta_fit`` is the log-log regression slope magnitude of per-shell
    entry maxima; ``beta_bound`` the largest exponent valid entrywise with
    the constant ``c_bound`` (twice the diagonal maximum).  Both are
    ``inf`` when no off-diagonal mass remains above the noise floor.
    """

    beta_fit: float
    beta_bound: float
    c_bound: float
    shell_distances: tuple
    shell_maxima: tuple
    inverse: np.ndarray

    def to_csv(self) -> str:
        lines = ["distance,max_abs_entry"]
        for t, v in zip(self.shell_distances, self.shell_maxima):
            lines.append(f"{t},{format_float(v)}")
        lines.append("")
        lines.append(f"beta_fit,{format_float(self.beta_fit)}")
        lines.append(f"beta_bound,{format_float(self.beta_bound)}")
        lines.append(f"c_bound,{format_float(self.c_bound)}")
        return "\n".join(lines) + "\n"


def wiener_decay_check(m: SensingMatrix, alpha: float | None = None) -> WienerDecayReport:
    """Invert the normal matrix densely and fit its off-diagonal decay."""
    g = gram(m).toarray()
    try:
        factor = cho_factor(g)
    except np.linalg.LinAlgError as exc:
        raise StabilityError(f"normal matrix is singular: {exc}") from exc
    inv = cho_solve(factor, np.eye(g.shape[0]))

    c_bound = 2.0 * float(np.abs(np.diag(inv)).max())
    rho = m.topology.signal_distance_matrix()
    max_rho = int(rho.max())
    floor = 1e-14 * c_bound

    distances, maxima = [], []
    for t in range(1, max_rho + 1):
        mask = rho == t
        if not mask.any():
            continue
        mt = float(np.abs(inv[mask]).max())
        distances.append(t)
        maxima.append(mt)

    live = [(t, v) for t, v in zip(distances, maxima) if v > floor]
    if len(live) >= 2:
        x = np.log1p([t for t, _ in live])
        y = np.log([v for _, v in live])
        beta_fit = -float(np.polyfit(x, y, 1)[0])
    else:
        beta_fit = math.inf

    bounds = [
        math.log(c_bound / v) / math.log(1.0 + t) for t, v in zip(distances, maxima) if v > floor
    ]
    beta_bound = min(bounds) if bounds else math.inf

    return WienerDecayReport(
        beta_fit=beta_fit,
        beta_bound=beta_bound,
        c_bound=c_bound,
        shell_distances=tuple(distances),
        shell_maxima=tuple(maxima),
        inverse=inv,
    )
