"""Synchronous message-passing simulation of the per-agent reconstruction.

Agents run the residual iteration with bounded local storage: each agent
holds the rows of the precomputed operators restricted to its radius
``2N + 3s`` communication ball, exchanges scalar w/e values with the ball
each round through explicit message delivery, and stops when every agent's
locally observed residual maximum clears the threshold (a global barrier,
so all agents halt in the same round and the run is bit-comparable to the
centralized iteration).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graphs import format_float, Graph
from .reconstruction import DivergenceError, PatchOperator, build_patch_operator, iteration_matrices
from .sensing import SensingMatrix
from .topology import DsrsTopology, TopologyError


class ProvisioningError(ValueError):
    """Operator mass found outside an agent's declared storage ball."""


@dataclass
class AgentState:
    """One agent's bounded storage and mailbox.

    All per-neighbor arrays are aligned with ``neighborhood`` (ascending
    agent order); ``a_rows`` holds one sensing row per anchored position for
    the final amplitude readout.
    """

    id: object
    neighborhood: tuple
    a_rows: dict
    b: np.ndarray
    c: np.ndarray
    z: np.ndarray
    w: float = 0.0
    e: float = 0.0
    inbox: dict = field(default_factory=dict)

    @property
    def storage_values(self) -> int:
        return len(self.b) + len(self.c) + len(self.z) + sum(len(v) for v in self.a_rows.values())


@dataclass
class RunStats:
    rounds: int
    messages_total: int
    values_transferred: int
    ops_estimate: int
    stop_reason: str

    def to_csv(self) -> str:
        lines = ["key,value"]
        for key in ("rounds", "messages_total", "values_transferred", "ops_estimate"):
            lines.append(f"{key},{getattr(self, key)}")
        lines.append(f"stop_reason,{self.stop_reason}")
        return "\n".join(lines) + "\n"


@dataclass
class SimSystem:
    """Provisioned multi-agent system plus the context needed to impair/rerun."""

    states: dict
    topology: DsrsTopology
    matrix: SensingMatrix
    patch_op: PatchOperator
    n_radius: int
    s_band: int
    z: np.ndarray


def provision(m: SensingMatrix, r: PatchOperator, z: np.ndarray, n_radius: int, s_band: int) -> SimSystem:
    """Distribute operator rows, samples, and sensing rows to agent storage.

    The first-step operator has bandwidth ``2N + s`` and the residual
    operator ``2N + 3s`` on the agent graph; any mass outside an agent's
    ball is a provisioning error (bandwidth accounting bug upstream).
    """
    t = m.topology
    z = np.asarray(z, dtype=float)
    if z.shape != (t.n_agents,):
        raise ProvisioningError(f"sample vector has shape {z.shape}, expected ({t.n_agents},)")
    b_mat, c_mat = iteration_matrices(m, r)
    dist_g = t.agent_graph.distance_matrix
    radius = r.bandwidth + 3 * s_band  # = 2N + 3s for the default merge construction

    states: dict = {}
    for k, agent in enumerate(t.agents):
        ball = np.flatnonzero(dist_g[k] <= radius)
        ball_set = set(ball.tolist())
        for name, mat in (("first-step", b_mat), ("residual", c_mat)):
            row = mat.getrow(k)
            outside = [c for c in row.indices if c not in ball_set]
            if outside:
                raise ProvisioningError(
                    f"{name} operator row of agent {agent!r} has mass at distance "
                    f"> {radius} (column index {outside[0]})"
                )
        a_rows = {}
        for pos in t.anchored_by(agent):
            col = m.matrix[:, t.position_index(pos)].toarray().ravel()
            a_rows[pos] = col[ball]
        states[agent] = AgentState(
            id=agent,
            neighborhood=tuple(t.agents[i] for i in ball),
            a_rows=a_rows,
            b=b_mat[k, ball].toarray().ravel(),
            c=c_mat[k, ball].toarray().ravel(),
            z=z[ball],
        )
    return SimSystem(states=states, topology=t, matrix=m, patch_op=r, n_radius=n_radius, s_band=s_band, z=z)


def _exchange(system: SimSystem, payload: dict) -> int:
    """Deliver each agent's scalar to every member of its ball; returns message count."""
    messages = 0
    for state in system.states.values():
        state.inbox = {}
    for agent, state in system.states.items():
        value = payload[agent]
        for nbr in state.neighborhood:
            if nbr != agent:
                system.states[nbr].inbox[agent] = value
                messages += 1
    return messages


def _gather(state: AgentState, own: float) -> np.ndarray:
    """Ball-aligned vector of the latest values, read only from the inbox."""
    return np.array([own if u == state.id else state.inbox[u] for u in state.neighborhood])


def run_rounds(system: SimSystem, eps: float, max_steps: int):
    """Execute synchronous rounds until every local residual test passes.

    Returns (final w by agent, RunStats, per-round w history, trace rows).
    The per-round history is aligned with the centralized iteration: entry
    n-1 holds the w vector after iteration n.
    """
    states = system.states
    order = system.topology.agents
    messages = 0
    ops = 0

    # round 1: first approximation and its residual
    for state in states.values():
        state.w = float(np.dot(state.b, state.z))
        ops += 2 * len(state.b)
    messages += _exchange(system, {a: states[a].w for a in order})
    for state in states.values():
        wv = _gather(state, state.w)
        state.e = state.w - float(np.dot(state.c, wv))
        ops += 2 * len(state.c)
    messages += _exchange(system, {a: states[a].e for a in order})

    history = [np.array([states[a].w for a in order])]
    trace = [_trace_rows(system, 1)]
    e1_sup = max(abs(states[a].e) for a in order)
    grow_streak = 0
    rounds = 1
    stop_reason = "max-iters"

    for n in range(2, max_steps + 1):
        local_delta = {
            a: max(abs(v) for v in _gather(states[a], states[a].e)) for a in order
        }
        if all(d <= eps for d in local_delta.values()):
            stop_reason = "threshold"
            break
        e_sup = max(abs(states[a].e) for a in order)
        if e1_sup > 0 and e_sup > 10.0 * e1_sup:
            grow_streak += 1
            if grow_streak >= 5:
                raise DivergenceError("residual grew 10x above initial for 5 consecutive rounds", trace)
        else:
            grow_streak = 0

        for state in states.values():
            state.w += state.e
        for state in states.values():
            ev = _gather(state, state.e)
            state.e = state.e - float(np.dot(state.c, ev))
            ops += 2 * len(state.c)
        messages += _exchange(system, {a: states[a].e for a in order})
        rounds = n
        history.append(np.array([states[a].w for a in order]))
        trace.append(_trace_rows(system, n))
    else:
        local_delta = {a: max(abs(v) for v in _gather(states[a], states[a].e)) for a in order}
        if all(d <= eps for d in local_delta.values()):
            stop_reason = "threshold"

    stats = RunStats(
        rounds=rounds,
        messages_total=messages,
        values_transferred=messages,
        ops_estimate=ops,
        stop_reason=stop_reason,
    )
    w_final = {a: states[a].w for a in order}
    return w_final, stats, history, [row for batch in trace for row in batch]


def _trace_rows(system: SimSystem, round_no: int):
    rows = []
    for agent in system.topology.agents:
        st = system.states[agent]
        rows.append((round_no, agent, st.w, st.e))
    return rows


def trace_csv(trace) -> str:
    lines = ["round,agent,w,e"]
    for round_no, agent, w, e in trace:
        lines.append(f"{round_no},{agent},{format_float(w)},{format_float(e)}")
    return "\n".join(lines) + "\n"


def estimate_amplitudes(system: SimSystem) -> np.ndarray:
    """Per-position readout: each position's first anchor contracts its sensing row.

    Performs one final w exchange so every anchor reads only its own ball.
    """
    t = system.topology
    _exchange(system, {a: system.states[a].w for a in t.agents})
    out = np.zeros(t.n_positions)
    for k, pos in enumerate(t.positions):
        anchor = t.anchors_of(pos)[0]
        state = system.states[anchor]
        out[k] = float(np.dot(state.a_rows[pos], _gather(state, state.w)))
    return out


def impair(system: SimSystem, failed_agents, clogged_links) -> SimSystem:
    """Rebuild the system after agent failures and clogged communication links.

    Failed agents lose their sensing rows and graph vertex; clogged links
    are removed from the communication edge set before every derived object
    (distances, patch operator, storage balls) is rebuilt on the survivors.
    Samples of surviving agents are kept as acquired.
    """
    t = system.topology
    failed = set(failed_agents)
    clogged = {frozenset(e) for e in clogged_links}
    for agent in failed:
        if agent not in t.agents:
            raise TopologyError(f"unknown agent {agent!r} in failure set")

    survivors = [a for a in t.agents if a not in failed]
    edges = [
        (u, v)
        for u, v in t.agent_graph.edges
        if u not in failed and v not in failed and frozenset((u, v)) not in clogged
    ]
    try:
        agent_graph = Graph(survivors, edges)
    except Exception as exc:
        raise TopologyError(f"impaired communication graph is invalid: {exc}") from exc

    assoc = [(p, a) for p, a in t.associations if a not in failed]
    anchored = {p for p, _ in assoc}
    for pos in t.positions:
        if pos not in anchored:
            raise TopologyError(f"position {pos!r} lost every anchor agent")
    coords = None
    if t.coords is not None:
        coords = {u: xy for u, xy in t.coords.items() if u not in failed}
    new_t = DsrsTopology(agent_graph, t.positions, assoc, coords)

    keep = [k for k, a in enumerate(t.agents) if a not in failed]
    new_m = SensingMatrix(new_t, system.matrix.matrix[keep, :], system.matrix.alpha)
    old = system.patch_op
    new_r = build_patch_operator(
        new_m,
        system.n_radius,
        merge_decay=old.merge_decay,
        ball_extension=old.ball_extension,
    )
    return provision(new_m, new_r, system.z[keep], system.n_radius, new_m.bandwidth)
