"""Distributed formation control over a communication graph.

Four cooperating pieces: leader-pinned velocity consensus (every follower
averages toward its neighbors, the leader broadcasts the reference), a
displacement law that is a gradient step on each agent's local formation
error, obstacle repulsion from an inverse-distance potential, and a global
scale factor that shrinks the whole target formation through narrow gaps.
Everything here is a pure function of the previous swarm state; the stepper
in :mod:`formsense.world` owns state advancement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .formation import DisplacementSet


@dataclass(frozen=True)
class CommGraph:
    """Undirected communication topology with a designated leader.

    Attributes:
        adjacency: (M, M) binary symmetric matrix, zero diagonal.
        leader_index: The agent that knows the reference velocity.
    """

    adjacency: np.ndarray
    leader_index: int = 0

    def __post_init__(self) -> None:
        adj = np.asarray(self.adjacency, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"CommGraph.adjacency: expected square matrix, got {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise ValueError("CommGraph.adjacency: must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise ValueError("CommGraph.adjacency: diagonal must be zero")
        if not np.all(np.isin(adj, (0.0, 1.0))):
            raise ValueError("CommGraph.adjacency: entries must be 0 or 1")
        if not 0 <= self.leader_index < adj.shape[0]:
            raise ValueError(f"CommGraph.leader_index: out of range for {adj.shape[0]} agents")
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        if not self._connected():
            raise ValueError("CommGraph.adjacency: graph must be connected")

    def _connected(self) -> bool:
        n = self.agent_count
        if n == 1:
            return True
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            node = stack.pop()
            for other in np.flatnonzero(self.adjacency[node]):
                if not seen[other]:
                    seen[other] = True
                    stack.append(int(other))
        return bool(seen.all())

    @property
    def agent_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max())

    @property
    def max_follower_degree(self) -> int:
        """Largest degree among non-leader agents (the ones that run consensus)."""
        mask = np.ones(self.agent_count, dtype=bool)
        mask[self.leader_index] = False
        return int(self.degrees[mask].max())

    @classmethod
    def ring(cls, agent_count: int, leader_index: int = 0) -> "CommGraph":
        """Plain cycle over all agents."""
        if agent_count < 3:
            raise ValueError(f"CommGraph.ring: need at least 3 agents, got {agent_count}")
        adj = np.zeros((agent_count, agent_count))
        for m in range(agent_count):
            adj[m, (m + 1) % agent_count] = 1.0
            adj[(m + 1) % agent_count, m] = 1.0
        return cls(adj, leader_index)

    @classmethod
    def ring_with_leader(cls, agent_count: int, leader_index: int = 0) -> "CommGraph":
        """Cycle over all agents plus chords from the leader to everyone."""
        graph = cls.ring(agent_count, leader_index)
        adj = np.array(graph.adjacency)
        adj[leader_index, :] = 1.0
        adj[:, leader_index] = 1.0
        adj[leader_index, leader_index] = 0.0
        return cls(adj, leader_index)

    @classmethod
    def complete(cls, agent_count: int, leader_index: int = 0) -> "CommGraph":
        if agent_count < 2:
            raise ValueError(f"CommGraph.complete: need at least 2 agents, got {agent_count}")
        adj = np.ones((agent_count, agent_count)) - np.eye(agent_count)
        return cls(adj, leader_index)


@dataclass(frozen=True)
class SwarmState:
    """Planar positions, velocity estimates, and formation scale at one step."""

    positions: np.ndarray
    velocity_estimates: np.ndarray
    scale: float = 1.0
    step_index: int = 0

    def __post_init__(self) -> None:
        positions = np.asarray(self.positions, dtype=float)
        velocities = np.asarray(self.velocity_estimates, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 2:
            raise ValueError(f"SwarmState.positions: expected (M, 2), got {positions.shape}")
        if velocities.shape != positions.shape:
            raise ValueError(
                f"SwarmState.velocity_estimates: shape {velocities.shape} "
                f"does not match positions {positions.shape}"
            )
        if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(velocities))):
            raise ValueError("SwarmState: entries must be finite")
        if not 0.0 < self.scale <= 1.0:
            raise ValueError(f"SwarmState.scale: must lie in (0, 1], got {self.scale!r}")
        if self.step_index < 0:
            raise ValueError(f"SwarmState.step_index: must be >= 0, got {self.step_index!r}")
        positions.setflags(write=False)
        velocities.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "velocity_estimates", velocities)

    @property
    def agent_count(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class ControlGains:
    """Tuning constants of the control stack.

    Attributes:
        epsilon: Displacement-law step gain.
        consensus_gain: Velocity-consensus step gain.
        repulsion_gain: Strength of the obstacle potential.
        safety_radius_m: Distance below which repulsion activates.
        repulsion_cap: Upper limit on the repulsion magnitude per step, m.
        eta_min: Lower clamp for the formation scale factor.
    """

    epsilon: float = 0.01
    consensus_gain: float = 0.2
    repulsion_gain: float = 5.0
    safety_radius_m: float = 5.0
    repulsion_cap: float = 5.0
    eta_min: float = 0.2

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError(f"ControlGains.epsilon: must be > 0, got {self.epsilon!r}")
        if self.consensus_gain <= 0:
            raise ValueError(f"ControlGains.consensus_gain: must be > 0, got {self.consensus_gain!r}")
        if self.repulsion_gain < 0:
            raise ValueError(f"ControlGains.repulsion_gain: must be >= 0, got {self.repulsion_gain!r}")
        if self.safety_radius_m <= 0:
            raise ValueError(f"ControlGains.safety_radius_m: must be > 0, got {self.safety_radius_m!r}")
        if self.repulsion_cap <= 0:
            raise ValueError(f"ControlGains.repulsion_cap: must be > 0, got {self.repulsion_cap!r}")
        if not 0.0 < self.eta_min <= 1.0:
            raise ValueError(f"ControlGains.eta_min: must lie in (0, 1], got {self.eta_min!r}")


def check_stability(gains: ControlGains, graph: CommGraph) -> None:
    """Reject gain/topology pairs outside the linear stability region.

    The displacement law contracts when epsilon keeps every Laplacian
    eigenvalue step inside the unit interval; 2 * max degree bounds the
    spectrum. Consensus runs only on the followers, so its gain is checked
    against the largest follower degree (the leader never updates and its
    degree is irrelevant).
    """
    if gains.epsilon * 2.0 * graph.max_degree >= 1.0:
        raise ValueError(
            f"gains.epsilon: {gains.epsilon} is unstable for max degree "
            f"{graph.max_degree} (need epsilon * 2 * max_degree < 1)"
        )
    limit = graph.max_follower_degree + 1
    if gains.consensus_gain * limit >= 1.0:
        raise ValueError(
            f"gains.consensus_gain: {gains.consensus_gain} is unstable for max follower "
            f"degree {graph.max_follower_degree} (need gain * (degree + 1) < 1)"
        )


def consensus_velocity_step(
    state: SwarmState,
    graph: CommGraph,
    target_velocity: np.ndarray,
    gains: ControlGains,
) -> np.ndarray:
    """One round of leader-pinned velocity consensus.

    The leader's estimate is the reference itself; every follower moves its
    estimate toward the average of what it hears from its neighbors. On a
    connected graph the iteration contracts all estimates to the reference.
    """
    target_velocity = np.asarray(target_velocity, dtype=float)
    velocities = np.array(state.velocity_estimates)
    velocities[graph.leader_index] = target_velocity
    disagreement = velocities[:, None, :] - velocities[None, :, :]
    correction = (graph.adjacency[:, :, None] * disagreement).sum(axis=1)
    updated = velocities - gains.consensus_gain * correction
    updated[graph.leader_index] = target_velocity
    return updated


def local_cost(
    state: SwarmState,
    graph: CommGraph,
    disp: DisplacementSet,
    agent: int,
    dt: float,
    next_position: np.ndarray,
    target_velocity: Optional[np.ndarray] = None,
) -> float:
    """Formation error as seen by one agent.

    Sums the squared deviations from the desired full-size offsets to each
    neighbor, plus the squared mismatch between the agent's realized velocity
    (next_position - position) / dt and the reference velocity.
    """
    if dt <= 0:
        raise ValueError(f"local_cost: dt must be > 0, got {dt!r}")
    if target_velocity is None:
        target_velocity = disp.global_velocity
    q = state.positions
    deviation = q[agent] - q - disp.offsets[agent]
    weights = graph.adjacency[agent]
    displacement_term = float((weights * (deviation**2).sum(axis=1)).sum())
    realized = (np.asarray(next_position, dtype=float) - q[agent]) / dt
    velocity_term = float(((realized - target_velocity) ** 2).sum())
    return displacement_term + velocity_term


def displacement_control(
    state: SwarmState,
    graph: CommGraph,
    disp: DisplacementSet,
    gains: ControlGains,
    scale: float,
) -> np.ndarray:
    """Gradient step of each agent onto the scaled desired offsets.

    u_m = -epsilon * sum_p a_mp (q_m - q_p - scale * delta_mp), which is
    -epsilon/2 times the gradient of agent m's own displacement error. The
    offsets enter scaled so the tracked formation can shrink near obstacles
    without changing shape.
    """
    if not 0.0 < scale <= 1.0:
        raise ValueError(f"displacement_control: scale must lie in (0, 1], got {scale!r}")
    q = state.positions
    deviation = q[:, None, :] - q[None, :, :] - scale * disp.offsets
    return -gains.epsilon * (graph.adjacency[:, :, None] * deviation).sum(axis=1)


def repulsion(
    position: np.ndarray,
    nearest_obstacle_point: np.ndarray,
    gains: ControlGains,
    fallback_direction: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Pushback from the nearest obstacle point, zero outside the safety radius.

    The magnitude is the gradient of the potential
    0.5 * E_r * (1/l - 1/l_safe)^2, i.e. E_r * (1/l - 1/l_safe) / l^2,
    directed from the obstacle toward the agent and capped. An agent exactly
    on (or inside) the obstacle has no defined direction; the cap-magnitude
    push then follows ``fallback_direction`` (unit +x if absent) and the
    caller is expected to log the safety violation.
    """
    position = np.asarray(position, dtype=float)
    offset = position - np.asarray(nearest_obstacle_point, dtype=float)
    distance = float(np.hypot(offset[0], offset[1]))
    if distance >= gains.safety_radius_m:
        return np.zeros(2)
    if distance <= 0.0:
        direction = None if fallback_direction is None else np.asarray(fallback_direction, dtype=float)
        if direction is None or not np.any(direction):
            direction = np.array([1.0, 0.0])
        direction = direction / np.linalg.norm(direction)
        return gains.repulsion_cap * direction
    magnitude = gains.repulsion_gain * (1.0 / distance - 1.0 / gains.safety_radius_m) / distance**2
    magnitude = min(magnitude, gains.repulsion_cap)
    return magnitude * (offset / distance)


def scale_factor(
    nominal_diameter_m: float,
    world_clearance_m: float,
    gains: ControlGains,
    previous_scale: float,
) -> float:
    """Smoothed shrink factor for the tracked formation near obstacles.

    The raw factor asks that the formation fit inside the available
    clearance with the safety margin subtracted, clamped to
    [eta_min, 1]. A first-order low-pass (0.9 old, 0.1 raw) keeps the
    tracked offsets from jumping when clearance changes abruptly.
    """
    if nominal_diameter_m <= 0:
        raise ValueError(
            f"scale_factor: nominal_diameter_m must be > 0, got {nominal_diameter_m!r}"
        )
    if world_clearance_m < 0:
        raise ValueError(f"scale_factor: clearance must be >= 0, got {world_clearance_m!r}")
    raw = 2.0 * (world_clearance_m - gains.safety_radius_m) / nominal_diameter_m
    raw = min(1.0, max(gains.eta_min, raw))
    return 0.9 * previous_scale + 0.1 * raw


# Maps an agent position to (clearance_m, nearest_obstacle_point | None,
# outward_direction | None); the direction is a unit hint used only when the
# clearance is zero. Supplied by the world model.
ClearanceQuery = Callable[[np.ndarray], tuple[float, Optional[np.ndarray], Optional[np.ndarray]]]


def control_input(
    state: SwarmState,
    graph: CommGraph,
    disp: DisplacementSet,
    gains: ControlGains,
    world_query: ClearanceQuery,
) -> np.ndarray:
    """Total per-agent control: scaled displacement tracking plus repulsion."""
    u = displacement_control(state, graph, disp, gains, state.scale)
    for m in range(state.agent_count):
        clearance, nearest, outward = world_query(state.positions[m])
        if nearest is not None and clearance < gains.safety_radius_m:
            u[m] += repulsion(state.positions[m], nearest, gains, fallback_direction=outward)
    return u
