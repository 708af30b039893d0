"""Closed-form CRLB-optimal formation geometry around a ground target.

The total position error bound of any unbiased estimator satisfies
tr(J^-1) >= 4 / tr(J), with equality exactly when the information matrix is
isotropic (a scalar multiple of the identity). tr(J) is the sum of per-agent
elevation weights and does not depend on azimuths at all, so the optimum
factorizes: every agent sits at the elevation that maximizes its weight, and
the azimuths are spread so the second harmonic sum(exp(2j*theta)) cancels.
A regular polygon of three or more agents around the target does both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientAgentsError
from .sensing import (
    AgentPose,
    SensingParams,
    TargetEstimate,
    crlb_trace,
    elevation_weight,
    target_fim,
)

# Beyond this ratio between the two weight-curve coefficients the closed-form
# quadratic loses digits to cancellation; fall back to bisection on the
# weight derivative.
_CLOSED_FORM_RATIO_LIMIT = 1e12

_PHI_LO = math.radians(0.01)
_PHI_HI = math.radians(89.99)

_GEOMETRY_RTOL = 1e-9


@dataclass(frozen=True)
class FormationGeometry:
    """A regular-polygon sensing formation at a common elevation angle.

    Attributes:
        poses: Agent poses; agent 0 is the leader and sits at the initial
            rotation azimuth.
        center: Polygon center, the target's vertical projection.
        ring_radius_m: Horizontal distance from each agent to the center.
        elevation_rad: Common elevation angle of all agents.
        initial_rotation_rad: Azimuth of agent 0.
        crlb_m2: CRLB trace attained by this formation.
    """

    poses: tuple[AgentPose, ...]
    center: np.ndarray
    ring_radius_m: float
    elevation_rad: float
    initial_rotation_rad: float
    crlb_m2: float

    def __post_init__(self) -> None:
        if len(self.poses) < 3:
            raise InsufficientAgentsError(
                f"an isotropic formation needs at least 3 agents, got {len(self.poses)}"
            )
        center = np.asarray(self.center, dtype=float)
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        radii = np.array(
            [np.linalg.norm(p.planar_position - center) for p in self.poses]
        )
        if not np.allclose(radii, self.ring_radius_m, rtol=_GEOMETRY_RTOL, atol=1e-12):
            raise ValueError("FormationGeometry: agents are not equidistant from the center")
        azimuths = np.array([p.azimuth_rad for p in self.poses])
        spacing = np.diff(azimuths) % (2.0 * math.pi)
        if not np.allclose(spacing, 2.0 * math.pi / len(self.poses), atol=1e-9):
            raise ValueError("FormationGeometry: azimuths are not a regular polygon")

    @property
    def agent_count(self) -> int:
        return len(self.poses)

    @property
    def planar_positions(self) -> np.ndarray:
        """Agent positions stacked into an (M, 2) array."""
        return np.array([p.planar_position for p in self.poses])


@dataclass(frozen=True)
class DisplacementSet:
    """Pairwise position offsets a formation-control law should track.

    Attributes:
        offsets: (M, M, 2) array with offsets[p, m] = position_p - position_m.
            Antisymmetric, and consistent along agent chains because every
            entry derives from one embedding.
        global_velocity: Common reference velocity of the whole formation, m/s.
    """

    offsets: np.ndarray
    global_velocity: np.ndarray

    def __post_init__(self) -> None:
        offsets = np.asarray(self.offsets, dtype=float)
        if offsets.ndim != 3 or offsets.shape[0] != offsets.shape[1] or offsets.shape[2] != 2:
            raise ValueError(f"DisplacementSet.offsets: expected (M, M, 2), got {offsets.shape}")
        if not np.all(np.isfinite(offsets)):
            raise ValueError("DisplacementSet.offsets: entries must be finite")
        if not np.array_equal(offsets, -offsets.transpose(1, 0, 2)):
            raise ValueError("DisplacementSet.offsets: must be antisymmetric")
        velocity = np.asarray(self.global_velocity, dtype=float)
        if velocity.shape != (2,) or not np.all(np.isfinite(velocity)):
            raise ValueError("DisplacementSet.global_velocity: expected finite 2-vector")
        offsets.setflags(write=False)
        velocity.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "global_velocity", velocity)

    @property
    def agent_count(self) -> int:
        return self.offsets.shape[0]

    @property
    def nominal_diameter_m(self) -> float:
        """Largest pairwise distance in the unscaled formation."""
        return float(np.sqrt((self.offsets**2).sum(axis=2)).max())


def optimal_elevation(params: SensingParams) -> float:
    """Elevation angle maximizing the per-agent information weight.

    The stationarity condition reduces to a quadratic in tan^2(phi) with a
    single positive root between 1 and 2, so the optimum always lies between
    45 degrees and arctan(sqrt(2)) ~ 54.74 degrees: the high-SNR regime
    favors pure geometry, the low-SNR regime tilts toward shorter ranges.
    """
    h = params.altitude_m
    a = params.composite_snr_m4 / h**4
    b = 8.0 / h**2
    ratio = a / b
    if 1.0 / _CLOSED_FORM_RATIO_LIMIT < ratio < _CLOSED_FORM_RATIO_LIMIT:
        t_star = (a + math.sqrt(a * a + a * b + b * b)) / (a + b)
        return math.atan(math.sqrt(t_star))
    return _bisect_weight_peak(params)


def _bisect_weight_peak(params: SensingParams) -> float:
    """Locate the weight maximum by bisection on its derivative sign.

    The weight is smooth and unimodal on (0, pi/2), so the derivative changes
    sign exactly once. Used when the quadratic's coefficients are too far
    apart in magnitude for the closed form to be trustworthy.
    """
    h = params.altitude_m
    a = params.composite_snr_m4 / h**4
    b = 8.0 / h**2

    def slope_sign(phi: float) -> float:
        s2 = math.sin(phi) ** 2
        c2 = math.cos(phi) ** 2
        # d(weight)/d(phi) divided by sin(2 phi), which is positive here.
        return a * s2 * (2.0 * c2 - s2) + b * (c2 - s2)

    lo, hi = _PHI_LO, _PHI_HI
    if slope_sign(lo) <= 0.0:
        return lo
    if slope_sign(hi) >= 0.0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if slope_sign(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def optimal_azimuths(agent_count: int, initial_rotation_rad: float = 0.0) -> np.ndarray:
    """Equally spaced azimuths whose second-harmonic sum cancels.

    Any rotation of the regular spacing works; ``initial_rotation_rad`` picks
    the representative. Azimuths are normalized to [0, 2*pi).
    """
    if agent_count < 3:
        raise InsufficientAgentsError(
            f"an isotropic formation needs at least 3 agents, got {agent_count}"
        )
    raw = initial_rotation_rad + 2.0 * math.pi * np.arange(agent_count) / agent_count
    return raw % (2.0 * math.pi)


def theoretical_lower_bound(params: SensingParams, agent_count: int) -> float:
    """Minimum achievable CRLB trace for the given fleet size, in m^2.

    Equals 4 / (M * w(phi*)): all M agents at the weight-maximizing
    elevation, arranged isotropically. Independent of the polygon rotation.
    """
    if agent_count < 3:
        raise InsufficientAgentsError(
            f"an isotropic formation needs at least 3 agents, got {agent_count}"
        )
    w_star = elevation_weight(optimal_elevation(params), params)
    return 4.0 / (agent_count * w_star)


def build_formation(
    params: SensingParams,
    target: TargetEstimate,
    agent_count: int,
    initial_rotation_rad: float = 0.0,
) -> FormationGeometry:
    """Construct the optimal regular-polygon formation around the target.

    Agents share the weight-maximizing elevation and sit on the circle of
    radius H / tan(phi*) centered on the target's vertical projection, at
    equally spaced azimuths starting from ``initial_rotation_rad``.
    """
    phi_star = optimal_elevation(params)
    azimuths = optimal_azimuths(agent_count, initial_rotation_rad)
    poses = tuple(
        AgentPose.from_angles(phi_star, float(theta), target, params) for theta in azimuths
    )
    crlb = crlb_trace(target_fim(list(poses), params))
    return FormationGeometry(
        poses=poses,
        center=target.position.copy(),
        ring_radius_m=params.altitude_m / math.tan(phi_star),
        elevation_rad=phi_star,
        initial_rotation_rad=float(initial_rotation_rad) % (2.0 * math.pi),
        crlb_m2=crlb,
    )


def displacement_set(
    formation: FormationGeometry, global_velocity=(0.0, 0.0)
) -> DisplacementSet:
    """Derive the pairwise offsets the control law should hold.

    offsets[p, m] = position_p - position_m, so antisymmetry and
    chain-consistency hold by construction.
    """
    positions = formation.planar_positions
    offsets = positions[:, None, :] - positions[None, :, :]
    return DisplacementSet(offsets=offsets, global_velocity=np.asarray(global_velocity, dtype=float))
