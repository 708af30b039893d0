"""Range measurement model and Fisher information of a planar target position.

A formation of agents at fixed altitude measures round-trip delays to a
ground target. Each range measurement carries Gaussian noise whose variance
grows with the fourth power of distance (two-way path loss), so a single
measurement is informative both through its mean and through its
distance-dependent variance. This module turns a set of agent poses into
the 2x2 Fisher information matrix of the target's planar coordinates and
the CRLB (trace of the inverse information matrix) that any unbiased
position estimator is subject to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularGeometryError

SPEED_OF_LIGHT = 2.99792458e8  # m/s

# Determinant threshold (relative to trace^2) below which a 2x2 information
# matrix is treated as singular. Scale-free by construction.
_SINGULARITY_RTOL = 1e-12


@dataclass(frozen=True)
class SensingParams:
    """Physical constants of the two-way range measurement model.

    Attributes:
        transmit_power_w: Transmit power per agent in watts (equal across agents).
        processing_gain: Dimensionless receiver processing gain.
        ref_channel_power_m4: Two-way channel power at unit distance, in m^4.
        kappa: Dimensionless system constant of the noise model.
        noise_floor_w: Receiver noise power in watts.
        altitude_m: Common flight altitude in meters.
        speed_of_light: Propagation speed in m/s.
    """

    transmit_power_w: float
    processing_gain: float
    ref_channel_power_m4: float
    kappa: float
    noise_floor_w: float
    altitude_m: float
    speed_of_light: float = SPEED_OF_LIGHT

    # p * G_p * beta0 / (kappa * sigma0^2); the only combination the noise
    # and information formulas depend on. Units m^4.
    composite_snr_m4: float = field(init=False, repr=False)

    def __post_init__(self) -> None:
        for name in (
            "transmit_power_w",
            "processing_gain",
            "ref_channel_power_m4",
            "kappa",
            "noise_floor_w",
            "altitude_m",
            "speed_of_light",
        ):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"SensingParams.{name}: must be a finite positive number, got {value!r}")
        composite = (
            self.transmit_power_w
            * self.processing_gain
            * self.ref_channel_power_m4
            / (self.kappa * self.noise_floor_w)
        )
        object.__setattr__(self, "composite_snr_m4", composite)


@dataclass(frozen=True)
class TargetEstimate:
    """Planar prior position of the ground target, in meters."""

    position: np.ndarray

    def __post_init__(self) -> None:
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (2,) or not np.all(np.isfinite(pos)):
            raise ValueError(f"TargetEstimate.position: expected finite 2-vector, got {self.position!r}")
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class AgentPose:
    """One agent's planar position plus its viewing angles of the target.

    The planar position (with the common altitude) is the source of truth;
    elevation and azimuth are derived quantities cached for the information
    formulas. Use :meth:`from_position` or :meth:`from_angles` to get a
    consistent triple; the plain constructor only validates ranges.
    """

    planar_position: np.ndarray
    elevation_rad: float
    azimuth_rad: float

    def __post_init__(self) -> None:
        pos = np.asarray(self.planar_position, dtype=float)
        if pos.shape != (2,) or not np.all(np.isfinite(pos)):
            raise ValueError("AgentPose.planar_position: expected finite 2-vector")
        pos.setflags(write=False)
        object.__setattr__(self, "planar_position", pos)
        if not 0.0 < self.elevation_rad < math.pi / 2:
            raise ValueError(
                f"AgentPose.elevation_rad: must lie strictly inside (0, pi/2), got {self.elevation_rad!r}"
            )
        object.__setattr__(self, "azimuth_rad", float(self.azimuth_rad) % (2 * math.pi))

    @classmethod
    def from_position(
        cls, position: np.ndarray, target: TargetEstimate, params: SensingParams
    ) -> "AgentPose":
        """Derive elevation/azimuth from a planar position at the common altitude."""
        position = np.asarray(position, dtype=float)
        offset = position - target.position
        horizontal = float(np.hypot(offset[0], offset[1]))
        if horizontal <= 0.0:
            raise ValueError(
                "AgentPose.from_position: agent directly above the target has an undefined azimuth"
            )
        elevation = math.atan2(params.altitude_m, horizontal)
        azimuth = math.atan2(offset[1], offset[0])
        return cls(position, elevation, azimuth)

    @classmethod
    def from_angles(
        cls, elevation_rad: float, azimuth_rad: float, target: TargetEstimate, params: SensingParams
    ) -> "AgentPose":
        """Place an agent at the planar position consistent with the given angles."""
        if not 0.0 < elevation_rad < math.pi / 2:
            raise ValueError("AgentPose.from_angles: elevation must lie strictly inside (0, pi/2)")
        horizontal = params.altitude_m / math.tan(elevation_rad)
        position = target.position + horizontal * np.array(
            [math.cos(azimuth_rad), math.sin(azimuth_rad)]
        )
        return cls(position, elevation_rad, azimuth_rad)


@dataclass(frozen=True)
class Fim2:
    """Symmetric 2x2 Fisher information matrix of the target coordinates, in 1/m^2."""

    j_xx: float
    j_yy: float
    j_xy: float

    def __post_init__(self) -> None:
        tol = _SINGULARITY_RTOL * max(1.0, self.trace**2)
        if self.j_xx < -tol or self.j_yy < -tol or self.det < -tol:
            raise ValueError(
                f"Fim2: not positive semidefinite (j_xx={self.j_xx}, j_yy={self.j_yy}, j_xy={self.j_xy})"
            )

    @property
    def trace(self) -> float:
        return self.j_xx + self.j_yy

    @property
    def det(self) -> float:
        return self.j_xx * self.j_yy - self.j_xy**2

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.j_xx, self.j_xy], [self.j_xy, self.j_yy]])

    def eigenvalues(self) -> tuple[float, float]:
        """Eigenvalues in ascending order."""
        half_gap = math.hypot((self.j_xx - self.j_yy) / 2.0, self.j_xy)
        mid = self.trace / 2.0
        return mid - half_gap, mid + half_gap


def slant_range(agent_planar: np.ndarray, target: TargetEstimate, params: SensingParams) -> float:
    """Agent-to-target distance through the fixed flight altitude. Always >= altitude."""
    offset = np.asarray(agent_planar, dtype=float) - target.position
    return float(math.sqrt(offset[0] ** 2 + offset[1] ** 2 + params.altitude_m**2))


def delay_to_range(delay_s: float, params: SensingParams) -> float:
    """Convert a round-trip delay measurement to a one-way range: d = tau * c / 2."""
    if delay_s < 0:
        raise ValueError(f"delay_to_range: delay must be >= 0, got {delay_s!r}")
    return delay_s * params.speed_of_light / 2.0


def noise_variance(distance_m, params: SensingParams):
    """Variance of the range measurement noise at the given distance, in m^2.

    Grows with the fourth power of distance (two-way path loss). Accepts
    scalars or arrays.
    """
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError(f"noise_variance: distance must be > 0, got {distance_m!r}")
    out = d**4 / params.composite_snr_m4
    return float(out) if np.ndim(distance_m) == 0 else out


def range_fim_element(distance_m, params: SensingParams):
    """Fisher information carried by a single range measurement, in 1/m^2.

    Includes both the mean term (1/sigma^2) and the information contributed
    by the distance-dependent variance, which together reduce to
    C/d^4 + 8/d^2 with C the composite SNR constant. Strictly decreasing in
    distance. Accepts scalars or arrays.
    """
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError(f"range_fim_element: distance must be > 0, got {distance_m!r}")
    out = params.composite_snr_m4 / d**4 + 8.0 / d**2
    return float(out) if np.ndim(distance_m) == 0 else out


def elevation_weight(elevation_rad, params: SensingParams):
    """Per-agent contribution to the planar information as a function of elevation.

    Equals the single-range information evaluated at the distance implied by
    the elevation (sin(phi) = H/d), projected onto the horizontal plane by a
    cos^2(phi) factor. Vanishes toward both ends of (0, pi/2): low elevations
    lose SNR to path loss, high elevations lose horizontal geometry. Accepts
    scalars or arrays.
    """
    phi = np.asarray(elevation_rad, dtype=float)
    if np.any(phi <= 0) or np.any(phi >= math.pi / 2):
        raise ValueError(
            f"elevation_weight: elevation must lie strictly inside (0, pi/2), got {elevation_rad!r}"
        )
    h = params.altitude_m
    sin_sq = np.sin(phi) ** 2
    cos_sq = np.cos(phi) ** 2
    out = (params.composite_snr_m4 * sin_sq**2 / h**4 + 8.0 * sin_sq / h**2) * cos_sq
    return float(out) if np.ndim(elevation_rad) == 0 else out


def jacobian(poses: list[AgentPose]) -> np.ndarray:
    """M x 2 sensitivity of the ranges to the target coordinates.

    Row m is cos(phi_m) * [cos(theta_m), sin(theta_m)]; the overall row sign
    is immaterial for information purposes.
    """
    if len(poses) < 1:
        raise ValueError("jacobian: need at least one pose")
    rows = np.empty((len(poses), 2))
    for i, pose in enumerate(poses):
        c = math.cos(pose.elevation_rad)
        rows[i, 0] = c * math.cos(pose.azimuth_rad)
        rows[i, 1] = c * math.sin(pose.azimuth_rad)
    return rows


def target_fim(poses: list[AgentPose], params: SensingParams) -> Fim2:
    """Accumulate the 2x2 target-position information over all agents.

    Each agent contributes its elevation weight spread over its azimuth
    direction; the trace equals the sum of the weights.
    """
    if len(poses) < 1:
        raise ValueError("target_fim: need at least one pose")
    j_xx = j_yy = j_xy = 0.0
    for pose in poses:
        w = elevation_weight(pose.elevation_rad, params)
        cos_t = math.cos(pose.azimuth_rad)
        sin_t = math.sin(pose.azimuth_rad)
        j_xx += w * cos_t**2
        j_yy += w * sin_t**2
        j_xy += w * sin_t * cos_t
    return Fim2(j_xx, j_yy, j_xy)


def crlb_trace(fim: Fim2) -> float:
    """Trace of the inverse information matrix: the CRLB on total position MSE, in m^2.

    Raises:
        SingularGeometryError: if the information matrix is (numerically)
            singular, i.e. the formation carries no information about some
            direction of the target position.
    """
    det = fim.det
    if det <= _SINGULARITY_RTOL * fim.trace**2:
        raise SingularGeometryError(
            f"degenerate formation geometry: information determinant {det:.3e} "
            f"is negligible against trace {fim.trace:.3e}"
        )
    return fim.trace / det
