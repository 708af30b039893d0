"""Comparison formations for altitude sweeps.

Each generator returns M planar positions at the common flight altitude.
The kinds bracket the optimum from two sides: clustered and fixed-elevation
polygons keep the isotropic azimuth spread but sit at the wrong elevation,
the offset line has poor azimuth spread, and the random cloud has neither
property. None of them can beat the analytic bound; the sweep quantifies by
how much they miss it as altitude grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import SingularGeometryError
from .formation import build_formation, optimal_azimuths, theoretical_lower_bound
from .sensing import AgentPose, SensingParams, TargetEstimate, crlb_trace, target_fim

KINDS = ("optimal", "line", "clustered_polygon", "fixed_elevation", "random_cloud")

# Entropy-stream tag separating sweep draws from other consumers of the seed.
_SWEEP_STREAM = 2**41


@dataclass(frozen=True)
class BenchmarkSpec:
    """One comparison formation family and its shape parameters.

    Attributes:
        kind: One of optimal, line, clustered_polygon, fixed_elevation,
            random_cloud.
        radius_factor: Ring shrink factor for clustered_polygon.
        elevation_deg: Common elevation for fixed_elevation.
        length_m: Segment length for line.
        lateral_offset_m: Sideways shift of the line from the target's
            projection. A line straight through the projection makes every
            bearing collinear and the information matrix singular, so the
            default keeps the benchmark finite.
        half_width_m: Half side of the random_cloud sampling box.
        samples: Monte Carlo draws averaged for random_cloud.
    """

    kind: str
    radius_factor: float = 0.25
    elevation_deg: float = 30.0
    length_m: float = 40.0
    lateral_offset_m: float = 10.0
    half_width_m: float = 30.0
    samples: int = 25

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"BenchmarkSpec.kind: expected one of {KINDS}, got {self.kind!r}")
        if not 0.0 < self.radius_factor:
            raise ValueError(f"BenchmarkSpec.radius_factor: must be > 0, got {self.radius_factor!r}")
        if not 0.0 < self.elevation_deg < 90.0:
            raise ValueError(
                f"BenchmarkSpec.elevation_deg: must lie in (0, 90), got {self.elevation_deg!r}"
            )
        if self.length_m <= 0:
            raise ValueError(f"BenchmarkSpec.length_m: must be > 0, got {self.length_m!r}")
        if self.half_width_m <= 0:
            raise ValueError(f"BenchmarkSpec.half_width_m: must be > 0, got {self.half_width_m!r}")
        if self.samples < 1:
            raise ValueError(f"BenchmarkSpec.samples: must be >= 1, got {self.samples!r}")


def benchmark_positions(
    spec: BenchmarkSpec,
    agent_count: int,
    target: TargetEstimate,
    params: SensingParams,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Planar positions of one benchmark instance, shape (M, 2)."""
    s = target.position
    if spec.kind == "optimal":
        return build_formation(params, target, agent_count).planar_positions
    if spec.kind == "line":
        along = np.linspace(-spec.length_m / 2.0, spec.length_m / 2.0, agent_count)
        return np.column_stack([s[0] + along, np.full(agent_count, s[1] + spec.lateral_offset_m)])
    if spec.kind == "clustered_polygon":
        optimal = build_formation(params, target, agent_count).planar_positions
        return s + spec.radius_factor * (optimal - s)
    if spec.kind == "fixed_elevation":
        radius = params.altitude_m / math.tan(math.radians(spec.elevation_deg))
        azimuths = optimal_azimuths(agent_count)
        return s + radius * np.column_stack([np.cos(azimuths), np.sin(azimuths)])
    if rng is None:
        raise ValueError("benchmark_positions: random_cloud needs an rng")
    return s + rng.uniform(-spec.half_width_m, spec.half_width_m, size=(agent_count, 2))


def formation_crlb(
    positions: np.ndarray, target: TargetEstimate, params: SensingParams
) -> float:
    """CRLB trace of agents hovering at these planar positions."""
    poses = [
        AgentPose.from_position(positions[m], target, params)
        for m in range(positions.shape[0])
    ]
    return crlb_trace(target_fim(poses, params))


def sweep_rows(
    specs: list[BenchmarkSpec],
    agent_count: int,
    target: TargetEstimate,
    base_params: SensingParams,
    altitudes_m: list[float],
    seed: int,
) -> list[dict]:
    """CRLB of every benchmark at every altitude, with the analytic bound.

    random_cloud rows are Monte Carlo averages; the returned ``samples``
    field records how many draws contributed (singular draws are skipped,
    which has never been observed for continuous position distributions).
    """
    if not altitudes_m:
        raise ValueError("sweep_rows: need at least one altitude")
    rows: list[dict] = []
    for alt_index, altitude in enumerate(altitudes_m):
        params = replace(base_params, altitude_m=float(altitude))
        bound = theoretical_lower_bound(params, agent_count)
        for spec in specs:
            if spec.kind == "random_cloud":
                rng = np.random.default_rng([seed, _SWEEP_STREAM, alt_index])
                values = []
                for _ in range(spec.samples):
                    positions = benchmark_positions(spec, agent_count, target, params, rng)
                    try:
                        values.append(formation_crlb(positions, target, params))
                    except SingularGeometryError:
                        continue
                crlb = float(np.mean(values)) if values else None
                samples = len(values)
            else:
                positions = benchmark_positions(spec, agent_count, target, params)
                crlb = formation_crlb(positions, target, params)
                samples = 1
            rows.append(
                {
                    "altitude_m": float(altitude),
                    "formation_kind": spec.kind,
                    "crlb_m2": crlb,
                    "bound_m2": bound,
                    "samples": samples,
                }
            )
    return rows
