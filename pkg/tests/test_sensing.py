"""Tests for the range-measurement model and Fisher information pieces.

The independent oracle here is the plain measurement chain: noise variance
sigma^2 = d^4 / C, per-range information 1/sigma^2 + (1/(2 sigma^4)) * (4 sigma^2 / d)^2,
evaluated step by step with no algebraic simplification.  The library's
closed forms must agree with that chain to float precision.
"""

import dataclasses
import math

import numpy as np
import pytest

from formsense import (
    AgentPose,
    Fim2,
    SensingParams,
    SingularGeometryError,
    TargetEstimate,
    crlb_trace,
    delay_to_range,
    elevation_weight,
    jacobian,
    noise_variance,
    range_fim_element,
    slant_range,
    target_fim,
)

SPEED_OF_LIGHT = 2.99792458e8


def unit_snr_params(altitude: float = 2.0) -> SensingParams:
    """Parameters whose composite SNR constant is exactly 1 m^4."""
    return SensingParams(
        transmit_power_w=1.0,
        processing_gain=1.0,
        ref_channel_power_m4=1.0,
        kappa=1.0,
        noise_floor_w=1.0,
        altitude_m=altitude,
    )


def chain_info(distance: float, params: SensingParams) -> float:
    # Deliberately unsimplified: variance first, then the two CRLB terms.
    var = distance**4 / params.composite_snr_m4
    return 1.0 / var + (1.0 / (2.0 * var**2)) * (4.0 * var / distance) ** 2


class TestSensingParams:
    def test_composite_snr_default(self, default_params):
        assert default_params.composite_snr_m4 == pytest.approx(1.0e9, rel=1e-12)

    def test_composite_snr_scales_with_power(self, default_params):
        doubled = dataclasses.replace(default_params, transmit_power_w=0.2)
        assert doubled.composite_snr_m4 == pytest.approx(
            2.0 * default_params.composite_snr_m4, rel=1e-12
        )

    @pytest.mark.parametrize(
        "field, value",
        [
            ("transmit_power_w", 0.0),
            ("transmit_power_w", -1.0),
            ("processing_gain", 0.0),
            ("ref_channel_power_m4", -1e-5),
            ("kappa", 0.0),
            ("noise_floor_w", 0.0),
            ("altitude_m", 0.0),
            ("altitude_m", -5.0),
        ],
    )
    def test_rejects_nonpositive_fields(self, default_params, field, value):
        with pytest.raises(ValueError):
            dataclasses.replace(default_params, **{field: value})


class TestSlantRange:
    def test_directly_overhead(self, default_params, target):
        assert slant_range(np.array([80.0, 90.0]), target, default_params) == 20.0

    def test_three_four_five(self):
        params = unit_snr_params(altitude=1e-4)
        tgt = TargetEstimate(np.array([3.0, 4.0]))
        d = slant_range(np.array([0.0, 0.0]), tgt, params)
        assert d == pytest.approx(5.0, abs=1e-8)

    def test_lateral_offset(self, default_params, target):
        d = slant_range(np.array([60.0, 90.0]), target, default_params)
        assert d == pytest.approx(math.sqrt(800.0), rel=1e-12)

    def test_never_below_altitude(self, default_params, target):
        rng = np.random.default_rng(7)
        for _ in range(200):
            q = rng.uniform(-200.0, 200.0, size=2)
            assert slant_range(q, target, default_params) >= default_params.altitude_m


class TestDelayToRange:
    def test_zero_delay(self, default_params):
        assert delay_to_range(0.0, default_params) == 0.0

    def test_one_microsecond(self, default_params):
        assert delay_to_range(1e-6, default_params) == pytest.approx(149.896229, abs=1e-6)

    def test_round_trip_metre(self, default_params):
        assert delay_to_range(2.0 / SPEED_OF_LIGHT, default_params) == pytest.approx(1.0, rel=1e-12)

    def test_negative_delay_rejected(self, default_params):
        with pytest.raises(ValueError):
            delay_to_range(-1e-9, default_params)


class TestNoiseVariance:
    def test_unit_distance_unit_snr(self):
        assert noise_variance(1.0, unit_snr_params()) == pytest.approx(1.0, rel=1e-12)

    def test_fourth_power_growth(self):
        assert noise_variance(2.0, unit_snr_params()) == pytest.approx(16.0, rel=1e-12)

    def test_more_power_less_noise(self, default_params):
        stronger = dataclasses.replace(default_params, transmit_power_w=0.2)
        ratio = noise_variance(50.0, stronger) / noise_variance(50.0, default_params)
        assert ratio == pytest.approx(0.5, rel=1e-12)

    def test_vectorized_matches_scalar(self, default_params):
        d = np.array([10.0, 25.0, 40.0, 120.0])
        vec = noise_variance(d, default_params)
        assert vec.shape == d.shape
        for i, di in enumerate(d):
            assert vec[i] == noise_variance(float(di), default_params)

    def test_nonpositive_distance_rejected(self, default_params):
        with pytest.raises(ValueError):
            noise_variance(0.0, default_params)


class TestRangeFimElement:
    def test_unit_case(self):
        # 1/sigma^2 = 1 and 8/d^2 = 8 at d = 1, C = 1.
        assert range_fim_element(1.0, unit_snr_params()) == pytest.approx(9.0, rel=1e-12)

    def test_matches_unsimplified_chain(self, default_params):
        rng = np.random.default_rng(21)
        for _ in range(100):
            d = float(rng.uniform(0.5, 500.0))
            scale = float(rng.uniform(0.01, 100.0))
            params = dataclasses.replace(default_params, transmit_power_w=0.1 * scale)
            got = range_fim_element(d, params)
            assert got == pytest.approx(chain_info(d, params), rel=1e-12)

    def test_strictly_decreasing_in_distance(self, default_params):
        d = np.linspace(5.0, 400.0, 300)
        info = range_fim_element(d, default_params)
        assert np.all(np.diff(info) < 0.0)

    def test_positive_everywhere(self, default_params):
        d = np.logspace(-1, 4, 50)
        assert np.all(range_fim_element(d, default_params) > 0.0)


class TestElevationWeight:
    def test_matches_range_info_times_bearing_factor(self, default_params):
        rng = np.random.default_rng(33)
        for _ in range(100):
            phi = float(rng.uniform(0.05, math.pi / 2 - 0.05))
            d = default_params.altitude_m / math.sin(phi)
            expected = range_fim_element(d, default_params) * math.cos(phi) ** 2
            assert elevation_weight(phi, default_params) == pytest.approx(expected, rel=1e-12)

    def test_low_snr_limit_at_45_degrees(self):
        # With the composite constant driven to ~0 only the 8 sin^2/H^2 term
        # survives: 8 * 0.5 / 4 * 0.5 = 0.5 at H = 2.
        params = SensingParams(
            transmit_power_w=1e-30,
            processing_gain=1.0,
            ref_channel_power_m4=1.0,
            kappa=1.0,
            noise_floor_w=1.0,
            altitude_m=2.0,
        )
        w = elevation_weight(math.radians(45.0), params)
        assert w == pytest.approx(0.5, abs=1e-6)

    def test_vanishes_toward_grazing_and_zenith(self, default_params):
        near_zero = elevation_weight(1e-6, default_params)
        near_top = elevation_weight(math.pi / 2 - 1e-6, default_params)
        mid = elevation_weight(math.radians(50.0), default_params)
        assert near_zero < 1e-3 * mid
        assert near_top < 1e-3 * mid

    def test_vectorized(self, default_params):
        phi = np.linspace(0.1, 1.4, 7)
        w = elevation_weight(phi, default_params)
        assert w.shape == phi.shape
        assert np.all(w > 0.0)

    def test_out_of_range_rejected(self, default_params):
        with pytest.raises(ValueError):
            elevation_weight(0.0, default_params)
        with pytest.raises(ValueError):
            elevation_weight(math.pi / 2, default_params)


class TestAgentPose:
    def test_from_position_angles(self, default_params, target):
        pose = AgentPose.from_position(np.array([100.0, 90.0]), target, default_params)
        # 20 m east of target at 20 m altitude: 45 deg elevation, 0 azimuth.
        assert pose.elevation_rad == pytest.approx(math.radians(45.0), rel=1e-12)
        assert pose.azimuth_rad == pytest.approx(0.0, abs=1e-12)

    def test_from_angles_round_trip(self, default_params, target):
        rng = np.random.default_rng(5)
        for _ in range(50):
            phi = float(rng.uniform(0.1, 1.4))
            theta = float(rng.uniform(0.0, 2.0 * math.pi))
            pose = AgentPose.from_angles(phi, theta, target, default_params)
            back = AgentPose.from_position(pose.planar_position, target, default_params)
            assert back.elevation_rad == pytest.approx(phi, rel=1e-9)
            assert back.azimuth_rad == pytest.approx(theta % (2.0 * math.pi), abs=1e-9)

    def test_azimuth_normalized(self, default_params, target):
        pose = AgentPose.from_angles(0.8, -math.pi / 2, target, default_params)
        assert pose.azimuth_rad == pytest.approx(1.5 * math.pi, rel=1e-12)

    def test_directly_above_target_rejected(self, default_params, target):
        with pytest.raises(ValueError):
            AgentPose.from_position(np.array([80.0, 90.0]), target, default_params)

    @pytest.mark.parametrize("phi", [0.0, math.pi / 2, -0.3, 2.0])
    def test_bad_elevation_rejected(self, default_params, target, phi):
        with pytest.raises(ValueError):
            AgentPose.from_angles(phi, 0.0, target, default_params)


class TestJacobian:
    def test_single_row_values(self, default_params, target):
        pose = AgentPose.from_angles(math.radians(60.0), math.radians(90.0), target, default_params)
        row = jacobian([pose])
        assert row.shape == (1, 2)
        assert row[0, 0] == pytest.approx(0.0, abs=1e-12)
        assert row[0, 1] == pytest.approx(0.5, rel=1e-12)

    def test_limits(self, default_params, target):
        low = AgentPose.from_angles(1e-9, 0.0, target, default_params)
        high = AgentPose.from_angles(math.pi / 2 - 1e-9, 0.0, target, default_params)
        rows = jacobian([low, high])
        assert rows[0] == pytest.approx([1.0, 0.0], abs=1e-8)
        assert rows[1] == pytest.approx([0.0, 0.0], abs=1e-8)

    def test_row_norm_is_cos_elevation(self, default_params, target):
        rng = np.random.default_rng(11)
        poses = [
            AgentPose.from_angles(float(rng.uniform(0.1, 1.4)), float(rng.uniform(0, 6.0)),
                                  target, default_params)
            for _ in range(20)
        ]
        rows = jacobian(poses)
        norms = np.linalg.norm(rows, axis=1)
        expected = np.cos([p.elevation_rad for p in poses])
        np.testing.assert_allclose(norms, expected, rtol=1e-12)


class TestTargetFim:
    def test_single_agent_along_x(self, default_params, target):
        pose = AgentPose.from_angles(0.9, 0.0, target, default_params)
        fim = target_fim([pose], default_params)
        w = elevation_weight(0.9, default_params)
        assert fim.j_xx == pytest.approx(w, rel=1e-12)
        assert fim.j_yy == pytest.approx(0.0, abs=1e-9)
        assert fim.j_xy == pytest.approx(0.0, abs=1e-9)

    def test_orthogonal_pair_is_isotropic(self, default_params, target):
        poses = [
            AgentPose.from_angles(0.9, 0.0, target, default_params),
            AgentPose.from_angles(0.9, math.pi / 2, target, default_params),
        ]
        fim = target_fim(poses, default_params)
        w = elevation_weight(0.9, default_params)
        assert fim.j_xx == pytest.approx(w, rel=1e-9)
        assert fim.j_yy == pytest.approx(w, rel=1e-9)
        assert fim.j_xy == pytest.approx(0.0, abs=1e-9 * w)

    def test_equilateral_triangle(self, default_params, target):
        phi = 0.8
        poses = [
            AgentPose.from_angles(phi, math.radians(a), target, default_params)
            for a in (0.0, 120.0, 240.0)
        ]
        fim = target_fim(poses, default_params)
        w = elevation_weight(phi, default_params)
        assert fim.j_xx == pytest.approx(1.5 * w, rel=1e-9)
        assert fim.j_yy == pytest.approx(1.5 * w, rel=1e-9)
        assert fim.j_xy == pytest.approx(0.0, abs=1e-9 * w)

    def test_trace_equals_weight_sum(self, default_params, target):
        rng = np.random.default_rng(17)
        for _ in range(50):
            poses = [
                AgentPose.from_angles(float(rng.uniform(0.1, 1.4)), float(rng.uniform(0, 6.2)),
                                      target, default_params)
                for _ in range(int(rng.integers(1, 9)))
            ]
            fim = target_fim(poses, default_params)
            total = sum(elevation_weight(p.elevation_rad, default_params) for p in poses)
            assert fim.trace == pytest.approx(total, rel=1e-12)

    def test_matches_explicit_quadratic_form(self, default_params, target):
        # Oracle: J = sum_m w_m * u_m u_m^T with u_m = (cos theta, sin theta).
        rng = np.random.default_rng(29)
        poses = [
            AgentPose.from_angles(float(rng.uniform(0.2, 1.3)), float(rng.uniform(0, 6.2)),
                                  target, default_params)
            for _ in range(6)
        ]
        expected = np.zeros((2, 2))
        for p in poses:
            w = elevation_weight(p.elevation_rad, default_params)
            u = np.array([math.cos(p.azimuth_rad), math.sin(p.azimuth_rad)])
            expected += w * np.outer(u, u)
        fim = target_fim(poses, default_params)
        np.testing.assert_allclose(fim.as_matrix(), expected, rtol=1e-12)

    def test_permutation_invariance(self, default_params, target):
        rng = np.random.default_rng(41)
        poses = [
            AgentPose.from_angles(float(rng.uniform(0.2, 1.3)), float(rng.uniform(0, 6.2)),
                                  target, default_params)
            for _ in range(5)
        ]
        fim_a = target_fim(poses, default_params)
        fim_b = target_fim(poses[::-1], default_params)
        assert fim_a.j_xx == pytest.approx(fim_b.j_xx, rel=1e-12)
        assert fim_a.j_yy == pytest.approx(fim_b.j_yy, rel=1e-12)
        assert fim_a.j_xy == pytest.approx(fim_b.j_xy, rel=1e-12)

    def test_rotation_covariance(self, default_params, target):
        """Rotating every azimuth by alpha conjugates J and leaves the CRLB alone."""
        rng = np.random.default_rng(43)
        for _ in range(20):
            alpha = float(rng.uniform(0.0, 2.0 * math.pi))
            angles = rng.uniform(0.0, 2.0 * math.pi, size=5)
            phis = rng.uniform(0.2, 1.3, size=5)
            base = [
                AgentPose.from_angles(float(p), float(t), target, default_params)
                for p, t in zip(phis, angles)
            ]
            spun = [
                AgentPose.from_angles(float(p), float(t + alpha), target, default_params)
                for p, t in zip(phis, angles)
            ]
            j0 = target_fim(base, default_params).as_matrix()
            j1 = target_fim(spun, default_params).as_matrix()
            c, s = math.cos(alpha), math.sin(alpha)
            rot = np.array([[c, -s], [s, c]])
            np.testing.assert_allclose(j1, rot @ j0 @ rot.T, rtol=1e-9, atol=1e-9 * np.trace(j0))
            assert crlb_trace(target_fim(spun, default_params)) == pytest.approx(
                crlb_trace(target_fim(base, default_params)), rel=1e-10
            )

    def test_empty_pose_list_rejected(self, default_params):
        with pytest.raises(ValueError):
            target_fim([], default_params)


class TestFim2:
    def test_trace_and_det(self):
        fim = Fim2(3.0, 2.0, 1.0)
        assert fim.trace == 5.0
        assert fim.det == pytest.approx(5.0, rel=1e-12)

    def test_eigenvalues_sorted(self):
        fim = Fim2(4.0, 1.0, 0.0)
        lo, hi = fim.eigenvalues()
        assert (lo, hi) == (1.0, 4.0)

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            Fim2(1.0, 1.0, 2.0)
        with pytest.raises(ValueError):
            Fim2(-1.0, 1.0, 0.0)


class TestCrlbTrace:
    def test_isotropic(self):
        assert crlb_trace(Fim2(2.0, 2.0, 0.0)) == pytest.approx(1.0, rel=1e-12)

    def test_correlated(self):
        assert crlb_trace(Fim2(2.0, 2.0, 1.0)) == pytest.approx(4.0 / 3.0, rel=1e-12)

    def test_matches_inverse_eigenvalues(self):
        rng = np.random.default_rng(59)
        for _ in range(100):
            alpha = float(rng.uniform(0.0, math.pi))
            d1, d2 = rng.uniform(0.1, 10.0, size=2)
            c, s = math.cos(alpha), math.sin(alpha)
            rot = np.array([[c, -s], [s, c]])
            mat = rot @ np.diag([d1, d2]) @ rot.T
            fim = Fim2(mat[0, 0], mat[1, 1], mat[0, 1])
            assert crlb_trace(fim) == pytest.approx(1.0 / d1 + 1.0 / d2, rel=1e-9)

    def test_trace_bound_equality_only_when_isotropic(self):
        rng = np.random.default_rng(61)
        for _ in range(200):
            alpha = float(rng.uniform(0.0, math.pi))
            d1, d2 = rng.uniform(0.1, 10.0, size=2)
            c, s = math.cos(alpha), math.sin(alpha)
            rot = np.array([[c, -s], [s, c]])
            mat = rot @ np.diag([d1, d2]) @ rot.T
            fim = Fim2(mat[0, 0], mat[1, 1], mat[0, 1])
            floor = 4.0 / fim.trace
            assert crlb_trace(fim) >= floor * (1.0 - 1e-12)
            if abs(d1 - d2) > 1e-6 * (d1 + d2):
                assert crlb_trace(fim) > floor
        scalar = Fim2(3.7, 3.7, 0.0)
        assert crlb_trace(scalar) == pytest.approx(4.0 / scalar.trace, rel=1e-12)

    def test_singular_matrix_raises(self):
        with pytest.raises(SingularGeometryError):
            crlb_trace(Fim2(1.0, 0.0, 0.0))

    def test_near_singular_raises(self):
        # Collinear agents: rank-one information matrix up to rounding.
        with pytest.raises(SingularGeometryError):
            crlb_trace(Fim2(5.0, 5.0e-13, 0.0))
