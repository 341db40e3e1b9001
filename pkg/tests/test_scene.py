import json
import math

import numpy as np
import pytest

from maisac import (
    ArrayLayout,
    InvalidParameterError,
    SceneConfig,
    channel,
    comm_snr,
    mrt_beamformer,
    response_matrix,
    sensing_snr,
    snr_report,
    steering,
)
from conftest import random_layout, random_scene, random_unit


class TestSteering:
    def test_broadside_all_ones(self):
        out = steering([0.0, 0.5], math.pi / 2, 1.0)
        np.testing.assert_allclose(out, [1.0 + 0j, 1.0 + 0j], atol=1e-12)

    def test_endfire_half_wavelength(self):
        out = steering([0.0, 0.5], 0.0, 1.0)
        np.testing.assert_allclose(out, [1.0 + 0j, -1.0 + 0j], atol=1e-12)

    def test_sixty_degree_phases(self):
        out = steering([0.0, 0.25, 0.5], math.pi / 3, 1.0)
        phases = np.angle(out)
        np.testing.assert_allclose(phases, [0.0, math.pi / 4, math.pi / 2], atol=1e-12)

    def test_unit_modulus(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            pos = rng.uniform(0, 10, size=6)
            theta = rng.uniform(0.01, math.pi - 0.01)
            out = steering(pos, theta, 0.7)
            np.testing.assert_allclose(np.abs(out), 1.0, atol=1e-12)

    def test_rejects_bad_inputs(self):
        with pytest.raises(InvalidParameterError):
            steering([0.0, np.nan], 1.0, 1.0)
        with pytest.raises(InvalidParameterError):
            steering([0.0], 1.0, 0.0)
        with pytest.raises(InvalidParameterError):
            steering([0.0], 1.0, -1.0)


class TestSceneConfig:
    def test_defaults_valid(self):
        scene = SceneConfig()
        assert scene.tx_aperture == scene.n_tx * scene.wavelength

    def test_invariants_enforced(self):
        with pytest.raises(InvalidParameterError):
            SceneConfig(n_tx=0)
        with pytest.raises(InvalidParameterError):
            SceneConfig(radar_noise=0.0)
        with pytest.raises(InvalidParameterError):
            SceneConfig(theta_target=0.0)
        with pytest.raises(InvalidParameterError):
            SceneConfig(theta_clutter=math.pi)
        with pytest.raises(InvalidParameterError):
            SceneConfig(n_tx=8, tx_aperture=1.0)  # < (N-1) * D

    def test_json_roundtrip_degrees(self, tmp_path):
        scene = SceneConfig(theta_target=math.radians(30.0))
        path = tmp_path / "scene.json"
        path.write_text(json.dumps(scene.to_dict()))
        again = SceneConfig.from_json(path)
        assert math.isclose(again.theta_target, math.radians(30.0))
        assert again == scene

    def test_json_rejects_unknown_fields(self, tmp_path):
        path = tmp_path / "scene.json"
        path.write_text('{"bogus": 1}')
        with pytest.raises(InvalidParameterError, match="bogus"):
            SceneConfig.from_json(path)

    def test_json_parse_error_has_location(self, tmp_path):
        path = tmp_path / "scene.json"
        path.write_text('{"wavelength": }')
        with pytest.raises(InvalidParameterError, match="line 1"):
            SceneConfig.from_json(path)


class TestArrayLayout:
    def test_sorted_canonical(self, default_scene):
        layout = ArrayLayout(x=np.array([3.0, 0.0, 1.0, 2.0, 4.0, 5.0, 6.0, 7.0]),
                             y=np.arange(8.0))
        assert np.all(np.diff(layout.x) > 0)
        layout.validate(default_scene)

    def test_spacing_violation(self, default_scene):
        layout = ArrayLayout(x=np.array([0.0, 0.1, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
                             y=np.arange(8.0))
        with pytest.raises(InvalidParameterError, match="spacing"):
            layout.validate(default_scene)

    def test_aperture_violation(self, default_scene):
        layout = ArrayLayout(x=np.arange(8.0) * 1.5, y=np.arange(8.0))
        with pytest.raises(InvalidParameterError):
            layout.validate(default_scene)


class TestResponseMatrix:
    def test_single_element(self):
        scene = SceneConfig(n_tx=1, n_rx=1)
        layout = ArrayLayout(x=[0.0], y=[0.0])
        mat = response_matrix(layout, 1.0, scene)
        np.testing.assert_allclose(mat, [[1.0 + 0j]], atol=1e-14)

    def test_broadside_all_ones(self, default_scene):
        layout = ArrayLayout(x=np.arange(8.0) * 0.5, y=np.arange(8.0) * 0.5)
        mat = response_matrix(layout, math.pi / 2, default_scene)
        np.testing.assert_allclose(mat, np.ones((8, 8)), atol=1e-12)

    def test_rank_one_by_svd(self):
        rng = np.random.default_rng(3)
        scene = random_scene(rng, n=4)
        layout = random_layout(scene, rng)
        mat = response_matrix(layout, scene.theta_target, scene)
        svals = np.linalg.svd(mat, compute_uv=False)
        assert svals[1] <= 1e-10 * svals[0]

    def test_gram_identity(self):
        # A^H A = N_R * a_T a_T^H, used by the rank-one factorization.
        rng = np.random.default_rng(4)
        for _ in range(10):
            scene = random_scene(rng)
            layout = random_layout(scene, rng)
            mat = response_matrix(layout, scene.theta_clutter, scene)
            a_t = steering(layout.x, scene.theta_clutter, scene.wavelength)
            expected = scene.n_rx * np.outer(a_t, a_t.conj())
            np.testing.assert_allclose(mat.conj().T @ mat, expected, atol=1e-10)


class TestChannel:
    def test_broadside_all_ones(self):
        scene = SceneConfig(theta_user=math.pi / 2, path_gain=1.0)
        layout = ArrayLayout(x=np.arange(8.0) * 0.5, y=np.arange(8.0) * 0.5)
        np.testing.assert_allclose(channel(layout, scene), np.ones(8), atol=1e-12)

    def test_norm_scales_with_gain(self):
        scene = SceneConfig(path_gain=2j)
        layout = ArrayLayout(x=np.arange(8.0) * 0.5, y=np.arange(8.0) * 0.5)
        h = channel(layout, scene)
        assert math.isclose(float(np.vdot(h, h).real), 32.0, rel_tol=1e-9)

    def test_endfire_alternating(self):
        # theta -> 0 limit approximated by a tiny angle
        scene = SceneConfig(n_tx=2, n_rx=2, theta_user=1e-9)
        layout = ArrayLayout(x=[0.0, 0.5], y=[0.0, 0.5])
        h = channel(layout, scene)
        np.testing.assert_allclose(h, [1.0, -1.0], atol=1e-6)


class TestSnr:
    def test_matched_filter_no_clutter(self):
        scene = SceneConfig(n_tx=4, n_rx=4, clutter_gain=0.0)
        layout = ArrayLayout(x=np.arange(4.0) * 0.5, y=np.arange(4.0) * 0.5)
        a_t = steering(layout.x, scene.theta_target, scene.wavelength)
        a_r = steering(layout.y, scene.theta_target, scene.wavelength)
        w = math.sqrt(scene.power_budget) * a_t / np.linalg.norm(a_t)
        u = a_r / np.linalg.norm(a_r)
        expected = (
            scene.target_gain**2 * scene.n_rx * scene.n_tx * scene.power_budget
            / scene.radar_noise
        )
        assert math.isclose(sensing_snr(w, u, layout, scene), expected, rel_tol=1e-12)

    def test_orthogonal_beam_zero(self):
        scene = SceneConfig(n_tx=2, n_rx=2)
        layout = ArrayLayout(x=[0.0, 0.5], y=[0.0, 0.5])
        a_t = steering(layout.x, scene.theta_target, scene.wavelength)
        w = np.array([-a_t[1].conj(), a_t[0].conj()])  # w perp a_t
        assert abs(np.vdot(a_t, w)) < 1e-12
        u = random_unit(2, np.random.default_rng(0))
        assert sensing_snr(w, u, layout, scene) < 1e-20

    def test_combiner_scale_invariance(self):
        rng = np.random.default_rng(5)
        scene = random_scene(rng, n=4)
        layout = random_layout(scene, rng)
        w = random_unit(4, rng)
        u = random_unit(4, rng)
        base = sensing_snr(w, u, layout, scene)
        for _ in range(50):
            scale = complex(rng.normal(), rng.normal())
            if abs(scale) < 1e-3:
                continue
            scaled = sensing_snr(w, scale * u, layout, scene)
            assert abs(scaled - base) <= 1e-10 * base

    def test_monte_carlo_oracle(self):
        # Signal/interference/noise powers of the received statistic,
        # estimated from noise draws, match the closed-form ratio.
        rng = np.random.default_rng(6)
        scene = SceneConfig(n_tx=2, n_rx=2, target_gain=1.0, clutter_gain=1.0)
        layout = ArrayLayout(x=[0.1, 0.8], y=[0.05, 0.75])
        w = random_unit(2, rng)
        u = random_unit(2, rng)
        a_p = response_matrix(layout, scene.theta_target, scene)
        a_c = response_matrix(layout, scene.theta_clutter, scene)
        sig = scene.target_gain * np.vdot(u, a_p @ w)
        interf = scene.clutter_gain * np.vdot(u, a_c @ w)
        n_draws = 10**6
        noise = (
            rng.standard_normal(n_draws) + 1j * rng.standard_normal(n_draws)
        ) * math.sqrt(scene.radar_noise / 2.0)
        # u^H n with ||u|| = 1 is scalar complex normal of variance N0
        mc = abs(sig) ** 2 / (abs(interf) ** 2 + np.mean(np.abs(noise) ** 2))
        exact = sensing_snr(w, u, layout, scene)
        assert abs(mc - exact) <= 0.01 * exact

    def test_comm_mrt_value(self):
        scene = SceneConfig(n_tx=8, n_rx=8, path_gain=1.0, comm_noise=0.01,
                            power_budget=1.0)
        layout = ArrayLayout(x=np.arange(8.0) * 0.5, y=np.arange(8.0) * 0.5)
        w = mrt_beamformer(layout, scene)
        assert math.isclose(comm_snr(w, layout, scene), 800.0, rel_tol=1e-9)

    def test_comm_orthogonal_zero(self):
        scene = SceneConfig(n_tx=2, n_rx=2)
        layout = ArrayLayout(x=[0.0, 0.5], y=[0.0, 0.5])
        h = channel(layout, scene)
        w = np.array([-h[1].conj(), h[0].conj()])
        assert comm_snr(w, layout, scene) < 1e-18

    def test_capacity_monotone(self):
        rng = np.random.default_rng(7)
        scene = random_scene(rng, n=4)
        layout = random_layout(scene, rng)
        u = random_unit(4, rng)
        reports = [
            snr_report(random_unit(4, rng) * s, u, layout, scene)
            for s in (0.1, 0.4, 1.0)
        ]
        ordered = sorted(reports, key=lambda r: r.gamma_t)
        caps = [r.capacity for r in ordered]
        assert caps == sorted(caps)

    def test_translation_invariance_of_attainable_values(self):
        # Shifting every transmit position multiplies a_T by a unit scalar:
        # |h^H w| is unchanged when w absorbs the same phase.
        rng = np.random.default_rng(8)
        scene = SceneConfig(n_tx=4, n_rx=4, tx_aperture=12.0)
        layout = ArrayLayout(x=np.array([0.3, 1.1, 2.4, 3.9]), y=np.arange(4.0))
        w = random_unit(4, rng)
        offset = 1.3
        shifted = ArrayLayout(x=layout.x + offset, y=layout.y)
        rate = 2 * math.pi / scene.wavelength * math.cos(scene.theta_user)
        w_shift = w * np.exp(1j * rate * offset)
        assert math.isclose(
            comm_snr(w, layout, scene), comm_snr(w_shift, shifted, scene),
            rel_tol=1e-10,
        )
