import math

import numpy as np
import pytest
import scipy.linalg

from maisac import (
    ArrayLayout,
    DegenerateDirectionError,
    SceneConfig,
    mvdr_combiner,
    mvdr_snr_closedform,
    response_matrix,
    sensing_snr,
    sherman_morrison_expand,
    steering,
)
from conftest import random_beam, random_layout, random_scene, random_unit


class TestShermanMorrison:
    def test_zero_clutter_response_gives_scaled_identity(self):
        scene = SceneConfig(n_tx=2, n_rx=2)
        layout = ArrayLayout(x=[0.0, 0.5], y=[0.0, 0.5])
        a_c = steering(layout.x, scene.theta_clutter, scene.wavelength)
        w = np.array([-a_c[1].conj(), a_c[0].conj()])
        out = sherman_morrison_expand(w, layout, scene)
        np.testing.assert_allclose(
            out, np.eye(2) / scene.radar_noise, atol=1e-12
        )

    def test_matches_dense_inverse(self):
        rng = np.random.default_rng(0)
        scene = random_scene(rng, n=3)
        layout = random_layout(scene, rng)
        w = random_beam(scene, rng)
        a_c = response_matrix(layout, scene.theta_clutter, scene)
        c = a_c @ w
        target = np.outer(c, c.conj()) + scene.radar_noise * np.eye(3)
        out = sherman_morrison_expand(w, layout, scene)
        np.testing.assert_allclose(out @ target, np.eye(3), atol=1e-10)

    def test_noise_dominated_limit(self):
        rng = np.random.default_rng(1)
        scene = random_scene(rng, n=4).with_updates(radar_noise=1e6)
        layout = random_layout(scene, rng)
        w = random_beam(scene, rng)
        out = sherman_morrison_expand(w, layout, scene)
        np.testing.assert_allclose(out, np.eye(4) / 1e6, rtol=1e-6)

    def test_identity_over_random_instances(self):
        # 100 random instances across receive sizes, max-abs error <= 1e-10.
        rng = np.random.default_rng(2)
        for k in range(100):
            n = int(rng.choice([2, 4, 8]))
            scene = random_scene(rng, n=n)
            layout = random_layout(scene, rng)
            w = random_beam(scene, rng)
            a_c = response_matrix(layout, scene.theta_clutter, scene)
            c = a_c @ w
            dense = np.linalg.inv(
                np.outer(c, c.conj()) + scene.radar_noise * np.eye(n)
            )
            out = sherman_morrison_expand(w, layout, scene)
            assert np.max(np.abs(out - dense)) <= 1e-10


class TestMvdr:
    def test_clutter_free_matched_filter(self):
        scene = SceneConfig(n_tx=4, n_rx=4, clutter_gain=0.0)
        layout = ArrayLayout(x=np.arange(4.0) * 0.5, y=np.arange(4.0) * 0.5)
        rng = np.random.default_rng(3)
        w = random_beam(scene, rng)
        res = mvdr_combiner(w, layout, scene)
        a_r = steering(layout.y, scene.theta_target, scene.wavelength)
        # u is a_R up to a global phase
        alignment = abs(np.vdot(a_r / np.linalg.norm(a_r), res.u))
        assert math.isclose(alignment, 1.0, abs_tol=1e-10)
        a_t = steering(layout.x, scene.theta_target, scene.wavelength)
        expected = (
            scene.target_gain**2 * scene.n_rx * abs(np.vdot(a_t, w)) ** 2
            / scene.radar_noise
        )
        assert math.isclose(res.gamma_r_closed, expected, rel_tol=1e-10)

    def test_dominates_random_combiners(self):
        rng = np.random.default_rng(4)
        scene = random_scene(rng, n=2)
        layout = random_layout(scene, rng)
        w = random_beam(scene, rng)
        res = mvdr_combiner(w, layout, scene)
        for _ in range(1000):
            u = random_unit(2, rng)
            assert res.gamma_r_closed >= sensing_snr(w, u, layout, scene) - 1e-9

    def test_generalized_eigenvalue_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            scene = random_scene(rng, n=4)
            layout = random_layout(scene, rng)
            w = random_beam(scene, rng)
            a_p = response_matrix(layout, scene.theta_target, scene)
            a_c = response_matrix(layout, scene.theta_clutter, scene)
            p = a_p @ w
            c = scene.clutter_gain * (a_c @ w)
            sig = scene.target_gain**2 * np.outer(p, p.conj())
            noise = np.outer(c, c.conj()) + scene.radar_noise * np.eye(4)
            lam = scipy.linalg.eigh(sig, noise, eigvals_only=True)[-1]
            closed = mvdr_snr_closedform(w, layout, scene)
            assert abs(closed - lam) <= 1e-8 * max(1.0, lam)

    def test_closed_form_equals_quotient_with_mvdr_u(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            scene = random_scene(rng)
            layout = random_layout(scene, rng)
            w = random_beam(scene, rng)
            res = mvdr_combiner(w, layout, scene)
            quotient = sensing_snr(w, res.u, layout, scene)
            assert abs(res.gamma_r_closed - quotient) <= 1e-8 * max(1.0, quotient)

    def test_unit_norm_result(self):
        rng = np.random.default_rng(7)
        scene = random_scene(rng, n=8)
        layout = random_layout(scene, rng)
        res = mvdr_combiner(random_beam(scene, rng), layout, scene)
        assert math.isclose(float(np.vdot(res.u, res.u).real), 1.0, abs_tol=1e-12)

    def test_degenerate_direction_raises(self):
        scene = SceneConfig(n_tx=2, n_rx=2)
        layout = ArrayLayout(x=[0.0, 0.5], y=[0.0, 0.5])
        a_t = steering(layout.x, scene.theta_target, scene.wavelength)
        w = np.array([-a_t[1].conj(), a_t[0].conj()])
        with pytest.raises(DegenerateDirectionError):
            mvdr_combiner(w, layout, scene)

    def test_dense_inverse_quadratic_form_oracle(self):
        # sigma^2 * (A_P w)^H Xi^{-1} (A_P w) via dense inversion.
        rng = np.random.default_rng(8)
        scene = random_scene(rng, n=4)
        layout = random_layout(scene, rng)
        w = random_beam(scene, rng)
        a_p = response_matrix(layout, scene.theta_target, scene)
        a_c = response_matrix(layout, scene.theta_clutter, scene)
        p = a_p @ w
        c = scene.clutter_gain * (a_c @ w)
        xi = np.outer(c, c.conj()) + scene.radar_noise * np.eye(4)
        dense = scene.target_gain**2 * float(
            np.vdot(p, np.linalg.solve(xi, p)).real
        )
        assert math.isclose(
            mvdr_snr_closedform(w, layout, scene), dense, rel_tol=1e-10
        )
