"""Comparison schemes: fixed arrays, zero-forcing, gradient position search.

``solve_fpa`` is the movable-antenna loop with both position blocks frozen
at the uniform half-wavelength grid.  ``solve_zf`` is clutter-nulling MRT
and ignores the sensing floor entirely.  ``solve_gradient_positions`` keeps
the combiner/covariance blocks but replaces the conic position step with
projected gradient ascent on a penalized objective.

The names follow the usual readings of these benchmarks; only orderings and
trends are asserted against them, not exact curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bcd import BcdOptions, BcdResult, fpa_options, run_bcd
from .beamformer import zero_forcing_beam
from .combiner import mvdr_snr_closedform
from .positions import _pava
from .scene import ArrayLayout, SceneConfig, comm_snr

SCHEME_PROPOSED = "isac-ma"
SCHEME_FPA = "fpa"
SCHEME_ZF = "zf"
SCHEME_GRADIENT = "gradient"
ALL_SCHEMES = (SCHEME_PROPOSED, SCHEME_FPA, SCHEME_ZF, SCHEME_GRADIENT)


def solve_fpa(scene: SceneConfig, opts: BcdOptions | None = None,
              layout: ArrayLayout | None = None) -> BcdResult:
    """Combiner/beam alternation with positions frozen (no movable antennas)."""
    return run_bcd(scene, fpa_options(opts), layout=layout)


def solve_zf(layout: ArrayLayout, scene: SceneConfig):
    """Zero-forcing benchmark: clutter-nulled MRT at full power.

    Returns ``(w, report)`` where the report carries the informational
    sensing SNR; the floor is not enforced by this scheme.
    """
    w = zero_forcing_beam(layout, scene)
    return w, {
        "gamma_t": comm_snr(w, layout, scene),
        "gamma_r": mvdr_snr_closedform(w, layout, scene),
    }


@dataclass(frozen=True)
class GradientOptions:
    initial_step: float = 0.1  # in wavelengths
    max_steps: int = 60
    fd_epsilon: float = 1e-6  # in wavelengths, for sensing finite differences


def solve_gradient_positions(
    scene: SceneConfig,
    opts: BcdOptions | None = None,
    grad_opts: GradientOptions | None = None,
) -> BcdResult:
    """BCD with a projected-gradient position block.

    Positions ascend ``gamma_t`` (analytic phase gradient) plus a quadratic
    penalty ``1e3/Gamma * max(0, Gamma - gamma_r)^2`` when a floor is set;
    steps backtrack by halving from 0.1 wavelengths and iterates are
    projected back onto the box and spacing constraints.
    """
    opts = opts or BcdOptions()
    grad_opts = grad_opts or GradientOptions()

    def stepper(side, layout, w, scene_):
        positions, moved = gradient_position_step(side, layout, w, scene_, grad_opts)
        if side == "transmit":
            return layout.with_x(positions), moved
        return layout.with_y(positions), moved

    return run_bcd(scene, opts, position_stepper=stepper)


def gradient_position_step(
    side: str,
    layout: ArrayLayout,
    w,
    scene: SceneConfig,
    grad_opts: GradientOptions | None = None,
):
    """Projected gradient ascent over one side's positions.

    Returns ``(positions, moved)``.  The objective is the penalized
    communication SNR on the transmit side and the sensing SNR on the
    receive side; the projection sorts, clips, and repairs spacing with
    minimal displacement.
    """
    grad_opts = grad_opts or GradientOptions()
    w = np.asarray(w, dtype=complex)
    transmit = side == "transmit"
    positions = (layout.x if transmit else layout.y).copy()
    if positions.size <= 1:
        return positions, False
    aperture = scene.tx_aperture if transmit else scene.rx_aperture
    gamma = scene.sensing_floor
    penalty_weight = 1e3 / gamma if gamma > 0 else 0.0
    lam = scene.wavelength
    eps = grad_opts.fd_epsilon * lam

    def with_positions(p):
        return layout.with_x(p) if transmit else layout.with_y(p)

    def objective(p):
        cand = with_positions(p)
        if not transmit:
            return mvdr_snr_closedform(w, cand, scene)
        val = comm_snr(w, cand, scene)
        if gamma > 0:
            g_r = mvdr_snr_closedform(w, cand, scene)
            val -= penalty_weight * max(0.0, gamma - g_r) ** 2
        return val

    def sensing_of(p):
        return mvdr_snr_closedform(w, with_positions(p), scene)

    def gradient(p):
        if not transmit:
            return _fd_gradient(p, sensing_of, eps)
        grad = _comm_phase_gradient(p, w, scene)
        if gamma > 0:
            g_r = sensing_of(p)
            if g_r < gamma:
                grad = grad + 2.0 * penalty_weight * (gamma - g_r) * _fd_gradient(
                    p, sensing_of, eps
                )
        return grad

    moved = False
    cur_val = objective(positions)
    for _ in range(grad_opts.max_steps):
        grad = gradient(positions)
        norm = float(np.max(np.abs(grad)))
        if norm < 1e-12:
            break
        step = grad_opts.initial_step * lam / norm
        improved = False
        while step >= 1e-5 * lam:
            cand = _project_positions(positions + step * grad, aperture, scene.min_spacing)
            val = objective(cand)
            if val > cur_val + 1e-12:
                positions, cur_val = cand, val
                moved = improved = True
                break
            step *= 0.5
        if not improved:
            break
    return positions, moved


def _comm_phase_gradient(positions, w, scene: SceneConfig) -> np.ndarray:
    """Analytic d(gamma_t)/d(positions) for h = alpha * a_T(x, theta_user)."""
    rate = 2.0 * math.pi / scene.wavelength * math.cos(scene.theta_user)
    a = np.exp(1j * rate * np.asarray(positions, dtype=float))
    h = scene.path_gain * a
    inner = complex(np.vdot(h, w))  # h^H w
    # d/dx_i (h^H w) = -j * rate * conj(alpha) * exp(-j rate x_i) * w_i
    d_inner = -1j * rate * np.conj(scene.path_gain) * np.conj(a) * w
    return 2.0 / scene.comm_noise * np.real(np.conj(inner) * d_inner)


def _fd_gradient(positions, fn, eps: float) -> np.ndarray:
    positions = np.asarray(positions, dtype=float)
    grad = np.zeros_like(positions)
    for i in range(positions.size):
        bumped = positions.copy()
        bumped[i] += eps
        up = fn(bumped)
        bumped[i] -= 2 * eps
        down = fn(bumped)
        grad[i] = (up - down) / (2 * eps)
    return grad


def _project_positions(positions, aperture: float, min_dist: float) -> np.ndarray:
    """Sort, clip, and repair spacing with minimal displacement."""
    n = len(positions)
    z = np.sort(np.asarray(positions, dtype=float)) - min_dist * np.arange(n)
    z = _pava(z)
    z = np.clip(z, 0.0, aperture - min_dist * (n - 1))
    return z + min_dist * np.arange(n)
