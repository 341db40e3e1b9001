"""Closed-form MVDR receive combining and the matched sensing-SNR expression.

The combiner maximizes the post-combining radar SINR for a fixed transmit
beam: ``u`` is proportional to ``Xi^{-1} A_P w`` with
``Xi = delta^2 (A_C w)(A_C w)^H + N0 I`` the interference-plus-noise
covariance.  A Sherman-Morrison expansion turns the inverse into a rank-one
update of the identity, giving the sensing SNR in closed form without any
matrix inversion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDirectionError
from .scene import ArrayLayout, SceneConfig, response_matrix, steering

# Below this relative transmit gain toward the target, the distortionless
# direction is numerically undefined.
_GAIN_FLOOR = 1e-12


@dataclass(frozen=True)
class MvdrResult:
    """Unit-norm MVDR combiner and its sensing SNR."""

    u: np.ndarray
    gamma_r_closed: float


def _rank1_inverse_apply(c: np.ndarray, n0: float, vec: np.ndarray) -> np.ndarray:
    """Apply (c c^H + n0 I)^{-1} to ``vec`` via Sherman-Morrison."""
    denom = n0 + float(np.vdot(c, c).real)
    return (vec - c * (np.vdot(c, vec) / denom)) / n0


def sherman_morrison_expand(w, layout: ArrayLayout, scene: SceneConfig) -> np.ndarray:
    """Expanded inverse (A_C w w^H A_C^H + N0 I)^{-1}.

    Returns ``(1/N0) (I - (A_C w)(A_C w)^H / (N0 + ||A_C w||^2))``, which
    equals the dense inverse exactly.
    """
    w = np.asarray(w, dtype=complex)
    a_c = response_matrix(layout, scene.theta_clutter, scene)
    c = a_c @ w
    n0 = scene.radar_noise
    denom = n0 + float(np.vdot(c, c).real)
    eye = np.eye(scene.n_rx, dtype=complex)
    return (eye - np.outer(c, c.conj()) / denom) / n0


def mvdr_combiner(w, layout: ArrayLayout, scene: SceneConfig) -> MvdrResult:
    """MVDR weights for the target direction given transmit beam ``w``.

    Requires a nonzero transmit gain toward the target
    (``a_T(x, theta_target)^H w != 0``); otherwise the distortionless
    direction is undefined and :class:`DegenerateDirectionError` is raised.
    """
    w = np.asarray(w, dtype=complex)
    a_t_target = steering(layout.x, scene.theta_target, scene.wavelength)
    gain = np.vdot(a_t_target, w)
    if abs(gain) <= _GAIN_FLOOR * np.sqrt(scene.n_tx) * np.linalg.norm(w):
        raise DegenerateDirectionError(
            "transmit beam is orthogonal to the target steering vector"
        )
    a_p = response_matrix(layout, scene.theta_target, scene)
    a_c = response_matrix(layout, scene.theta_clutter, scene)
    p = a_p @ w
    c = scene.clutter_gain * (a_c @ w)
    u = _rank1_inverse_apply(c, scene.radar_noise, p)
    u = u / np.linalg.norm(u)
    return MvdrResult(u=u, gamma_r_closed=mvdr_snr_closedform(w, layout, scene))


def mvdr_snr_closedform(w, layout: ArrayLayout, scene: SceneConfig) -> float:
    """Sensing SNR achieved by the MVDR combiner, in closed form.

    Equals ``sigma^2/N0 * (||A_P w||^2 - |c^H A_P w|^2 / (N0 + ||c||^2))``
    with ``c = delta * A_C w``, i.e. the maximum of the sensing-SNR quotient
    over all combiners.
    """
    w = np.asarray(w, dtype=complex)
    a_p = response_matrix(layout, scene.theta_target, scene)
    a_c = response_matrix(layout, scene.theta_clutter, scene)
    p = a_p @ w
    c = scene.clutter_gain * (a_c @ w)
    n0 = scene.radar_noise
    cross = abs(np.vdot(c, p)) ** 2
    value = float(np.vdot(p, p).real) - cross / (n0 + float(np.vdot(c, c).real))
    return scene.target_gain**2 / n0 * value
