"""Scene description and exact (non-surrogate) SNR evaluation.

All physical parameters live in :class:`SceneConfig`; antenna placements live
in :class:`ArrayLayout`.  Steering vectors follow the 1-D far-field convention
``a_n = exp(j * (2*pi/lam) * position_n * cos(theta))`` with ``theta`` measured
from the array axis.  Everything here is a pure function of immutable inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidParameterError

TWO_PI = 2.0 * math.pi

# Field names holding angles; stored in radians, serialized in degrees.
_ANGLE_FIELDS = ("theta_target", "theta_clutter", "theta_user")


@dataclass(frozen=True)
class SceneConfig:
    """Physical constants and problem parameters for one scenario.

    Angles are radians in ``(0, pi)``.  ``target_gain`` / ``clutter_gain`` are
    the reflection factors of the point target and the clutter scatterer;
    ``path_gain`` is the complex gain of the communication channel.
    ``sensing_floor`` is the minimum post-combining radar SINR (linear).
    """

    wavelength: float = 1.0
    n_tx: int = 8
    n_rx: int = 8
    theta_target: float = math.radians(30.0)
    theta_clutter: float = math.radians(60.0)
    theta_user: float = math.radians(45.0)
    target_gain: float = 1.0
    clutter_gain: float = 1.0
    path_gain: complex = 1.0 + 0.0j
    radar_noise: float = 0.01
    comm_noise: float = 0.01
    power_budget: float = 1.0
    sensing_floor: float = 1200.0
    min_spacing: float = 0.5
    tx_aperture: float = field(default=0.0)  # 0 means "use n_tx * wavelength"
    rx_aperture: float = field(default=0.0)

    def __post_init__(self):
        if self.tx_aperture == 0.0:
            object.__setattr__(self, "tx_aperture", self.n_tx * self.wavelength)
        if self.rx_aperture == 0.0:
            object.__setattr__(self, "rx_aperture", self.n_rx * self.wavelength)
        object.__setattr__(self, "path_gain", complex(self.path_gain))
        self._validate()

    def _validate(self):
        if not (self.wavelength > 0 and math.isfinite(self.wavelength)):
            raise InvalidParameterError("wavelength must be positive and finite")
        if self.n_tx < 1 or self.n_rx < 1:
            raise InvalidParameterError("antenna counts must be >= 1")
        for name in ("radar_noise", "comm_noise", "power_budget", "min_spacing"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be > 0")
        if self.sensing_floor < 0:
            raise InvalidParameterError("sensing_floor must be >= 0")
        for name in _ANGLE_FIELDS:
            ang = getattr(self, name)
            if not (0.0 < ang < math.pi):
                raise InvalidParameterError(f"{name} must lie in (0, pi), got {ang}")
        if self.tx_aperture < (self.n_tx - 1) * self.min_spacing:
            raise InvalidParameterError(
                "tx_aperture too small for n_tx antennas at min_spacing"
            )
        if self.rx_aperture < (self.n_rx - 1) * self.min_spacing:
            raise InvalidParameterError(
                "rx_aperture too small for n_rx antennas at min_spacing"
            )

    def with_updates(self, **kwargs) -> "SceneConfig":
        """Return a copy with selected fields replaced (re-validated)."""
        if ("n_tx" in kwargs or "n_rx" in kwargs) and not (
            "tx_aperture" in kwargs or "rx_aperture" in kwargs
        ):
            # Apertures default to N*lambda; recompute them for the new counts.
            kwargs.setdefault("tx_aperture", 0.0)
            kwargs.setdefault("rx_aperture", 0.0)
        return replace(self, **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "SceneConfig":
        """Build from a JSON-style dict.  Angles are given in degrees."""
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InvalidParameterError(f"unknown scene fields: {sorted(unknown)}")
        kwargs = dict(data)
        for name in _ANGLE_FIELDS:
            if name in kwargs:
                kwargs[name] = math.radians(float(kwargs[name]))
        if "path_gain" in kwargs:
            pg = kwargs["path_gain"]
            if isinstance(pg, (list, tuple)):
                if len(pg) != 2:
                    raise InvalidParameterError("path_gain list must be [re, im]")
                kwargs["path_gain"] = complex(pg[0], pg[1])
            else:
                kwargs["path_gain"] = complex(pg)
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise InvalidParameterError(str(exc)) from exc

    def to_dict(self) -> dict:
        data = {
            name: getattr(self, name) for name in self.__dataclass_fields__
        }
        for name in _ANGLE_FIELDS:
            data[name] = math.degrees(data[name])
        data["path_gain"] = [self.path_gain.real, self.path_gain.imag]
        return data

    @classmethod
    def from_json(cls, path) -> "SceneConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidParameterError(
                    f"scene file {path}: invalid JSON at line {exc.lineno}, "
                    f"column {exc.colno}: {exc.msg}"
                ) from exc
        if not isinstance(data, dict):
            raise InvalidParameterError(f"scene file {path}: expected a JSON object")
        return cls.from_dict(data)


@dataclass(frozen=True)
class ArrayLayout:
    """Transmit positions ``x`` and receive positions ``y`` (meters).

    Positions are stored sorted ascending (canonical form; ordering does not
    change any SNR value) and must respect apertures and pairwise spacing.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.sort(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "y", np.sort(np.asarray(self.y, dtype=float)))

    def validate(self, scene: SceneConfig, spacing_tol: float = 1e-9) -> None:
        if self.x.shape != (scene.n_tx,) or self.y.shape != (scene.n_rx,):
            raise InvalidParameterError(
                f"layout has {self.x.size} tx / {self.y.size} rx positions, "
                f"scene wants {scene.n_tx} / {scene.n_rx}"
            )
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise InvalidParameterError("positions must be finite")
        dmin = scene.min_spacing * (1.0 - spacing_tol)
        for name, pos, hi in (("x", self.x, scene.tx_aperture),
                              ("y", self.y, scene.rx_aperture)):
            if pos.size and (pos[0] < -spacing_tol * scene.wavelength
                             or pos[-1] > hi * (1 + 1e-12) + spacing_tol):
                raise InvalidParameterError(f"{name} positions outside [0, {hi}]")
            if pos.size > 1 and np.min(np.diff(pos)) < dmin:
                raise InvalidParameterError(
                    f"{name} spacing {np.min(np.diff(pos)):.6g} below "
                    f"min_spacing {scene.min_spacing:.6g}"
                )

    def with_x(self, x) -> "ArrayLayout":
        return ArrayLayout(x=np.asarray(x, dtype=float), y=self.y)

    def with_y(self, y) -> "ArrayLayout":
        return ArrayLayout(x=self.x, y=np.asarray(y, dtype=float))


@dataclass(frozen=True)
class SnrReport:
    """Exact sensing / communication SNR pair and the implied capacity."""

    gamma_r: float
    gamma_t: float

    @property
    def capacity(self) -> float:
        return math.log2(1.0 + self.gamma_t)


def steering(positions, theta: float, wavelength: float) -> np.ndarray:
    """Field response vector exp(j*(2*pi/lam)*mu_n*cos(theta)).

    Parameters
    ----------
    positions : array_like
        Element positions along the array axis (meters).
    theta : float
        Angle from the array axis, radians.
    wavelength : float
        Carrier wavelength (meters).
    """
    positions = np.asarray(positions, dtype=float)
    if not np.all(np.isfinite(positions)):
        raise InvalidParameterError("steering positions must be finite")
    if not (wavelength > 0 and math.isfinite(wavelength)):
        raise InvalidParameterError("wavelength must be positive and finite")
    phase = (TWO_PI / wavelength) * positions * math.cos(theta)
    return np.exp(1j * phase)


def response_matrix(layout: ArrayLayout, theta: float, scene: SceneConfig) -> np.ndarray:
    """Rank-one target/clutter response A = a_R(y, theta) a_T(x, theta)^H."""
    layout.validate(scene)
    a_r = steering(layout.y, theta, scene.wavelength)
    a_t = steering(layout.x, theta, scene.wavelength)
    return np.outer(a_r, a_t.conj())


def channel(layout: ArrayLayout, scene: SceneConfig) -> np.ndarray:
    """Communication channel h = path_gain * a_T(x, theta_user)."""
    layout.validate(scene)
    return scene.path_gain * steering(layout.x, scene.theta_user, scene.wavelength)


def sensing_snr(w, u, layout: ArrayLayout, scene: SceneConfig) -> float:
    """Post-combining radar SINR.

    Returns ``sigma^2 |u^H A_P w|^2 / (delta^2 |u^H A_C w|^2 + N0 ||u||^2)``.
    The noise term carries ``||u||^2`` so the ratio is invariant to scaling
    of ``u``.
    """
    if not scene.radar_noise > 0:
        raise InvalidParameterError("radar_noise must be > 0")
    w = np.asarray(w, dtype=complex)
    u = np.asarray(u, dtype=complex)
    a_p = response_matrix(layout, scene.theta_target, scene)
    a_c = response_matrix(layout, scene.theta_clutter, scene)
    sig = scene.target_gain**2 * abs(np.vdot(u, a_p @ w)) ** 2
    interf = scene.clutter_gain**2 * abs(np.vdot(u, a_c @ w)) ** 2
    noise = scene.radar_noise * float(np.vdot(u, u).real)
    return float(sig / (interf + noise))


def comm_snr(w, layout: ArrayLayout, scene: SceneConfig) -> float:
    """Communication SNR |h^H w|^2 / comm_noise."""
    w = np.asarray(w, dtype=complex)
    h = channel(layout, scene)
    return float(abs(np.vdot(h, w)) ** 2 / scene.comm_noise)


def snr_report(w, u, layout: ArrayLayout, scene: SceneConfig) -> SnrReport:
    return SnrReport(
        gamma_r=sensing_snr(w, u, layout, scene),
        gamma_t=comm_snr(w, layout, scene),
    )


def validate_beamformer(w, scene: SceneConfig, tol: float = 1e-9) -> None:
    w = np.asarray(w, dtype=complex)
    if w.shape != (scene.n_tx,):
        raise InvalidParameterError(f"beamformer must have {scene.n_tx} entries")
    power = float(np.vdot(w, w).real)
    if power > scene.power_budget * (1.0 + tol):
        raise InvalidParameterError(
            f"beamformer power {power:.12g} exceeds budget {scene.power_budget:.12g}"
        )


def validate_combiner(u, scene: SceneConfig, tol: float = 1e-9) -> None:
    u = np.asarray(u, dtype=complex)
    if u.shape != (scene.n_rx,):
        raise InvalidParameterError(f"combiner must have {scene.n_rx} entries")
    norm2 = float(np.vdot(u, u).real)
    if abs(norm2 - 1.0) > tol:
        raise InvalidParameterError(f"combiner norm^2 = {norm2:.12g}, expected 1")


def mrt_beamformer(layout: ArrayLayout, scene: SceneConfig) -> np.ndarray:
    """Maximum-ratio transmission beam at full power."""
    h = channel(layout, scene)
    return math.sqrt(scene.power_budget) * h / np.linalg.norm(h)
