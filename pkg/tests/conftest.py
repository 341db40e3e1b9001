import math

import numpy as np
import pytest

from maisac import ArrayLayout, SceneConfig
from maisac.bcd import init_layout


@pytest.fixture
def default_scene():
    return SceneConfig()


@pytest.fixture
def small_scene():
    return SceneConfig(n_tx=4, n_rx=4, sensing_floor=0.0)


def random_scene(rng, n=None, floor_frac=None, min_sep_deg=25.0):
    """Random scene in the representative regime (separated angles)."""
    n = n if n is not None else int(rng.choice([2, 4, 8]))
    while True:
        th = np.sort(rng.uniform(10.0, 170.0, size=3))
        if np.min(np.diff(th)) >= min_sep_deg:
            break
    order = rng.permutation(3)
    return SceneConfig(
        n_tx=n,
        n_rx=n,
        theta_target=math.radians(th[order[0]]),
        theta_user=math.radians(th[order[1]]),
        theta_clutter=math.radians(th[order[2]]),
        target_gain=float(rng.uniform(0.5, 1.5)),
        clutter_gain=float(rng.uniform(0.2, 1.2)),
        path_gain=complex(rng.normal(), rng.normal()),
        sensing_floor=0.0 if floor_frac is None else floor_frac,
    )


def random_layout(scene, rng):
    return init_layout(scene, "random", rng=rng)


def random_beam(scene, rng, power=None):
    w = rng.standard_normal(scene.n_tx) + 1j * rng.standard_normal(scene.n_tx)
    power = scene.power_budget if power is None else power
    return math.sqrt(power) * w / np.linalg.norm(w)


def random_unit(n, rng):
    u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return u / np.linalg.norm(u)
