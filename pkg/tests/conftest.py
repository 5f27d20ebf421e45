import numpy as np
import pytest

import bvylab as bl


@pytest.fixture(scope="session")
def euclid1():
    return bl.EuclideanBox(bl.Box((0.0,), (1.0,)))


@pytest.fixture(scope="session")
def euclid2():
    return bl.EuclideanBox(bl.Box((0.0, 0.0), (1.0, 1.0)))


@pytest.fixture(scope="session")
def euclid3():
    return bl.EuclideanBox(bl.Box((0.0,) * 3, (1.0,) * 3))


@pytest.fixture(scope="session")
def weighted2():
    return bl.WeightedEuclidean(bl.Box((0.0, 0.0), (1.0, 1.0)))


@pytest.fixture(scope="session")
def banach1():
    return bl.BanachBox(bl.Box((0.0, 0.0), (1.0, 1.0)), q=1.0)


@pytest.fixture(scope="session")
def banach_inf():
    return bl.BanachBox(bl.Box((0.0, 0.0), (1.0, 1.0)), q=float("inf"))


@pytest.fixture(scope="session")
def heis():
    return bl.Heisenberg1(bl.Box((-1.2, -1.2, -0.6), (1.2, 1.2, 0.6)))


@pytest.fixture(scope="session")
def fat_cantor():
    return bl.FatCantor(bl.Box((0.0,), (1.0,)), depth=12)


@pytest.fixture(scope="session")
def golden_linear(euclid1):
    return bl.LinearFunction(space=euclid1, support=euclid1.window,
                             direction=(1.0,), ramp_frac=0.0, center=(0.0,))


@pytest.fixture(scope="session")
def sine2(euclid2):
    return bl.ProductSine(space=euclid2, support=bl.Box((0.15, 0.15), (0.85, 0.85)), amplitude=0.5)


@pytest.fixture(scope="session")
def heis_fn(heis):
    return bl.HeisCoordinate(space=heis, support=bl.Box((-0.8, -0.8, -0.4), (0.8, 0.8, 0.4)),
                             ramp_frac=0.4)


def interior_points(space, n, seed=0, shrink=0.8):
    """Window samples pulled toward the center so small balls stay interior."""
    pts = space._sample_window_rng(np.random.default_rng(seed), n)
    c = space.window.center
    return c + shrink * (pts - c)
