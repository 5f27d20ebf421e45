import math

import numpy as np
import pytest

import bvylab as bl
from bvylab.functions import function_from_json, function_to_json, scaled
from tests.conftest import interior_points


def catalogue(euclid2, banach_inf, heis, fat_cantor):
    sup2 = bl.Box((0.15, 0.15), (0.85, 0.85))
    return [
        bl.LinearFunction(space=euclid2, support=sup2, direction=(1.0, -0.5), ramp_frac=0.3),
        bl.SmoothBump(space=euclid2, support=sup2, height=0.7, ramp_frac=0.5),
        bl.ProductSine(space=euclid2, support=sup2, amplitude=0.5),
        bl.ConeFunction(space=euclid2, support=bl.Box((0.3, 0.3), (0.7, 0.7)), height=0.15, slope=1.0),
        bl.ConeFunction(space=banach_inf, support=bl.Box((0.25, 0.25), (0.75, 0.75)), height=0.25, slope=1.0),
        bl.ProductSine(space=banach_inf, support=sup2, amplitude=1.0),
        bl.HeisCoordinate(space=heis, support=bl.Box((-0.8, -0.8, -0.4), (0.8, 0.8, 0.4)), ramp_frac=0.4),
        bl.LinearFunction(space=fat_cantor, support=fat_cantor.window, direction=(1.0,), ramp_frac=0.0),
    ]


def test_linear_coordinate_eval(euclid2):
    u = bl.LinearFunction(space=euclid2, support=euclid2.window, direction=(1.0, 0.0),
                          ramp_frac=0.0, center=(0.0, 0.0))
    assert u(np.array([0.3, 0.7]))[0] == pytest.approx(0.3, abs=1e-15)


def test_vanishes_outside_support(euclid2, heis):
    u = bl.ProductSine(space=euclid2, support=bl.Box((0.2, 0.2), (0.8, 0.8)))
    outside = np.array([[0.1, 0.5], [0.95, 0.95], [0.5, 0.05]])
    np.testing.assert_array_equal(u(outside), 0.0)
    np.testing.assert_array_equal(u.grad(outside), 0.0)
    uh = bl.HeisCoordinate(space=heis, support=bl.Box((-0.5, -0.5, -0.3), (0.5, 0.5, 0.3)))
    np.testing.assert_array_equal(uh(np.array([[0.9, 0.0, 0.0]])), 0.0)


def test_cone_apex_value(euclid2):
    u = bl.ConeFunction(space=euclid2, support=bl.Box((0.3, 0.3), (0.7, 0.7)), height=0.2, slope=1.0)
    assert u(np.array([0.5, 0.5]))[0] == pytest.approx(0.2, abs=1e-15)


def test_cone_needs_room(euclid2):
    with pytest.raises(bl.SpaceError):
        bl.ConeFunction(space=euclid2, support=bl.Box((0.4, 0.4), (0.6, 0.6)), height=0.5, slope=1.0)


def test_ramp_free_linear_requires_full_window(euclid2):
    with pytest.raises(bl.SpaceError):
        bl.LinearFunction(space=euclid2, support=bl.Box((0.2, 0.2), (0.8, 0.8)),
                          direction=(1.0, 0.0), ramp_frac=0.0)


@pytest.mark.parametrize("idx", range(8))
def test_lipschitz_bound_on_random_pairs(idx, euclid2, banach_inf, heis, fat_cantor):
    u = catalogue(euclid2, banach_inf, heis, fat_cantor)[idx]
    space = u.space
    rng = np.random.default_rng(100 + idx)
    x = space._sample_window_rng(rng, 10_000)
    y = space._sample_window_rng(rng, 10_000)
    d = space._metric(x, y)
    ok = d > 0
    ratios = np.abs(u(x[ok]) - u(y[ok])) / d[ok]
    assert float(np.max(ratios)) <= u.lip_bound * (1.0 + 1e-12)


@pytest.mark.parametrize("idx", [0, 1, 2, 5, 6])
def test_gradients_match_finite_differences(idx, euclid2, banach_inf, heis, fat_cantor):
    u = catalogue(euclid2, banach_inf, heis, fat_cantor)[idx]
    pts = interior_points(u.space, 200, seed=idx, shrink=0.6)
    grads = u.grad(pts)
    h = 1e-6
    for j in range(pts.shape[1]):
        shift = np.zeros(pts.shape[1])
        shift[j] = h
        fd = (u(pts + shift) - u(pts - shift)) / (2.0 * h)
        np.testing.assert_allclose(grads[:, j], fd, rtol=2e-5, atol=2e-6)


def test_cone_gradient_dual_norm_is_slope(euclid2, banach_inf, banach1):
    for space in (euclid2, banach_inf, banach1):
        u = bl.ConeFunction(space=space, support=bl.Box((0.25, 0.25), (0.75, 0.75)),
                            height=0.2, slope=1.3)
        rng = np.random.default_rng(3)
        pts = 0.5 + 0.1 * (rng.uniform(-1, 1, (500, 2)))
        lips = u.pointwise_lip(pts)
        inside = u(pts) > 0
        np.testing.assert_allclose(lips[inside], 1.3, rtol=1e-9)


def test_pointwise_lip_dual_norms(banach_inf, banach1):
    sup = bl.Box((0.15, 0.15), (0.85, 0.85))
    u_inf = bl.LinearFunction(space=banach_inf, support=sup, direction=(1.0, 1.0), ramp_frac=0.4)
    u_1 = bl.LinearFunction(space=banach1, support=sup, direction=(1.0, 1.0), ramp_frac=0.4)
    x = np.array([[0.5, 0.5]])
    # sup-norm metric pairs with the l1 gradient norm, and vice versa
    assert u_inf.pointwise_lip(x)[0] == pytest.approx(2.0, rel=1e-12)
    assert u_1.pointwise_lip(x)[0] == pytest.approx(1.0, rel=1e-12)


def test_heis_plateau_gradient(heis, heis_fn):
    x = np.array([[0.0, 0.0, 0.0], [0.1, -0.2, 0.05]])
    np.testing.assert_allclose(heis_fn.pointwise_lip(x), 1.0, rtol=1e-12)
    coeffs = heis_fn.blowup_coeffs(x)
    np.testing.assert_allclose(coeffs, [[1.0, 0.0], [1.0, 0.0]], atol=1e-12)


def test_blowup_of_linear_is_the_direction(euclid2):
    u = bl.LinearFunction(space=euclid2, support=bl.Box((0.15, 0.15), (0.85, 0.85)),
                          direction=(1.0, 0.0), ramp_frac=0.3)
    u0 = u.blowup(np.array([0.5, 0.5]))
    w = np.array([[0.3, -0.7], [1.0, 2.0]])
    np.testing.assert_allclose(u0(w), w[:, 0], atol=1e-12)


def test_heis_blowup_is_first_horizontal_coordinate(heis_fn):
    # Pansu differential of the coordinate: (z1, z2, t) -> z1, forced by the group structure
    u0 = heis_fn.blowup(np.zeros(3))
    w = np.array([[0.2, 0.5, -0.4], [-1.0, 0.0, 3.0]])
    np.testing.assert_allclose(u0(w), w[:, 0], atol=1e-12)


def test_scaling_of_pointwise_lip(sine2):
    x = interior_points(sine2.space, 50, seed=5, shrink=0.5)
    base = sine2.pointwise_lip(x)
    for c in (2.0, 10.0, -3.0):
        np.testing.assert_allclose(scaled(sine2, c).pointwise_lip(x), abs(c) * base, rtol=1e-12)


def test_lip_bound_scales(sine2):
    assert scaled(sine2, -4.0).lip_bound == pytest.approx(4.0 * sine2.lip_bound, rel=1e-12)


def test_function_json_roundtrip(euclid2, heis, heis_fn, sine2):
    for u in (sine2, heis_fn,
              bl.LinearFunction(space=euclid2, support=euclid2.window, direction=(1.0, 0.0),
                                ramp_frac=0.0, center=(0.0, 0.0))):
        doc = function_to_json(u)
        back = function_from_json(u.space, doc)
        pts = interior_points(u.space, 64, seed=1)
        np.testing.assert_array_equal(u(pts), back(pts))


def test_function_json_rejects_unknown(euclid2):
    with pytest.raises(bl.SpaceError):
        function_from_json(euclid2, {"formula_id": "polynomial"})


def test_heis_coord_requires_heisenberg(euclid3):
    with pytest.raises(bl.SpaceError):
        bl.HeisCoordinate(space=euclid3, support=bl.Box((0.2,) * 3, (0.8,) * 3))


def test_support_must_fit_window(euclid2):
    with pytest.raises(bl.SpaceError):
        bl.ProductSine(space=euclid2, support=bl.Box((0.5, 0.5), (1.5, 1.5)))


def test_heis_cone_has_no_analytic_gradient(heis):
    u = bl.ConeFunction(space=heis, support=bl.Box((-0.8, -0.8, -0.4), (0.8, 0.8, 0.4)),
                        height=0.3, slope=1.0)
    assert not u.has_analytic_grad
    with pytest.raises(bl.CapabilityError):
        u.grad(np.zeros((1, 3)))
