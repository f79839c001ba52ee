import math

import numpy as np
import pytest

from sobolev_forge.scalarnets import (
    build_monomial_bump,
    build_product2,
    build_square,
    build_trapezoid,
    bump_weight,
    trapezoid_value,
)

KINK_OFF = math.sqrt(2.0) * 1e-7


def test_trapezoid_spec_values():
    assert build_trapezoid(0, 1)(0.0) == 1.0
    assert build_trapezoid(0, 1)(0.5) == 0.5
    assert build_trapezoid(2, 4)(0.5) == 1.0


def test_trapezoid_matches_formula_everywhere():
    for m, N in [(0, 1), (1, 2), (3, 4), (8, 8)]:
        net = build_trapezoid(m, N)
        xs = np.linspace(-1, 2, 1501) + KINK_OFF
        got = net.forward(xs[:, None])
        want = trapezoid_value(m, N, xs)
        assert np.max(np.abs(got - want)) <= 1e-12
        assert got.min() >= 0.0 and got.max() <= 1.0


def test_trapezoid_derivative_bound():
    for N in (1, 4, 8):
        net = build_trapezoid(1 if N > 1 else 0, N)
        xs = np.linspace(-0.5, 1.5, 4001) + KINK_OFF
        h = 1e-6
        fd = (net.forward((xs + h)[:, None]) - net.forward((xs - h)[:, None])) / (2 * h)
        assert np.max(np.abs(fd)) <= 3 * N + 1e-6


def test_trapezoid_guards():
    with pytest.raises(ValueError):
        build_trapezoid(3, 2)


def test_square_exact_points():
    sq = build_square(1e-3, 1.0)
    assert sq(0.0) == 0.0
    assert sq(0.5) == 0.25
    assert sq(-0.5) == 0.25


def test_square_grid_accuracy():
    theta = 1e-3
    sq = build_square(theta, 1.0)
    xs = np.linspace(-1, 1, 10000)
    errs = np.abs(sq.forward(xs[:, None]) - xs**2)
    assert errs.max() <= theta


def test_square_depth_logarithmic():
    for theta in (1e-2, 1e-3, 1e-4):
        sq = build_square(theta, 1.0)
        assert sq.depth <= 3 * math.log2(1.0 / theta) + 10


def test_square_derivative_accuracy():
    theta = 1e-3
    sq = build_square(theta, 2.0)
    xs = np.linspace(-1.9, 1.9, 3001) + KINK_OFF
    h = 1e-7
    fd = (sq.forward((xs + h)[:, None]) - sq.forward((xs - h)[:, None])) / (2 * h)
    assert np.max(np.abs(fd - 2 * xs)) <= theta + 1e-4


def test_square_guards():
    with pytest.raises(ValueError):
        build_square(0.7, 1.0)
    with pytest.raises(ValueError):
        build_square(1e-3, -1.0)


def test_product_exact_annihilation(rng):
    times = build_product2(1e-3, 1.0)
    assert times(0.37, 0.0) == 0.0
    assert times(0.0, 0.0) == 0.0
    xs = rng.uniform(-1, 1, 1000)
    v1 = times.forward(np.stack([xs, np.zeros_like(xs)], axis=1))
    v2 = times.forward(np.stack([np.zeros_like(xs), xs], axis=1))
    assert np.all(v1 == 0.0) and np.all(v2 == 0.0)


def test_product_accuracy_and_example():
    eta = 1e-3
    times = build_product2(eta, 1.0)
    assert abs(times(0.7, -0.3) - (-0.21)) <= eta
    g = np.linspace(-1, 1, 201)
    XX, YY = np.meshgrid(g, g)
    pts = np.stack([XX.ravel(), YY.ravel()], axis=1)
    errs = np.abs(times.forward(pts) - pts[:, 0] * pts[:, 1])
    assert errs.max() <= eta


def test_product_w1_magnitude():
    B = 3.0
    times = build_product2(1e-2, B)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-B, B, (2000, 2)) + KINK_OFF
    h = 1e-6
    for j in (0, 1):
        hi, lo = pts.copy(), pts.copy()
        hi[:, j] += h
        lo[:, j] -= h
        fd = (times.forward(hi) - times.forward(lo)) / (2 * h)
        assert np.max(np.abs(fd)) <= 3.0 * B  # derivative of xy is bounded by B


def test_product_accuracy_monotone():
    g = np.linspace(-1, 1, 101)
    XX, YY = np.meshgrid(g, g)
    pts = np.stack([XX.ravel(), YY.ravel()], axis=1)
    prev = math.inf
    for eta in (1e-1, 1e-2, 1e-3, 1e-4):
        times = build_product2(eta, 1.0)
        err = float(np.max(np.abs(times.forward(pts) - pts[:, 0] * pts[:, 1])))
        assert err <= prev + 1e-15
        prev = err


def test_product_guards():
    with pytest.raises(ValueError):
        build_product2(0.9, 1.0)


def test_bump_outside_support_exact_zero(rng):
    N = 2
    g = build_monomial_bump((1, 0), (1, 0), N, 1e-2)
    X = rng.uniform(0, 1, (2000, 2))
    outside = bump_weight((1, 0), N, X) == 0.0
    vals = g.forward(X)
    assert outside.sum() > 100
    assert np.all(vals[outside] == 0.0)


def test_bump_center_value():
    eps = 1e-3
    g = build_monomial_bump((1, 2), (0, 0), 2, eps)
    val = g(0.5, 1.0)
    assert abs(val - 1.0) <= 10 * eps


def test_bump_one_dim_example():
    eps = 1e-3
    g = build_monomial_bump((0,), (1,), 1, eps)
    # psi(3 * 0.2) = psi(0.6) = 1, so the target value is 0.2
    assert abs(g(0.2) - 0.2) <= 10 * eps


def test_bump_rejects_large_v():
    with pytest.raises(ValueError, match="alpha"):
        build_monomial_bump((0, 0), (2, 1), 2, 1e-2, alpha=3)


def test_zero_annihilation_cascade_random(rng):
    N = 4
    for _ in range(5):
        m = tuple(rng.integers(0, N + 1, 2))
        v = tuple(rng.integers(0, 2, 2))
        g = build_monomial_bump(m, v, N, 1e-2)
        X = rng.uniform(0, 1, (500, 2))
        dead = bump_weight(m, N, X) == 0.0
        if dead.any():
            assert np.all(g.forward(X)[dead] == 0.0)


def test_partial_product_error_grows_linearly():
    """Sup error of the running product grows at most linearly in the number
    of multiplied factors at fixed accuracy."""
    eps, B = 1e-3, 4.0
    times = build_product2(eps, B)
    rng = np.random.default_rng(2)
    factors = rng.uniform(0.2, 1.0, (2000, 5))
    running = factors[:, 0].copy()
    exact = factors[:, 0].copy()
    for n in range(1, 5):
        running = times.forward(np.stack([running, factors[:, n]], axis=1))
        exact = exact * factors[:, n]
        err = float(np.max(np.abs(running - exact)))
        assert err <= 3.0 * (n + 1) * eps
