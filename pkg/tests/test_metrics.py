import math

import numpy as np
import pytest

from sobolev_forge.metrics import (
    EvalGrid,
    fd_partial,
    fit_loglog_slope,
    grid_norm,
    holder_quotient,
    lipschitz_estimate,
    sample_pairs,
)
from sobolev_forge.scalarnets import build_trapezoid


def test_grid_norm_linear():
    grid = EvalGrid(2, 51)
    g = lambda X: X[:, 0]
    w0 = grid_norm(g, 0, math.inf, grid)
    assert w0 == pytest.approx(1.0 - 0.5 / 51, abs=1e-6)  # midpoint grid margin
    w1 = grid_norm(g, 1, math.inf, grid)
    assert w1 == pytest.approx(1.0, abs=1e-9)


def test_grid_norm_constant():
    grid = EvalGrid(2, 21)
    g = lambda X: np.full(len(X), -0.7)
    for k in (0, 1):
        assert grid_norm(g, k, math.inf, grid) == pytest.approx(0.7, abs=1e-9)
    assert grid_norm(g, 0, 2, grid) == pytest.approx(0.7, rel=1e-6)


def test_grid_norm_sin_peak():
    grid = EvalGrid(1, 201)
    g = lambda X: np.sin(2 * np.pi * X[:, 0])
    assert abs(grid_norm(g, 0, math.inf, grid) - 1.0) <= 1e-3


def test_grid_norm_rejects_bad_k():
    with pytest.raises(ValueError):
        grid_norm(lambda X: X[:, 0], 2, math.inf, EvalGrid(1, 11))


def test_grid_norm_k1_contains_k0():
    grid = EvalGrid(2, 31)
    g = lambda X: np.sin(2 * np.pi * X[:, 0]) * X[:, 1]
    assert grid_norm(g, 1, math.inf, grid) >= grid_norm(g, 0, math.inf, grid)
    assert grid_norm(g, 1, 2, grid) >= grid_norm(g, 0, 2, grid)


def test_grid_refinement_consistency():
    net = build_trapezoid(1, 4)
    g = lambda X: net.forward(X)
    coarse = grid_norm(g, 0, math.inf, EvalGrid(1, 50))
    fine = grid_norm(g, 0, math.inf, EvalGrid(1, 200))
    assert fine >= coarse - 1e-9


def test_holder_quotient(rng):
    pairs = sample_pairs(rng, 1, 20000)
    const = lambda X: np.zeros(len(X))
    assert holder_quotient(const, 0.5, pairs) == 0.0
    lin = lambda X: X[:, 0]
    q = holder_quotient(lin, 0.5, pairs)
    assert 0.8 <= q <= 1.0  # sup over the open interval approaches 1


def test_holder_limit_matches_lipschitz(rng):
    pairs = sample_pairs(rng, 2, 20000)
    g = lambda X: 0.3 * X[:, 0] - 0.9 * X[:, 1]
    near_one = holder_quotient(g, 0.999, pairs)
    lip = lipschitz_estimate(g, pairs=pairs)
    assert abs(near_one - lip) <= 0.05 * lip


def test_lipschitz_linear(rng):
    a = np.array([0.6, -0.8, 0.1])
    g = lambda X: X @ a
    pairs = sample_pairs(rng, 3, 50000)
    probes = rng.uniform(0.1, 0.9, (500, 3))
    est = lipschitz_estimate(g, pairs=pairs, probes=probes)
    assert est == pytest.approx(np.linalg.norm(a), abs=1e-6)


def test_lipschitz_constant_zero(rng):
    g = lambda X: np.full(len(X), 3.3)
    pairs = sample_pairs(rng, 2, 1000)
    assert lipschitz_estimate(g, pairs=pairs) == 0.0


def test_fd_partial_quadratic_exact():
    g = lambda X: X[:, 0] ** 2
    for h in (1e-2, 1e-4):
        assert fd_partial(g, np.array([0.3, 0.5]), 0, h) == pytest.approx(0.6, abs=1e-9)


def test_fd_partial_linear_exact():
    g = lambda X: 2.5 * X[:, 1]
    assert fd_partial(g, np.array([0.3, 0.5]), 1, 1e-5) == pytest.approx(2.5, abs=1e-9)


def test_fd_partial_trapezoid_slopes():
    N = 2
    net = build_trapezoid(1, N)
    g = lambda X: net.forward(X)
    offs = math.sqrt(2) * 1e-7
    slopes = [fd_partial(g, np.array([x + offs]), 0, 1e-8) for x in np.linspace(0, 1, 37)]
    for s in slopes:
        assert min(abs(s), abs(s - 3 * N), abs(s + 3 * N)) <= 1e-4


def test_fit_loglog_slope():
    xs = [2, 4, 8, 16]
    ys = [x**-2.0 * 5.0 for x in xs]
    slope, intercept = fit_loglog_slope(xs, ys)
    assert slope == pytest.approx(-2.0, abs=1e-12)
    assert math.exp(intercept) == pytest.approx(5.0, rel=1e-9)
