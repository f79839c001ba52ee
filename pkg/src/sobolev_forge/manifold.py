"""Parametric manifold kit, atlas construction, chart calculus, squared-
distance and chart-indicator networks, the manifold compile pipeline, and the
chart-based W^{k,inf} error metric.

The pipeline mirrors the Euclidean one chart by chart: pull the target back
through a chart, approximate the pullback on [0,1]^d with bump-times-monomial
nets, and gate each chart's contribution by a chart-indicator network
(squared-distance net composed with a clipped ramp).  Coefficients of bumps
whose support reaches the chart-boundary band are zeroed, which makes every
per-chart network vanish identically on the indicator's transition band; that
is the mechanism keeping first-derivative error bounded as the ramp sharpens.

Parameter policy: eta = N^-alpha and delta = N^-(alpha+d+1) follow the
asymptotic prescription.  The ramp width Delta uses the desk-scale choice
r^2/(4N) by default, which keeps the transition band narrower than one bump
at the resolutions the studies actually run; the asymptotic choice
Delta = 8 c2 r / N is available as parameters="paper".
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import assemble_resnet, extend_cnn_depth, mlp_to_cnn, parallel_sum
from .netcore import audit_class, resnet_forward_batch
from .scalarnets import (
    ScalarNet,
    build_product2,
    build_square,
    monomial_factors,
    psi_value,
    sn_affine,
    sn_chain,
    sn_input_affine,
    sn_pad,
    sn_parallel,
    sn_scale_output,
)
from .taylor import (
    CompileEqualityError,
    SurrogateCoefficients,
    _candidate_offsets,
    _candidates,
    _monomial_expansion_rows,
    multi_indices,
)


class ChartError(RuntimeError):
    """Chart projection/inversion outside its domain, or covering failure."""


# ---------------------------------------------------------------------------
# manifold kit
# ---------------------------------------------------------------------------


@dataclass
class ManifoldSpec:
    """Parametric manifold with analytic reach, area, and tangent spaces."""

    name: str
    intrinsic_dim: int
    ambient_dim: int
    reach: float
    box_bound: float
    surface_area: float
    embed: callable  # (n, d) params -> (n, D) ambient
    tangent_basis: callable  # (D,) point on M -> (D, d) orthonormal columns
    param_of_point: callable  # (D,) -> (d,) parameter
    param_samples: callable  # count -> (n, d) dense deterministic parameters
    chart_solver: callable = None  # optional analytic chart inversion

    def sample_points(self, count):
        return self.embed(self.param_samples(count))


def _rotation(D, seed=7):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((D, D)))
    return q


def circle_manifold(ambient_dim=3, radius=1.0) -> ManifoldSpec:
    """Unit-style circle isometrically embedded in R^D via a fixed rotation."""
    D, R = ambient_dim, radius
    Q = _rotation(D)
    e0, e1 = Q[:, 0], Q[:, 1]

    def embed(U):
        U = np.atleast_2d(U)
        return R * (np.cos(U[:, :1]) * e0 + np.sin(U[:, :1]) * e1)

    def tangent(x):
        c, s0 = (x @ e0) / R, (x @ e1) / R
        t = -s0 * e0 + c * e1
        return t[:, None]

    def param_of(x):
        return np.array([math.atan2(float(x @ e1), float(x @ e0))])

    def samples(count):
        return np.linspace(0.0, 2 * math.pi, count, endpoint=False)[:, None]

    def solver(chart, z):
        # in-plane: x = V p + (c/R) sqrt(R^2 - p^2), p the tangent coordinate
        p = (np.asarray(z).ravel()[0] - chart.shift[0]) / chart.scale
        if abs(p) > R:
            raise ChartError(f"chart coordinate {z} has no preimage (|p| > R)")
        return chart.frame[:, 0] * p + chart.center * math.sqrt(max(R * R - p * p, 0.0)) / R

    return ManifoldSpec(
        "circle", 1, D, R, R, 2 * math.pi * R, embed, tangent, param_of, samples, solver
    )


def sphere_manifold(radius=1.0) -> ManifoldSpec:
    """Round 2-sphere in R^3."""
    R = radius

    def embed(U):
        U = np.atleast_2d(U)
        th, ph = U[:, 0], U[:, 1]
        return R * np.stack(
            [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1
        )

    def tangent(x):
        n = x / np.linalg.norm(x)
        a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        t1 = a - (a @ n) * n
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        return np.stack([t1, t2], axis=1)

    def param_of(x):
        r = np.linalg.norm(x)
        return np.array([math.acos(np.clip(x[2] / r, -1, 1)), math.atan2(x[1], x[0])])

    def samples(count):
        # Fibonacci sphere: near-uniform deterministic coverage
        i = np.arange(count) + 0.5
        th = np.arccos(1 - 2 * i / count)
        ph = math.pi * (1 + math.sqrt(5.0)) * i
        return np.stack([th, ph % (2 * math.pi)], axis=1)

    def solver(chart, z):
        p = (np.asarray(z).ravel() - chart.shift) / chart.scale
        q2 = R * R - float(p @ p)
        if q2 < 0:
            raise ChartError(f"chart coordinate {z} has no preimage (|p| > R)")
        return chart.frame @ p + chart.center * math.sqrt(q2) / R

    return ManifoldSpec(
        "sphere", 2, 3, R, R, 4 * math.pi * R * R, embed, tangent, param_of, samples, solver
    )


def torus_manifold(r1=None, r2=None) -> ManifoldSpec:
    """Flat 2-torus in R^4; reach = min(r1, r2)."""
    r1 = r1 if r1 is not None else 1.0 / math.sqrt(2.0)
    r2 = r2 if r2 is not None else 1.0 / math.sqrt(2.0)

    def embed(U):
        U = np.atleast_2d(U)
        u, v = U[:, 0], U[:, 1]
        return np.stack([r1 * np.cos(u), r1 * np.sin(u), r2 * np.cos(v), r2 * np.sin(v)], axis=1)

    def tangent(x):
        t1 = np.array([-x[1], x[0], 0.0, 0.0]) / math.hypot(x[0], x[1])
        t2 = np.array([0.0, 0.0, -x[3], x[2]]) / math.hypot(x[2], x[3])
        return np.stack([t1, t2], axis=1)

    def param_of(x):
        return np.array([math.atan2(x[1], x[0]), math.atan2(x[3], x[2])])

    def samples(count):
        n = max(2, int(math.sqrt(count)))
        ax = np.linspace(0, 2 * math.pi, n, endpoint=False)
        uu, vv = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([uu.ravel(), vv.ravel()], axis=1)

    return ManifoldSpec(
        "torus",
        2,
        4,
        min(r1, r2),
        max(r1, r2),
        4 * math.pi * math.pi * r1 * r2,
        embed,
        tangent,
        param_of,
        samples,
        None,
    )


MANIFOLDS = {
    "circle": circle_manifold,
    "sphere": sphere_manifold,
    "torus": torus_manifold,
}


# ---------------------------------------------------------------------------
# charts and atlas
# ---------------------------------------------------------------------------


@dataclass
class Chart:
    """Scaled tangent-space projection phi(x) = a V^T (x - c) + b."""

    center: np.ndarray
    frame: np.ndarray  # (D, d), orthonormal columns
    scale: float
    shift: np.ndarray  # (d,)
    radius: float

    def __post_init__(self):
        gram = self.frame.T @ self.frame
        if np.max(np.abs(gram - np.eye(self.frame.shape[1]))) > 1e-10:
            raise ChartError("tangent frame is not orthonormal")


@dataclass
class Atlas:
    manifold: ManifoldSpec
    charts: list
    r: float
    samples: np.ndarray = field(repr=False)
    T_d: float = 0.0

    @property
    def r_tilde(self):
        return self.r / 2.0

    @property
    def chart_count(self):
        return len(self.charts)


def build_atlas(m: ManifoldSpec, r: float, sample_count=4096, spacing_factor=0.45) -> Atlas:
    """Greedy covering of M by balls of radius r/2 with centers on M.

    Centers are chosen first-fit from a dense deterministic sample at spacing
    <= spacing_factor * r < r/2, so every sample point lies strictly inside
    at least one inner ball.
    """
    if not 0.0 < r < m.reach / 4.0:
        raise ChartError(f"need 0 < r < reach/4 = {m.reach / 4.0}, got r={r}")
    pts = m.sample_points(sample_count)
    spacing = spacing_factor * r
    centers = []
    for x in pts:
        if not centers or min(np.linalg.norm(x - c) for c in centers) > spacing:
            centers.append(x)
    centers = np.array(centers)
    d2 = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    nearest = np.sqrt(d2.min(axis=1))
    if np.max(nearest) >= r / 2.0:
        raise ChartError(f"covering failure: sample at distance {np.max(nearest)} >= r/2")
    charts = []
    for c in centers:
        V = np.linalg.qr(m.tangent_basis(c))[0][:, : m.intrinsic_dim]
        charts.append(
            Chart(
                center=c,
                frame=V,
                scale=1.0 / (2.0 * r),
                shift=0.5 * np.ones(m.intrinsic_dim),
                radius=r,
            )
        )
    T_d = float(np.mean(np.sum(d2 < r * r, axis=1)))
    return Atlas(m, charts, r, pts, T_d)


def chart_project(chart: Chart, x, check=True):
    """phi(x) = a V^T (x - c) + b, defined on the chart ball."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if check:
        dist = np.linalg.norm(X - chart.center, axis=1)
        if np.any(dist > chart.radius * (1 + 1e-9)):
            raise ChartError(
                f"point at distance {float(np.max(dist)):.4g} outside chart ball r={chart.radius}"
            )
    Z = chart.scale * (X - chart.center) @ chart.frame + chart.shift
    return Z[0] if single else Z


def chart_invert(chart: Chart, m: ManifoldSpec, z):
    """Find the manifold point with phi(x) = z; analytic when the kit provides
    a solver, Newton on the parametrization otherwise."""
    z = np.asarray(z, dtype=np.float64).ravel()
    if m.chart_solver is not None:
        x = m.chart_solver(chart, z)
    else:
        u = m.param_of_point(chart.center).copy()
        for _ in range(60):
            x = m.embed(u[None])[0]
            res = chart_project(chart, x, check=False) - z
            if np.max(np.abs(res)) < 1e-13:
                break
            h = 1e-6
            Jp = np.empty((m.intrinsic_dim, m.intrinsic_dim))
            for j in range(m.intrinsic_dim):
                up, um = u.copy(), u.copy()
                up[j] += h
                um[j] -= h
                Jp[:, j] = (
                    chart_project(chart, m.embed(up[None])[0], check=False)
                    - chart_project(chart, m.embed(um[None])[0], check=False)
                ) / (2 * h)
            try:
                u = u - np.linalg.solve(Jp, res)
            except np.linalg.LinAlgError as e:
                raise ChartError(f"chart inversion failed at z={z}: {e}") from e
        x = m.embed(u[None])[0]
    gap = np.max(np.abs(chart_project(chart, x, check=False) - z))
    if gap > 1e-8:
        raise ChartError(f"chart inversion failed at z={z}: residual {gap:.3e}")
    if np.linalg.norm(x - chart.center) > chart.radius * (1 + 1e-6):
        raise ChartError(f"chart coordinate {z} maps outside the chart ball")
    return x


def rho_weights(atlas: Atlas, x) -> np.ndarray:
    """Partition-of-unity weights rho_i(x) = h_i / sum_j h_j with
    h_i = max(0, 1 - ||x - c_i||^2 / (r/2)^2)^3; supported in the inner balls."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    rt2 = atlas.r_tilde**2
    H = np.stack(
        [
            np.maximum(0.0, 1.0 - np.sum((X - ch.center) ** 2, axis=1) / rt2) ** 3
            for ch in atlas.charts
        ],
        axis=1,
    )
    total = H.sum(axis=1)
    if np.any(total <= 0.0):
        raise ChartError("point not covered by any inner ball (covering bug)")
    W = H / total[:, None]
    return W[0] if single else W


# ---------------------------------------------------------------------------
# squared-distance and indicator nets
# ---------------------------------------------------------------------------


def build_sqdist_net(center, theta: float, B: float) -> ScalarNet:
    """Net approximating ||x - c||^2 as a sum of D per-coordinate square nets.

    Per-coordinate interpolation accuracy theta gives total error at most
    4 B^2 D theta on the box ||x||_inf <= B; exact at x = c and even in each
    coordinate offset.
    """
    if not 0.0 < theta < 0.5:
        raise ValueError(f"theta must be in (0, 1/2), got {theta}")
    center = np.asarray(center, dtype=np.float64)
    D = center.shape[0]
    per_coord = min(4.0 * B * B * theta, 0.49)
    parts = []
    for j in range(D):
        sq = build_square(per_coord, 2.0 * B)
        ej = np.zeros((1, 1))
        ej[0, 0] = 1.0
        parts.append((sn_input_affine(sq, ej, np.array([-center[j]])), [j]))
    depth = max(net.depth for net, _ in parts)
    joined = sn_parallel([(sn_pad(net, depth), cols) for net, cols in parts])
    out = sn_chain(joined, sn_affine(np.ones((1, D)), np.zeros(1)))
    out.eta = 4.0 * B * B * D * theta
    out.box = B
    out.tags = {"theta": theta, "D": D}
    return out


@dataclass
class IndicatorParams:
    """Clipped-ramp parameters for the chart membership indicator."""

    r: float
    Delta: float
    theta: float
    B: float
    D: int

    def __post_init__(self):
        if self.Delta < 8.0 * self.B**2 * self.D * self.theta:
            raise ValueError(
                f"need Delta >= 8 B^2 D theta = {8 * self.B**2 * self.D * self.theta}, "
                f"got {self.Delta}"
            )

    @property
    def dist_err(self):
        return 4.0 * self.B**2 * self.D * self.theta

    @property
    def A(self):
        """Zero threshold in squared-distance units."""
        return self.r**2 - self.dist_err

    @property
    def w(self):
        """Doubling-layer count: smallest w with 2^-w A <= Delta - 2*dist_err."""
        room = self.Delta - 2.0 * self.dist_err
        w_cover = math.ceil(math.log2(self.A / room)) if room > 0 else None
        if w_cover is None:
            raise ValueError("Delta leaves no room above the distance-net error")
        return max(1, w_cover, math.ceil(math.log2(self.r**2 / self.Delta)))

    @property
    def one_threshold(self):
        return (1.0 - 2.0 ** (-self.w)) * self.A


def build_indicator(p: IndicatorParams) -> ScalarNet:
    """Exact clipped ramp: 1 below (1-2^-w) A, 0 above A, linear between.

    The 2^w ramp slope is realized as w doubling layers followed by a 1/A
    weight, so every parameter stays O(1); the branch values are float-exact
    (the ramp input is exactly zero on the one-branch, and the outer ReLU
    clamps the zero-branch).
    """
    A, T1, w = p.A, p.one_threshold, p.w
    layers = [(np.array([[1.0]]), np.array([-T1]))]  # u0 = relu(a - T1)
    layers += [(np.array([[2.0]]), np.zeros(1)) for _ in range(w)]
    # out = relu(1 - v/A) with v = 2^w u0, since A - T1 = 2^-w A
    layers.append((np.array([[-1.0 / A]]), np.array([1.0])))
    layers.append((np.array([[1.0]]), np.zeros(1)))
    return ScalarNet(layers, eta=0.0, box=None, tags={"w": w, "A": A, "T1": T1})


# ---------------------------------------------------------------------------
# chart pullbacks and per-chart coefficients
# ---------------------------------------------------------------------------


def pullback_evaluator(f_on_M, atlas: Atlas, i: int):
    """(f * rho_i) composed with the chart inverse, extended by zero off the
    chart image.  Returns a batch evaluator on chart coordinates."""
    chart = atlas.charts[i]
    m = atlas.manifold

    def F(Z):
        Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
        out = np.zeros(Z.shape[0])
        for t, z in enumerate(Z):
            try:
                x = chart_invert(chart, m, z)
            except ChartError:
                continue
            w = rho_weights(atlas, x[None])[0, i]
            if w != 0.0:
                out[t] = float(np.asarray(f_on_M(x[None])).ravel()[0]) * w
        return out

    return F


def _fd_deriv(F, Z, a, h):
    """Iterated central differences of a batch evaluator at points Z."""
    if sum(a) == 0:
        return F(Z)
    j = next(k for k, ak in enumerate(a) if ak > 0)
    a_next = tuple(ak - (1 if k == j else 0) for k, ak in enumerate(a))
    hi, lo = Z.copy(), Z.copy()
    hi[:, j] += h
    lo[:, j] -= h
    return (_fd_deriv(F, hi, a_next, h) - _fd_deriv(F, lo, a_next, h)) / (2.0 * h)


def chart_boundary_data(atlas: Atlas, i: int, Delta: float, n_dirs=32):
    """Boundary images phi_i(boundary of U_i) and the chart-coordinate width of
    the indicator transition band {r^2 - Delta <= d^2 <= r^2}.

    Boundary points are found by bisection along parameter-space rays from
    the chart center."""
    m = atlas.manifold
    chart = atlas.charts[i]
    d = m.intrinsic_dim
    u0 = m.param_of_point(chart.center)
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        angles = np.linspace(0.0, 2.0 * math.pi, n_dirs, endpoint=False)
        if d == 2:
            dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        else:
            rng = np.random.default_rng(11)
            dirs = rng.standard_normal((n_dirs, d))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    def radial_point(w, target):
        def g(t):
            return float(np.linalg.norm(m.embed((u0 + t * w)[None])[0] - chart.center)) - target

        t_hi = 1e-3
        for _ in range(60):
            if g(t_hi) > 0:
                break
            t_hi *= 1.7
        else:
            raise ChartError("no boundary bracket along direction")
        t_lo = 0.0
        for _ in range(80):
            mid = 0.5 * (t_lo + t_hi)
            if g(mid) > 0:
                t_hi = mid
            else:
                t_lo = mid
        return m.embed((u0 + 0.5 * (t_lo + t_hi) * w)[None])[0]

    r = chart.radius
    inner_target = math.sqrt(max(r * r - Delta, 0.0))
    z_outer, width = [], 0.0
    for w in dirs:
        xo = radial_point(w, r)
        xi = radial_point(w, inner_target)
        zo = chart_project(chart, xo, check=False)
        zi = chart_project(chart, xi, check=False)
        z_outer.append(zo)
        width = max(width, float(np.max(np.abs(zo - zi))))
    return np.array(z_outer), width


def chart_coefficients(
    f_on_M, atlas: Atlas, i: int, N: int, alpha: int, fd_step: float, Delta: float
):
    """Taylor coefficients of the chart pullback, with the boundary-band kill.

    Every grid node within band_width + 1/N (sup-norm, chart coordinates) of
    a boundary image is zeroed, so bumps whose support can reach the
    indicator's transition band contribute nothing; the per-chart network
    then vanishes identically on that band.
    """
    m = atlas.manifold
    d = m.intrinsic_dim
    v_list = multi_indices(d, alpha - 1)
    F = pullback_evaluator(f_on_M, atlas, i)
    from itertools import product as iter_product

    nodes = np.array(list(iter_product(range(N + 1), repeat=d)), dtype=np.float64) / N
    derivs = {tuple(a): _fd_deriv(F, nodes, tuple(a), fd_step) for a in v_list}
    table = _monomial_expansion_rows(nodes, derivs, v_list)
    z_bound, band = chart_boundary_data(atlas, i, Delta)
    kill_radius = band + 1.0 / N
    killed = 0
    for t, node in enumerate(nodes):
        gap = np.min(np.max(np.abs(z_bound - node), axis=1))
        if gap <= kill_radius:
            if np.any(table[t] != 0.0):
                killed += 1
            table[t] = 0.0
    coeffs = SurrogateCoefficients(d, N, alpha, v_list, table)
    return coeffs, {"band_width": band, "kill_radius": kill_radius, "killed_nodes": killed}


# ---------------------------------------------------------------------------
# the manifold approximator
# ---------------------------------------------------------------------------


class ManifoldApproximator:
    """Functional evaluator + optional compiled model of the chart-sum net."""

    def __init__(self, f_on_M, atlas, per_chart, sqdist_nets, indicator_net,
                 times_eta, times_delta, record):
        self.f_on_M = f_on_M
        self.atlas = atlas
        self.per_chart = per_chart  # list of SurrogateCoefficients
        self.sqdist_nets = sqdist_nets
        self.indicator_net = indicator_net
        self.times_eta = times_eta
        self.times_delta = times_delta
        self.record = record
        self.model = None
        self.class_params = None

    @property
    def N(self):
        return self.record["N"]

    def indicator_values(self, i, X):
        d2 = self.sqdist_nets[i].forward(np.atleast_2d(X))
        return self.indicator_net.forward(d2[:, None])

    def per_chart_eval(self, i, X):
        """Contribution of chart i (exactly zero off its indicator support)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        chart = self.atlas.charts[i]
        coeffs = self.per_chart[i]
        N, d = coeffs.N, coeffs.dim
        Z = chart_project(chart, X, check=False)
        ind = self.indicator_values(i, X)
        out = np.zeros(X.shape[0])
        m_lo = _candidates(N, Z)
        for off in _candidate_offsets(d):
            mm = m_lo + np.array(off, dtype=np.int64)
            valid = np.all((mm >= 0) & (mm <= N), axis=1)
            if not np.any(valid):
                continue
            mc = np.clip(mm, 0, N)
            idx = np.zeros(X.shape[0], dtype=np.int64)
            for k in range(d):
                idx = idx * (N + 1) + mc[:, k]
            c_rows = coeffs.table[idx]
            psis = [psi_value(3.0 * N * Z[:, k] - 3.0 * mc[:, k]) for k in range(d)]
            for j, v in enumerate(coeffs.v_list):
                cj = np.where(valid, c_rows[:, j], 0.0)
                if not np.any(cj != 0.0):
                    continue
                g = self._fold_term(Z, psis, v)
                out += cj * self.times_delta.forward(np.stack([g, ind], axis=1))
        return out

    def _fold_term(self, Z, psis, v):
        coords = monomial_factors(v)
        if coords:
            running = Z[:, coords[0]].copy()
            factors = [Z[:, j] for j in coords[1:]] + psis
        else:
            running = np.ones(Z.shape[0])
            factors = list(psis)
        for fac in factors:
            running = self.times_eta.forward(np.stack([running, fac], axis=1))
        return running

    def eval(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.zeros(X.shape[0])
        r2 = self.atlas.r**2
        for i, chart in enumerate(self.atlas.charts):
            d2 = np.sum((X - chart.center) ** 2, axis=1)
            mask = d2 <= 1.44 * r2  # beyond this the indicator is exactly 0
            if not np.any(mask):
                continue
            out[mask] += self.per_chart_eval(i, X[mask])
        return out

    def __call__(self, x):
        return float(self.eval(np.atleast_1d(x)[None])[0])

    def model_eval(self, X):
        if self.model is None:
            raise RuntimeError("approximator was built without compilation")
        return resnet_forward_batch(self.model, np.atleast_2d(X))


def _estimate_c2(atlas: Atlas, i: int, count=200, seed=3):
    """Lower-Lipschitz constant of the chart inverse, sampled pairwise."""
    m = atlas.manifold
    chart = atlas.charts[i]
    pts = atlas.samples
    d2 = np.sum((pts - chart.center) ** 2, axis=1)
    local = pts[d2 < chart.radius**2]
    if len(local) > count:
        idx = np.random.default_rng(seed).choice(len(local), count, replace=False)
        local = local[idx]
    Z = chart_project(chart, local, check=False)
    best = math.inf
    for a in range(0, len(local), 7):
        dx = np.linalg.norm(local - local[a], axis=1)
        dz = np.linalg.norm(Z - Z[a], axis=1)
        keep = dz > 1e-12
        if np.any(keep):
            best = min(best, float(np.min(dx[keep] / dz[keep])))
    return best


def build_manifold_approx(
    f_on_M,
    mspec: ManifoldSpec,
    Mt: int = None,
    Jt: int = None,
    N: int = None,
    r: float = None,
    atlas: Atlas = None,
    parameters: str = "desk",
    compile_model: bool = False,
    check_points: int = 30,
    seed: int = 0,
) -> ManifoldApproximator:
    """Compile a target on M into the chart-sum approximator.

    Resolution N = floor((Mt*Jt)^(1/d)) unless given directly.  The "desk"
    parameter policy sets Delta = r^2/(4N) (transition band narrower than a
    bump at study resolutions); "paper" uses Delta = 8 c2 r / N with the
    literal spacing precondition 2/N <= Delta/(4 c2 r).
    """
    d, D = mspec.intrinsic_dim, mspec.ambient_dim
    alpha = getattr(f_on_M, "order", 2)
    if N is None:
        if Mt is None or Jt is None:
            raise ValueError("need either N or both Mt and Jt")
        N = int(math.floor((Mt * Jt) ** (1.0 / d)))
    if N < 2:
        raise ValueError(f"resolution N must be >= 2, got {N}")
    if atlas is None:
        atlas = build_atlas(mspec, r if r is not None else 0.96 * mspec.reach / 4.0)
    r = atlas.r
    c2 = min(_estimate_c2(atlas, i) for i in range(atlas.chart_count))
    if parameters == "paper":
        Delta = 8.0 * c2 * r / N
        if 2.0 / N > Delta / (4.0 * c2 * r) + 1e-12:
            raise ValueError("spacing condition 2/N <= Delta/(4 c2 r) violated")
        if Delta > 0.75 * r * r:
            raise ValueError(
                f"Delta = {Delta:.4g} exceeds 0.75 r^2: indicator cannot cover the "
                f"partition supports at N = {N}"
            )
    elif parameters == "desk":
        Delta = r * r / (4.0 * N)
    else:
        raise ValueError(f"unknown parameter policy {parameters!r}")
    B = mspec.box_bound
    theta = Delta / (16.0 * B * B * D)
    eta = float(N) ** (-float(alpha))
    delta = max(float(N) ** (-float(alpha + d + 1)), 1e-10)
    box_intr = alpha + d + 1.0
    ind_params = IndicatorParams(r=r, Delta=Delta, theta=theta, B=B, D=D)
    indicator_net = build_indicator(ind_params)
    sqdist_nets = [build_sqdist_net(ch.center, theta, B) for ch in atlas.charts]
    times_eta = build_product2(eta, box_intr)
    times_delta = build_product2(delta, box_intr)

    fd_step = 1e-4 * r
    per_chart, kill_info = [], []
    for i in range(atlas.chart_count):
        coeffs, info = chart_coefficients(f_on_M, atlas, i, N, alpha, fd_step, Delta)
        per_chart.append(coeffs)
        kill_info.append(info)

    record = {
        "manifold": mspec.name,
        "d": d,
        "D": D,
        "N": N,
        "alpha": alpha,
        "eta": eta,
        "delta": delta,
        "delta_capped": float(N) ** (-float(alpha + d + 1)) < 1e-10,
        "Delta": Delta,
        "theta": theta,
        "w": ind_params.w,
        "r": r,
        "c2": c2,
        "chart_count": atlas.chart_count,
        "T_d": atlas.T_d,
        "parameters": parameters,
        "Mt": Mt,
        "Jt": Jt,
        "kill_info": kill_info,
        "coeff_bound": max(c.max_abs for c in per_chart),
    }
    approx = ManifoldApproximator(
        f_on_M, atlas, per_chart, sqdist_nets, indicator_net, times_eta, times_delta, record
    )
    if not compile_model:
        return approx

    cnns = []
    for i, chart in enumerate(atlas.charts):
        A = chart.scale * chart.frame.T
        cvec = chart.shift - A @ chart.center
        ind_chain = sn_chain(sqdist_nets[i], indicator_net)
        coeffs = per_chart[i]
        from itertools import product as iter_product
        from .scalarnets import build_monomial_bump

        for t, mm in enumerate(iter_product(range(N + 1), repeat=d)):
            for j, v in enumerate(coeffs.v_list):
                g = build_monomial_bump(mm, v, N, eta, box=box_intr)
                g_x = sn_input_affine(g, A, cvec)
                depth = max(g_x.depth, ind_chain.depth)
                pair = sn_parallel(
                    [
                        (sn_pad(g_x, depth), list(range(D))),
                        (sn_pad(ind_chain, depth), list(range(D))),
                    ]
                )
                term = sn_chain(pair, times_delta)
                term = sn_scale_output(term, coeffs.table[t, j])
                cnns.append(mlp_to_cnn(term.as_mlp(), 2))
    depth = max(c.depth for c in cnns)
    cnns = [extend_cnn_depth(c, depth) for c in cnns]
    J0 = max(c.width for c in cnns)
    groups = parallel_sum(cnns, Jt if Jt is not None else J0)
    model = assemble_resnet(groups)
    approx.model = model
    approx.class_params = audit_class(model)
    record["terms"] = len(cnns)
    record["Mt"] = Mt if Mt is not None else len(groups)
    record["Jt"] = Jt if Jt is not None else J0

    pts = mspec.sample_points(997)
    idx = np.random.default_rng(seed).choice(len(pts), min(check_points, len(pts)), replace=False)
    X = pts[idx]
    gap = float(np.max(np.abs(approx.eval(X) - resnet_forward_batch(model, X))))
    record["compile_gap"] = gap
    if gap > 1e-8:
        raise CompileEqualityError(f"compiled manifold model deviates by {gap:.3e}")
    return approx


def manifold_norm(e_on_M, atlas: Atlas, k: int, resolution=60, fd_step=1e-5):
    """Chart-sum W^{k,inf} estimate: sum_i sup |(e * rho_i) o phi_i^{-1}| over
    the chart images (k = 1 adds chart-coordinate central differences).

    Grid points with no chart preimage are skipped; the skip count is
    returned alongside the value.
    """
    if k not in (0, 1):
        raise ValueError(f"k must be 0 or 1, got {k}")
    m = atlas.manifold
    d = m.intrinsic_dim
    total, skipped = 0.0, 0
    axis = (np.arange(resolution) + 0.5) / resolution + math.sqrt(2.0) * 1e-7
    if d == 1:
        Zg = axis[:, None]
    else:
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        Zg = np.stack([mm.ravel() for mm in mesh], axis=1)

    for i in range(atlas.chart_count):
        F = _weighted_pullback(e_on_M, atlas, i)
        best = 0.0
        for z in Zg:
            val = F(z)
            if val is None:
                skipped += 1
                continue
            best = max(best, abs(val))
            if k == 1:
                for j in range(d):
                    hi, lo = z.copy(), z.copy()
                    hi[j] += fd_step
                    lo[j] -= fd_step
                    vh, vl = F(hi), F(lo)
                    if vh is None or vl is None:
                        skipped += 1
                        continue
                    best = max(best, abs(vh - vl) / (2.0 * fd_step))
        total += best
    return total, skipped


def _weighted_pullback(e_on_M, atlas, i):
    chart = atlas.charts[i]
    m = atlas.manifold

    def F(z):
        try:
            x = chart_invert(chart, m, z)
        except ChartError:
            return None
        w = rho_weights(atlas, x[None])[0, i]
        if w == 0.0:
            return 0.0
        return float(np.asarray(e_on_M(x[None])).ravel()[0]) * w

    return F


def atlas_to_dict(atlas: Atlas) -> dict:
    """Chart geometry (centers, frames, scales) as a JSON-ready document."""
    return {
        "version": 1,
        "kind": "atlas",
        "manifold": atlas.manifold.name,
        "r": atlas.r,
        "T_d": atlas.T_d,
        "charts": [
            {
                "center": ch.center.tolist(),
                "frame": ch.frame.tolist(),
                "scale": ch.scale,
                "shift": ch.shift.tolist(),
                "radius": ch.radius,
            }
            for ch in atlas.charts
        ],
    }


def atlas_from_dict(doc: dict, mspec: ManifoldSpec, sample_count=4096) -> Atlas:
    """Rebuild an Atlas from its serialized chart geometry."""
    if doc.get("kind") != "atlas":
        raise ChartError(f"not an atlas document: kind={doc.get('kind')!r}")
    if doc.get("manifold") != mspec.name:
        raise ChartError(f"atlas is for {doc.get('manifold')!r}, not {mspec.name!r}")
    charts = [
        Chart(
            center=np.array(c["center"]),
            frame=np.array(c["frame"]),
            scale=float(c["scale"]),
            shift=np.array(c["shift"]),
            radius=float(c["radius"]),
        )
        for c in doc["charts"]
    ]
    return Atlas(mspec, charts, float(doc["r"]), mspec.sample_points(sample_count), doc.get("T_d", 0.0))
