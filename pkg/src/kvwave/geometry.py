"""Medium metric ``G = (K / rho)^{-1}``, its geodesics, GCC brute force and Hessian tests.

Points are arrays with trailing axis ``dim``; metric callables are vectorized
over leading axes. ``dG(x)[..., k, i, j]`` is ``d G_ij / d x_k``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator, make_interp_spline
from scipy.linalg import eigh

from .errors import MetricError


class MetricModel:
    """Riemannian metric with first derivatives.

    Parameters
    ----------
    G, dG : callable
        ``G(x) -> (..., d, d)`` and ``dG(x) -> (..., d, d, d)``.
    dim : int
    source : {"analytic", "from-coefficients"}
    domain : callable, optional
        Predicate on points where the metric is defined (default: everywhere).
    """

    def __init__(self, G, dG, dim, source="analytic", name="", domain=None):
        self._G = G
        self._dG = dG
        self.dim = dim
        self.source = source
        self.name = name
        self.domain = domain

    def G(self, x):
        return self._G(np.asarray(x, dtype=float))

    def dG(self, x):
        return self._dG(np.asarray(x, dtype=float))

    def inv(self, x):
        return np.linalg.inv(self.G(x))

    def christoffel(self, x):
        """``Gamma[..., k, i, j]`` of the Levi-Civita connection."""
        g = self.G(x)
        d = self.dG(x)
        # T_lij = (d_i G_lj + d_j G_li - d_l G_ij) / 2
        T = 0.5 * (np.einsum("...ilj->...lij", d) + np.einsum("...jli->...lij", d) - d)
        return np.einsum("...kl,...lij->...kij", np.linalg.inv(g), T)

    def check_spd(self, x):
        """Raise :class:`MetricError` at the first point where G is not SPD."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.domain is not None:
            out = ~self.domain(x)
            if out.any():
                loc = x[np.argwhere(out)[0][0]]
                raise MetricError(f"metric {self.name} is undefined at {loc.tolist()}", loc)
        ev = np.linalg.eigvalsh(self.G(x))[..., 0]
        bad = ~(np.isfinite(ev) & (ev > 0))
        if bad.any():
            loc = x[np.argwhere(bad)[0][0]]
            raise MetricError(f"metric {self.name} is not SPD at {loc.tolist()}", loc)

    def derivative_defect(self, points, h=1e-5):
        """Largest gap between ``dG`` and centred differences of ``G``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        worst = 0.0
        an = self.dG(pts)
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            fd = (self.G(pts + e) - self.G(pts - e)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(fd - an[:, k]))))
        return worst


# --------------------------------------------------------------------------
# analytic metrics


def euclidean_metric(dim=2):
    def G(x):
        return np.broadcast_to(np.eye(dim), x.shape[:-1] + (dim, dim)).copy()

    def dG(x):
        return np.zeros(x.shape[:-1] + (dim, dim, dim))

    return MetricModel(G, dG, dim, "analytic", "euclidean")


def hyperbolic_metric(shift=0.0):
    """Half-plane model ``G = I / y^2`` with ``y = x_2 + shift``."""

    def G(x):
        y = x[..., 1] + shift
        return np.eye(2) / (y * y)[..., None, None]

    def dG(x):
        y = x[..., 1] + shift
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 1, :, :] = np.eye(2) * (-2.0 / y ** 3)[..., None, None]
        return out

    return MetricModel(G, dG, 2, "analytic", "hyperbolic-halfplane",
                       domain=lambda x: x[..., 1] + shift > 0)


def anisotropic_metric(amp=1.0):
    """A smooth non-conformal metric used for cross-checking the two flows."""

    def G(x):
        x1, x2 = x[..., 0], x[..., 1]
        g = np.empty(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = 1.2 + 0.3 * amp * np.sin(2 * x1 + x2)
        g[..., 1, 1] = 1.0 + 0.25 * amp * np.cos(x1 - 2 * x2)
        g[..., 0, 1] = g[..., 1, 0] = 0.2 * amp * np.sin(x1 * x2)
        return g

    def dG(x):
        x1, x2 = x[..., 0], x[..., 1]
        d = np.zeros(x.shape[:-1] + (2, 2, 2))
        c = np.cos(2 * x1 + x2)
        s = np.sin(x1 - 2 * x2)
        cc = np.cos(x1 * x2)
        d[..., 0, 0, 0] = 0.6 * amp * c
        d[..., 1, 0, 0] = 0.3 * amp * c
        d[..., 0, 1, 1] = -0.25 * amp * s
        d[..., 1, 1, 1] = 0.5 * amp * s
        d[..., 0, 0, 1] = d[..., 0, 1, 0] = 0.2 * amp * x2 * cc
        d[..., 1, 0, 1] = d[..., 1, 1, 0] = 0.2 * amp * x1 * cc
        return d

    return MetricModel(G, dG, 2, "analytic", "anisotropic")


def radial_metric(center=(0.5, 0.5), strength=0.5):
    """Conformal metric ``exp(-strength |x - c|^2) I``: rays bend toward ``c``."""
    c = np.asarray(center, dtype=float)

    def G(x):
        r2 = np.sum((x - c) ** 2, axis=-1)
        return np.exp(-strength * r2)[..., None, None] * np.eye(2)

    def dG(x):
        r2 = np.sum((x - c) ** 2, axis=-1)
        f = np.exp(-strength * r2)
        grad = -2 * strength * (x - c) * f[..., None]
        return grad[..., :, None, None] * np.eye(2)

    return MetricModel(G, dG, 2, "analytic", "radial")


ANALYTIC_METRICS = {
    "euclidean": lambda dim=2, **kw: euclidean_metric(dim),
    "hyperbolic-halfplane": lambda dim=2, shift=0.0: hyperbolic_metric(shift),
    "anisotropic": lambda dim=2, amp=1.0: anisotropic_metric(amp),
    "radial": lambda dim=2, **kw: radial_metric(**kw),
}


def analytic_metric(name, dim=2, **params):
    try:
        return ANALYTIC_METRICS[name](dim=dim, **params)
    except KeyError:
        raise MetricError(f"unknown analytic metric {name!r}; choose from {sorted(ANALYTIC_METRICS)}") from None


def _cubic_interpolant(grid, A):
    """Smooth tensor-product cubic spline of cell-sampled components, valid on the whole box."""
    d = grid.dim
    axes = grid.cell_axes()
    flat = A.reshape(grid.cell_shape + (d * d,))
    if d == 1:
        spl = make_interp_spline(axes[0], flat[:, 0], k=3)
        return lambda pts: spl(pts[:, 0])[:, None]
    # a margin of two cells keeps the final step of an exiting ray on the same polynomial piece
    hx, hy = grid.h
    bbox = [-2 * hx, grid.extents[0] + 2 * hx, -2 * hy, grid.extents[1] + 2 * hy]
    comps = [RectBivariateSpline(axes[0], axes[1], flat[..., c], bbox=bbox) for c in range(d * d)]
    return lambda pts: np.stack([sp.ev(pts[:, 0], pts[:, 1]) for sp in comps], axis=-1)


def metric_from_coefficients(grid, coeffs, fd_step=1e-5, method="linear"):
    """Metric of the sampled medium.

    ``K / rho`` is interpolated between cell centres, then inverted; ``dG`` is
    a centred difference of the interpolated ``G`` with step ``fd_step``.
    ``method="linear"`` is (multi)linear with linear extrapolation up to the
    box boundary. Its kinks at cell centres make ``dG`` inconsistent with
    ``G`` there, so the ray speed drifts for media that are not linear in
    ``x``; ``method="cubic"`` uses a C2 spline instead.
    """
    d = grid.dim
    A = coeffs.K / coeffs.rho[..., None, None]
    if method == "linear":
        interp = RegularGridInterpolator(tuple(grid.cell_axes()), A.reshape(grid.cell_shape + (d * d,)),
                                         method="linear", bounds_error=False, fill_value=None)
    elif method == "cubic":
        interp = _cubic_interpolant(grid, A)
    else:
        raise ValueError(f"unknown interpolation {method!r}; use 'linear' or 'cubic'")

    def Ainv_at(x):
        flat = x.reshape(-1, d)
        a = interp(flat).reshape(x.shape[:-1] + (d, d))
        a = 0.5 * (a + np.swapaxes(a, -1, -2))
        return a

    def G(x):
        return np.linalg.inv(Ainv_at(x))

    def dG(x):
        out = np.empty(x.shape[:-1] + (d, d, d))
        for k in range(d):
            e = np.zeros(d)
            e[k] = fd_step
            out[..., k, :, :] = (G(x + e) - G(x - e)) / (2 * fd_step)
        return out

    return MetricModel(G, dG, d, "from-coefficients", f"from-coefficients-{method}")


# --------------------------------------------------------------------------
# flows


@dataclass
class GeodesicPath:
    t: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    xi: np.ndarray
    speed_trace: np.ndarray
    exit: str
    t_exit: float

    @property
    def samples(self):
        return list(zip(self.t, self.x, self.xdot))

    def speed_drift(self):
        """Largest relative deviation of the speed from its start, per unit time."""
        s0 = self.speed_trace[0]
        T = self.t[-1] - self.t[0]
        if T <= 0:
            return 0.0
        return float(np.max(np.abs(self.speed_trace - s0)) / abs(s0) / T)


def _rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def hamiltonian_rhs(metric):
    """``(x, xi) -> (G^{-1} xi, 1/2 xdot^T dG xdot)`` on stacked ``(..., 2d)`` arrays."""
    d = metric.dim

    def f(y):
        x, xi = y[..., :d], y[..., d:]
        xd = np.linalg.solve(metric.G(x), xi[..., None])[..., 0]
        dxi = 0.5 * np.einsum("...kij,...i,...j->...k", metric.dG(x), xd, xd)
        return np.concatenate([xd, dxi], axis=-1)

    return f


def geodesic_rhs(metric):
    """``(x, v) -> (v, -Gamma(v, v))`` on stacked ``(..., 2d)`` arrays."""
    d = metric.dim

    def f(y):
        x, v = y[..., :d], y[..., d:]
        acc = -np.einsum("...kij,...i,...j->...k", metric.christoffel(x), v, v)
        return np.concatenate([v, acc], axis=-1)

    return f


def _classify(metric, x, grid, stop, omega_is_collar):
    """Exit tag per point (``""`` while the ray continues)."""
    tag = np.full(x.shape[:-1], "", dtype=object)
    if stop is not None:
        tag[stop(x)] = "left-region"
    if grid is not None:
        inside = grid.inside(x)
        hit = grid.in_omega(x) & (tag == "")
        tag[hit] = "hit-omega"
        tag[(~inside) & (tag == "")] = "hit-boundary"
    if metric.domain is not None:
        tag[(~metric.domain(x)) & (tag == "")] = "left-domain"
    return tag


def _trace(metric, y0, rhs, to_xi, to_xdot, dt, t_max, grid=None, stop=None):
    d = metric.dim
    metric.check_spd(y0[:d])
    nmax = int(np.ceil(t_max / dt - 1e-9))
    ys = [y0]
    ts = [0.0]
    tag = ""
    y = y0
    for k in range(1, nmax + 1):
        h = min(dt, t_max - (k - 1) * dt)
        y = _rk4(rhs, y, h)
        if not np.all(np.isfinite(y)):
            raise MetricError(f"ray blew up near {ys[-1][:d].tolist()}", ys[-1][:d])
        ts.append(ts[-1] + h)
        ys.append(y)
        tag = _classify(metric, y[None, :d], grid, stop, None)[0]
        if tag:
            break
        metric.check_spd(y[:d])
    ys = np.array(ys)
    x = ys[:, :d]
    xi = to_xi(x, ys[:, d:])
    xd = to_xdot(x, ys[:, d:])
    speed = np.einsum("...ij,...i,...j->...", metric.G(x), xd, xd)
    return GeodesicPath(np.array(ts), x, xd, xi, speed, tag or "max-time", ts[-1])


def hamiltonian_flow(metric, x0, xi0, dt, t_max, grid=None, stop=None):
    """Bicharacteristic projection from ``(x0, xi0)`` by fixed-step RK4.

    Stops at ``t_max``, on entering omega or crossing the box of ``grid``, or
    where ``stop(x)`` is true.
    """
    x0 = np.asarray(x0, dtype=float)
    xi0 = np.asarray(xi0, dtype=float)
    if not np.any(xi0):
        raise ValueError("xi0 must be nonzero")
    y0 = np.concatenate([x0, xi0])
    to_xdot = lambda x, xi: np.linalg.solve(metric.G(x), xi[..., None])[..., 0]
    return _trace(metric, y0, hamiltonian_rhs(metric), lambda x, xi: xi, to_xdot, dt, t_max, grid, stop)


def geodesic_flow(metric, x0, v0, dt, t_max, grid=None, stop=None, normalize=False):
    """Geodesic from ``(x0, v0)`` integrating ``x'' = -Gamma(x', x')``.

    ``v0`` must have unit ``G``-length unless ``normalize`` is set.
    """
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    g0 = metric.G(x0)
    s = float(v0 @ g0 @ v0)
    if normalize:
        v0 = v0 / np.sqrt(s)
    elif abs(s - 1.0) > 1e-9:
        raise ValueError(f"v0 must have unit speed G(x0) v0 . v0 = 1, got {s}")
    y0 = np.concatenate([x0, v0])
    to_xi = lambda x, v: np.einsum("...ij,...j->...i", metric.G(x), v)
    return _trace(metric, y0, geodesic_rhs(metric), to_xi, lambda x, v: v, dt, t_max, grid, stop)


def unit_directions(metric, x, count):
    """``count`` equally spaced Euclidean angles (or +-1 in 1D), scaled to unit G-length."""
    x = np.asarray(x, dtype=float)
    if metric.dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        ang = 2 * np.pi * np.arange(count) / count
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    g = metric.G(x)
    norms = np.sqrt(np.einsum("ij,nj,ni->n", g, dirs, dirs))
    return dirs / norms[:, None]


def trace_batch(metric, x0, v0, dt, t_max, grid=None, stop=None, record=False):
    """Trace many unit geodesics at once.

    Returns ``(exit_tags, exit_times, paths)``; ``paths`` is a list of sample
    arrays when ``record`` is set, else ``None``.
    """
    d = metric.dim
    y = np.concatenate([np.asarray(x0, float), np.asarray(v0, float)], axis=-1)
    nray = y.shape[0]
    rhs = geodesic_rhs(metric)
    tags = np.full(nray, "max-time", dtype=object)
    times = np.full(nray, np.nan)
    active = np.ones(nray, dtype=bool)
    hist = [[y[i, :d].copy()] for i in range(nray)] if record else None
    nmax = int(np.ceil(t_max / dt - 1e-9))
    t = 0.0
    for k in range(1, nmax + 1):
        h = min(dt, t_max - t)
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        ya = _rk4(rhs, y[idx], h)
        if not np.all(np.isfinite(ya)):
            bad = idx[~np.all(np.isfinite(ya), axis=-1)][0]
            raise MetricError(f"ray {bad} blew up near {y[bad, :d].tolist()}", y[bad, :d])
        y[idx] = ya
        t += h
        tag = _classify(metric, ya[:, :d], grid, stop, None)
        done = tag != ""
        tags[idx[done]] = tag[done]
        times[idx[done]] = t
        active[idx[done]] = False
        if record:
            for j, i in enumerate(idx):
                hist[i].append(ya[j, :d].copy())
    times[active] = t
    paths = [np.array(p) for p in hist] if record else None
    return tags, times, paths


@dataclass
class GCCReport:
    satisfied: bool
    T0_estimate: float
    worst_ray: tuple
    hit_times: np.ndarray
    exits: np.ndarray
    launches: np.ndarray
    directions: np.ndarray
    t_cap: float
    dt: float

    def __iter__(self):
        return iter((self.satisfied, self.T0_estimate, self.worst_ray))

    def to_dict(self):
        return {
            "satisfied": bool(self.satisfied),
            "T0_estimate": float(self.T0_estimate),
            "worst_ray": {"x0": list(map(float, self.worst_ray[0])),
                          "v0": list(map(float, self.worst_ray[1]))},
            "rays": int(len(self.hit_times)),
            "non_hitting": int(np.sum(~np.isfinite(self.hit_times))),
            "t_cap": self.t_cap,
            "dt": self.dt,
        }


def launch_positions(grid, stride=4):
    """Centres of every ``stride``-th cell outside omega (per axis)."""
    centers = grid.cell_centers()
    inner = ~grid.omega_mask
    if not inner.any():
        return np.empty((0, grid.dim))
    # stride counted from the first non-omega cell on each axis
    coords = np.argwhere(inner)
    lo = coords.min(axis=0)
    sel = np.all((coords - lo) % stride == 0, axis=1)
    pts = coords[sel]
    return centers[tuple(pts.T)]


def check_gcc(metric, grid, samples_pos=None, samples_dir=32, t_cap=5.0, dt=1e-3, stride=4):
    """Brute-force check that every sampled unit geodesic enters omega.

    A ray that reaches the box boundary counts as hitting omega when omega is
    a full boundary collar (it must have crossed the collar). Otherwise it is
    a failure, as is a ray still in flight at ``t_cap``.
    """
    if not grid.omega_mask.any():
        raise ValueError("check_gcc needs a nonempty omega")
    pos = launch_positions(grid, stride) if samples_pos is None else np.atleast_2d(samples_pos)
    x0, v0 = [], []
    for x in pos:
        for v in unit_directions(metric, x, samples_dir):
            x0.append(x)
            v0.append(v)
    x0 = np.array(x0)
    v0 = np.array(v0)
    tags, times, _ = trace_batch(metric, x0, v0, dt, t_cap, grid=grid)
    collar = grid.omega_is_collar()
    hit = (tags == "hit-omega") | ((tags == "hit-boundary") & collar)
    hit_times = np.where(hit, times, np.inf)
    satisfied = bool(hit.all())
    if satisfied:
        w = int(np.argmax(hit_times))
        T0 = float(hit_times[w])
    else:
        w = int(np.nonzero(~hit)[0][0])
        T0 = float("inf")
    return GCCReport(satisfied, T0, (x0[w], v0[w]), hit_times, tags, x0, v0, float(t_cap), float(dt))


# --------------------------------------------------------------------------
# Hessian and escape certificates


@dataclass
class HessianReport:
    region: np.ndarray
    min_eigenvalue: float
    eigenvalues: np.ndarray
    positive: bool


def finite_difference_derivs(phi, dim, h=1e-4):
    """Centred-difference gradient and Hessian of a scalar function."""

    def derivs(x):
        x = np.asarray(x, dtype=float)
        grad = np.empty(x.shape)
        hess = np.empty(x.shape + (dim,))
        f0 = phi(x)
        E = np.eye(dim) * h
        for i in range(dim):
            fp, fm = phi(x + E[i]), phi(x - E[i])
            grad[..., i] = (fp - fm) / (2 * h)
            hess[..., i, i] = (fp - 2 * f0 + fm) / h ** 2
            for j in range(i + 1, dim):
                v = (phi(x + E[i] + E[j]) - phi(x + E[i] - E[j])
                     - phi(x - E[i] + E[j]) + phi(x - E[i] - E[j])) / (4 * h * h)
                hess[..., i, j] = hess[..., j, i] = v
        return grad, hess

    return derivs


def riemannian_hessian(metric, phi_derivs, x):
    """``H_ij = d_ij phi - Gamma^k_ij d_k phi`` (symmetrized)."""
    grad, hess = phi_derivs(x)
    H = hess - np.einsum("...kij,...k->...ij", metric.christoffel(x), grad)
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def hessian(metric, phi, phi_derivs, region):
    """Smallest ``H(v, v)`` over unit-G vectors ``v`` at each region point."""
    pts = np.atleast_2d(np.asarray(region, dtype=float))
    metric.check_spd(pts)
    derivs = phi_derivs if phi_derivs is not None else finite_difference_derivs(phi, metric.dim)
    H = riemannian_hessian(metric, derivs, pts)
    g = metric.G(pts)
    ev = np.array([eigh(H[i], g[i], eigvals_only=True)[0] for i in range(len(pts))])
    m = float(ev.min())
    return HessianReport(pts, m, ev, m > 0)


def hyperbolic_distance_sq(center, shift=0.0):
    """Squared half-plane distance to ``center`` with exact first and second derivatives.

    Returns ``(phi, derivs)``. Near the centre a series in
    ``delta = |x - c|^2 / (2 y y_c)`` replaces the closed form.
    """
    c = np.asarray(center, dtype=float)

    def f_parts(delta):
        small = delta < 1e-4
        dl = np.where(small, 1.0, delta)
        s = np.arccosh(1.0 + dl)
        root = np.sqrt(dl * (2.0 + dl))
        f = s * s
        f1 = 2 * s / root
        f2 = 2.0 / (dl * (2 + dl)) - 2 * s * (1 + dl) / root ** 3
        fs = 2 * delta - delta ** 2 / 3 + 4 * delta ** 3 / 45
        f1s = 2 - 2 * delta / 3 + 4 * delta ** 2 / 15
        f2s = -2.0 / 3 + 8 * delta / 15
        return (np.where(small, fs, f), np.where(small, f1s, f1), np.where(small, f2s, f2))

    def parts(x):
        x = np.asarray(x, dtype=float)
        y = x[..., 1] + shift
        yc = c[1] + shift
        r = x - c
        N = np.sum(r * r, axis=-1)
        delta = N / (2 * y * yc)
        g = 2 * y * y - 2 * yc * y - N
        dd = np.stack([r[..., 0] / (yc * y), g / (2 * yc * y * y)], axis=-1)
        d2 = np.empty(x.shape + (2,))
        d2[..., 0, 0] = 1.0 / (yc * y)
        d2[..., 0, 1] = d2[..., 1, 0] = -r[..., 0] / (yc * y * y)
        d2[..., 1, 1] = 1.0 / (yc * y) - g / (yc * y ** 3)
        return delta, dd, d2

    def phi(x):
        delta, _, _ = parts(x)
        return f_parts(delta)[0]

    def derivs(x):
        delta, dd, d2 = parts(x)
        _, f1, f2 = f_parts(delta)
        grad = f1[..., None] * dd
        hess = f2[..., None, None] * dd[..., :, None] * dd[..., None, :] + f1[..., None, None] * d2
        return grad, hess

    return phi, derivs


def squared_distance(center):
    """Euclidean ``|x - c|^2 / 2`` with derivatives."""
    c = np.asarray(center, dtype=float)
    d = c.size

    def phi(x):
        return 0.5 * np.sum((np.asarray(x) - c) ** 2, axis=-1)

    def derivs(x):
        x = np.asarray(x, dtype=float)
        return x - c, np.broadcast_to(np.eye(d), x.shape + (d,)).copy()

    return phi, derivs


@dataclass
class Region:
    """Open set given by a membership predicate and sample points.

    ``points`` lie inside and serve as ray launches; ``boundary`` samples the
    closure's edge so that Hessian margin and range of phi cover all of U.
    """

    contains: object
    points: np.ndarray
    boundary: np.ndarray = None

    def closure_points(self):
        if self.boundary is None:
            return self.points
        return np.concatenate([self.points, self.boundary])


def disk_region(center, radius, n=9):
    c = np.asarray(center, dtype=float)
    g = np.linspace(-radius, radius, n)
    X, Y = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1) + c
    keep = np.sum((pts - c) ** 2, axis=-1) < (0.98 * radius) ** 2
    ang = 2 * np.pi * np.arange(8 * n) / (8 * n)
    rim = c + radius * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    return Region(lambda x: np.sum((np.asarray(x) - c) ** 2, axis=-1) < radius ** 2, pts[keep], rim)


@dataclass
class EscapeCertificate:
    certified: bool
    c: float
    bound: float
    phi_range: float
    max_exit_time: float
    rays: int
    reason: str = ""

    def __bool__(self):
        return bool(self.certified)


def escape_certificate(metric, phi_bundle, region_U, directions=16, dt=1e-3):
    """Certify that no geodesic stays in ``U``.

    ``phi_bundle`` is ``(phi, phi_derivs)``. The Hessian margin ``c`` and the
    range of ``phi`` are taken over the region's sample points, giving the
    escape-time bound ``2 sqrt(2 (max phi - min phi) / c)``; every sampled unit
    geodesic launched in ``U`` must then leave ``U`` within that bound.
    """
    phi, derivs = phi_bundle
    pts = region_U.points
    rep = hessian(metric, phi, derivs, region_U.closure_points())
    if not rep.positive:
        return EscapeCertificate(False, rep.min_eigenvalue, np.inf, np.nan, np.nan, 0,
                                 "Hessian is not positive on the region")
    vals = phi(region_U.closure_points())
    span = float(np.max(vals) - np.min(vals))
    c = rep.min_eigenvalue
    bound = 2.0 * np.sqrt(2.0 * span / c)
    x0, v0 = [], []
    for x in pts:
        for v in unit_directions(metric, x, directions):
            x0.append(x)
            v0.append(v)
    stop = lambda x: ~region_U.contains(x)
    tags, times, _ = trace_batch(metric, np.array(x0), np.array(v0), dt, 1.5 * bound + 10 * dt, stop=stop)
    exited = tags == "left-region"
    worst = float(np.max(times))
    ok = bool(np.all(exited) and worst <= bound + dt)
    reason = "" if ok else "a sampled geodesic stayed in the region beyond the bound"
    return EscapeCertificate(ok, c, float(bound), span, worst, len(x0), reason)


def union_certificate(certificates, regions=None):
    """Pairwise disjoint regions, each certified, certify their union."""
    if regions is not None:
        for i, ri in enumerate(regions):
            for j, rj in enumerate(regions):
                if i != j and np.any(rj.contains(ri.points)):
                    return False
    return all(bool(c) for c in certificates)


# --------------------------------------------------------------------------
# export


def write_path(path_obj, path, seed=None):
    d = path_obj.x.shape[1]
    cols = ["t"] + [f"x{i + 1}" for i in range(d)] + [f"xi{i + 1}" for i in range(d)] + ["speed"]
    data = np.column_stack([path_obj.t, path_obj.x, path_obj.xi, path_obj.speed_trace])
    np.savetxt(path, data, delimiter=",", header=f"seed={seed}\n" + ",".join(cols), fmt="%.17g")


def write_gcc_report(report, path, seed=None):
    rec = {"seed": seed, **report.to_dict()}
    with open(path, "w") as fh:
        json.dump(rec, fh, indent=2, sort_keys=True)
        fh.write("\n")


def plot_ray_fan(grid, metric, report, path, max_rays=256, dt=None):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "kvwave"
    fig, ax = plt.subplots(figsize=(5, 5))
    ext = grid.extents
    ax.imshow(grid.omega_mask.T, origin="lower", extent=(0, ext[0], 0, ext[1]),
              cmap="Greys", alpha=0.35, vmin=0, vmax=1.5)
    n = len(report.launches)
    sel = np.linspace(0, n - 1, min(n, max_rays)).astype(int)
    _, _, paths = trace_batch(metric, report.launches[sel].copy(), report.directions[sel].copy(),
                              dt or report.dt, report.t_cap, grid=grid, record=True)
    for i, p in zip(sel, paths):
        ok = np.isfinite(report.hit_times[i])
        ax.plot(p[:, 0], p[:, 1], lw=0.5, color="tab:blue" if ok else "tab:red")
    ax.set_xlim(0, ext[0])
    ax.set_ylim(0, ext[1])
    ax.set_aspect("equal")
    verdict = "satisfied" if report.satisfied else "violated"
    ax.set_title(f"GCC {verdict}, T0 ~ {report.T0_estimate:.3g}")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
