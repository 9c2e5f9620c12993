"""Grids, coefficient fields, damping masks and the state vector.

Layout conventions used throughout the package:

* The domain is the box ``[0, L_1] x ... x [0, L_d]`` with ``d`` in {1, 2}.
* Unknowns live on the ``(n_1 + 1) x ... x (n_d + 1)`` nodes ``x_i = i h``;
  nodal vectors are flat arrays in C order.
* Coefficients and the damping region are sampled per cell, one value at each
  cell centre, and stored with shape ``(n_1, ..., n_d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import CoefficientError, GridError

_SYM_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class Grid:
    dim: int
    extents: tuple
    n: tuple
    h: tuple
    boundary_mask: np.ndarray
    omega_mask: np.ndarray
    collar_width: float = 0.0

    @property
    def node_shape(self):
        return tuple(k + 1 for k in self.n)

    @property
    def cell_shape(self):
        return tuple(self.n)

    @property
    def num_nodes(self):
        return int(np.prod(self.node_shape))

    @property
    def num_cells(self):
        return int(np.prod(self.cell_shape))

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    @property
    def interior_mask(self):
        return ~self.boundary_mask

    def node_axes(self):
        return [np.arange(k + 1) * hk for k, hk in zip(self.n, self.h)]

    def cell_axes(self):
        return [(np.arange(k) + 0.5) * hk for k, hk in zip(self.n, self.h)]

    def node_coords(self):
        """Node coordinates, shape ``(num_nodes, dim)``."""
        mesh = np.meshgrid(*self.node_axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def cell_centers(self):
        """Cell-centre coordinates, shape ``cell_shape + (dim,)``."""
        mesh = np.meshgrid(*self.cell_axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def node_weights(self):
        """Dual-cell volume of every node (trapezoidal weights)."""
        w = np.ones(self.node_shape)
        for ax, hk in enumerate(self.h):
            wk = np.full(self.n[ax] + 1, hk)
            wk[0] = wk[-1] = 0.5 * hk
            shape = [1] * self.dim
            shape[ax] = -1
            w = w * wk.reshape(shape)
        return w.ravel()

    def locate_cell(self, x):
        """Cell multi-index containing each point of ``x`` (shape ``(..., dim)``).

        Points outside the box get index -1 on the offending axis.
        """
        x = np.asarray(x, dtype=float)
        idx = np.empty(x.shape, dtype=np.int64)
        for ax in range(self.dim):
            k = np.floor(x[..., ax] / self.h[ax]).astype(np.int64)
            k = np.where(x[..., ax] == self.extents[ax], self.n[ax] - 1, k)
            bad = (k < 0) | (k >= self.n[ax])
            idx[..., ax] = np.where(bad, -1, k)
        return idx

    def inside(self, x):
        x = np.asarray(x, dtype=float)
        ok = np.ones(x.shape[:-1], dtype=bool)
        for ax in range(self.dim):
            ok &= (x[..., ax] >= 0.0) & (x[..., ax] <= self.extents[ax])
        return ok

    def in_omega(self, x):
        """True where the point lies in a cell flagged by ``omega_mask``."""
        idx = self.locate_cell(x)
        valid = np.all(idx >= 0, axis=-1)
        safe = np.where(idx < 0, 0, idx)
        hit = self.omega_mask[tuple(safe[..., ax] for ax in range(self.dim))]
        return valid & hit

    def omega_is_collar(self):
        """Whether omega contains every cell touching the boundary."""
        edge = np.zeros(self.cell_shape, dtype=bool)
        for ax in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[ax] = 0
            edge[tuple(sl)] = True
            sl[ax] = -1
            edge[tuple(sl)] = True
        return bool(np.all(self.omega_mask[edge]))

    def with_omega(self, omega_mask):
        omega_mask = np.asarray(omega_mask, dtype=bool)
        if omega_mask.shape != self.cell_shape:
            raise GridError(f"omega mask has shape {omega_mask.shape}, expected {self.cell_shape}")
        omega_mask = omega_mask.copy()
        omega_mask.setflags(write=False)
        return replace(self, omega_mask=omega_mask)


def _boundary_nodes(node_shape):
    mask = np.zeros(node_shape, dtype=bool)
    for ax in range(len(node_shape)):
        sl = [slice(None)] * len(node_shape)
        sl[ax] = 0
        mask[tuple(sl)] = True
        sl[ax] = -1
        mask[tuple(sl)] = True
    return mask.ravel()


def collar_mask(dim, extents, n, width):
    """Cells whose centre lies strictly within ``width`` of the boundary."""
    h = [L / k for L, k in zip(extents, n)]
    axes = [(np.arange(k) + 0.5) * hk for k, hk in zip(n, h)]
    mesh = np.meshgrid(*axes, indexing="ij")
    dist = np.full(mesh[0].shape, np.inf)
    for ax in range(dim):
        dist = np.minimum(dist, np.minimum(mesh[ax], extents[ax] - mesh[ax]))
    return dist < width


def side_mask(dim, extents, n, width, side="left"):
    """Cells within ``width`` of a single face (``left/right`` on x, ``bottom/top`` on y)."""
    axis, upper = {"left": (0, False), "right": (0, True), "bottom": (1, False), "top": (1, True)}[side]
    if axis >= dim:
        raise GridError(f"side {side!r} is not available in {dim}D")
    h = extents[axis] / n[axis]
    c = (np.arange(n[axis]) + 0.5) * h
    d = extents[axis] - c if upper else c
    hit1d = d < width
    shape = [1] * dim
    shape[axis] = -1
    return np.broadcast_to(hit1d.reshape(shape), tuple(n)).copy()


def build_grid(dim, extents, n, collar_width, damping=True, omega_mask=None):
    """Uniform grid on a box with a boundary-collar damping region.

    Parameters
    ----------
    dim : int
        1 or 2.
    extents : float or sequence of float
        Box side lengths.
    n : int or sequence of int
        Cells per axis (at least 4).
    collar_width : float
        Width of the boundary collar defining omega. Must be positive when
        ``damping`` is set, unless an explicit ``omega_mask`` is given.
    damping : bool
        Whether a damped experiment is configured (empty omega is then an error).
    omega_mask : array_like of bool, optional
        Explicit per-cell damping region replacing the collar.
    """
    if dim not in (1, 2):
        raise GridError(f"dim must be 1 or 2, got {dim}")
    extents = tuple(float(e) for e in np.broadcast_to(np.asarray(extents, dtype=float), (dim,)))
    n = tuple(int(k) for k in np.broadcast_to(np.asarray(n), (dim,)))
    if any(k < 4 for k in n):
        raise GridError(f"need at least 4 cells per axis, got {n}")
    if any(e <= 0 for e in extents):
        raise GridError(f"extents must be positive, got {extents}")
    h = tuple(e / k for e, k in zip(extents, n))

    if omega_mask is None:
        if collar_width <= 0.0:
            if damping:
                raise GridError("collar_width must be positive for a damping experiment (omega would be empty)")
            mask = np.zeros(n, dtype=bool)
        else:
            if collar_width >= min(extents) / 2:
                raise GridError(f"collar_width {collar_width} must be below half the smallest extent")
            mask = collar_mask(dim, extents, n, collar_width)
    else:
        mask = np.asarray(omega_mask, dtype=bool).reshape(n)
    if damping and not mask.any():
        raise GridError("omega is empty but a damping experiment is configured")

    bmask = _boundary_nodes(tuple(k + 1 for k in n))
    bmask.setflags(write=False)
    mask = mask.copy()
    mask.setflags(write=False)
    return Grid(dim, extents, n, h, bmask, mask, float(max(collar_width, 0.0)))


# --------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class Bounds:
    alpha0: float
    beta0: float
    alpha: float
    beta: float
    a0: float
    b0: float

    def as_tuple(self):
        return (self.alpha0, self.beta0, self.alpha, self.beta, self.a0, self.b0)


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    rho: np.ndarray
    K: np.ndarray
    a: np.ndarray
    b: np.ndarray
    bounds: Bounds

    def swapped(self):
        """Exchange the damping coefficients of the two components."""
        return replace(self, a=self.b, b=self.a,
                       bounds=replace(self.bounds, a0=self.bounds.b0, b0=self.bounds.a0))

    def with_damping(self, a, b, grid):
        return sample_coefficients(grid, self.rho, self.K, a, b)


def _evaluate(fn, grid, x, kind):
    shape = grid.cell_shape
    if callable(fn):
        val = np.asarray(fn(x.reshape(-1, grid.dim)), dtype=float)
    else:
        val = np.asarray(fn, dtype=float)
    if kind == "matrix":
        d = grid.dim
        if val.ndim == 0:
            val = val * np.broadcast_to(np.eye(d), shape + (d, d))
        elif val.shape == (d, d):
            val = np.broadcast_to(val, shape + (d, d))
        elif val.shape in ((grid.num_cells,), shape):
            val = val.reshape(shape)[..., None, None] * np.eye(d)
        else:
            val = val.reshape(shape + (d, d))
        return np.array(val, dtype=float)
    if val.ndim == 0:
        return np.full(shape, float(val))
    return np.array(val.reshape(shape), dtype=float)


def sample_coefficients(grid, rho_fn, K_fn, a_fn, b_fn, require_damping=False):
    """Sample rho, K, a and b at cell centres and validate them.

    Each argument is either a callable of coordinates with shape ``(N, dim)``
    or an array/scalar. ``K_fn`` may return scalars (isotropic K) or full
    ``d x d`` matrices.

    Raises
    ------
    CoefficientError
        On the first cell where K is asymmetric or not positive definite, where
        rho is not positive or where a or b is negative. With
        ``require_damping`` also when a or b fail to be positive on omega.
    """
    x = grid.cell_centers()
    rho = _evaluate(rho_fn, grid, x, "scalar")
    K = _evaluate(K_fn, grid, x, "matrix")
    a = _evaluate(a_fn, grid, x, "scalar")
    b = _evaluate(b_fn, grid, x, "scalar")

    def first(bad):
        return tuple(int(i) for i in np.argwhere(bad)[0])

    if not np.all(np.isfinite(rho)) or np.any(rho <= 0):
        bad = ~(rho > 0)
        raise CoefficientError(f"rho must be positive; violated at cell {first(bad)}", first(bad))
    asym = np.abs(K - np.swapaxes(K, -1, -2)) > _SYM_RTOL * (1.0 + np.abs(K))
    if asym.any():
        c = first(asym.any(axis=(-1, -2)))
        raise CoefficientError(f"K is not symmetric at cell {c}: {K[c].tolist()}", c)
    K = 0.5 * (K + np.swapaxes(K, -1, -2))
    eig = np.linalg.eigvalsh(K)
    if np.any(eig[..., 0] <= 0):
        c = first(eig[..., 0] <= 0)
        raise CoefficientError(f"K is not positive definite at cell {c} (eigenvalues {eig[c].tolist()})", c)
    for name, arr in (("a", a), ("b", b)):
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            c = first(~(arr >= 0))
            raise CoefficientError(f"{name} must be non-negative; violated at cell {c}", c)

    om = grid.omega_mask
    a0 = float(a[om].min()) if om.any() else 0.0
    b0 = float(b[om].min()) if om.any() else 0.0
    if require_damping:
        for name, val, arr in (("a", a0, a), ("b", b0, b)):
            if not om.any():
                raise CoefficientError("damping requires a nonempty omega")
            if val <= 0:
                c = first(om & (arr <= 0))
                raise CoefficientError(
                    f"{name} must be bounded below by a positive constant on omega "
                    f"(localized damping requires it); {name}=0 at cell {c}", c)

    bounds = Bounds(float(rho.min()), float(rho.max()), float(eig[..., 0].min()),
                    float(eig[..., -1].max()), a0, b0)
    for arr in (rho, K, a, b):
        arr.setflags(write=False)
    return CoefficientSet(rho, K, a, b, bounds)


# coefficient presets; each factory returns (rho_fn, K_fn)

def _preset_constant(dim, rho=1.0, k=1.0):
    return (lambda x: np.full(len(x), float(rho)),
            lambda x: np.full(len(x), float(k)))


def _preset_diag_linear(dim, rho=1.0, slope=1.0, k2=2.0):
    def K(x):
        out = np.zeros((len(x), dim, dim))
        out[:, 0, 0] = 1.0 + slope * x[:, 0]
        if dim == 2:
            out[:, 1, 1] = k2
        return out
    return (lambda x: np.full(len(x), float(rho))), K


def _preset_hyperbolic(dim, shift=1.0):
    # K / rho = (x2 + shift)^2 I, i.e. the half-plane metric translated by shift
    if dim != 2:
        raise CoefficientError("hyperbolic-halfplane preset requires dim = 2")
    return (lambda x: np.ones(len(x)),
            lambda x: (x[:, 1] + shift) ** 2)


COEFFICIENT_PRESETS: dict[str, Callable] = {
    "constant": _preset_constant,
    "diag-linear": _preset_diag_linear,
    "hyperbolic-halfplane": _preset_hyperbolic,
}


def coefficient_preset(name, dim, **params):
    """Return ``(rho_fn, K_fn)`` for a named medium."""
    try:
        factory = COEFFICIENT_PRESETS[name]
    except KeyError:
        raise CoefficientError(f"unknown coefficient preset {name!r}; "
                               f"choose from {sorted(COEFFICIENT_PRESETS)}") from None
    return factory(dim, **params)


def load_coefficient_table(path, grid):
    """Read per-cell arrays from a JSON file with keys rho, K, a, b.

    Arrays are flat in C order over cells; ``K`` holds ``dim*dim`` entries per
    cell (row-major) or one entry per cell for isotropic media.
    """
    import json

    with open(path) as fh:
        data = json.load(fh)
    out = {}
    for key in ("rho", "K", "a", "b"):
        if key not in data:
            raise CoefficientError(f"coefficient table {path} lacks {key!r}")
        arr = np.asarray(data[key], dtype=float)
        if key == "K" and arr.size == grid.num_cells * grid.dim ** 2:
            arr = arr.reshape(grid.cell_shape + (grid.dim, grid.dim))
        elif arr.size == grid.num_cells:
            arr = arr.reshape(grid.cell_shape)
        else:
            raise CoefficientError(f"{key!r} has {arr.size} entries, expected one per cell")
        out[key] = arr
    return out


# --------------------------------------------------------------------------
# state


@dataclass
class State:
    """Nodal displacements ``u, v`` and velocities ``p = u_t, q = v_t``."""

    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    q: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        n = self.u.shape
        if not (self.v.shape == self.p.shape == self.q.shape == n) or self.u.ndim != 1:
            raise ValueError("u, v, p, q must be flat vectors of equal length")

    @classmethod
    def zeros(cls, grid, t=0.0):
        z = np.zeros(grid.num_nodes)
        return cls(z, z.copy(), z.copy(), z.copy(), t)

    def copy(self):
        return State(self.u.copy(), self.v.copy(), self.p.copy(), self.q.copy(), self.t)

    def swapped(self):
        return State(self.v.copy(), self.u.copy(), self.q.copy(), self.p.copy(), self.t)

    def scaled(self, factor):
        return State(factor * self.u, factor * self.v, factor * self.p, factor * self.q, self.t)

    def stacked(self):
        return np.concatenate([self.u, self.v, self.p, self.q])

    def satisfies_dirichlet(self, grid):
        bm = grid.boundary_mask
        return all(not np.any(x[bm]) for x in (self.u, self.v, self.p, self.q))

    def apply_dirichlet(self, grid):
        bm = grid.boundary_mask
        for x in (self.u, self.v, self.p, self.q):
            x[bm] = 0.0
        return self
