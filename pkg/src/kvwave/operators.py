"""Finite-volume operators ``div(c grad .)``, the resolvent matrix and a Jacobi PCG solver.

Every diffusion-type operator is built from its quadratic form

    u^T S u  ~  integral of  grad(u)^T c grad(u) dx

over all nodes (``S`` symmetric positive semidefinite). The nodal operator is
``L = -S / h^d`` restricted to interior nodes, so ``L`` approximates
``div(c grad u)`` and ``S`` is exactly the matrix the discrete energy uses.
Dirichlet rows and columns of ``L`` are zero; the identity substitution on
Dirichlet rows happens in :class:`ResolventForm`, where systems are solved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np
import scipy.sparse as sp

from .errors import SolverError

KINDS = ("stiffness-K", "damping-a", "damping-b", "mass-rho")


def harmonic_mean(c1, c2):
    """Elementwise ``2 c1 c2 / (c1 + c2)``, zero where both vanish."""
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    s = c1 + c2
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(s > 0, 2.0 * c1 * c2 / np.where(s > 0, s, 1.0), 0.0)
    return out


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Assembled nodal operator.

    ``matrix`` is the operator itself (``div(c grad .)`` or the nodal density),
    ``form`` the symmetric matrix of the associated quadratic form over all
    nodes (used for energies and dissipation).
    """

    n: int
    matrix: sp.csr_matrix
    form: sp.csr_matrix
    kind: str

    def quadratic(self, u):
        return float(u @ (self.form @ u))


def _edge_terms(grid, coeff):
    """Rows, cols and weights of the edge (two-point flux) contributions."""
    shape = grid.node_shape
    idx = np.arange(grid.num_nodes).reshape(shape)
    rows, cols, vals = [], [], []
    for ax in range(grid.dim):
        c = coeff[..., ax, ax] if coeff.ndim == grid.dim + 2 else coeff
        h = grid.h[ax]
        if grid.dim == 1:
            ce = c
            area = 1.0
        else:
            other = 1 - ax
            ho = grid.h[other]
            # edges along `ax` sit on the grid lines of the other axis: 0..n_other
            c_lo = np.moveaxis(c, other, 0)  # (n_other, n_ax)
            n_other = c_lo.shape[0]
            ce = np.empty((n_other + 1, c_lo.shape[1]))
            ce[1:-1] = harmonic_mean(c_lo[:-1], c_lo[1:])
            ce[0] = c_lo[0]
            ce[-1] = c_lo[-1]
            area = np.full(n_other + 1, ho)
            area[0] = area[-1] = 0.5 * ho
            ce = ce * area[:, None]
            ce = np.moveaxis(ce, 0, other)
            area = 1.0
        w = (ce * area / h).ravel()
        lo = np.take(idx, np.arange(shape[ax] - 1), axis=ax).ravel()
        hi = np.take(idx, np.arange(1, shape[ax]), axis=ax).ravel()
        rows += [lo, hi, lo, hi]
        cols += [lo, hi, hi, lo]
        vals += [w, w, -w, -w]
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def cell_gradient_matrices(grid):
    """Sparse maps from nodal values to cell-centre gradient components (2D)."""
    nx, ny = grid.n
    hx, hy = grid.h
    idx = np.arange(grid.num_nodes).reshape(grid.node_shape)
    n00 = idx[:-1, :-1].ravel()
    n10 = idx[1:, :-1].ravel()
    n01 = idx[:-1, 1:].ravel()
    n11 = idx[1:, 1:].ravel()
    cells = np.arange(nx * ny)
    shape = (nx * ny, grid.num_nodes)
    r = np.tile(cells, 4)
    Dx = sp.csr_matrix((np.concatenate([np.full(nx * ny, s / (2 * hx)) for s in (-1, 1, -1, 1)]),
                        (r, np.concatenate([n00, n10, n01, n11]))), shape=shape)
    Dy = sp.csr_matrix((np.concatenate([np.full(nx * ny, s / (2 * hy)) for s in (-1, -1, 1, 1)]),
                        (r, np.concatenate([n00, n10, n01, n11]))), shape=shape)
    return Dx, Dy


def _dirichlet_projector(grid):
    return sp.diags(grid.interior_mask.astype(float), format="csr")


def assemble_div_grad(grid, coeff_field, kind="stiffness-K"):
    """Assemble the discrete ``div(c grad u)`` for a scalar or matrix cell field.

    Fluxes along an axis use the harmonic mean of the two cells sharing the
    edge (2D) or the cell containing the edge (1D). Off-diagonal entries of a
    matrix field enter through cell-centre cross differences, which keeps the
    form symmetric but not an M-matrix.
    """
    c = np.asarray(coeff_field, dtype=float)
    is_matrix = c.ndim == grid.dim + 2
    N = grid.num_nodes
    rows, cols, vals = _edge_terms(grid, c)
    S = sp.coo_matrix((vals, (rows, cols)), shape=(N, N)).tocsr()
    if is_matrix and grid.dim == 2:
        k12 = c[..., 0, 1].ravel()
        if np.any(k12 != 0):
            Dx, Dy = cell_gradient_matrices(grid)
            C = sp.diags(k12 * grid.cell_volume)
            S = S + (Dx.T @ C @ Dy + Dy.T @ C @ Dx)
    S = ((S + S.T) * 0.5).tocsr()
    S.sum_duplicates()
    S.sort_indices()
    P = _dirichlet_projector(grid)
    L = (-(1.0 / grid.cell_volume) * (P @ S @ P)).tocsr()
    L.eliminate_zeros()
    L.sort_indices()
    return SparseOperator(N, L, S, kind)


def nodal_density(grid, rho):
    """Average of the cell densities adjacent to each node."""
    rho = np.asarray(rho, dtype=float)
    pad = np.pad(rho, 1, mode="constant", constant_values=0.0)
    cnt = np.pad(np.ones_like(rho), 1, mode="constant", constant_values=0.0)
    tot = np.zeros(grid.node_shape)
    num = np.zeros(grid.node_shape)
    for offs in np.ndindex(*(2,) * grid.dim):
        sl = tuple(slice(o, o + s) for o, s in zip(offs, grid.node_shape))
        tot += pad[sl]
        num += cnt[sl]
    return (tot / num).ravel()


def assemble_mass(grid, rho):
    rn = nodal_density(grid, rho)
    M = sp.diags(rn, format="csr")
    W = sp.diags(rn * grid.node_weights(), format="csr")
    return SparseOperator(grid.num_nodes, M, W, "mass-rho")


@dataclass(frozen=True, eq=False)
class OperatorSet:
    """All operators a run needs: nodal density, stiffness and both dampings."""

    grid: object
    mass: SparseOperator
    stiffness: SparseOperator
    damping_a: SparseOperator
    damping_b: SparseOperator

    @property
    def rho_node(self):
        return self.mass.matrix.diagonal()


def assemble_operators(grid, coeffs):
    return OperatorSet(
        grid,
        assemble_mass(grid, coeffs.rho),
        assemble_div_grad(grid, coeffs.K, "stiffness-K"),
        assemble_div_grad(grid, coeffs.a, "damping-a"),
        assemble_div_grad(grid, coeffs.b, "damping-b"),
    )


def dump_triplets(op, path):
    """Write a sparse matrix in ``row col value`` text form (0-based indices)."""
    m = op.matrix if isinstance(op, SparseOperator) else op
    m = sp.coo_matrix(m)
    order = np.lexsort((m.col, m.row))
    with open(path, "w") as fh:
        fh.write(f"# {m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for r, c, v in zip(m.row[order], m.col[order], m.data[order]):
            fh.write(f"{r} {c} {float(v)!r}\n")


def load_triplets(path):
    with open(path) as fh:
        header = fh.readline().lstrip("#").split()
        n, m = int(header[0]), int(header[1])
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix((n, m))
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, m))


# --------------------------------------------------------------------------
# resolvent


class ResolventForm:
    """``rho I - w1 div(K grad) - w2 div(c grad)`` on one component.

    ``c`` is the component's damping coefficient (a for u, b for v). Dirichlet
    rows are identity rows. With ``w1 = w2 = 1`` this is the operator of the
    one-component resolvent problem; the integrator uses time-step weights.
    """

    def __init__(self, grid, mass, stiffness, damping, w1, w2):
        if w1 < 0 or w2 < 0:
            raise ValueError(f"resolvent weights must be non-negative, got ({w1}, {w2})")
        self.grid = grid
        self.w1 = float(w1)
        self.w2 = float(w2)
        self.rho = mass.matrix.diagonal().copy()
        self.stiffness = stiffness
        self.damping = damping
        A = sp.diags(np.where(grid.boundary_mask, 1.0, self.rho)) \
            - self.w1 * stiffness.matrix - self.w2 * damping.matrix
        A = A.tocsr()
        A.sum_duplicates()
        A.sort_indices()
        self.matrix = A
        self._dinv = 1.0 / A.diagonal()
        self._interior = grid.interior_mask.astype(float)

    @property
    def shape(self):
        return self.matrix.shape

    def rhs(self, p, r):
        """Load vector ``-w2 div(c grad p) + rho (p + r)`` with Dirichlet entries zeroed."""
        out = -self.w2 * (self.damping.matrix @ p) + self.rho * (p + r)
        return out * self._interior

    def smallest_eigenvalue(self, iters=200, tol=1e-10, seed=0):
        """Inverse power iteration estimate of the smallest eigenvalue."""
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(self.shape[0])
        x /= np.linalg.norm(x)
        lam = np.inf
        for _ in range(iters):
            y, _ = solve_spd(self, x, tol=1e-12)
            y /= np.linalg.norm(y)
            new = float(y @ (self.matrix @ y))
            x = y
            if abs(new - lam) <= tol * abs(new):
                return new
            lam = new
        return lam


def assemble_resolvent(grid, coeffs, dt_weights=(1.0, 1.0), operators=None):
    """Resolvent matrices for the u and v components.

    Returns ``(form_u, form_v)`` with weights ``dt_weights = (w1, w2)``.
    """
    w1, w2 = dt_weights
    if w1 < 0 or w2 < 0:
        raise ValueError(f"resolvent weights must be non-negative, got {dt_weights}")
    ops = operators if operators is not None else assemble_operators(grid, coeffs)
    return (ResolventForm(grid, ops.mass, ops.stiffness, ops.damping_a, w1, w2),
            ResolventForm(grid, ops.mass, ops.stiffness, ops.damping_b, w1, w2))


# --------------------------------------------------------------------------
# conjugate gradient


class CGInfo(NamedTuple):
    iterations: int
    residual: float


@numba.njit(cache=True, nogil=True)
def _csr_matvec(indptr, indices, data, x, out):
    for i in range(out.shape[0]):
        s = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            s += data[k] * x[indices[k]]
        out[i] = s


@numba.njit(cache=True, nogil=True)
def _dot(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


@numba.njit(cache=True, nogil=True)
def _pcg_kernel(indptr, indices, data, b, x, dinv, tol, maxiter):
    n = b.shape[0]
    r = np.empty(n)
    Ap = np.empty(n)
    bnorm = np.sqrt(_dot(b, b))
    if bnorm == 0.0:
        for i in range(n):
            x[i] = 0.0
        return 0, 0.0
    it = 0
    rel = np.inf
    # outer loop restarts from the true residual to guard against recurrence drift
    while it < maxiter:
        _csr_matvec(indptr, indices, data, x, Ap)
        for i in range(n):
            r[i] = b[i] - Ap[i]
        rel = np.sqrt(_dot(r, r)) / bnorm
        if rel <= tol:
            return it, rel
        z = dinv * r
        p = z.copy()
        rz = _dot(r, z)
        while it < maxiter:
            _csr_matvec(indptr, indices, data, p, Ap)
            pAp = _dot(p, Ap)
            if pAp <= 0.0:
                return -it - 1, rel
            alpha = rz / pAp
            for i in range(n):
                x[i] += alpha * p[i]
                r[i] -= alpha * Ap[i]
            it += 1
            rel = np.sqrt(_dot(r, r)) / bnorm
            if rel <= 0.5 * tol:
                break
            for i in range(n):
                z[i] = dinv[i] * r[i]
            rz_new = _dot(r, z)
            beta = rz_new / rz
            rz = rz_new
            for i in range(n):
                p[i] = z[i] + beta * p[i]
    _csr_matvec(indptr, indices, data, x, Ap)
    for i in range(n):
        r[i] = b[i] - Ap[i]
    return it, np.sqrt(_dot(r, r)) / bnorm


def _lanczos_condition(A, dinv, b, steps):
    """Condition estimate of the preconditioned matrix from CG coefficients."""
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = r @ z
    alphas, betas = [], []
    for _ in range(steps):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        r = r - alpha * Ap
        z = dinv * r
        rz_new = r @ z
        beta = rz_new / rz
        alphas.append(alpha)
        betas.append(beta)
        rz = rz_new
        p = z + beta * p
        if rz <= 0:
            break
    k = len(alphas)
    diag = np.empty(k)
    off = np.empty(max(k - 1, 0))
    for j in range(k):
        diag[j] = 1.0 / alphas[j] + (betas[j - 1] / alphas[j - 1] if j > 0 else 0.0)
        if j < k - 1:
            off[j] = np.sqrt(betas[j]) / alphas[j]
    T = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    ev = np.linalg.eigvalsh(T)
    return float(ev[-1] / ev[0]) if ev[0] > 0 else np.inf


def solve_spd(form, rhs, x0=None, tol=1e-10, maxiter=None):
    """Jacobi-preconditioned conjugate gradient.

    Returns ``(x, CGInfo)``. The true relative residual ``|b - A x| / |b|`` is
    at most ``tol`` on return; otherwise :class:`SolverError` is raised with a
    Lanczos condition estimate. ``form`` is a :class:`ResolventForm` or a
    sparse SPD matrix.
    """
    if isinstance(form, ResolventForm):
        A, dinv = form.matrix, form._dinv
    else:
        A = sp.csr_matrix(form)
        A.sort_indices()
        dinv = 1.0 / A.diagonal()
    b = np.ascontiguousarray(rhs, dtype=float)
    if not np.all(np.isfinite(b)):
        raise SolverError("right-hand side is not finite")
    n = b.shape[0]
    maxiter = 10 * n if maxiter is None else int(maxiter)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    it, rel = _pcg_kernel(A.indptr, A.indices, A.data, b, x, dinv, float(tol), maxiter)
    if it < 0 or not rel <= tol:
        try:
            with np.errstate(all="ignore"):
                kappa = _lanczos_condition(A, dinv, b, min(n, 200))
        except np.linalg.LinAlgError:
            kappa = float("nan")
        raise SolverError(
            f"CG did not converge: relative residual {rel:.3e} after {abs(it)} iterations "
            f"(condition estimate {kappa:.3e})", abs(it), rel, kappa)
    return x, CGInfo(int(it), float(rel))
