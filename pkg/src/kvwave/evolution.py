"""Implicit time stepping of the damped coupled Klein-Gordon system.

Both schemes are written for the new displacement. Crank-Nicolson reads

    rho (u' - u - dt p) = dt^2/4 L_K (u' + u) + dt/2 L_a (u' - u) + dt^2/2 rho f_u,
    p' = 2 (u' - u) / dt - p,

with the cubic coupling ``f_u = -v^2 u / rho`` taken at the midpoint of the
current Picard iterate; backward Euler uses ``dt^2 L_K u' + dt L_a (u' - u)``
and ``p' = (u' - u) / dt``. Each Picard sweep solves one SPD system per
component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import EnergyTrace, energy
from .errors import SolverError, StepFailure
from .fields import State
from .operators import ResolventForm, assemble_operators, solve_spd

SCHEMES = ("crank-nicolson", "backward-euler")


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    T: float
    scheme: str = "crank-nicolson"
    picard_tol: float = 1e-10
    picard_max: int = 50
    coupling: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.T != 0 and self.T < self.dt:
            raise ValueError(f"T={self.T} must be zero or at least dt={self.dt}")
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if not 0 < self.picard_tol <= 1e-2:
            raise ValueError(f"picard_tol must lie in (0, 1e-2], got {self.picard_tol}")
        if self.picard_max < 1:
            raise ValueError("picard_max must be at least 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")


def coupling_rhs(state, rho_node):
    """Pointwise ``(-v^2 u / rho, -u^2 v / rho)``."""
    u, v = state.u, state.v
    return -(v * v) * u / rho_node, -(u * u) * v / rho_node


def scheme_weights(scheme, dt):
    """Resolvent weights ``(w1, w2)`` and the explicit factors of the scheme.

    Returns ``(w1, w2, c_stiff, c_force)`` where ``c_stiff`` multiplies
    ``L_K u`` and ``c_force`` the coupling load on the right-hand side.
    """
    if scheme == "crank-nicolson":
        return 0.25 * dt * dt, 0.5 * dt, 0.25 * dt * dt, 0.5 * dt * dt
    return dt * dt, dt, 0.0, dt * dt


class Integrator:
    """Holds the operators and per-step-size resolvent matrices of a run."""

    def __init__(self, grid, coeffs, config, operators=None):
        self.grid = grid
        self.coeffs = coeffs
        self.config = config
        self.ops = operators if operators is not None else assemble_operators(grid, coeffs)
        self.rho = self.ops.rho_node
        self._forms = {}
        self._interior = grid.interior_mask.astype(float)
        # inner solves must sit well below the Picard tolerance
        self.cg_tol = min(1e-10, 1e-3 * config.picard_tol)
        self.last_iterations = 0

    def forms(self, dt):
        key = float(dt)
        if key not in self._forms:
            w1, w2, _, _ = scheme_weights(self.config.scheme, dt)
            ops = self.ops
            self._forms[key] = (ResolventForm(self.grid, ops.mass, ops.stiffness, ops.damping_a, w1, w2),
                                ResolventForm(self.grid, ops.mass, ops.stiffness, ops.damping_b, w1, w2))
        return self._forms[key]

    def _solve(self, form, rhs, guess):
        x, _ = solve_spd(form, rhs, x0=guess, tol=self.cg_tol)
        return x

    def step(self, state, dt=None):
        """Advance one step; raises :class:`StepFailure` if Picard fails."""
        cfg = self.config
        dt = cfg.dt if dt is None else dt
        fu_form, fv_form = self.forms(dt)
        _, _, c_stiff, c_force = scheme_weights(cfg.scheme, dt)
        L = self.ops.stiffness.matrix
        cn = cfg.scheme == "crank-nicolson"
        u0, v0, p0, q0 = state.u, state.v, state.p, state.q

        base_u = fu_form.rhs(u0, dt * p0)
        base_v = fv_form.rhs(v0, dt * q0)
        if c_stiff:
            base_u = base_u + c_stiff * (L @ u0) * self._interior
            base_v = base_v + c_stiff * (L @ v0) * self._interior

        u1 = (u0 + dt * p0) * self._interior
        v1 = (v0 + dt * q0) * self._interior
        if not cfg.coupling:
            u1 = self._solve(fu_form, base_u, u1)
            v1 = self._solve(fv_form, base_v, v1)
            self.last_iterations = 1
        else:
            history = []
            for k in range(cfg.picard_max):
                if cn:
                    um, vm = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
                else:
                    um, vm = u1, v1
                # rho * f: the density cancels against the mass term
                with np.errstate(over="ignore", invalid="ignore"):
                    # overflow is reported below as a step failure
                    gu = -(vm * vm) * um * self._interior
                    gv = -(um * um) * vm * self._interior
                try:
                    nu = self._solve(fu_form, base_u + c_force * gu, u1)
                    nv = self._solve(fv_form, base_v + c_force * gv, v1)
                except SolverError as exc:
                    raise StepFailure(f"linear solve failed in Picard iteration {k + 1} at "
                                      f"t={state.t:.6g} (dt={dt:.3g}): {exc}", state.t, k + 1, history) from exc
                du = nu - u1
                dv = nv - v1
                change = math.sqrt(du @ du + dv @ dv)
                scale = math.sqrt(nu @ nu + nv @ nv)
                rel = change / scale if scale > 0 else 0.0
                u1, v1 = nu, nv
                history.append(rel)
                if not math.isfinite(rel):
                    raise StepFailure(f"Picard iterate overflowed at t={state.t:.6g} (dt={dt:.3g})",
                                      state.t, k + 1, history)
                if rel <= cfg.picard_tol:
                    break
                if len(history) >= 4 and history[-1] > history[-2] > history[-3] > history[-4]:
                    raise StepFailure(
                        f"Picard iteration diverging at t={state.t:.6g} (dt={dt:.3g}): "
                        f"relative changes {history[-4:]}", state.t, k + 1, history)
            else:
                raise StepFailure(
                    f"Picard iteration did not reach {cfg.picard_tol:.1e} in {cfg.picard_max} "
                    f"iterations at t={state.t:.6g} (last change {history[-1]:.3e})",
                    state.t, cfg.picard_max, history)
            self.last_iterations = len(history)

        if cn:
            p1 = 2.0 * (u1 - u0) / dt - p0
            q1 = 2.0 * (v1 - v0) / dt - q0
        else:
            p1 = (u1 - u0) / dt
            q1 = (v1 - v0) / dt
        new = State(u1, v1, p1, q1, state.t + dt)
        new.apply_dirichlet(self.grid)
        return new

    def step_with_retry(self, state, dt, retries):
        """Step of size ``dt``, halving into substeps after a failure."""
        try:
            return self.step(state, dt)
        except StepFailure:
            if retries <= 0:
                raise
        half = 0.5 * dt
        mid = self.step_with_retry(state, half, retries - 1)
        return self.step_with_retry(mid, half, retries - 1)

    def interval_dissipation(self, old, new, dt):
        """Dissipation rate at the step midpoint, from ``(u' - u) / dt``."""
        pm = (new.u - old.u) / dt
        qm = (new.v - old.v) / dt
        return float(pm @ (self.ops.damping_a.form @ pm) + qm @ (self.ops.damping_b.form @ qm))

    def energy(self, state):
        return energy(state, self.coeffs, self.grid, self.ops, self.config.coupling)


def step(state, operators, config, grid=None, coeffs=None):
    """Advance ``state`` by one step of ``config.dt``.

    ``operators`` is an :class:`~kvwave.operators.OperatorSet` or an existing
    :class:`Integrator` (which caches its resolvent matrices).
    """
    if isinstance(operators, Integrator):
        integ = operators
    else:
        integ = Integrator(grid if grid is not None else operators.grid, coeffs, config, operators)
    return integ.step(state)


def _step_sizes(T, dt):
    if T == 0:
        return []
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    sizes = [dt] * n
    sizes[-1] = T - dt * (n - 1)
    return sizes


def run(initial, coeffs, grid, config, probes=None, operators=None, retry_halving=False,
        max_retries=10, integrator=None):
    """Integrate from ``initial`` to ``config.T``.

    Parameters
    ----------
    probes : dict, optional
        ``{"nodes": [...], "every": k}`` records ``u`` and ``v`` at the listed
        node indices every ``k`` steps. ``None`` or ``"energy-only"`` records
        energies only.

    Returns
    -------
    (EnergyTrace, State)
    """
    if not initial.satisfies_dirichlet(grid):
        raise ValueError("initial state does not vanish on Dirichlet nodes")
    integ = integrator or Integrator(grid, coeffs, config, operators)
    sizes = _step_sizes(config.T, config.dt)
    nt = len(sizes) + 1
    # sample times from the step index, not by accumulation
    grid_t = initial.t + config.dt * np.arange(nt)
    grid_t[-1] = initial.t + config.T
    times = np.empty(nt)
    E = np.empty(nt)
    D = np.zeros(nt)
    R = np.zeros(nt)

    nodes = None
    every = 1
    if isinstance(probes, dict):
        nodes = np.asarray(probes.get("nodes", []), dtype=int)
        every = int(probes.get("every", 1))
    rec_t, rec_u, rec_v = [], [], []

    state = initial.copy()
    times[0] = state.t
    E[0] = integ.energy(state)
    if nodes is not None:
        rec_t.append(state.t)
        rec_u.append(state.u[nodes].copy())
        rec_v.append(state.v[nodes].copy())

    for k, dt in enumerate(sizes, start=1):
        try:
            if retry_halving:
                new = integ.step_with_retry(state, dt, max_retries)
            else:
                new = integ.step(state, dt)
        except StepFailure as exc:
            exc.time = state.t
            raise
        assert new.satisfies_dirichlet(grid)
        new.t = float(grid_t[k])
        times[k] = new.t
        E[k] = integ.energy(new)
        D[k] = integ.interval_dissipation(state, new, dt)
        R[k] = E[k] - E[k - 1] + dt * D[k]
        state = new
        if nodes is not None and k % every == 0:
            rec_t.append(state.t)
            rec_u.append(state.u[nodes].copy())
            rec_v.append(state.v[nodes].copy())

    probe_data = {}
    if nodes is not None:
        probe_data = {"nodes": nodes, "times": np.array(rec_t),
                      "u": np.array(rec_u), "v": np.array(rec_v)}
    return EnergyTrace(times, E, D, R, probe_data), state
