"""Energy functional, energy-identity check, decay fits and observability constants."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .operators import assemble_operators


@dataclass
class EnergyTrace:
    """Per-step energy record of a run.

    ``dissipation[k]`` and ``identity_residual[k]`` refer to the interval
    ``(times[k-1], times[k])``; both are zero at ``k = 0``. The residual is the
    raw defect ``E_k - E_{k-1} + dt_k D_k``.
    """

    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    identity_residual: np.ndarray
    probes: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def steps(self):
        return np.diff(self.times)

    @property
    def total_dissipation(self):
        """``integral_0^T D dt`` accumulated with the per-step values."""
        return float(np.sum(self.steps * self.dissipation[1:]))

    def monotone_violations(self, tol):
        """Indices where the energy rises by more than ``tol * E(0)``."""
        rise = np.diff(self.energy)
        return np.nonzero(rise > tol * self.energy[0])[0] + 1


@dataclass(frozen=True)
class DecayFit:
    gamma: float
    C: float
    window: tuple
    r_squared: float
    samples: int = 0

    def to_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        return d


@dataclass
class ObservabilityResult:
    max_ratio: float
    ratios: np.ndarray
    initial_energy: np.ndarray
    dissipated: np.ndarray
    violations: list

    @property
    def finite(self):
        return np.isfinite(self.max_ratio)


def _ops(grid, coeffs, operators):
    return operators if operators is not None else assemble_operators(grid, coeffs)


def energy(state, coeffs, grid, operators=None, coupling=True):
    """Discrete coupled energy.

    Kinetic terms use the nodal density with dual-cell weights, potential terms
    the stiffness quadratic form, and the coupling term ``(uv)^2 / 2`` the same
    nodal weights. ``coupling=False`` drops that term (linearized system).
    """
    ops = _ops(grid, coeffs, operators)
    M = ops.mass.form
    S = ops.stiffness.form
    w = grid.node_weights()
    u, v, p, q = state.u, state.v, state.p, state.q
    kinetic = p @ (M @ p) + q @ (M @ q)
    potential = u @ (S @ u) + v @ (S @ v)
    quartic = w @ ((u * v) ** 2) if coupling else 0.0
    return 0.5 * float(kinetic + potential + quartic)


def dissipation_rate(p, q, coeffs, grid, operators=None):
    """``integral a |grad p|^2 + b |grad q|^2 dx`` from the damping forms."""
    ops = _ops(grid, coeffs, operators)
    return float(p @ (ops.damping_a.form @ p) + q @ (ops.damping_b.form @ q))


def check_identity(trace, cumulative=False):
    """Largest defect of the energy identity relative to ``E(0)``.

    With ``cumulative`` the defect of ``E(t_k) - E(0) + integral_0^{t_k} D``
    is reported instead of the per-step one.
    """
    e0 = trace.energy[0]
    if len(trace) < 2 or e0 == 0.0:
        return 0.0
    r = trace.identity_residual[1:]
    if cumulative:
        r = np.cumsum(r)
    return float(np.max(np.abs(r)) / e0)


def default_window(trace):
    T = trace.times[-1]
    return (0.2 * T, 0.8 * T)


def fit_decay(trace, window=None):
    """Least-squares fit of ``log E = log C - gamma t`` over a time window.

    Every sample inside the window is used (no envelope extraction).
    """
    t = np.asarray(trace.times if hasattr(trace, "times") else trace[0], dtype=float)
    E = np.asarray(trace.energy if hasattr(trace, "energy") else trace[1], dtype=float)
    if window is None:
        window = (0.2 * t[-1], 0.8 * t[-1])
    ta, tb = window
    sel = (t >= ta - 1e-12) & (t <= tb + 1e-12)
    if sel.sum() < 2:
        raise ValueError(f"window {window} holds fewer than two samples")
    if np.any(E[sel] <= 0):
        raise ValueError("non-positive energy inside the fit window; decay already at floating "
                         "noise, shrink the window")
    ts, y = t[sel], np.log(E[sel])
    res = stats.linregress(ts, y)
    pred = res.intercept + res.slope * ts
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    r2 = min(max(r2, 0.0), 1.0)
    return DecayFit(float(-res.slope), float(np.exp(res.intercept)), (float(ta), float(tb)),
                    r2, int(sel.sum()))


def random_initial_states(grid, count, seed):
    """i.i.d. uniform [-1, 1] nodal data for u, v, p, q, zero on Dirichlet nodes."""
    from .fields import State

    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        vals = rng.uniform(-1.0, 1.0, size=(4, grid.num_nodes))
        vals[:, grid.boundary_mask] = 0.0
        out.append(State(*vals))
    return out


def observability_ratio(initial_samples, T, coeffs, grid, config, operators=None, threads=1):
    """Empirical observability constant ``max E(0) / integral_0^T D dt``.

    Samples whose dissipation vanishes are returned in ``violations`` (their
    ratio is infinite); this is the expected outcome when the damping region
    does not control the domain.
    """
    from dataclasses import replace

    from .evolution import run

    if T <= 0:
        raise ValueError("observation time T must be positive")
    ops = _ops(grid, coeffs, operators)
    cfg = replace(config, T=float(T))
    e0 = np.array([energy(s, coeffs, grid, ops, cfg.coupling) for s in initial_samples])
    if np.any(e0 <= 0):
        raise ValueError("every observability sample needs positive initial energy")

    def one(s):
        trace, _ = run(s, coeffs, grid, cfg, operators=ops)
        return trace.total_dissipation

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            diss = np.array(list(ex.map(one, initial_samples)))
    else:
        diss = np.array([one(s) for s in initial_samples])
    with np.errstate(divide="ignore"):
        ratios = np.where(diss > 0, e0 / np.where(diss > 0, diss, 1.0), np.inf)
    violations = [int(i) for i in np.nonzero(~(diss > 0))[0]]
    return ObservabilityResult(float(np.max(ratios)), ratios, e0, diss, violations)


# --------------------------------------------------------------------------
# export


def write_trace(trace, path, seed=None):
    """Delimited text with columns t, E, D, residual."""
    data = np.column_stack([trace.times, trace.energy, trace.dissipation, trace.identity_residual])
    header = f"seed={seed}\nt,E,D,residual"
    np.savetxt(path, data, delimiter=",", header=header, fmt="%.17g")


def read_trace(path):
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    return EnergyTrace(data[:, 0], data[:, 1], data[:, 2], data[:, 3])


def write_fit(fit, path, seed=None, extra=None):
    rec = {"seed": seed, **fit.to_dict()}
    if extra:
        rec.update(extra)
    with open(path, "w") as fh:
        json.dump(rec, fh, indent=2, sort_keys=True)
        fh.write("\n")


def plot_decay(trace, fit, path, title=None):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "kvwave"
    fig, ax = plt.subplots(figsize=(6, 4))
    pos = trace.energy > 0
    ax.semilogy(trace.times[pos], trace.energy[pos], lw=1, label="E(t)")
    if fit is not None:
        ta, tb = fit.window
        tt = np.linspace(ta, tb, 50)
        ax.semilogy(tt, fit.C * np.exp(-fit.gamma * tt), "--",
                    label=f"fit: gamma={fit.gamma:.4g}, r2={fit.r_squared:.3f}")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
