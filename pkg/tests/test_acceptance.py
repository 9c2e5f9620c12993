"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are also collected
into the terminal summary) or directly with ``python tests/test_acceptance.py``.
"""

import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from kvwave import energy as en
from kvwave import geometry as geo
from kvwave import scenario as scn
from kvwave.evolution import IntegratorConfig, run
from kvwave.fields import State, build_grid, coefficient_preset, sample_coefficients
from kvwave.operators import assemble_operators, assemble_resolvent, solve_spd

FIXTURES = json.loads((Path(__file__).parent / "fixtures" / "decay_rates.json").read_text())
RESULTS = {}


def record(num, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {title} | {detail}"
    RESULTS[num] = line
    print(line)
    assert ok, line


def bundled_problem(name, **damping):
    sc = scn.parse_scenario(scn.bundled_path(name))
    if damping:
        sc = sc.model_copy(update={"damping": sc.damping.model_copy(update=damping)})
    grid, coeffs = scn.build_problem(sc)
    return sc, grid, coeffs, scn.initial_state(sc, grid), scn.integrator_config(sc)


def decay_run(name):
    sc, grid, coeffs, init, cfg = bundled_problem(name)
    trace, _ = run(init, coeffs, grid, cfg)
    return trace, en.fit_decay(trace, en.default_window(trace))


def test_c01_energy_identity():
    sc, grid, coeffs, init, cfg = bundled_problem("1d-default-decay")
    t0 = time.perf_counter()
    trace, _ = run(init, coeffs, grid, cfg)
    elapsed = time.perf_counter() - t0
    res = en.check_identity(trace)
    record(1, "discrete energy identity (1D, n=128, dt=1e-3, T=10)", res <= 1e-6 and elapsed < 10.0,
           f"max per-step residual {res:.3e} (<= 1e-6), runtime {elapsed:.2f} s (< 10 s)")


def test_c02_conservation_control():
    sc, grid, _, init, cfg = bundled_problem("1d-default-decay")
    coeffs = sample_coefficients(grid, *coefficient_preset("constant", 1), 0.0, 0.0)
    out = {}
    for coupling in (True, False):
        trace, _ = run(init, coeffs, grid, replace(cfg, coupling=coupling))
        out[coupling] = abs(trace.energy[-1] - trace.energy[0]) / trace.energy[0]
    ok = out[True] <= 1e-3 and out[False] <= 1e-6
    record(2, "conservation with a=b=0", ok,
           f"coupling on {out[True]:.3e} (<= 1e-3), coupling off {out[False]:.3e} (<= 1e-6)")


def test_c03_exponential_decay():
    parts, ok = [], True
    for name in ("1d-default-decay", "2d-collar-decay"):
        _, fit = decay_run(name)
        ref = FIXTURES[name]
        good = fit.gamma > 0 and fit.r_squared >= 0.9 and abs(fit.gamma - ref) <= 0.05 * ref
        ok &= good
        parts.append(f"{name} gamma={fit.gamma:.5f} (fixture {ref:.5f} +-5%) r2={fit.r_squared:.4f}")
    _, fit0 = decay_run("1d-undamped-control")
    ok &= abs(fit0.gamma) <= 1e-3
    parts.append(f"undamped |gamma|={abs(fit0.gamma):.2e} (<= 1e-3)")
    record(3, "exponential decay fits", ok, "; ".join(parts))


def test_c04_dissipativity():
    grid = build_grid(2, [1.0, 1.0], [24, 24], 0.2)
    rng = np.random.default_rng(2024)
    a = np.where(grid.omega_mask, rng.uniform(0.5, 2.0, grid.cell_shape), 0.0)
    b = np.where(grid.omega_mask, rng.uniform(0.5, 2.0, grid.cell_shape), 0.0)
    ops = assemble_operators(grid, sample_coefficients(grid, 1.0, 1.0, a, b))
    U = rng.standard_normal((1000, grid.num_nodes))
    V = rng.standard_normal((1000, grid.num_nodes))
    U[:, grid.boundary_mask] = V[:, grid.boundary_mask] = 0.0
    # half the states live away from omega, where the forms vanish up to rounding
    far = np.ones(grid.num_nodes, bool)
    far[grid.boundary_mask] = False
    cells_near = np.argwhere(grid.omega_mask)
    node_idx = np.arange(grid.num_nodes).reshape(grid.node_shape)
    for i, j in cells_near:
        far[node_idx[i:i + 2, j:j + 2].ravel()] = False
    U[500:, ~far] = 0.0
    V[500:, ~far] = 0.0
    q = -np.einsum("ij,ij->i", U, (ops.damping_a.matrix @ U.T).T) \
        - np.einsum("ij,ij->i", V, (ops.damping_b.matrix @ V.T).T)
    record(4, "semigroup dissipativity, 1000 random states", q.min() >= -1e-12,
           f"min quadratic form {q.min():.3e} (>= -1e-12); generic states min {q[:500].min():.3e}")


def test_c05_resolvent_roundtrip():
    worst = 0.0
    rng = np.random.default_rng(5)
    K = np.array([[1.0, 0.2], [0.2, 1.5]])
    for n in (32, 64, 128):
        grid = build_grid(2, [1.0, 1.0], [n, n], 0.1)
        om = grid.omega_mask
        coeffs = sample_coefficients(grid, 1.0, K, np.where(om, 1.0, 0.0), np.where(om, 2.0, 0.0))
        for form in assemble_resolvent(grid, coeffs, (1.0, 1.0)):
            u = rng.standard_normal(grid.num_nodes)
            u[grid.boundary_mask] = 0.0
            x, _ = solve_spd(form, form.matrix @ u, tol=1e-13)
            worst = max(worst, np.linalg.norm(x - u) / np.linalg.norm(u))
    record(5, "resolvent manufactured round-trip up to 128^2", worst <= 1e-9,
           f"max relative error {worst:.3e} (<= 1e-9)")


def test_c06_geodesic_oracles():
    hyp = geo.hyperbolic_metric()
    p = geo.geodesic_flow(hyp, [0.0, 1.0], [1.0, 0.0], 1e-3, 1.0)
    semi = float(np.max(np.abs(np.hypot(p.x[:, 0], p.x[:, 1]) - 1.0)))
    q = geo.geodesic_flow(hyp, [0.0, 2.0], [0.0, -2.0], 1e-3, 1.0)
    vert = float(np.max(np.abs(q.x[:, 0])))
    flat = geo.euclidean_metric(2)
    rng = np.random.default_rng(6)
    straight = 0.0
    for _ in range(10):
        x0 = rng.uniform(0, 1, 2)
        ang = rng.uniform(0, 2 * np.pi)
        v0 = np.array([np.cos(ang), np.sin(ang)])
        r = geo.geodesic_flow(flat, x0, v0, 1e-3, 1.0)
        straight = max(straight, float(np.max(np.abs(r.x - (x0 + r.t[:, None] * v0)))))
    ok = semi <= 1e-6 and vert == 0.0 and straight <= 1e-10
    record(6, "geodesic oracles", ok,
           f"semicircle dev {semi:.2e} (<= 1e-6), vertical |x1| {vert:.1e} (== 0), "
           f"straight dev {straight:.1e} (<= 1e-10)")


def bundled_metrics():
    out = {}
    for name in sorted(geo.ANALYTIC_METRICS):
        out[name] = geo.analytic_metric(name)
    for name in scn.bundled_scenarios():
        sc = scn.parse_scenario(scn.bundled_path(name))
        spec = (sc.gcc or sc.geodesic or sc.hessian)
        if spec is None:
            continue
        if spec.metric.source == "from-coefficients":
            grid, coeffs = scn.build_problem(sc)
            out[name] = scn.metric_for(spec.metric, grid, coeffs)
    return out


def test_c07_speed_conservation():
    worst, where = 0.0, ""
    rng = np.random.default_rng(7)
    for name, m in bundled_metrics().items():
        for _ in range(5):
            # launches in the common region of validity (box interior, upper half-plane)
            x0 = np.array([rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)])
            v = rng.standard_normal(2)
            v /= np.sqrt(v @ m.G(x0) @ v)
            d = geo.geodesic_flow(m, x0, v, 1e-3, 0.25).speed_drift()
            if d > worst:
                worst, where = d, name
    record(7, "speed conservation on every bundled metric", worst < 1e-6,
           f"max drift {worst:.2e} per unit time (< 1e-6), worst metric {where}")


def test_c08_flow_equivalence():
    rng = np.random.default_rng(8)
    metrics = [geo.hyperbolic_metric(), geo.anisotropic_metric(), geo.radial_metric()]
    gap = 0.0
    for k in range(20):
        m = metrics[k % 3]
        x0 = np.array([rng.uniform(-0.5, 0.5), rng.uniform(0.8, 1.5)])
        v = rng.standard_normal(2)
        v /= np.sqrt(v @ m.G(x0) @ v)
        a = geo.geodesic_flow(m, x0, v, 1e-3, 1.0)
        b = geo.hamiltonian_flow(m, x0, m.G(x0) @ v, 1e-3, 1.0)
        gap = max(gap, float(np.max(np.abs(a.x - b.x))))
    record(8, "hamiltonian vs geodesic flow, 20 launches", gap <= 1e-8, f"max pointwise gap {gap:.2e} (<= 1e-8)")


def gcc_report(name):
    sc = scn.parse_scenario(scn.bundled_path(name))
    grid, coeffs = scn.build_problem(sc)
    g = sc.gcc
    m = scn.metric_for(g.metric, grid, coeffs)
    return geo.check_gcc(m, grid, samples_dir=g.directions, t_cap=g.t_cap, dt=g.dt, stride=g.stride)


def test_c09_gcc():
    sq = gcc_report("square-collar-gcc")
    gl = gcc_report("square-gliding-ray")
    ok = sq.satisfied and sq.T0_estimate <= np.sqrt(2) + sq.dt and not gl.satisfied
    record(9, "GCC brute force", ok,
           f"collar satisfied={sq.satisfied} T0={sq.T0_estimate:.4f} (<= {np.sqrt(2) + sq.dt:.4f}) "
           f"over {len(sq.hit_times)} rays; one-edge satisfied={gl.satisfied}")


def test_c10_hessian_identity():
    m = geo.hyperbolic_metric()
    phi, derivs = geo.hyperbolic_distance_sq([0.1, 1.2])
    rng = np.random.default_rng(10)
    dt = 1e-3
    worst = 0.0
    for _ in range(50):
        x0 = np.array([rng.uniform(-0.5, 0.5), rng.uniform(0.7, 1.6)])
        v = rng.standard_normal(2)
        v /= np.sqrt(v @ m.G(x0) @ v)
        p = geo.geodesic_flow(m, x0, v, dt, 0.5)
        f = phi(p.x)
        d2 = (f[2:] - 2 * f[1:-1] + f[:-2]) / dt ** 2
        H = geo.riemannian_hessian(m, derivs, p.x[1:-1])
        hv = np.einsum("nij,ni,nj->n", H, p.xdot[1:-1], p.xdot[1:-1])
        worst = max(worst, float(np.max(np.abs(d2 - hv) / np.abs(hv))))
    pts = np.random.default_rng(0).uniform(-1, 1, (100, 2))
    rep = geo.hessian(geo.euclidean_metric(2), *geo.squared_distance([0.0, 0.0]), pts)
    ok = worst <= 1e-4 and abs(rep.min_eigenvalue - 1.0) <= 1e-10
    record(10, "Hessian identity along 50 geodesics", ok,
           f"max relative gap {worst:.2e} (<= 1e-4), Euclidean min eigenvalue {rep.min_eigenvalue:.12f}")


def test_c11_observability_ordering():
    sc = scn.parse_scenario(scn.bundled_path("observability-collar"))
    ob = sc.observability
    cfg = scn.integrator_config(sc, T=ob.T)
    consts = []
    for dmp in (sc.damping, ob.compare):
        grid, coeffs = scn.build_problem(sc, dmp)
        samples = en.random_initial_states(grid, ob.samples, sc.seed)
        consts.append(en.observability_ratio(samples, ob.T, coeffs, grid, cfg).max_ratio)
    record(11, "observability ordering (32 samples, T=4)", consts[0] < consts[1],
           f"full collar {consts[0]:.4f} < one edge {consts[1]:.4f}")


def test_c12_convergence_order():
    errs, hs = [], []
    T = 0.5
    for n in (16, 32, 64, 128):
        grid = build_grid(1, [1.0], [n], 0.0, damping=False)
        coeffs = sample_coefficients(grid, 1.0, 1.0, 0.0, 0.0)
        x = grid.node_coords()[:, 0]
        z = np.zeros(n + 1)
        init = State(np.sin(np.pi * x), z, z, z).apply_dirichlet(grid)
        # joint refinement dt = 0.8 h
        _, final = run(init, coeffs, grid, IntegratorConfig(0.8 / n, T, coupling=False))
        w = grid.node_weights()
        exact = np.cos(np.pi * T) * np.sin(np.pi * x)
        errs.append(np.sqrt(w @ (final.u - exact) ** 2) / np.sqrt(w @ init.u ** 2))
        hs.append(1.0 / n)
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    record(12, "standing-wave L2 convergence order", 1.7 <= slope <= 2.3,
           f"slope {slope:.3f} in [1.7, 2.3], errors " + ", ".join(f"{e:.2e}" for e in errs))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
