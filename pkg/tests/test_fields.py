import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kvwave.errors import CoefficientError, GridError
from kvwave.fields import (State, build_grid, coefficient_preset, collar_mask, load_coefficient_table,
                           sample_coefficients, side_mask)


def test_collar_1d_is_first_and_last_cell():
    g = build_grid(1, [1.0], [10], 0.1)
    expect = np.zeros(10, bool)
    expect[[0, -1]] = True
    assert np.array_equal(g.omega_mask, expect)


def test_collar_2d_count():
    g = build_grid(2, [1.0, 1.0], [16, 16], 0.25)
    assert g.omega_mask.sum() == 16 ** 2 - 8 ** 2 == 192


def test_collar_matches_enumeration():
    n, w = 20, 0.17
    mask = collar_mask(2, (1.0, 1.5), (n, n), w)
    h = (1.0 / n, 1.5 / n)
    for i in range(n):
        for j in range(n):
            cx, cy = (i + 0.5) * h[0], (j + 0.5) * h[1]
            d = min(cx, 1.0 - cx, cy, 1.5 - cy)
            assert mask[i, j] == (d < w)


def test_empty_collar_rejected_when_damped():
    with pytest.raises(GridError):
        build_grid(1, [1.0], [10], 0.0)
    g = build_grid(1, [1.0], [10], 0.0, damping=False)
    assert not g.omega_mask.any()


@pytest.mark.parametrize("n,width", [(3, 0.1), (10, 0.5), (10, 0.7)])
def test_grid_preconditions(n, width):
    with pytest.raises(GridError):
        build_grid(1, [1.0], [n], width)


def test_grid_geometry():
    g = build_grid(2, [2.0, 1.0], [8, 4], 0.2)
    assert g.h == (0.25, 0.25)
    assert g.num_nodes == 9 * 5
    bm = g.boundary_mask.reshape(g.node_shape)
    assert bm[0].all() and bm[-1].all() and bm[:, 0].all() and bm[:, -1].all()
    assert not bm[1:-1, 1:-1].any()
    # trapezoidal node weights integrate constants exactly
    assert np.isclose(g.node_weights().sum(), 2.0)


def test_omega_partition():
    g = build_grid(2, [1.0, 1.0], [12, 12], 0.2)
    assert g.omega_mask.sum() + (~g.omega_mask).sum() == g.num_cells


def test_side_mask():
    m = side_mask(2, (1.0, 1.0), (10, 10), 0.1, "left")
    assert m[0].all() and m.sum() == 10
    m = side_mask(2, (1.0, 1.0), (10, 10), 0.1, "top")
    assert m[:, -1].all() and m.sum() == 10


def test_constant_bounds():
    g = build_grid(2, [1.0, 1.0], [8, 8], 0.2)
    c = sample_coefficients(g, 1.0, np.eye(2), 1.0, 1.0)
    assert c.bounds.as_tuple() == (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)


def test_diag_linear_bounds():
    g = build_grid(2, [1.0, 1.0], [16, 16], 0.2)
    rho, K = coefficient_preset("diag-linear", 2, slope=1.0, k2=2.0)
    c = sample_coefficients(g, rho, K, 0.0, 0.0)
    x1 = g.cell_centers()[..., 0]
    assert c.bounds.alpha == pytest.approx(min(1 + x1.min(), 2.0), abs=1e-12)
    assert c.bounds.beta == pytest.approx(max(1 + x1.max(), 2.0), abs=1e-12)
    # with centre sampling the extremes are those of the cell centres
    assert c.bounds.alpha == pytest.approx(1 + 0.5 / 16)
    assert c.bounds.beta == 2.0


def test_asymmetric_K_rejected():
    g = build_grid(2, [1.0, 1.0], [8, 8], 0.2)

    def K(x):
        out = np.tile(np.eye(2), (len(x), 1, 1))
        out[5, 0, 1] = 0.3
        return out

    with pytest.raises(CoefficientError, match="not symmetric") as exc:
        sample_coefficients(g, 1.0, K, 0.0, 0.0)
    assert exc.value.cell == (0, 5)


@pytest.mark.parametrize("rho,K,a,b,msg", [
    (-1.0, 1.0, 0.0, 0.0, "rho"),
    (1.0, -1.0, 0.0, 0.0, "positive definite"),
    (1.0, 1.0, -0.5, 0.0, "a must"),
    (1.0, 1.0, 0.0, -0.5, "b must"),
])
def test_bad_coefficients(rho, K, a, b, msg):
    g = build_grid(1, [1.0], [8], 0.2)
    with pytest.raises(CoefficientError, match=msg):
        sample_coefficients(g, rho, K, a, b)


def test_localized_damping_gate():
    g = build_grid(1, [1.0], [10], 0.1)
    with pytest.raises(CoefficientError, match="localized damping"):
        sample_coefficients(g, 1.0, 1.0, 0.0, 1.0, require_damping=True)


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 12), st.floats(0.1, 3.0), st.floats(-0.9, 0.9))
def test_alpha_is_min_eigenvalue(n, scale, corr):
    g = build_grid(2, [1.0, 1.0], [n, n], 0.2)

    def K(x):
        s = scale * (1 + x[:, 0])
        out = np.empty((len(x), 2, 2))
        out[:, 0, 0] = s
        out[:, 1, 1] = 1.0
        out[:, 0, 1] = out[:, 1, 0] = corr * np.sqrt(s)
        return out

    c = sample_coefficients(g, 1.0, K, 0.0, 0.0)
    ev = np.linalg.eigvalsh(c.K)
    assert abs(c.bounds.alpha - ev[..., 0].min()) <= 1e-12
    assert abs(c.bounds.beta - ev[..., -1].max()) <= 1e-12


def test_coefficients_immutable():
    g = build_grid(1, [1.0], [8], 0.2)
    c = sample_coefficients(g, 1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        c.rho[0] = 2.0
    with pytest.raises(ValueError):
        g.omega_mask[0] = False


def test_coefficient_table(tmp_path):
    import json

    g = build_grid(2, [1.0, 1.0], [4, 4], 0.3)
    path = tmp_path / "tab.json"
    K = np.tile(np.array([[2.0, 0.1], [0.1, 1.0]]), (16, 1, 1))
    path.write_text(json.dumps({"rho": [1.0] * 16, "K": K.ravel().tolist(), "a": [0.5] * 16,
                                "b": [0.5] * 16}))
    tab = load_coefficient_table(path, g)
    c = sample_coefficients(g, tab["rho"], tab["K"], tab["a"], tab["b"])
    assert c.K.shape == (4, 4, 2, 2)
    assert c.K[2, 3, 0, 1] == 0.1


def test_hyperbolic_preset_needs_2d():
    with pytest.raises(CoefficientError):
        coefficient_preset("hyperbolic-halfplane", 1)


def test_state_helpers():
    g = build_grid(1, [1.0], [8], 0.2)
    s = State.zeros(g)
    assert s.satisfies_dirichlet(g)
    s.u[0] = 1.0
    assert not s.satisfies_dirichlet(g)
    s.apply_dirichlet(g)
    assert s.satisfies_dirichlet(g)
    with pytest.raises(ValueError):
        State(np.zeros(3), np.zeros(3), np.zeros(4), np.zeros(3))
    t = State(np.arange(9.0), -np.arange(9.0), np.ones(9), np.zeros(9))
    sw = t.swapped()
    assert np.array_equal(sw.u, t.v) and np.array_equal(sw.q, t.p)
