import numpy as np
import pytest

from kvwave.fields import State, build_grid, sample_coefficients


def collar_problem(dim=1, n=32, width=0.1, a=1.0, b=1.0, rho=1.0, K=1.0):
    """Grid plus coefficients with damping ``a, b`` on a boundary collar."""
    grid = build_grid(dim, [1.0] * dim, [n] * dim, width)
    om = grid.omega_mask
    coeffs = sample_coefficients(grid, rho, K, np.where(om, a, 0.0), np.where(om, b, 0.0))
    return grid, coeffs


def random_state(grid, rng, scale=1.0):
    vals = scale * rng.uniform(-1.0, 1.0, size=(4, grid.num_nodes))
    vals[:, grid.boundary_mask] = 0.0
    return State(*vals)


def standing_state(grid, amp_u=1.0, amp_v=0.5):
    x = grid.node_coords()
    u = amp_u * np.prod(np.sin(np.pi * x), axis=1)
    v = amp_v * np.prod(np.sin(2 * np.pi * x), axis=1)
    z = np.zeros(grid.num_nodes)
    return State(u, v, z, z.copy()).apply_dirichlet(grid)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
