import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse

from narrowgap import shapes as sh
from narrowgap.geometry import Configuration, preset
from narrowgap.grid import (Boundary, GridError, NodeClass, SolverError, build_grid,
                            combine, read_lattice, solve_dirichlet, write_lattice)
from narrowgap.traces import Trace, random_trig_specs


@pytest.fixture(scope="module")
def annulus_grid():
    return build_grid(preset("annulus_2d", 0.1), 0.04)


@pytest.fixture(scope="module")
def disks_grid():
    return build_grid(preset("two_disks_2d", 0.1), 0.0125)


def exact_quadratic(p):
    return p[:, 0] ** 2 - p[:, 1] ** 2


def test_manufactured_solution_converges():
    config = preset("annulus_2d", 0.1)
    errs = []
    for h in (0.04, 0.02):
        grid = build_grid(config, h)
        u = solve_dirichlet(grid, {"omega": exact_quadratic, "d1": exact_quadratic}, 1e-12)
        errs.append(np.max(np.abs(u.values - exact_quadratic(grid.points()))))
    assert np.log2(errs[0] / errs[1]) > 1.5


def test_constant_data_gives_constant(disks_grid):
    u = solve_dirichlet(disks_grid, {"omega": 2.5, "d1": 2.5, "d2": 2.5}, 1e-12)
    assert np.max(np.abs(u.values - 2.5)) < 1e-9


def test_laplacian_is_symmetric_m_matrix(disks_grid):
    K = disks_grid.laplacian().tocsr()
    assert abs(K - K.T).max() == 0.0
    diag = K.diagonal()
    assert np.all(diag > 0)
    off = K - sparse.diags(diag)
    assert off.max() <= 0.0
    # weak diagonal dominance, strict on rows with arms
    rowsum = np.asarray(K.sum(axis=1)).ravel()
    assert rowsum.min() >= -1e-12
    with_arm = np.zeros(disks_grid.n_active, dtype=bool)
    with_arm[disks_grid.arm_node] = True
    assert np.all(rowsum[with_arm] > 0)


@given(st.integers(0, 10_000))
@settings(max_examples=8, deadline=None)
def test_discrete_maximum_principle(seed):
    grid = build_grid(preset("annulus_2d", 0.1), 0.04)
    spec = random_trig_specs(1, order=3, seed=seed)[0]
    phi = Trace(spec, grid.config.omega)
    u = solve_dirichlet(grid, {"omega": phi, "d1": 0.3}, 1e-11)
    lo, hi = u.trace.min(), u.trace.max()
    assert u.values.min() >= lo - 1e-9 and u.values.max() <= hi + 1e-9


def test_node_classes_and_arms(disks_grid):
    cls = disks_grid.node_class()
    counts = {c: int(np.sum(cls == c)) for c in NodeClass}
    assert counts[NodeClass.ACTIVE] > 0
    for c in (NodeClass.BOUNDARY_OMEGA, NodeClass.BOUNDARY_D1, NodeClass.BOUNDARY_D2):
        assert counts[c] > 0
    assert np.all((disks_grid.arm_theta > 0) & (disks_grid.arm_theta <= 1.0))
    # cut points lie on their boundary, up to the theta floor for nodes on it
    slack = 1e-10 + 1.01e-6 * disks_grid.h
    for b, shape in ((Boundary.OMEGA, disks_grid.config.omega),
                     (Boundary.D1, disks_grid.config.d1),
                     (Boundary.D2, disks_grid.config.d2)):
        pts = disks_grid.arm_point[disks_grid.arm_class == b]
        assert np.max(np.abs(shape(pts))) < slack


def test_solvers_agree(annulus_grid):
    data = {"omega": exact_quadratic, "d1": 1.0}
    a = solve_dirichlet(annulus_grid, data, 1e-11, "amg")
    b = solve_dirichlet(annulus_grid, data, 1e-11, "jacobi")
    assert np.max(np.abs(a.values - b.values)) < 1e-8


def test_solve_is_deterministic_and_leaves_global_rng(disks_grid):
    np.random.seed(99)
    before = np.random.get_state()[1].copy()
    grid = build_grid(preset("two_disks_2d", 0.1), 0.0125)
    u1 = solve_dirichlet(grid, {"omega": 0.0, "d1": 1.0, "d2": 0.0})
    after = np.random.get_state()[1]
    assert np.array_equal(before, after)
    u2 = solve_dirichlet(disks_grid, {"omega": 0.0, "d1": 1.0, "d2": 0.0})
    assert u1.values.tobytes() == u2.values.tobytes()


def test_solver_error_on_iteration_cap(annulus_grid):
    rhs = np.ones(annulus_grid.n_active)
    with pytest.raises(SolverError):
        annulus_grid.solver("jacobi").solve(rhs, 1e-12, maxiter=2)


def test_grid_errors():
    with pytest.raises(GridError) as err:
        build_grid(preset("two_disks_2d", 0.05), 0.01)
    assert err.value.code == "RESOLUTION"
    with pytest.raises(GridError) as err:
        build_grid(preset("capacitor_strip_2d", 0.1), 0.0123)
    assert err.value.code == "PERIOD"
    with pytest.raises(GridError) as err:
        build_grid(preset("integral_only_3d", 0.1), 0.01)
    assert err.value.code == "DIMENSION"
    with pytest.raises(GridError) as err:
        build_grid(preset("annulus_2d", 0.1), -1.0)
    assert err.value.code == "SPACING"


def test_connectivity_error():
    # a bar across the disk cuts the free region in two
    bar = sh.rectangle([-2.0, -0.2], [2.0, 0.2])
    config = Configuration(dim=2, omega=sh.disk([0, 0], 1.0), d1=bar, d2=sh.empty(2),
                           patches=(), epsilon=0.1, components=1)
    with pytest.raises(GridError) as err:
        build_grid(config, 0.05)
    assert err.value.code == "CONNECTIVITY"


def test_field_algebra(annulus_grid):
    a = solve_dirichlet(annulus_grid, {"omega": 0.0, "d1": 1.0})
    b = solve_dirichlet(annulus_grid, {"omega": 1.0, "d1": 0.0})
    s = combine([1.0, 1.0], [a, b])
    assert np.allclose(s.values, 1.0, atol=1e-8)
    assert np.allclose((a + b).values, s.values)
    assert np.allclose((2.0 * a).trace, 2 * a.trace)
    with pytest.raises(ValueError):
        solve_dirichlet(annulus_grid, {"omega": 0.0})


def test_lattice_round_trip(tmp_path, annulus_grid):
    u = solve_dirichlet(annulus_grid, {"omega": exact_quadratic, "d1": 0.0})
    path = tmp_path / "u.lat"
    write_lattice(u, path)
    header, cls, vals = read_lattice(path)
    assert (header["nx"], header["ny"]) == (annulus_grid.nx, annulus_grid.ny)
    assert header["h"] == annulus_grid.h
    assert np.array_equal(cls, annulus_grid.node_class())
    active = ~np.isnan(vals)
    assert np.array_equal(vals[active], u.lattice()[active])
    assert active.sum() == annulus_grid.n_active
    csv_path = tmp_path / "u.csv"
    write_lattice(u, csv_path, "csv")
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("# nx=") and lines[1] == "i,j,class,value"
    assert len(lines) == 2 + annulus_grid.nx * annulus_grid.ny
    with pytest.raises(ValueError):
        write_lattice(u, tmp_path / "x", "png")


def test_periodic_capacitor_is_exact():
    eps = 0.1
    grid = build_grid(preset("capacitor_strip_2d", eps), eps / 8)
    assert grid.periodic_x
    v1 = solve_dirichlet(grid, {"omega": 0.0, "d1": 1.0, "d2": 0.0}, 1e-12)
    y = grid.points()[:, 1]
    gap = np.abs(y) < eps / 2
    # linear in the gap: 1 on the lower plate at y = -eps/2, 0 at y = eps/2;
    # nodes on the plate faces see the 1e-6 theta floor
    assert np.max(np.abs(v1.values[gap] - (0.5 - y[gap] / eps))) < 1e-6
