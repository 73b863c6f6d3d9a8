import functools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from narrowgap.geometry import preset
from narrowgap.grid import Boundary, Field, build_grid, solve_dirichlet
from narrowgap.pde import (boundary_flux, comparison_field, energy_inner,
                           functionals, gap_energy_lower, gradient_estimate,
                           patch_region, sup_grad, write_svg)
from narrowgap.traces import random_trig_specs

EPS = 0.1


@functools.lru_cache(maxsize=None)
def disks():
    config = preset("two_disks_2d", EPS)
    return config, build_grid(config, EPS / 8)


@functools.lru_cache(maxsize=None)
def potentials():
    _, grid = disks()
    v1 = solve_dirichlet(grid, {"omega": 0.0, "d1": 1.0, "d2": 0.0}, 1e-11, name="v1")
    v2 = solve_dirichlet(grid, {"omega": 0.0, "d1": 0.0, "d2": 1.0}, 1e-11, name="v2")
    return v1, v2


BUMP = {"kind": "bump", "center": 0.3, "width": 0.785, "sign": 1.0}


@pytest.fixture(scope="module")
def report():
    config, grid = disks()
    return functionals(config, grid, BUMP, 1e-11)


def test_capacity_matrix_structure(report):
    assert report.a12 == pytest.approx(report.a21, rel=1e-12)
    assert report.a12 < 0 < report.a11 and report.a22 > 0
    assert report.det > 0
    assert report.a11 + report.a21 > 0
    assert not report.flags


def test_constants_solve_the_capacity_system(report):
    r = report
    assert r.a11 * r.C1 + r.a12 * r.C2 + r.b1 == pytest.approx(0, abs=1e-10 * r.a11)
    assert r.a21 * r.C1 + r.a22 * r.C2 + r.b2 == pytest.approx(0, abs=1e-10 * r.a11)


def test_conductor_fluxes_vanish(report):
    scale = abs(report.a11) * max(abs(report.C1), abs(report.C2), 1.0)
    assert abs(report.flux_d1_u) < 1e-7 * scale
    assert abs(report.flux_d2_u) < 1e-7 * scale


def test_two_routes_to_q_agree(report):
    assert report.Q_eps == pytest.approx(report.Q_eps_identity, rel=1e-7)
    assert report.flux_gap < 1e-7
    assert report.invariants(det_window=(1e-3, 1e3))["det_window"]


def test_flux_identity_for_v1():
    v1, v2 = potentials()
    a11 = energy_inner(v1, v1)
    a21 = energy_inner(v2, v1)
    assert -boundary_flux(v1, Boundary.OMEGA) == pytest.approx(a11 + a21, rel=1e-8)
    # summation by parts: E(v1, g) = sum over arms of (v1_B - v1_i) g_B / theta
    assert boundary_flux(v1, "d1") == pytest.approx(-a11, rel=1e-8)
    assert boundary_flux(v1, "d2") == pytest.approx(-a21, rel=1e-8)


def test_antisymmetric_data_gives_opposite_constants():
    config, grid = disks()
    r = functionals(config, grid, "dipole", 1e-11)
    assert r.C1 == pytest.approx(-r.C2, rel=1e-6)
    assert r.sup_grad_u >= abs(r.delta_C) / EPS


@given(st.integers(0, 1000), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=5, deadline=None)
def test_constants_are_linear_in_the_data(seed, a, b):
    config, grid = disks()
    s1, s2 = random_trig_specs(2, seed=seed)
    r1 = functionals(config, grid, s1, 1e-11)
    r2 = functionals(config, grid, s2, 1e-11)
    mix = {"kind": "trig",
           "cos": [a * x + b * y for x, y in zip(s1["cos"], s2["cos"])],
           "sin": [a * x + b * y for x, y in zip(s1["sin"], s2["sin"])]}
    r = functionals(config, grid, mix, 1e-11)
    scale = 1 + abs(a * r1.C1) + abs(b * r2.C1)
    assert r.C1 == pytest.approx(a * r1.C1 + b * r2.C1, abs=1e-7 * scale)
    assert r.C2 == pytest.approx(a * r1.C2 + b * r2.C2, abs=1e-7 * scale)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=10, deadline=None)
def test_discrete_dirichlet_principle(seed):
    v1, _ = potentials()
    rng = np.random.default_rng(seed)
    delta = 0.1 * rng.standard_normal(v1.grid.n_active)
    w = Field(v1.grid, v1.values + delta, v1.trace)
    assert energy_inner(w, w) >= energy_inner(v1, v1)


def test_comparison_field_beats_v1_and_keeps_trace():
    config, grid = disks()
    v1, _ = potentials()
    W = comparison_field(config, grid, v1)
    assert np.array_equal(W.trace, v1.trace)
    assert energy_inner(W, W) >= energy_inner(v1, v1)
    assert energy_inner(v1, v1) >= 0.85 * gap_energy_lower(config, 0)
    inner = patch_region(grid, 0, 0.5)
    assert inner.any() and not inner.all()


def test_gradient_estimate_exact_for_linear_field():
    _, grid = disks()
    pts = grid.points()
    f = Field(grid, 2 * pts[:, 0] - pts[:, 1], 2 * grid.arm_point[:, 0] - grid.arm_point[:, 1])
    grad, mask = gradient_estimate(f)
    assert mask.sum() > 0.9 * grid.n_active
    assert np.allclose(grad[mask], [2.0, -1.0], atol=1e-9)
    sup, where = sup_grad(f)
    assert sup == pytest.approx(np.sqrt(5.0), rel=1e-9)
    assert where is not None


def test_capacitor_sup_equals_jump_over_eps():
    eps, top = 0.1, 0.05 + 0.25 + 0.5
    config = preset("capacitor_strip_2d", eps)
    grid = build_grid(config, eps / 8)
    slope = (2 * 0.5 / eps + 1) / (2 * top)
    r = functionals(config, grid, {"kind": "affine", "coeffs": [0, 0, slope]}, 1e-12)
    assert abs(r.delta_C) == pytest.approx(1.0, rel=1e-5)
    assert r.sup_grad_u == pytest.approx(1 / eps, rel=1e-5)


def test_write_svg(tmp_path):
    v1, _ = potentials()
    path = tmp_path / "v1.svg"
    write_svg(v1, path, max_cells=60)
    text = path.read_text()
    assert text.startswith("<svg") or text.startswith("<?xml")
    assert "</svg>" in text
