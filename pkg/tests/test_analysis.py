import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from narrowgap.analysis import (AnalysisError, HRule, Model, SweepRow, SweepTable,
                                find_boundary_data, fit_exponent, structural_checks,
                                sweep, verify_theorems)
from narrowgap.geometry import preset
from narrowgap.grid import GridError, build_grid
from narrowgap.pde import functionals

CAP_EPS = [0.2, 0.1, 0.05, 0.02]
CAP_PHI = {"kind": "affine", "coeffs": [0.0, 0.0, 1.0]}


@pytest.fixture(scope="module")
def cap_table():
    return sweep("capacitor_strip_2d", CAP_EPS, CAP_PHI)


def test_h_rule_snaps_to_period():
    rule = HRule()
    h = rule(0.1, period=1.0)
    assert h <= 0.1 / 8
    assert abs(1.0 / h - round(1.0 / h)) < 1e-9
    assert HRule(0.125, 0.001)(0.1) == 0.001
    assert "0.125" in rule.describe()


def test_sweep_input_checks():
    with pytest.raises(AnalysisError, match="need >= 4"):
        sweep("two_disks_2d", [0.1, 0.05], CAP_PHI)
    with pytest.raises(AnalysisError):
        sweep("two_disks_2d", [0.1, 0.08, 0.06, 0.05], CAP_PHI)
    with pytest.raises(GridError) as err:
        sweep("two_disks_2d", [0.1, 0.05, 0.02, 0.01], CAP_PHI, HRule(0.25))
    assert err.value.code == "RESOLUTION"


def test_capacitor_sweep_is_exact(cap_table):
    eps = cap_table.epsilons
    assert list(eps) == sorted(CAP_EPS, reverse=True)
    energy = cap_table.column("energy_v1")
    # plate length 1 over the gap plus the two ground layers of width 0.5
    assert np.allclose(energy, 1 / eps + 2.0, rtol=1e-6)
    fit = fit_exponent((eps, energy - 2.0), None)
    assert fit.exponent == pytest.approx(-1.0, abs=1e-6)
    assert all(row.ok for row in cap_table.rows)


def test_csv_layout_and_determinism(cap_table):
    text = cap_table.to_csv()
    lines = text.splitlines()
    assert lines[0].startswith("# preset=capacitor_strip_2d")
    header = lines[1].split(",")
    assert header[:5] == ["epsilon", "sup_grad_u", "energy_v1", "C1", "C2"]
    assert header[-2:] == ["I_patch_0", "flags"]
    assert len(lines) == 2 + len(CAP_EPS)
    again = sweep("capacitor_strip_2d", CAP_EPS, CAP_PHI, workers=2)
    assert again.to_csv() == text


@given(st.floats(-2.0, -0.01), st.floats(0.1, 10.0))
@settings(max_examples=30)
def test_power_fit_recovers_exponent(p, amp):
    eps = np.logspace(-3, -1, 6)
    fit = fit_exponent((eps, amp * eps ** p), None)
    assert fit.exponent == pytest.approx(p, abs=1e-9)
    assert fit.amplitude == pytest.approx(amp, rel=1e-8)
    assert fit.r_squared == pytest.approx(1.0)


def test_power_log_model():
    eps = np.logspace(-4, -1, 5)
    q = 3.0 / (eps * np.log(1 / eps))
    fit = fit_exponent((eps, q), None, Model.POWER_LOG, gamma=1.0)
    assert fit.amplitude == pytest.approx(3.0)
    assert fit.dispersion < 1e-12
    with pytest.raises(AnalysisError):
        fit_exponent((eps, q), None, Model.POWER_LOG, gamma=0.5)
    with pytest.raises(AnalysisError):
        fit_exponent((eps[:3], q[:3]), None)
    with pytest.raises(AnalysisError):
        fit_exponent((eps, -q), None)


def fake_table(eps, sup, energy, a12=-1.0, Q=1.0):
    rows = []
    for e, s, en in zip(eps, sup, energy):
        dC = 0.5 * e * s
        report = SimpleNamespace(
            sup_grad_u=s, energy_v1=en, a11=en, a12=a12, a21=a12, a22=en, det=en * en - 1,
            delta_C=dC, C1=dC / 2, C2=-dC / 2, Q_eps=Q, b1=1.0, b2=1.0,
            flux_omega_v1=-2.0, flux_omega_v2=-2.0, flags=[])
        rows.append(SweepRow(e, report, energy_W=en * 1.1))
    return SweepTable(rows, "fake", "rule", "phi")


def test_verify_theorems_on_synthetic_rates():
    eps = np.array([0.1, 0.05, 0.025, 0.0125, 0.00625])
    good = fake_table(eps, 3 * eps ** -0.5, 2 * eps ** -0.5)
    assert verify_theorems(good, 0.5).passed
    flat = fake_table(eps, 3 + 0 * eps, 2 * eps ** -0.5)
    report = verify_theorems(flat, 0.5)
    assert not report.passed
    assert not report.get("sup_exponent").passed
    log_rate = fake_table(eps, 1 / (eps * np.log(1 / eps)), np.log(1 / eps))
    assert verify_theorems(log_rate, 1.0).passed


def test_structural_checks_detect_sign_flip():
    eps = np.array([0.1, 0.05, 0.025, 0.0125])
    ok = {c.name: c for c in structural_checks(fake_table(eps, eps ** -0.5, eps ** -0.5))}
    assert all(c.passed for c in ok.values())
    bad = {c.name: c for c in structural_checks(
        fake_table(eps, eps ** -0.5, eps ** -0.5, a12=+1.0))}
    assert not bad["a12_nonpositive"].passed
    zero = {c.name: c for c in structural_checks(
        fake_table(eps, eps ** -0.5, eps ** -0.5, Q=0.0))}
    assert zero["q_window"].values["status"] == "NOT_APPLICABLE"


def test_table_requires_decreasing_eps():
    rows = [SweepRow(0.05), SweepRow(0.1)]
    with pytest.raises(AnalysisError):
        SweepTable(rows, "x", "y", "z")


def test_boundary_search_matches_direct_solve():
    bd = find_boundary_data("two_disks_2d", 0.1, m=8, seed=1)
    assert bd.beats_pool
    assert len(bd.pool_Q) == 8
    assert abs(bd.Q) > 0
    config = preset("two_disks_2d", 0.1)
    report = functionals(config, build_grid(config, 0.0125), bd.spec)
    assert report.Q_eps == pytest.approx(bd.Q, rel=1e-7)
    # the sign of Q is the one implied by the case split on the outward fluxes
    assert math.copysign(1.0, bd.Q) == bd.predicted_sign
    with pytest.raises(AnalysisError):
        find_boundary_data("two_disks_2d", 0.1, m=2)
