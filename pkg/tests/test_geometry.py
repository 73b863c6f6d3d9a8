import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from narrowgap import shapes as sh
from narrowgap.geometry import (INFINITY, GeometryError, PRESETS, RegionKind,
                                VanishingOrders, check_configuration, classify,
                                classify_many, config_from_json, config_to_json,
                                gamma_of, preset, validate_gap)

PDE_PRESETS = [n for n in PRESETS if n != "integral_only_3d"]


@pytest.mark.parametrize("name", PDE_PRESETS)
@pytest.mark.parametrize("eps", [0.1, 0.02])
def test_presets_pass_configuration_checks(name, eps):
    config = preset(name, eps)
    check_configuration(config, samples=40000)
    assert config.has_pde


@pytest.mark.parametrize("name", ["two_disks_2d", "flat_gap_2d", "power_gap_2d",
                                  "tori_cross_section_2d", "capacitor_strip_2d"])
def test_patch_sandwich_constants(name):
    eps = 0.01
    config = preset(name, eps)
    for patch in config.patches:
        lo, hi = validate_gap(patch, eps)
        K = patch.sandwich_constant
        assert 1 / K <= lo <= hi <= K


def test_classify_two_disks():
    eps = 0.05
    config = preset("two_disks_2d", eps)
    assert classify(config, [-0.5, 0.0]).kind is RegionKind.IN_D1
    assert classify(config, [0.5, 0.0]).kind is RegionKind.IN_D2
    tag = classify(config, [0.0, 0.01])
    assert tag.kind is RegionKind.IN_GAP and tag.patch == 0
    assert classify(config, [0.0, 1.0]).kind is RegionKind.IN_FAR
    assert classify(config, [2.0, 0.0]).kind is RegionKind.OUTSIDE_OMEGA
    kinds, patch = classify_many(config, [[np.nan, 0.0]])
    assert kinds[0] == RegionKind.OUTSIDE_OMEGA and patch[0] == -1


def test_gap_graphs_touch_inclusions():
    eps = 0.03
    config = preset("two_disks_2d", eps)
    p = config.patches[0]
    xp = np.linspace(-0.2, 0.2, 41)[:, None]
    # graph points of f and g sit on the disk boundaries
    on_d1 = np.stack([p.f(xp), xp[:, 0]], axis=1)
    on_d2 = np.stack([p.g(xp), xp[:, 0]], axis=1)
    assert np.max(np.abs(config.d1(on_d1))) < 1e-12
    assert np.max(np.abs(config.d2(on_d2))) < 1e-12
    assert np.allclose(p.gap(np.zeros((1, 1))), eps)


def test_vanishing_orders_parsing():
    assert VanishingOrders(["inf", 1]).orders[0] is INFINITY
    assert VanishingOrders([math.inf]).orders[0] is INFINITY
    assert VanishingOrders(["∞"]).finite == ()
    with pytest.raises(GeometryError):
        VanishingOrders([0.5])
    assert gamma_of([1]) == 0.5
    assert gamma_of([1, 2]) == 0.75
    assert gamma_of([INFINITY]) == 0.0


@given(st.lists(st.one_of(st.floats(1.0, 50.0), st.just(INFINITY)), min_size=1,
                max_size=4))
def test_gamma_sums_finite_orders(orders):
    expected = sum(1 / (2 * a) for a in orders if a is not INFINITY)
    assert gamma_of(orders) == pytest.approx(expected, rel=1e-12)
    assert gamma_of(list(reversed(orders))) == pytest.approx(expected, rel=1e-12)


@given(st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=60)
def test_disk_is_exact_signed_distance(x, y):
    disk = sh.disk([0.2, -0.1], 0.7)
    d = disk(np.array([[x, y]]))[0]
    assert d == pytest.approx(math.hypot(x - 0.2, y + 0.1) - 0.7, abs=1e-12)


def test_locate_finds_crossing():
    disk = sh.disk([0, 0], 1.0)
    inside = np.array([[0.0, 0.0], [0.5, 0.5]])
    outside = np.array([[2.0, 0.0], [1.0, 1.0]])
    t = disk.locate(inside, outside, tol=1e-12)
    pts = inside + t[:, None] * (outside - inside)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-11)


def test_config_json_round_trip():
    config = preset("power_gap_2d", 0.05, {"alpha": 3.0})
    again = config_from_json(config_to_json(config))
    assert again.preset == "power_gap_2d"
    assert again.epsilon == 0.05
    assert again.gamma == pytest.approx(1 / 6)
    with pytest.raises(GeometryError):
        config_from_json('{"preset": "two_disks_2d", "epsilon": 0.1, "x": 1}')


def test_preset_errors():
    with pytest.raises(GeometryError):
        preset("nope", 0.1)
    with pytest.raises(GeometryError):
        preset("two_disks_2d", 0.5)
    with pytest.raises(GeometryError):
        preset("two_disks_2d", -1.0)
    with pytest.raises(GeometryError):
        preset("two_disks_2d", 0.1, overrides={"color": 1})
    with pytest.raises(GeometryError):
        preset("two_disks_2d", 0.1, {"nonsense": 1})


def test_far_radius_violation_detected():
    # a tiny far_radius override is fine, a huge one must trip the check
    preset("two_disks_2d", 0.05, overrides={"far_radius": 0.01})
    with pytest.raises(GeometryError):
        preset("two_disks_2d", 0.05, overrides={"far_radius": 0.5})
