"""Two-inclusion configurations, gap patches and vanishing orders.

A configuration is an outer domain ``omega`` holding two inclusions ``d1`` and
``d2`` at distance ``epsilon``.  The narrow region between them is covered by
gap patches: boxes in a rotated frame in which the inclusion boundaries are
graphs ``x_n = f(x')`` (the D1 side) and ``x_n = g(x')`` (the D2 side) with
``g - f`` comparable to ``epsilon + sum_j x_j**(2 alpha_j)``.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import shapes as sh


class GeometryError(ValueError):
    pass


class _Infinity:
    """The vanishing order of a direction in which the gap never opens."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __reduce__(self):
        return (_Infinity, ())


INFINITY = _Infinity()


def _parse_order(a):
    if a is INFINITY:
        return a
    if isinstance(a, str):
        if a.strip().lower() in ("inf", "infinity", "∞"):
            return INFINITY
        a = float(a)
    a = float(a)
    if math.isinf(a) and a > 0:
        return INFINITY
    if not a >= 1.0:
        raise GeometryError(f"vanishing order must be >= 1 or INFINITY, got {a}")
    return a


@dataclass(frozen=True)
class VanishingOrders:
    orders: tuple

    def __init__(self, orders):
        if isinstance(orders, VanishingOrders):
            orders = orders.orders
        object.__setattr__(self, "orders", tuple(_parse_order(a) for a in orders))

    def __len__(self):
        return len(self.orders)

    def __iter__(self):
        return iter(self.orders)

    @property
    def finite(self):
        return tuple(a for a in self.orders if a is not INFINITY)

    @property
    def gamma(self):
        return gamma_of(self)

    def to_json(self):
        return ["inf" if a is INFINITY else a for a in self.orders]


def gamma_of(orders) -> float:
    """Sum of ``1/(2 alpha_j)`` over the finite orders."""
    vo = VanishingOrders(orders)
    return float(sum(1.0 / (2.0 * a) for a in vo.finite))


@dataclass(frozen=True, eq=False)
class GapPatch:
    """A box around one piece of the narrow region.

    ``frame`` has orthonormal columns: the tangential axes first, the normal
    axis (pointing from D1 towards D2) last.  The box is
    ``|x'_j| < half_width`` and ``|x_n| < half_height``.
    """

    center: np.ndarray
    frame: np.ndarray
    half_width: float
    f: Callable
    g: Callable
    orders: VanishingOrders
    sandwich_constant: float = 4.0
    half_height: float | None = None
    bound: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "frame", np.asarray(self.frame, dtype=float))
        object.__setattr__(self, "orders", VanishingOrders(self.orders))
        if self.half_height is None:
            object.__setattr__(self, "half_height", self.half_width)
        n = len(self.center)
        if self.frame.shape != (n, n):
            raise GeometryError("frame must be n x n")
        if not np.allclose(self.frame.T @ self.frame, np.eye(n), atol=1e-12):
            raise GeometryError("frame must be orthonormal")
        if len(self.orders) != n - 1:
            raise GeometryError("need one vanishing order per tangential axis")

    @property
    def dim(self):
        return len(self.center)

    @property
    def r(self):
        return self.half_width

    def to_local(self, points):
        """Return ``(x', x_n)`` for points given in global coordinates."""
        q = (np.atleast_2d(points) - self.center) @ self.frame
        return q[:, :-1], q[:, -1]

    def in_box(self, points, scale=1.0):
        xp, xn = self.to_local(points)
        return (np.all(np.abs(xp) < scale * self.half_width, axis=1)
                & (np.abs(xn) < scale * self.half_height))

    def gap(self, xp):
        xp = np.asarray(xp, dtype=float).reshape(-1, self.dim - 1)
        return self.g(xp) - self.f(xp)

    def model_gap(self, xp, epsilon):
        """``epsilon + sum_j x_j**(2 alpha_j)`` over the finite orders."""
        xp = np.asarray(xp, dtype=float).reshape(-1, self.dim - 1)
        total = np.full(len(xp), float(epsilon))
        for j, a in enumerate(self.orders):
            if a is not INFINITY:
                total += (xp[:, j] ** 2) ** a
        return total

    def profile(self, points):
        """Linear-in-normal interpolant: 1 on the D1 graph, 0 on the D2 graph."""
        xp, xn = self.to_local(points)
        f, g = self.f(xp), self.g(xp)
        return (g - xn) / (g - f)


class RegionKind(enum.IntEnum):
    OUTSIDE_OMEGA = 0
    IN_D1 = 1
    IN_D2 = 2
    IN_GAP = 3
    IN_FAR = 4


class RegionTag(NamedTuple):
    kind: RegionKind
    patch: int | None = None

    def __repr__(self):
        if self.kind is RegionKind.IN_GAP:
            return f"IN_GAP({self.patch})"
        return self.kind.name


@dataclass(frozen=True, eq=False)
class Configuration:
    dim: int
    omega: sh.ImplicitShape | None
    d1: sh.ImplicitShape | None
    d2: sh.ImplicitShape | None
    patches: tuple
    epsilon: float
    far_margin: float = 0.1
    far_radius: float = 0.05
    preset: str = "custom"
    params: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    corners: tuple = ()
    periodic_x: bool = False
    components: int = 1
    eps_max: float = math.inf

    @property
    def has_pde(self):
        return self.dim == 2 and self.omega is not None

    @property
    def gamma(self):
        return config_gamma(self)

    def bounding_box(self):
        return self.omega.lo.copy(), self.omega.hi.copy()


def config_gamma(config: Configuration) -> float:
    if not config.patches:
        raise GeometryError("configuration has no gap patches")
    return min(gamma_of(p.orders) for p in config.patches)


def classify_many(config: Configuration, points):
    """Vectorised ``classify``: returns (kind codes, patch index or -1)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    kinds = np.full(len(pts), RegionKind.IN_FAR, dtype=np.int8)
    patch = np.full(len(pts), -1, dtype=np.int64)
    finite = np.all(np.isfinite(pts), axis=1)
    outside = ~finite | (config.omega(np.where(finite[:, None], pts, 0.0)) >= 0.0)
    in_d1 = ~outside & (config.d1(pts) <= 0.0)
    in_d2 = ~outside & ~in_d1 & (config.d2(pts) <= 0.0)
    kinds[outside] = RegionKind.OUTSIDE_OMEGA
    kinds[in_d1] = RegionKind.IN_D1
    kinds[in_d2] = RegionKind.IN_D2
    free = ~(outside | in_d1 | in_d2)
    # lowest patch index wins on overlap
    for i in reversed(range(len(config.patches))):
        hit = free & config.patches[i].in_box(pts)
        patch[hit] = i
    gap = free & (patch >= 0)
    kinds[gap] = RegionKind.IN_GAP
    patch[~gap] = -1
    return kinds, patch


def classify(config: Configuration, p) -> RegionTag:
    kinds, patch = classify_many(config, np.asarray(p, dtype=float)[None, :])
    kind = RegionKind(int(kinds[0]))
    return RegionTag(kind, int(patch[0]) if kind is RegionKind.IN_GAP else None)


def validate_gap(patch: GapPatch, epsilon: float, sample_count: int = 512):
    """Measured sandwich constants ``min/max of (g - f) / model gap``.

    Samples a tensor grid with ``sample_count`` points per tangential axis on
    the closed box ``[-r, r]^(n-1)``.
    """
    if sample_count < 100:
        raise GeometryError("sample_count must be at least 100")
    m = patch.dim - 1
    ax = np.linspace(-patch.r, patch.r, sample_count)
    xp = np.stack([g.ravel() for g in np.meshgrid(*([ax] * m), indexing="ij")],
                  axis=1)
    gap = patch.gap(xp)
    bad = ~(gap > 0)
    if np.any(bad):
        where = xp[np.argmax(bad)]
        raise GeometryError(f"g <= f at x' = {where.tolist()}")
    ratio = gap / patch.model_gap(xp, epsilon)
    return float(ratio.min()), float(ratio.max())


# --------------------------------------------------------------------------
# configuration checks


def _sample_box(lo, hi, count, seed):
    rng = np.random.default_rng(seed)
    return lo + (hi - lo) * rng.random((count, len(lo)))


def check_configuration(config: Configuration, samples: int = 20000, seed: int = 7):
    """Sampled checks of the configuration invariants; raises on violation."""
    if not config.has_pde:
        return
    lo, hi = config.bounding_box()
    pts = _sample_box(lo, hi, samples, seed)
    in1 = config.d1(pts) <= 0
    in2 = config.d2(pts) <= 0
    if np.any(in1 & in2):
        raise GeometryError("D1 and D2 overlap")
    inside = (in1 | in2)
    if np.any(inside):
        # every outer domain in the presets is an exact signed distance
        depth = -config.omega(pts[inside])
        if np.min(depth) < config.far_margin - 1e-12:
            raise GeometryError("an inclusion comes closer than far_margin to the outer boundary")
    kinds, _ = classify_many(config, pts)
    far = pts[kinds == RegionKind.IN_FAR]
    if len(far):
        d = np.maximum(config.d1.distance(far), config.d2.distance(far))
        if np.min(d) < config.far_radius:
            k = np.argmin(d)
            raise GeometryError(
                f"point {far[k].tolist()} is close to both inclusions but in no patch")


# --------------------------------------------------------------------------
# presets


def _frame_2d(normal):
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    t = np.array([-n[1], n[0]])
    return np.stack([t, n], axis=1)


def _two_disks(eps, radius=0.5, omega_radius=1.25, patch_r=0.25,
               far_margin=0.1):
    rho = radius
    c1 = np.array([-rho - eps / 2, 0.0])
    c2 = np.array([rho + eps / 2, 0.0])

    def f(xp):
        y = xp[:, 0]
        return -eps / 2 - rho + np.sqrt(rho * rho - y * y)

    def g(xp):
        y = xp[:, 0]
        return eps / 2 + rho - np.sqrt(rho * rho - y * y)

    # frame: tangential axis +y, normal axis +x (D1 -> D2)
    frame = np.array([[0.0, 1.0], [1.0, 0.0]])
    patch = GapPatch([0.0, 0.0], frame, patch_r, f, g, [1.0],
                     sandwich_constant=1.0 / rho + 1.0, bound=2.5 / rho)
    return dict(omega=sh.disk([0, 0], omega_radius), d1=sh.disk(c1, rho),
                d2=sh.disk(c2, rho), patches=(patch,), far_margin=far_margin,
                eps_max=0.4 * rho)


def _flat_gap(eps, half_length=0.5, cap_radius=0.25, omega_radius=1.2,
              patch_extra=0.0, far_margin=0.1):
    w, rho = half_length, cap_radius
    c1 = np.array([0.0, -eps / 2 - rho])
    c2 = np.array([0.0, eps / 2 + rho])
    r = w + patch_extra

    def _cap(x):
        dx = np.maximum(np.abs(x) - w, 0.0)
        return rho - np.sqrt(np.maximum(rho * rho - dx * dx, 0.0))

    def f(xp):
        return -eps / 2 - _cap(xp[:, 0])

    def g(xp):
        return eps / 2 + _cap(xp[:, 0])

    frame = np.eye(2)
    patch = GapPatch([0.0, 0.0], frame, r, f, g, [INFINITY],
                     sandwich_constant=2.0, half_height=0.6 * rho,
                     bound=1.0 + 2 * _cap(np.array([r]))[0] / max(eps, 1e-300))
    return dict(omega=sh.disk([0, 0], omega_radius), d1=sh.stadium(c1, w, rho),
                d2=sh.stadium(c2, w, rho), patches=(patch,),
                far_margin=far_margin, far_radius=0.002, eps_max=0.4 * rho)


def _power_gap(eps, alpha=2.0, a=0.5, b=0.3, omega_radius=1.0, patch_r=0.4,
               far_margin=0.1):
    power = 2.0 * alpha
    yc = eps / 2 + b

    def _lift(x):
        s = np.clip((np.abs(x) / a) ** power, 0.0, 1.0)
        return b * (1.0 - np.sqrt(1.0 - s))

    def f(xp):
        return -eps / 2 - _lift(xp[:, 0])

    def g(xp):
        return eps / 2 + _lift(xp[:, 0])

    frame = np.eye(2)
    # g - f = eps + 2 b (1 - sqrt(1 - |x/a|^p)) lies between eps + b|x/a|^p
    # and eps + 2b|x/a|^p
    kappa = b / a ** power
    lo_c, hi_c = min(1.0, kappa), max(1.0, 2 * kappa)
    patch = GapPatch([0.0, 0.0], frame, patch_r, f, g, [alpha],
                     sandwich_constant=2.0 * max(1 / lo_c, hi_c),
                     half_height=0.6 * b, bound=3.0 * hi_c / lo_c)
    return dict(omega=sh.disk([0, 0], omega_radius),
                d1=sh.superellipse([0, -yc], a, b, power),
                d2=sh.superellipse([0, yc], a, b, power), patches=(patch,),
                far_margin=far_margin, eps_max=0.2)


def _tori_cross_section(eps, a=0.7, minor=0.25, shell=0.15, omega_radius=1.5,
                        n_patches=8, far_margin=0.1):
    """Slice y = 0 of a torus ringed tightly by a second torus.

    D2 is the pair of tube cross-sections at x = -a and x = +a; D1 is the
    annular cross-section of the encircling tube around the right one.  The
    gap is an annulus of constant width epsilon (orders (inf)).
    """
    c_right = np.array([a, 0.0])
    r_in = minor + eps
    d2 = sh.union(sh.disk([-a, 0.0], minor), sh.disk(c_right, minor))
    d1 = sh.annulus(c_right, r_in, r_in + 2 * shell)
    patches = []
    half = np.pi / n_patches * 1.6  # neighbouring boxes overlap
    hw = minor * np.sin(half) * 0.999
    for k in range(n_patches):
        th = 2 * np.pi * k / n_patches
        radial = np.array([np.cos(th), np.sin(th)])
        center = c_right + (minor + eps / 2) * radial
        # normal points from D1 (outer annulus) to D2 (inner disk)
        frame = _frame_2d(-radial)
        off = minor + eps / 2

        def f(xp, off=off):
            t = xp[:, 0]
            return off - np.sqrt(r_in ** 2 - t * t)

        def g(xp, off=off):
            t = xp[:, 0]
            return off - np.sqrt(minor ** 2 - t * t)

        patches.append(GapPatch(center, frame, hw, f, g, [INFINITY],
                                sandwich_constant=2.0, half_height=0.5 * shell,
                                bound=2.0))
    return dict(omega=sh.disk([0, 0], omega_radius), d1=d1, d2=d2,
                patches=tuple(patches), far_margin=far_margin, components=2,
                eps_max=0.1)


def _capacitor_strip(eps, length=1.0, thickness=0.25, outer_gap=0.5):
    """x-periodic parallel-plate stack: ground | D1 | gap | D2 | ground.

    Every column is the same 1D problem, so all potentials are piecewise
    linear in y and the discrete solution is exact.
    """
    top = eps / 2 + thickness + outer_gap
    omega = sh.horizontal_band(-top, top, 0.0, length)
    d1 = sh.ImplicitShape(
        lambda p: np.abs(p[:, 1] + eps / 2 + thickness / 2) - thickness / 2,
        [0.0, -eps / 2 - thickness], [length, -eps / 2], exact_distance=True,
        name="plate1")
    d2 = sh.ImplicitShape(
        lambda p: np.abs(p[:, 1] - eps / 2 - thickness / 2) - thickness / 2,
        [0.0, eps / 2], [length, eps / 2 + thickness], exact_distance=True,
        name="plate2")

    def f(xp):
        return np.full(len(xp), -eps / 2)

    def g(xp):
        return np.full(len(xp), eps / 2)

    patch = GapPatch([length / 2, 0.0], np.eye(2), length / 2 + 1e-9, f, g,
                     [INFINITY], sandwich_constant=1.5,
                     half_height=eps / 2 + thickness / 2, bound=1.0 + 1e-9)
    return dict(omega=omega, d1=d1, d2=d2, patches=(patch,),
                far_margin=min(outer_gap, 0.1), periodic_x=True, components=3,
                eps_max=0.5)


def _annulus(eps, inner=0.3, outer=1.0):
    """Test fixture: a single inclusion (D1) in a disk, no narrow region."""
    return dict(omega=sh.disk([0, 0], outer), d1=sh.disk([0, 0], inner),
                d2=sh.empty(2), patches=(), far_margin=0.0, eps_max=math.inf)


def _integral_only_3d(eps, alpha=(1.0, 2.0), r=1.0):
    orders = VanishingOrders(alpha)
    if len(orders) != 2:
        raise GeometryError("integral_only_3d needs two vanishing orders")

    def lift(xp):
        total = np.zeros(len(xp))
        for j, a in enumerate(orders):
            if a is not INFINITY:
                total += (xp[:, j] ** 2) ** a
        return total / 2

    def f(xp):
        return -eps / 2 - lift(xp)

    def g(xp):
        return eps / 2 + lift(xp)

    patch = GapPatch(np.zeros(3), np.eye(3), r, f, g, orders,
                     sandwich_constant=1.5, bound=1.0 + 1e-9)
    return dict(dim=3, omega=None, d1=None, d2=None, patches=(patch,),
                far_margin=0.0, eps_max=r * r)


PRESETS = {
    "two_disks_2d": _two_disks,
    "flat_gap_2d": _flat_gap,
    "power_gap_2d": _power_gap,
    "tori_cross_section_2d": _tori_cross_section,
    "capacitor_strip_2d": _capacitor_strip,
    "integral_only_3d": _integral_only_3d,
    "annulus_2d": _annulus,
}

_OVERRIDABLE = ("far_margin", "far_radius")


def preset(name: str, epsilon: float, params: dict | None = None,
           overrides: dict | None = None, check: bool = True) -> Configuration:
    """Build a named configuration at gap width ``epsilon``."""
    if name not in PRESETS:
        raise GeometryError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    params = dict(params or {})
    overrides = dict(overrides or {})
    bad = set(overrides) - set(_OVERRIDABLE)
    if bad:
        raise GeometryError(f"unknown override(s): {sorted(bad)}")
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise GeometryError("epsilon must be positive")
    try:
        parts = PRESETS[name](epsilon, **params)
    except TypeError as exc:
        raise GeometryError(f"bad parameters for {name}: {exc}") from None
    if epsilon > parts.pop("eps_max"):
        raise GeometryError(f"epsilon={epsilon} is too large for preset {name}")
    parts.update(overrides)
    parts.setdefault("dim", 2)
    config = Configuration(epsilon=epsilon, preset=name, params=params,
                           overrides=overrides, **parts)
    if check:
        check_configuration(config)
    return config


def config_to_json(config: Configuration) -> str:
    doc = {"preset": config.preset, "epsilon": config.epsilon,
           "params": config.params, "overrides": config.overrides}
    return json.dumps(doc, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if obj is INFINITY:
        return "inf"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def config_from_json(text: str | dict) -> Configuration:
    doc = json.loads(text) if isinstance(text, str) else dict(text)
    unknown = set(doc) - {"preset", "epsilon", "params", "overrides"}
    if unknown:
        raise GeometryError(f"unknown configuration key(s): {sorted(unknown)}")
    params = dict(doc.get("params", {}))
    if "alpha" in params and isinstance(params["alpha"], list):
        params["alpha"] = tuple(params["alpha"])
    return preset(doc["preset"], doc["epsilon"], params, doc.get("overrides"))
