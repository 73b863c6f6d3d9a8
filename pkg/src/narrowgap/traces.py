"""Dirichlet data on the outer boundary.

A trace is built from a small JSON-friendly spec:

    {"kind": "zero"}
    {"kind": "constant", "value": c}          ("one" is constant 1)
    {"kind": "affine", "coeffs": [c0, cx, cy]}
    {"kind": "dipole"}                         x / |x|
    {"kind": "trig", "cos": [a0, a1, ...], "sin": [b1, ...]}
    {"kind": "bump", "center": s0, "width": w, "sign": +-1, "plateau": 0.5}

Arc-length based kinds (trig, bump) use the outer shape's boundary
parameterisation ``s in [0, perimeter)``.
"""
from __future__ import annotations

import json

import numpy as np

KINDS = ("zero", "one", "constant", "affine", "dipole", "trig", "bump")


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def normalize_spec(spec) -> dict:
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = dict(spec)
    kind = spec.get("kind")
    if kind not in KINDS:
        raise ValueError(f"unknown trace kind {kind!r}; choose from {KINDS}")
    allowed = {"zero": set(), "one": set(), "constant": {"value"},
               "affine": {"coeffs"}, "dipole": set(), "trig": {"cos", "sin"},
               "bump": {"center", "width", "sign", "plateau", "height"}}[kind]
    extra = set(spec) - allowed - {"kind"}
    if extra:
        raise ValueError(f"unknown key(s) for {kind} trace: {sorted(extra)}")
    return spec


def trace_id(spec) -> str:
    return json.dumps(normalize_spec(spec), sort_keys=True, separators=(",", ":"))


class Trace:
    """Callable boundary data ``phi(points)``."""

    def __init__(self, spec, omega=None):
        self.spec = normalize_spec(spec)
        self.omega = omega
        self.kind = self.spec["kind"]
        if self.kind in ("trig", "bump"):
            if omega is None or omega.perimeter is None:
                raise ValueError(f"{self.kind} traces need an outer boundary "
                                 "with an arc-length parameterisation")

    @property
    def perimeter(self):
        return self.omega.perimeter

    def of_s(self, s):
        """Arc-length form (trig and bump kinds only)."""
        s = np.asarray(s, dtype=float)
        spec = self.spec
        if self.kind == "trig":
            ang = 2 * np.pi * s / self.perimeter
            cos = spec.get("cos", [])
            sin = spec.get("sin", [])
            out = np.full_like(s, cos[0] if cos else 0.0)
            for k, a in enumerate(cos[1:], start=1):
                out += a * np.cos(k * ang)
            for k, b in enumerate(sin, start=1):
                out += b * np.sin(k * ang)
            return out
        if self.kind == "bump":
            P = self.perimeter
            half = 0.5 * spec.get("width", 0.1 * P)
            flat = spec.get("plateau", 0.5) * half
            d = np.abs(np.mod(s - spec["center"] + 0.5 * P, P) - 0.5 * P)
            prof = np.where(d <= flat, 1.0, smoothstep((half - d) / (half - flat)))
            return spec.get("sign", 1.0) * spec.get("height", 1.0) * prof
        raise ValueError(f"{self.kind} traces have no arc-length form")

    def __call__(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        spec = self.spec
        if self.kind == "zero":
            return np.zeros(len(p))
        if self.kind == "one":
            return np.ones(len(p))
        if self.kind == "constant":
            return np.full(len(p), float(spec["value"]))
        if self.kind == "affine":
            c0, cx, cy = spec["coeffs"]
            return c0 + cx * p[:, 0] + cy * p[:, 1]
        if self.kind == "dipole":
            return p[:, 0] / np.linalg.norm(p, axis=1)
        return self.of_s(self.omega.arclength(p))

    def l1_norm(self, samples=20_000):
        """``int |phi| ds`` over the outer boundary (arc-length kinds)."""
        s = (np.arange(samples) + 0.5) * self.perimeter / samples
        return float(np.mean(np.abs(self.of_s(s))) * self.perimeter)


def random_trig_specs(count, order=3, seed=0):
    """Seeded pool of low-order trigonometric traces with zero mean."""
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(count):
        a = rng.standard_normal(order + 1)
        b = rng.standard_normal(order)
        a[0] = 0.0
        specs.append({"kind": "trig", "cos": a.tolist(), "sin": b.tolist()})
    return specs


def scaled(spec, factor):
    """The same trace multiplied by ``factor`` (trig and bump kinds)."""
    spec = dict(normalize_spec(spec))
    if spec["kind"] == "trig":
        spec["cos"] = [factor * c for c in spec.get("cos", [])]
        spec["sin"] = [factor * c for c in spec.get("sin", [])]
    elif spec["kind"] == "bump":
        spec["height"] = factor * spec.get("height", 1.0)
    else:
        raise ValueError(f"cannot scale a {spec['kind']} trace")
    return spec
