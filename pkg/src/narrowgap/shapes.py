"""Implicit shape primitives for domains and inclusions.

Every shape is a signed indicator: negative strictly inside, positive strictly
outside, zero on the boundary.  Where it is cheap the indicator is an exact
signed distance, which the configuration checks use for margins.
"""
from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def _as_points(p):
    p = np.asarray(p, dtype=float)
    return p[None, :] if p.ndim == 1 else p


class ImplicitShape:
    """Signed indicator ``fn(points) -> values`` plus a bounding box.

    ``exact_distance`` marks indicators that are true signed distances.  Shapes
    used as the outer domain may also carry a boundary parameterisation
    (``perimeter`` and ``arclength``) so boundary data can be laid out along it.
    """

    def __init__(self, fn, lo, hi, *, exact_distance=False, name="shape",
                 perimeter=None, arclength=None):
        self._fn = fn
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.exact_distance = exact_distance
        self.name = name
        self.perimeter = perimeter
        self._arclength = arclength

    def __repr__(self):
        return f"ImplicitShape({self.name})"

    def __call__(self, points):
        pts = _as_points(points)
        vals = np.asarray(self._fn(pts), dtype=float)
        outside_box = np.any((pts < self.lo) | (pts > self.hi), axis=1)
        # the bounding box is authoritative: nothing outside it is inside
        vals = np.where(outside_box, np.maximum(vals, 1e-300), vals)
        return vals if np.ndim(points) > 1 else vals[0]

    def contains(self, points):
        return self(points) < 0.0

    @property
    def is_empty(self):
        return bool(np.any(self.lo > self.hi))

    def distance(self, points):
        """Unsigned distance to the shape (0 inside), exact or first order."""
        pts = _as_points(points)
        vals = self(pts)
        if self.exact_distance:
            d = np.maximum(vals, 0.0)
        else:
            step = 1e-6
            grad = np.empty_like(pts)
            for k in range(pts.shape[1]):
                e = np.zeros(pts.shape[1])
                e[k] = step
                grad[:, k] = (self(pts + e) - self(pts - e)) / (2 * step)
            norm = np.maximum(np.linalg.norm(grad, axis=1), 1e-12)
            d = np.maximum(vals, 0.0) / norm
        return d if np.ndim(points) > 1 else d[0]

    def locate(self, inside, outside, tol=1e-10):
        """Bisection for the boundary crossing on segments inside -> outside.

        Returns the fraction t in [0, 1] of the way from ``inside`` to
        ``outside`` at which the indicator changes sign.  Vectorised over rows.
        """
        a = _as_points(inside)
        b = _as_points(outside)
        length = np.max(np.linalg.norm(b - a, axis=1)) if len(a) else 0.0
        lo = np.zeros(len(a))
        hi = np.ones(len(a))
        sign_a = np.sign(self(a))
        n_iter = int(np.ceil(np.log2(max(length, tol) / tol))) + 1
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            vals = self(a + mid[:, None] * (b - a))
            same = np.sign(vals) == sign_a
            lo = np.where(same, mid, lo)
            hi = np.where(same, hi, mid)
        t = 0.5 * (lo + hi)
        return t if np.ndim(inside) > 1 else t[0]

    def arclength(self, points):
        if self._arclength is None:
            raise ValueError(f"{self.name} has no boundary parameterisation")
        return self._arclength(_as_points(points))


def empty(dim=2):
    return ImplicitShape(lambda p: np.ones(len(p)), np.full(dim, np.inf),
                         np.full(dim, -np.inf), exact_distance=True, name="empty")


def disk(center, radius):
    c = np.asarray(center, dtype=float)

    def fn(p):
        return np.linalg.norm(p - c, axis=1) - radius

    def arclength(p):
        ang = np.arctan2(p[:, 1] - c[1], p[:, 0] - c[0])
        return radius * np.mod(ang, TWO_PI)

    return ImplicitShape(fn, c - radius, c + radius, exact_distance=True,
                         name=f"disk(r={radius:g})", perimeter=TWO_PI * radius,
                         arclength=arclength)


def stadium(center, half_length, radius):
    """Points within ``radius`` of a horizontal segment; flat top and bottom."""
    c = np.asarray(center, dtype=float)

    def fn(p):
        dx = np.maximum(np.abs(p[:, 0] - c[0]) - half_length, 0.0)
        return np.hypot(dx, p[:, 1] - c[1]) - radius

    ext = np.array([half_length + radius, radius])
    return ImplicitShape(fn, c - ext, c + ext, exact_distance=True,
                         name=f"stadium(w={half_length:g},r={radius:g})")


def superellipse(center, a, b, power):
    """``|x/a|**power + (y/b)**2 < 1``: flat of order ``power`` at the poles."""
    c = np.asarray(center, dtype=float)

    def fn(p):
        x = np.abs(p[:, 0] - c[0]) / a
        y = (p[:, 1] - c[1]) / b
        return x ** power + y * y - 1.0

    return ImplicitShape(fn, c - [a, b], c + [a, b],
                         name=f"superellipse(a={a:g},b={b:g},p={power:g})")


def rectangle(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)

    def fn(p):
        q = np.abs(p - center) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        return outside + np.minimum(np.max(q, axis=1), 0.0)

    w, h = hi - lo

    def arclength(p):
        # counter-clockwise from the lower-left corner
        x = np.clip(p[:, 0], lo[0], hi[0]) - lo[0]
        y = np.clip(p[:, 1], lo[1], hi[1]) - lo[1]
        d = np.stack([y, w - x, h - y, x], axis=1)
        side = np.argmin(d, axis=1)
        s = np.choose(side, [x, w + y, w + h + (w - x), 2 * w + h + (h - y)])
        return s

    return ImplicitShape(fn, lo, hi, exact_distance=True,
                         name="rectangle", perimeter=2 * (w + h),
                         arclength=arclength)


def horizontal_band(y_lo, y_hi, x_lo, x_hi):
    """Slab ``y_lo < y < y_hi`` restricted to the period box in x.

    Used with x-periodic grids; only the two horizontal edges count as
    boundary, so the arclength runs along the bottom then the top edge.
    """
    mid = 0.5 * (y_lo + y_hi)
    half = 0.5 * (y_hi - y_lo)
    width = x_hi - x_lo

    def fn(p):
        return np.abs(p[:, 1] - mid) - half

    def arclength(p):
        x = np.mod(p[:, 0] - x_lo, width)
        return np.where(p[:, 1] < mid, x, width + x)

    return ImplicitShape(fn, [x_lo, y_lo], [x_hi, y_hi], exact_distance=True,
                         name="band", perimeter=2 * width, arclength=arclength)


def annulus(center, r_in, r_out):
    c = np.asarray(center, dtype=float)
    mid = 0.5 * (r_in + r_out)
    half = 0.5 * (r_out - r_in)

    def fn(p):
        return np.abs(np.linalg.norm(p - c, axis=1) - mid) - half

    return ImplicitShape(fn, c - r_out, c + r_out, exact_distance=True,
                         name="annulus")


def union(*shapes):
    shapes = [s for s in shapes if not s.is_empty]
    lo = np.min([s.lo for s in shapes], axis=0)
    hi = np.max([s.hi for s in shapes], axis=0)

    def fn(p):
        return np.min([s(p) for s in shapes], axis=0)

    return ImplicitShape(fn, lo, hi,
                         exact_distance=all(s.exact_distance for s in shapes),
                         name="union(" + ",".join(s.name for s in shapes) + ")")
