"""Potentials, capacity matrix and the derived functionals on a 2D grid.

``v1`` is 1 on the first inclusion and 0 on the rest of the boundary, ``v2``
likewise for the second inclusion, and ``v3`` carries the outer data ``phi``
with 0 on both inclusions.  The conductor potentials ``C1, C2`` solve

    a11 C1 + a12 C2 + b1 = 0,   a21 C1 + a22 C2 + b2 = 0,

with ``a_ij = E(v_i, v_j)`` and ``b_i = E(v_i, v3)``, and the full potential
is ``u = C1 v1 + C2 v2 + v3``.  Normal derivatives follow the usual
convention: outward from the outer domain on its boundary, outward from the
inclusion on an inclusion boundary.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import Configuration, GeometryError, INFINITY, RegionKind
from .grid import (Boundary, Field, Grid, GridError, SolverError, build_grid,
                   combine, solve_dirichlet, write_lattice)
from .quadrature import adaptive, geometric_breaks
from .traces import Trace, smoothstep

__all__ = [
    "FunctionalsReport", "DegenerateError", "build_grid", "solve_dirichlet",
    "energy_inner", "boundary_flux", "solve_potentials", "functionals",
    "gradient_estimate", "sup_grad", "comparison_field", "gap_energy_lower",
    "patch_region", "write_svg", "write_lattice", "GridError", "SolverError",
]


class DegenerateError(RuntimeError):
    pass


def energy_inner(f: Field, g: Field, region=None) -> float:
    """Discrete Dirichlet inner product, optionally restricted to a node set.

    With ``region`` (boolean per active node) only edges with both ends in the
    region and arms of region nodes are counted.
    """
    if f.grid is not g.grid:
        raise ValueError("fields live on different grids")
    grid = f.grid
    a, b = grid.edges
    df = f.values[a] - f.values[b]
    dg = g.values[a] - g.values[b]
    af = f.trace - f.values[grid.arm_node]
    ag = g.trace - g.values[grid.arm_node]
    kappa = grid.arm_conductance
    if region is None:
        return float(np.dot(df, dg) + np.dot(kappa * af, ag))
    region = np.asarray(region, dtype=bool)
    keep = region[a] & region[b]
    arm_keep = region[grid.arm_node]
    return float(np.dot(df[keep], dg[keep])
                 + np.dot((kappa * af)[arm_keep], ag[arm_keep]))


def boundary_flux(field: Field, cls, weights=None) -> float:
    """``int du/dnu`` over one boundary class, optionally weighted by data.

    ``weights`` are per-arm values of a boundary function multiplying the
    normal derivative (for instance ``phi``); the default is 1.
    """
    cls = Boundary[cls.upper()] if isinstance(cls, str) else Boundary(cls)
    grid = field.grid
    sel = grid.arm_class == cls
    if not np.any(sel):
        raise ValueError(f"boundary {cls.name} is absent from the grid")
    diff = field.trace[sel] - field.values[grid.arm_node[sel]]
    if cls is not Boundary.OMEGA:
        diff = -diff
    contrib = grid.arm_conductance[sel] * diff
    if weights is not None:
        contrib = contrib * np.asarray(weights)[sel]
    return float(np.sum(contrib))


def arm_flux(field: Field) -> np.ndarray:
    """Per-arm contributions to the outer-boundary normal derivative."""
    grid = field.grid
    out = grid.arm_conductance * (field.trace - field.values[grid.arm_node])
    return np.where(grid.arm_class == Boundary.OMEGA, out, 0.0)


def solve_potentials(grid: Grid, phi, tol=1e-10, method="amg"):
    """Solve for ``v1``, ``v2`` and ``v3``; ``phi`` is a Trace or callable."""
    v1 = solve_dirichlet(grid, {"omega": 0.0, "d1": 1.0, "d2": 0.0}, tol,
                         method, "v1")
    v2 = solve_dirichlet(grid, {"omega": 0.0, "d1": 0.0, "d2": 1.0}, tol,
                         method, "v2")
    v3 = solve_dirichlet(grid, {"omega": phi, "d1": 0.0, "d2": 0.0}, tol,
                         method, "v3")
    return v1, v2, v3


# --------------------------------------------------------------------------
# gradient estimator


def _corner_mask(grid: Grid):
    pts = grid.points()
    far = np.ones(grid.n_active, dtype=bool)
    for c in grid.config.corners:
        far &= np.linalg.norm(pts - np.asarray(c), axis=1) > 2 * grid.h
    return far


def gradient_estimate(field: Field):
    """Gradient at every active node and the mask of nodes used for sup|grad|.

    Nodes with a full stencil use central differences.  Nodes next to a cut
    inside a patch box use the unequal-arm difference through the cut point,
    ``(u_+ - u_-) / (d_+ + d_-)`` with ``d`` the arm lengths; other
    boundary-adjacent nodes and nodes within ``2h`` of a declared corner are
    left out of the mask.
    """
    grid = field.grid
    u = field.values
    grad = np.zeros((grid.n_active, 2))
    for axis, (dp, dm) in enumerate(((0, 1), (2, 3))):
        ends = []
        for d in (dp, dm):
            nb = grid.nbr[d]
            arm = grid.arm_of[d]
            cut = nb < 0
            val = np.where(cut, field.trace[np.where(cut, arm, 0)],
                           u[np.where(cut, 0, nb)])
            dist = np.where(cut, grid.arm_theta[np.where(cut, arm, 0)], 1.0) * grid.h
            ends.append((val, dist))
        (up, dpl), (um, dmi) = ends
        grad[:, axis] = (up - um) / (dpl + dmi)
    has_arm = np.any(grid.arm_of >= 0, axis=0)
    in_gap = grid.kind[grid.ai, grid.aj] == RegionKind.IN_GAP
    mask = (~has_arm | in_gap) & _corner_mask(grid)
    return grad, mask


def sup_grad(field: Field):
    """(max |grad|, location) over the estimator mask."""
    grad, mask = gradient_estimate(field)
    mag = np.hypot(grad[:, 0], grad[:, 1])
    mag = np.where(mask, mag, -np.inf)
    k = int(np.argmax(mag))
    if not np.isfinite(mag[k]):
        return 0.0, None
    return float(mag[k]), grid_point(field.grid, k)


def grid_point(grid, k):
    return [float(grid.origin[0] + grid.h * grid.ai[k]),
            float(grid.origin[1] + grid.h * grid.aj[k])]


# --------------------------------------------------------------------------
# report


@dataclass
class FunctionalsReport:
    epsilon: float
    h: float
    n_active: int
    a11: float
    a12: float
    a21: float
    a22: float
    b1: float
    b2: float
    det: float
    C1: float
    C2: float
    Q_eps: float
    Q_eps_identity: float
    energy_v1: float
    energy_u: float
    sup_grad_u: float
    sup_location: list | None
    flux_omega_v1: float
    flux_omega_v2: float
    flux_d1_u: float
    flux_d2_u: float
    flux_gap: float
    iterations: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    corners_excluded: int = 0
    flags: list = field(default_factory=list)

    @property
    def delta_C(self):
        return self.C1 - self.C2

    def invariants(self, det_window=None) -> dict:
        """Pointwise structural checks; window checks need a whole sweep."""
        tol = 1e-9 * max(1.0, abs(self.a11), abs(self.a22))
        checks = {
            "a11_positive": self.a11 > 0,
            "a22_positive": self.a22 > 0,
            "a12_nonpositive": self.a12 <= tol,
            "a_symmetric": abs(self.a12 - self.a21) <= tol,
            "a11_plus_a21_positive": self.a11 + self.a21 > 0,
            "a22_plus_a12_positive": self.a22 + self.a12 > 0,
            "det_positive": self.det > 0,
            "jump_lower": abs(self.delta_C) / self.epsilon
            <= self.sup_grad_u * (1 + 1e-6) + 1e-12,
        }
        if det_window is not None:
            c, C = det_window
            ratio = self.det / self.a11
            checks["det_window"] = c <= ratio <= C
        return checks

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def functionals(config: Configuration, grid: Grid, phi, tol=1e-10,
                method="amg", return_fields=False):
    """Solve the three potentials and assemble every scalar functional."""
    if not isinstance(phi, Trace) and not callable(phi):
        phi = Trace(phi, config.omega)
    v1, v2, v3 = solve_potentials(grid, phi, tol, method)
    a11 = energy_inner(v1, v1)
    a12 = energy_inner(v1, v2)
    a21 = energy_inner(v2, v1)
    a22 = energy_inner(v2, v2)
    b1 = energy_inner(v1, v3)
    b2 = energy_inner(v2, v3)
    det = a11 * a22 - a12 * a21
    if not det >= 1e-14 * a11:
        raise DegenerateError(f"singular capacity system: det={det:.3e}, a11={a11:.3e}")
    C1 = (-b1 * a22 + a12 * b2) / det
    C2 = (-a11 * b2 + a21 * b1) / det
    u = combine([C1, C2, 1.0], [v1, v2, v3], "u")

    flux1 = boundary_flux(v1, Boundary.OMEGA)
    flux2 = boundary_flux(v2, Boundary.OMEGA)
    phi_arms = np.zeros(grid.n_arms)
    om = grid.arm_class == Boundary.OMEGA
    phi_arms[om] = v3.trace[om]
    phi_flux1 = boundary_flux(v1, Boundary.OMEGA, phi_arms)
    phi_flux2 = boundary_flux(v2, Boundary.OMEGA, phi_arms)
    Q_flux = phi_flux1 * flux2 - phi_flux2 * flux1
    Q_identity = (C1 - C2) * det

    sup, where = sup_grad(u)
    corners = int(np.sum(~_corner_mask(grid)))
    report = FunctionalsReport(
        epsilon=config.epsilon, h=grid.h, n_active=grid.n_active,
        a11=a11, a12=a12, a21=a21, a22=a22, b1=b1, b2=b2, det=det, C1=C1, C2=C2,
        Q_eps=Q_flux, Q_eps_identity=Q_identity, energy_v1=a11,
        energy_u=energy_inner(u, u), sup_grad_u=sup, sup_location=where,
        flux_omega_v1=flux1, flux_omega_v2=flux2,
        flux_d1_u=boundary_flux(u, Boundary.D1),
        flux_d2_u=boundary_flux(u, Boundary.D2),
        flux_gap=abs(-flux1 - (a11 + a21)) / a11,
        iterations={f.name: f.iterations for f in (v1, v2, v3)},
        residuals={f.name: f.residual for f in (v1, v2, v3)},
        corners_excluded=corners)
    bad = [k for k, ok in report.invariants().items() if not ok]
    report.flags.extend(bad)
    if return_fields:
        return report, {"v1": v1, "v2": v2, "v3": v3, "u": u}
    return report


# --------------------------------------------------------------------------
# comparison field


def _box_profile(t, inner, outer):
    """1 for t <= inner, 0 for t >= outer, C1 smoothstep in between."""
    return smoothstep((outer - t) / (outer - inner))


def _patch_coords(patch, pts):
    xp, xn = patch.to_local(pts)
    t = np.max(np.abs(xp), axis=1) / patch.half_width
    t = np.maximum(t, np.abs(xn) / patch.half_height)
    return xp, xn, t


def patch_region(grid: Grid, index: int, scale: float = 1.0):
    """Active nodes inside patch ``index``'s box scaled by ``scale``."""
    patch = grid.config.patches[index]
    return patch.in_box(grid.points(), scale)


def comparison_field(config: Configuration, grid: Grid, v1: Field,
                     profile_tol: float = 1e-9) -> Field:
    """``W = rho w + (1 - rho) v1`` with ``w = sum_i sigma_i w_i``.

    ``sigma_i`` is a bump equal to 1 on the 3/4-scaled box of patch ``i`` and
    vanishing on its edge, normalised to a partition of unity where the bumps
    overlap; ``rho`` is 1 on the half-scaled boxes and vanishes outside the
    3/4-scaled boxes.  ``W`` keeps the boundary trace of ``v1``.
    """
    pts = grid.points()
    n = grid.n_active
    bumps = []
    rho = np.zeros(n)
    for patch in config.patches:
        xp, xn, t = _patch_coords(patch, pts)
        bumps.append(_box_profile(t, 0.75, 1.0))
        rho = np.maximum(rho, _box_profile(t, 0.5, 0.75))
    total = np.maximum(1.0, np.sum(bumps, axis=0)) if bumps else np.ones(n)
    w = np.zeros(n)
    for patch, b in zip(config.patches, bumps):
        sel = b > 0
        wi = patch.profile(pts[sel])
        inside = _patch_coords(patch, pts[sel])[2] < 0.75
        if np.any(inside & ((wi < -profile_tol) | (wi > 1 + profile_tol))):
            raise GeometryError("patch frame does not describe the narrow region: "
                                "linear profile leaves [0, 1]")
        w[sel] += b[sel] / total[sel] * wi
    values = rho * w + (1.0 - rho) * v1.values
    return Field(grid, values, v1.trace.copy(), "W")


def gap_energy_lower(config: Configuration, index: int, tol=1e-10) -> float:
    """``int_{Q_r} dx' / (g - f)`` for one patch of a 2D configuration."""
    patch = config.patches[index]
    if patch.dim != 2:
        raise ValueError("gap_energy_lower handles 2D patches")
    r = patch.half_width
    alpha = patch.orders.orders[0]
    scale = r if alpha is INFINITY else config.epsilon ** (0.5 / alpha)

    def fn(x):
        return 1.0 / patch.gap(x[:, None])

    breaks = np.union1d(-geometric_breaks(0.0, r, scale)[::-1],
                        geometric_breaks(0.0, r, scale))
    return adaptive(fn, breaks, tol)[0]


# --------------------------------------------------------------------------
# SVG heat map

_STOPS = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140],
                   [94, 201, 98], [253, 231, 37]], dtype=float)


def _colour(t):
    t = np.clip(t, 0.0, 1.0) * (len(_STOPS) - 1)
    k = np.minimum(t.astype(int), len(_STOPS) - 2)
    frac = (t - k)[..., None]
    rgb = (1 - frac) * _STOPS[k] + frac * _STOPS[k + 1]
    return rgb.astype(int)


def write_svg(field: Field, path, max_cells=240, title="|grad u|"):
    """Block-maximum heat map of the gradient magnitude."""
    grid = field.grid
    grad, _ = gradient_estimate(field)
    mag = np.full((grid.nx, grid.ny), np.nan)
    mag[grid.ai, grid.aj] = np.hypot(grad[:, 0], grad[:, 1])
    block = max(1, int(math.ceil(max(grid.nx, grid.ny) / max_cells)))
    bx = int(math.ceil(grid.nx / block))
    by = int(math.ceil(grid.ny / block))
    padded = np.full((bx * block, by * block), np.nan)
    padded[:grid.nx, :grid.ny] = mag
    with np.errstate(all="ignore"):
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            cells = np.nanmax(padded.reshape(bx, block, by, block), axis=(1, 3))
    top = np.nanmax(cells) if np.any(np.isfinite(cells)) else 1.0
    # log scale keeps the far field visible next to the gap
    scaled_ = np.log1p(cells / (top * 1e-3)) / np.log1p(1e3)
    rgb = _colour(np.nan_to_num(scaled_))
    px = 3
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{bx * px}" '
             f'height="{by * px + 20}">',
             f'<text x="4" y="14" font-size="12">{title} (max {top:.4g})</text>']
    for i in range(bx):
        for j in range(by):
            if np.isfinite(cells[i, j]):
                r, g, b = rgb[i, j]
                lines.append(f'<rect x="{i * px}" y="{20 + (by - 1 - j) * px}" '
                             f'width="{px}" height="{px}" fill="rgb({r},{g},{b})"/>')
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
