"""Boundary-cut Cartesian discretisation of the perforated domain.

Nodes of a uniform lattice are ACTIVE when they lie in the perforated domain
(inside the outer domain, outside both inclusions).  Each lattice edge from an
active node to a non-active one is cut where it meets the boundary; the cut
"arm" of fraction ``theta`` carries conductance ``1/theta`` and the Dirichlet
value at the cut point.  The resulting operator is the symmetric variational
scheme

    E(f, g) = sum_edges (f_i - f_j)(g_i - g_j)
              + sum_arms (1/theta)(f_B - f_i)(g_B - g_i),

so the matrix is a symmetric M-matrix and the discrete Dirichlet principle and
Green identities hold exactly.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import ndimage
from scipy.sparse.linalg import cg

from .geometry import Configuration, RegionKind, classify_many

THETA_FLOOR = 1e-6
BISECT_TOL = 1e-10

# direction order: +x, -x, +y, -y
DIRS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])


class NodeClass(enum.IntEnum):
    EXTERIOR = 0
    ACTIVE = 1
    BOUNDARY_OMEGA = 2
    BOUNDARY_D1 = 3
    BOUNDARY_D2 = 4


class Boundary(enum.IntEnum):
    OMEGA = 0
    D1 = 1
    D2 = 2


_KIND_TO_BOUNDARY = {int(RegionKind.OUTSIDE_OMEGA): Boundary.OMEGA,
                     int(RegionKind.IN_D1): Boundary.D1,
                     int(RegionKind.IN_D2): Boundary.D2}


class GridError(RuntimeError):
    """Raised on discretisation failures; ``code`` is a short stable tag."""

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


class SolverError(RuntimeError):
    pass


@dataclass(eq=False)
class Grid:
    config: Configuration
    h: float
    origin: np.ndarray
    nx: int
    ny: int
    kind: np.ndarray          # (nx, ny) RegionKind codes
    patch: np.ndarray         # (nx, ny) patch index or -1
    idx: np.ndarray           # (nx, ny) active index or -1
    ai: np.ndarray
    aj: np.ndarray
    edges: np.ndarray         # (2, E) active index pairs
    nbr: np.ndarray           # (4, N) neighbour active index, -1 when cut
    arm_of: np.ndarray        # (4, N) arm index, -1 when not cut
    arm_node: np.ndarray
    arm_dir: np.ndarray
    arm_theta: np.ndarray
    arm_class: np.ndarray     # Boundary codes
    arm_point: np.ndarray     # (M, 2) cut points
    periodic_x: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_active(self):
        return len(self.ai)

    @property
    def n_arms(self):
        return len(self.arm_node)

    def points(self, which=None):
        i = self.ai if which is None else self.ai[which]
        j = self.aj if which is None else self.aj[which]
        return np.stack([self.origin[0] + self.h * i,
                         self.origin[1] + self.h * j], axis=1)

    def node_class(self):
        """Per-lattice-node class byte (EXTERIOR, ACTIVE or a BOUNDARY_*)."""
        out = np.zeros((self.nx, self.ny), dtype=np.uint8)
        active = self.idx >= 0
        out[active] = NodeClass.ACTIVE
        near = np.zeros_like(active)
        for d in DIRS:
            near |= self._shift(active, d)
        near &= ~active
        for kind, cls in ((RegionKind.OUTSIDE_OMEGA, NodeClass.BOUNDARY_OMEGA),
                          (RegionKind.IN_D1, NodeClass.BOUNDARY_D1),
                          (RegionKind.IN_D2, NodeClass.BOUNDARY_D2)):
            out[near & (self.kind == kind)] = cls
        return out

    def _shift(self, a, d):
        """Value of ``a`` at the neighbour in direction ``d`` of every node."""
        dx, dy = int(d[0]), int(d[1])
        if self.periodic_x:
            out = np.roll(a, -dx, axis=0)
        else:
            out = np.zeros_like(a)
            if dx > 0:
                out[:-dx] = a[dx:]
            elif dx < 0:
                out[-dx:] = a[:dx]
            else:
                out[:] = a
        if dy:
            shifted = np.zeros_like(out)
            if dy > 0:
                shifted[:, :-dy] = out[:, dy:]
            else:
                shifted[:, -dy:] = out[:, :dy]
            out = shifted
        return out

    def has_boundary(self, cls):
        return bool(np.any(self.arm_class == Boundary(cls)))

    @property
    def arm_conductance(self):
        return 1.0 / self.arm_theta

    def laplacian(self):
        """Sparse SPD matrix of the discrete Dirichlet form (active unknowns)."""
        n = self.n_active
        a, b = self.edges
        deg = (np.bincount(a, minlength=n) + np.bincount(b, minlength=n)
               ).astype(float)
        deg += np.bincount(self.arm_node, weights=self.arm_conductance,
                           minlength=n)
        rows = np.concatenate([a, b, np.arange(n, dtype=a.dtype)])
        cols = np.concatenate([b, a, np.arange(n, dtype=a.dtype)])
        vals = np.concatenate([-np.ones(len(a)), -np.ones(len(a)), deg])
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    def solver(self, method="amg"):
        """Cached solver; one setup serves every right-hand side."""
        key = ("solver", method)
        if key not in self._cache:
            self._cache[key] = _LinearSolver(self.laplacian(), method)
        return self._cache[key]


class _LinearSolver:
    """CG on the Jacobi-scaled system, preconditioned by smoothed aggregation."""

    def __init__(self, K, method="amg"):
        self.n = K.shape[0]
        self.method = method
        d = K.diagonal()
        self.scale = 1.0 / np.sqrt(d)
        S = sp.diags(self.scale)
        # only the scaled copy is kept; K = S^-1 A S^-1
        self.A = (S @ K @ S).tocsr()
        self.ml = None
        if method == "amg":
            import pyamg
            # pyamg draws its spectral radius start vector from the global RNG
            state = np.random.get_state()
            np.random.seed(12345)
            try:
                self.ml = pyamg.smoothed_aggregation_solver(self.A, symmetry="symmetric")
            finally:
                np.random.set_state(state)
        elif method != "jacobi":
            raise ValueError(f"unknown solver method {method!r}")

    def solve(self, rhs, tol=1e-10, maxiter=None):
        n = self.n
        if maxiter is None:
            maxiter = int(50 * np.sqrt(n)) + 10_000
        norm_r = np.linalg.norm(rhs)
        if norm_r == 0.0:
            return np.zeros(n), 0, 0.0
        b = self.scale * rhs
        if self.ml is not None:
            res = []
            y = self.ml.solve(b, tol=tol * 0.1, maxiter=maxiter, accel="cg",
                              residuals=res)
            iters = len(res) - 1
        else:
            count = [0]

            def cb(_):
                count[0] += 1

            y, _ = cg(self.A, b, rtol=tol * 0.1, maxiter=maxiter, callback=cb)
            iters = count[0]
        x = self.scale * y
        rel = float(np.linalg.norm((self.A @ y - b) / self.scale) / norm_r)
        if not rel <= tol:
            raise SolverError(
                f"no convergence: relative residual {rel:.3e} > {tol:.1e} "
                f"after {iters} iterations")
        return x, iters, rel


def _lattice(config, h):
    lo, hi = config.bounding_box()
    if config.periodic_x:
        length = hi[0] - lo[0]
        nx = int(round(length / h))
        if nx < 4 or abs(nx * h - length) > 1e-9 * length:
            raise GridError("PERIOD", f"h={h} does not divide the period {length}")
        ox = lo[0] + 0.5 * h
    else:
        nx = int(np.ceil((hi[0] - lo[0]) / h)) + 3
        ox = lo[0] - h
    ny = int(np.ceil((hi[1] - lo[1]) / h)) + 3
    oy = lo[1] - h
    return np.array([ox, oy]), nx, ny


def build_grid(config: Configuration, h: float, chunk: int = 1_000_000) -> Grid:
    """Classify lattice nodes and cut every edge that leaves the domain."""
    if not config.has_pde:
        raise GridError("DIMENSION", "grids exist only for 2D configurations")
    if not h > 0:
        raise GridError("SPACING", "h must be positive")
    if config.patches and h > config.epsilon / 8 * (1 + 1e-12):
        raise GridError("RESOLUTION",
                        f"h={h:g} exceeds epsilon/8={config.epsilon / 8:g}")
    origin, nx, ny = _lattice(config, h)
    kind = np.empty(nx * ny, dtype=np.int8)
    patch = np.empty(nx * ny, dtype=np.int16)
    ys = origin[1] + h * np.arange(ny)
    rows_per = max(1, chunk // ny)
    for i0 in range(0, nx, rows_per):
        i1 = min(nx, i0 + rows_per)
        xs = origin[0] + h * np.arange(i0, i1)
        pts = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
        k, p = classify_many(config, pts)
        kind[i0 * ny:i1 * ny] = k
        patch[i0 * ny:i1 * ny] = p
    kind = kind.reshape(nx, ny)
    patch = patch.reshape(nx, ny)
    active = (kind == RegionKind.IN_GAP) | (kind == RegionKind.IN_FAR)
    if not config.periodic_x and (active[0].any() or active[-1].any()
                                  or active[:, 0].any() or active[:, -1].any()):
        raise GridError("DOMAIN", "active node on the lattice edge")
    idx = np.full((nx, ny), -1, dtype=np.int32)
    ai, aj = np.nonzero(active)
    n = len(ai)
    idx[ai, aj] = np.arange(n, dtype=np.int32)

    grid = Grid(config, float(h), origin, nx, ny, kind, patch, idx,
                ai.astype(np.int32), aj.astype(np.int32),
                np.zeros((2, 0), dtype=np.int32), None, None,
                None, None, None, None, None, periodic_x=config.periodic_x)
    _check_components(grid, active)

    nbr = np.empty((4, n), dtype=np.int32)
    arm_of = np.full((4, n), -1, dtype=np.int32)
    arm_node, arm_dir, arm_theta, arm_class, arm_point = [], [], [], [], []
    edges = []
    m = 0
    base = grid.points()
    for d, step in enumerate(DIRS):
        nidx = grid._shift(idx, step)[ai, aj]
        nkind = grid._shift(kind, step)[ai, aj]
        nbr[d] = nidx
        if d in (0, 2):
            ok = nidx >= 0
            edges.append(np.stack([np.arange(n, dtype=np.int32)[ok], nidx[ok]]))
        cut = np.nonzero(nidx < 0)[0]
        if not len(cut):
            continue
        start = base[cut]
        end = start + h * step
        theta = np.empty(len(cut))
        cls = np.empty(len(cut), dtype=np.int8)
        for code, bnd in _KIND_TO_BOUNDARY.items():
            sel = nkind[cut] == code
            if not np.any(sel):
                continue
            shape = {Boundary.OMEGA: config.omega, Boundary.D1: config.d1,
                     Boundary.D2: config.d2}[bnd]
            theta[sel] = shape.locate(start[sel], end[sel], tol=BISECT_TOL)
            cls[sel] = bnd
        theta = np.clip(theta, THETA_FLOOR, 1.0)
        arm_of[d, cut] = m + np.arange(len(cut))
        m += len(cut)
        arm_node.append(cut.astype(np.int32))
        arm_dir.append(np.full(len(cut), d, dtype=np.int8))
        arm_theta.append(theta)
        arm_class.append(cls)
        arm_point.append(start + (theta * h)[:, None] * step)
    grid.edges = np.concatenate(edges, axis=1)
    grid.nbr = nbr
    grid.arm_of = arm_of
    grid.arm_node = np.concatenate(arm_node)
    grid.arm_dir = np.concatenate(arm_dir)
    grid.arm_theta = np.concatenate(arm_theta)
    grid.arm_class = np.concatenate(arm_class)
    grid.arm_point = np.concatenate(arm_point)
    return grid


def _check_components(grid, active):
    labels, count = ndimage.label(active)
    if grid.periodic_x and count > 1:
        # glue components across the periodic seam
        parent = np.arange(count + 1)

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        both = (labels[0] > 0) & (labels[-1] > 0)
        for a, b in zip(labels[0][both], labels[-1][both]):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        count = len({find(a) for a in range(1, count + 1)})
    expected = grid.config.components
    if count != expected:
        raise GridError("CONNECTIVITY",
                        f"active set has {count} component(s), expected {expected}")


# --------------------------------------------------------------------------
# fields


@dataclass(eq=False)
class Field:
    """Values on active nodes plus the Dirichlet trace on every cut arm."""

    grid: Grid
    values: np.ndarray
    trace: np.ndarray
    name: str = "field"
    iterations: int = 0
    residual: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.trace = np.asarray(self.trace, dtype=float)
        if self.values.shape != (self.grid.n_active,):
            raise ValueError("values do not match the grid")
        if self.trace.shape != (self.grid.n_arms,):
            raise ValueError("trace does not match the grid")
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.trace))):
            raise ValueError("field has non-finite entries")

    def __add__(self, other):
        _same_grid(self, other)
        return Field(self.grid, self.values + other.values,
                     self.trace + other.trace, f"{self.name}+{other.name}")

    def __rmul__(self, c):
        return Field(self.grid, c * self.values, c * self.trace, self.name)

    def lattice(self, fill=np.nan):
        out = np.full((self.grid.nx, self.grid.ny), fill)
        out[self.grid.ai, self.grid.aj] = self.values
        return out


def _same_grid(f, g):
    if f.grid is not g.grid:
        raise ValueError("fields live on different grids")


def combine(coeffs, fields, name="combination"):
    grid = fields[0].grid
    values = np.zeros(grid.n_active)
    trace = np.zeros(grid.n_arms)
    for c, f in zip(coeffs, fields):
        _same_grid(fields[0], f)
        values += c * f.values
        trace += c * f.trace
    return Field(grid, values, trace, name)


def boundary_trace(grid: Grid, bdata) -> np.ndarray:
    """Dirichlet values at the cut points from ``{Boundary: scalar | fn}``."""
    data = {Boundary[k.upper()] if isinstance(k, str) else Boundary(k): v
            for k, v in bdata.items()}
    trace = np.zeros(grid.n_arms)
    for cls in np.unique(grid.arm_class):
        cls = Boundary(int(cls))
        if cls not in data:
            raise ValueError(f"no boundary data for {cls.name}")
        sel = grid.arm_class == cls
        value = data[cls]
        if callable(value):
            trace[sel] = np.asarray(value(grid.arm_point[sel]), dtype=float)
        else:
            trace[sel] = float(value)
    return trace


def solve_dirichlet(grid: Grid, bdata, tol: float = 1e-10, method: str = "amg",
                    name: str = "v") -> Field:
    """Discrete harmonic function with the given Dirichlet data."""
    if not 0 < tol <= 1e-6:
        raise ValueError("tol must lie in (0, 1e-6]")
    trace = boundary_trace(grid, bdata)
    rhs = np.bincount(grid.arm_node, weights=trace * grid.arm_conductance,
                      minlength=grid.n_active)
    x, iters, rel = grid.solver(method).solve(rhs, tol)
    return Field(grid, x, trace, name, iters, rel)


# --------------------------------------------------------------------------
# lattice dumps

LATTICE_MAGIC = b"NGLAT1\n"
_HEADER = struct.Struct("<iiddd")


def write_lattice(field: Field, path, fmt="binary"):
    """Dump a field on the full lattice.

    Binary layout (little endian): the magic line ``NGLAT1``, then
    ``int32 nx, int32 ny, float64 h, float64 origin_x, float64 origin_y``,
    then ``nx*ny`` class bytes and ``nx*ny`` float64 values, both with x as
    the slow index.  Inactive nodes carry NaN.  The CSV variant has a
    ``# nx=.. ny=.. h=.. origin=..,..`` header and rows ``i,j,class,value``.
    """
    grid = field.grid
    cls = grid.node_class()
    vals = field.lattice()
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(LATTICE_MAGIC)
            fh.write(_HEADER.pack(grid.nx, grid.ny, grid.h, *grid.origin))
            fh.write(cls.astype(np.uint8).tobytes())
            fh.write(vals.astype("<f8").tobytes())
    elif fmt == "csv":
        ii, jj = np.meshgrid(np.arange(grid.nx), np.arange(grid.ny), indexing="ij")
        with open(path, "w") as fh:
            fh.write(f"# nx={grid.nx} ny={grid.ny} h={grid.h!r} "
                     f"origin={grid.origin[0]!r},{grid.origin[1]!r}\n")
            fh.write("i,j,class,value\n")
            for i, j, c, v in zip(ii.ravel(), jj.ravel(), cls.ravel(), vals.ravel()):
                fh.write(f"{i},{j},{c},{v!r}\n")
    else:
        raise ValueError(f"unknown lattice format {fmt!r}")


def read_lattice(path):
    """Inverse of the binary ``write_lattice``: (header dict, classes, values)."""
    with open(path, "rb") as fh:
        if fh.read(len(LATTICE_MAGIC)) != LATTICE_MAGIC:
            raise ValueError("not a lattice dump")
        nx, ny, h, ox, oy = _HEADER.unpack(fh.read(_HEADER.size))
        cls = np.frombuffer(fh.read(nx * ny), dtype=np.uint8).reshape(nx, ny)
        vals = np.frombuffer(fh.read(8 * nx * ny), dtype="<f8").reshape(nx, ny)
    return dict(nx=nx, ny=ny, h=h, origin=(ox, oy)), cls, vals
