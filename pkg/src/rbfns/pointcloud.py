"""Scattered point sets, boundary classification and neighbor stencils.

Built-in generators cover the solver's five domains. Interior points come
from a jittered hexagonal fill (quasi-uniform, well conditioned for
high-degree stencils); boundary points lie exactly on the bounding
curves. The cylinder wake additionally grades spacing with concentric
rings blending from the near-body spacing to the far field.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import InsufficientPointsError, InvalidGeometryError

INTERIOR, WALL, INLET, OUTLET, SYMMETRY, PERIODIC = 0, 1, 2, 3, 4, 5

FLAG_NAMES = {
    INTERIOR: "interior", WALL: "wall", INLET: "inlet",
    OUTLET: "pressure-outlet", SYMMETRY: "symmetry", PERIODIC: "periodic",
}

_CLEARANCE = 0.75  # interior fill keeps this many local spacings off the boundary
_JITTER = 0.05


# ---------------------------------------------------------------------------
# geometry descriptors

@dataclass(frozen=True)
class Annulus:
    r1: float
    r2: float


@dataclass(frozen=True)
class UnitSquare:
    pass


@dataclass(frozen=True)
class CylinderWake:
    diameter: float = 1.0
    upstream: float = 20.0
    downstream: float = 30.0
    half_height: float = 20.0
    refine_ratio: float = 5.0
    blend_diameters: float = 5.0


@dataclass(frozen=True)
class EllipseTwoCylinders:
    semi_x: float = 1.0
    semi_y: float = 0.5
    center_offset: float = 0.4
    r_inner: float = 0.25


@dataclass(frozen=True)
class BellowChannel:
    period: float = 3.0
    half_gap_min: float = 0.25
    amplitude: float = 0.5

    def half_gap(self, x):
        return self.half_gap_min + 0.5 * self.amplitude * (
            1.0 - np.cos(2.0 * np.pi * np.asarray(x) / self.period))

    def half_gap_slope(self, x):
        return (np.pi * self.amplitude / self.period) * np.sin(
            2.0 * np.pi * np.asarray(x) / self.period)


# ---------------------------------------------------------------------------
# point set container

@dataclass(frozen=True)
class PointSet:
    coords: np.ndarray          # (N, 2)
    flags: np.ndarray           # (N,) int
    normals: np.ndarray         # (N, 2), zero rows at interior points
    dx_avg: float
    extents: np.ndarray         # ((xmin, xmax), (ymin, ymax))
    period: tuple[float, float] = (0.0, 0.0)

    @property
    def n(self):
        return len(self.coords)

    @property
    def interior_mask(self):
        return self.flags == INTERIOR

    @property
    def boundary_mask(self):
        return (self.flags != INTERIOR) & (self.flags != PERIODIC)

    def __len__(self):
        return len(self.coords)


def _tiled(coords, period):
    """Replicate points across periodic images; returns (pts, base, shifts)."""
    sx = (-1, 0, 1) if period[0] > 0 else (0,)
    sy = (-1, 0, 1) if period[1] > 0 else (0,)
    n = len(coords)
    parts, bases, shifts = [], [], []
    for ix in sx:
        for iy in sy:
            parts.append(coords + np.array([ix * period[0], iy * period[1]]))
            bases.append(np.arange(n))
            shifts.append(np.full((n, 2), (ix, iy), dtype=np.int8))
    return np.vstack(parts), np.concatenate(bases), np.vstack(shifts)


def _nearest_distances(coords, period):
    pts, base, _ = _tiled(coords, period)
    tree = cKDTree(pts)
    d, _ = tree.query(coords, k=2)
    return d[:, 1]


def make_pointset(coords, flags, normals, period=(0.0, 0.0)) -> PointSet:
    """Validate arrays and compute spacing/extents."""
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    flags = np.ascontiguousarray(flags, dtype=np.int64)
    normals = np.ascontiguousarray(normals, dtype=np.float64)
    n = len(coords)
    if n < 2:
        raise InsufficientPointsError("a point set needs at least 2 points")
    nn = _nearest_distances(coords, period)
    if nn.min() <= 0.0:
        raise InvalidGeometryError("point set contains coincident points")
    non_int = flags != INTERIOR
    norms = np.linalg.norm(normals[non_int], axis=1)
    if non_int.any() and np.max(np.abs(norms - 1.0)) > 1e-12:
        raise InvalidGeometryError("non-interior point with non-unit normal")
    extents = np.array([[coords[:, 0].min(), coords[:, 0].max()],
                        [coords[:, 1].min(), coords[:, 1].max()]])
    for arr in (coords, flags, normals, extents):
        arr.setflags(write=False)
    return PointSet(coords, flags, normals, float(nn.mean()), extents,
                    (float(period[0]), float(period[1])))


def compute_spacing(ps: PointSet) -> float:
    """Mean distance from each point to its nearest neighbor."""
    if ps.n < 2:
        raise InsufficientPointsError("spacing needs at least 2 points")
    return float(_nearest_distances(ps.coords, ps.period).mean())


# ---------------------------------------------------------------------------
# stencils

@dataclass(frozen=True)
class Stencil:
    center: int
    neighbors: np.ndarray   # (q,)
    shifts: np.ndarray      # (q, 2) periodic image multipliers


class StencilSet(Sequence):
    """All stencils of a point set, stored as flat arrays."""

    def __init__(self, neighbors, shifts, period):
        self.neighbors = neighbors
        self.shifts = shifts
        self.period = period
        self.q = neighbors.shape[1]

    def __len__(self):
        return len(self.neighbors)

    def __getitem__(self, i):
        return Stencil(i, self.neighbors[i], self.shifts[i])

    def neighbor_coords(self, ps: PointSet, rows=None):
        """Stencil coordinates with periodic shifts applied: (n, q, 2)."""
        idx = self.neighbors if rows is None else self.neighbors[rows]
        sh = self.shifts if rows is None else self.shifts[rows]
        pts = ps.coords[idx]
        if self.period[0] > 0 or self.period[1] > 0:
            pts = pts + sh * np.asarray(self.period)
        return pts


def build_stencils(ps: PointSet, q: int) -> StencilSet:
    """q nearest neighbors of every point under the periodic metric.

    Ties are broken by smaller point index; shifts record which periodic
    image supplied each neighbor.
    """
    n = ps.n
    if q > n:
        raise InsufficientPointsError(f"stencil size {q} exceeds {n} points")
    if q < 1:
        raise InsufficientPointsError("stencil size must be >= 1")
    pts, base, shifts = _tiled(ps.coords, ps.period)
    tree = cKDTree(pts)
    k = min(q + 16, len(pts))
    d, it = tree.query(ps.coords, k=k)
    nb = base[it]
    sh = shifts[it]
    # sort each row by (distance, index) and keep the first q
    order = np.lexsort((nb, d), axis=-1)
    rows = np.arange(n)[:, None]
    nb = np.take_along_axis(nb, order, axis=1)[:, :q]
    sh = sh[rows, order][:, :q]
    return StencilSet(np.ascontiguousarray(nb, dtype=np.int64),
                      np.ascontiguousarray(sh), ps.period)


# ---------------------------------------------------------------------------
# generation helpers

def _hex_fill(xlim, ylim, h, rng, jitter=_JITTER):
    """Jittered hexagonal lattice covering the box."""
    row_h = h * np.sqrt(3.0) / 2.0
    ny = max(1, int(np.floor((ylim[1] - ylim[0]) / row_h)))
    nx = max(1, int(np.floor((xlim[1] - xlim[0]) / h)) + 1)
    iy = np.arange(ny)
    ys = ylim[0] + (iy + 0.5) * row_h
    xs = xlim[0] + np.arange(nx)[None, :] * h + np.where(iy % 2 == 0, 0.25, 0.75)[:, None] * h
    pts = np.column_stack([xs.ravel(), np.repeat(ys, nx)])
    keep = pts[:, 0] <= xlim[1]
    pts = pts[keep]
    pts = pts + rng.uniform(-jitter * h, jitter * h, pts.shape)
    return pts


def _circle_pts(center, r, h, rng):
    n = max(8, int(round(2.0 * np.pi * r / h)))
    theta = rng.uniform(0, 2 * np.pi / n) + np.arange(n) * 2 * np.pi / n
    unit = np.column_stack([np.cos(theta), np.sin(theta)])
    return np.asarray(center) + r * unit, unit


def _clear_near(pts, obstacles, min_dist, period=(0.0, 0.0)):
    """Drop pts lying within min_dist of any obstacle point."""
    if len(obstacles) == 0 or len(pts) == 0:
        return pts
    obs, _, _ = _tiled(obstacles, period)
    d, _ = cKDTree(obs).query(pts, k=1)
    return pts[d >= min_dist]


def _dedupe(coords, min_dist, n_keep_first, period=(0.0, 0.0)):
    """Greedily drop later points of any pair closer than min_dist.

    The first n_keep_first entries (boundary points) are never dropped.
    """
    pts, base, _ = _tiled(coords, period)
    pairs = cKDTree(pts).query_pairs(min_dist, output_type="ndarray")
    if len(pairs) == 0:
        return np.ones(len(coords), dtype=bool)
    pairs = np.sort(base[pairs], axis=1)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    keep = np.ones(len(coords), dtype=bool)
    for a, b in pairs[np.argsort(pairs[:, 1])]:
        if b < n_keep_first:
            continue
        if keep[a]:
            keep[b] = False
    return keep


def _assemble(b_coords, b_flags, b_normals, fill, h_fill, period=(0.0, 0.0)):
    """Boundary points first, then interior fill, deduped."""
    nb = len(b_coords)
    coords = np.vstack([b_coords, fill]) if len(fill) else np.asarray(b_coords)
    flags = np.concatenate([b_flags, np.zeros(len(fill), dtype=np.int64)])
    normals = np.vstack([b_normals, np.zeros((len(fill), 2))])
    keep = _dedupe(coords, 0.45 * h_fill, nb, period)
    return make_pointset(coords[keep], flags[keep], normals[keep], period)


def _arclength_resample(xy_dense, n, offset=0.0, closed=True):
    """Resample a densely sampled curve at n equal arclength steps."""
    seg = np.linalg.norm(np.diff(xy_dense, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    targets = (np.arange(n) + offset) * total / n
    x = np.interp(targets, s, xy_dense[:, 0])
    y = np.interp(targets, s, xy_dense[:, 1])
    return np.column_stack([x, y])


# ---------------------------------------------------------------------------
# per-geometry generators

def _gen_annulus(geom: Annulus, h, rng):
    if not (0 < geom.r1 < geom.r2):
        raise InvalidGeometryError(f"annulus needs 0 < r1 < r2, got {geom.r1}, {geom.r2}")
    inner, iu = _circle_pts((0, 0), geom.r1, h, rng)
    outer, ou = _circle_pts((0, 0), geom.r2, h, rng)
    b = np.vstack([inner, outer])
    bn = np.vstack([-iu, ou])  # outward from the fluid: into the inner disk / away
    bf = np.full(len(b), WALL, dtype=np.int64)
    fill = _hex_fill((-geom.r2, geom.r2), (-geom.r2, geom.r2), h, rng)
    r = np.linalg.norm(fill, axis=1)
    fill = fill[(r > geom.r1) & (r < geom.r2)]
    fill = _clear_near(fill, b, _CLEARANCE * h)
    return _assemble(b, bf, bn, fill, h)


def _gen_unit_square(h, rng):
    n = max(2, int(round(1.0 / h)))
    t = np.linspace(0.0, 1.0, n + 1)
    edges = [
        (np.column_stack([t, np.zeros_like(t)]), (0.0, -1.0)),
        (np.column_stack([t, np.ones_like(t)]), (0.0, 1.0)),
        (np.column_stack([np.zeros_like(t), t[1:-1]]), (-1.0, 0.0)),
        (np.column_stack([np.ones_like(t), t[1:-1]]), (1.0, 0.0)),
    ]
    b = np.vstack([e[0] for e in edges])
    bn = np.vstack([np.tile(e[1], (len(e[0]), 1)) for e in edges])
    # corners sit on two edges; give them the diagonal normal
    for cx, cy in ((0, 0), (0, 1), (1, 0), (1, 1)):
        at = (b[:, 0] == cx) & (b[:, 1] == cy)
        bn[at] = np.array([(-1 if cx == 0 else 1), (-1 if cy == 0 else 1)]) / np.sqrt(2)
    bf = np.full(len(b), WALL, dtype=np.int64)
    fill = _hex_fill((0.0, 1.0), (0.0, 1.0), h, rng)
    inside = (fill[:, 0] > 0) & (fill[:, 0] < 1) & (fill[:, 1] > 0) & (fill[:, 1] < 1)
    fill = _clear_near(fill[inside], b, _CLEARANCE * h)
    return _assemble(b, bf, bn, fill, h)


def _gen_cylinder_wake(geom: CylinderWake, h_near, rng):
    if geom.diameter <= 0 or geom.half_height <= geom.diameter:
        raise InvalidGeometryError("cylinder wake geometry is degenerate")
    rc = 0.5 * geom.diameter
    ratio, blend = geom.refine_ratio, geom.blend_diameters * geom.diameter
    h_far = ratio * h_near

    def h_of(r):
        return h_near * (1.0 + (ratio - 1.0) * np.minimum((r - rc) / blend, 1.0))

    cyl, cu = _circle_pts((0, 0), rc, h_near, rng)
    b_parts = [(cyl, -cu, WALL)]

    # graded rings out to the end of the blend region
    rings = []
    r = rc + 0.82 * h_near
    while r < rc + blend:
        hr = h_of(r)
        n = max(8, int(round(2 * np.pi * r / hr)))
        theta = rng.uniform(0, 2 * np.pi / n) + np.arange(n) * 2 * np.pi / n
        pts = r * np.column_stack([np.cos(theta), np.sin(theta)])
        pts += rng.uniform(-_JITTER * hr, _JITTER * hr, pts.shape)
        rings.append(pts)
        r += 0.85 * hr
    ring_pts = np.vstack(rings) if rings else np.empty((0, 2))
    r_last = r - 0.85 * h_of(r)

    xl, xr = -geom.upstream, geom.downstream
    yb, yt = -geom.half_height, geom.half_height
    nxe = max(2, int(round((xr - xl) / h_far)))
    nye = max(2, int(round((yt - yb) / h_far)))
    tx = np.linspace(xl, xr, nxe + 1)
    ty = np.linspace(yb, yt, nye + 1)
    left = np.column_stack([np.full_like(ty, xl), ty])
    right = np.column_stack([np.full_like(ty, xr), ty])
    bottom = np.column_stack([tx[1:-1], np.full(nxe - 1, yb)])
    top = np.column_stack([tx[1:-1], np.full(nxe - 1, yt)])
    b_parts.append((left, np.tile((-1.0, 0.0), (len(left), 1)), INLET))
    b_parts.append((right, np.tile((1.0, 0.0), (len(right), 1)), OUTLET))
    b_parts.append((bottom, np.tile((0.0, -1.0), (len(bottom), 1)), SYMMETRY))
    b_parts.append((top, np.tile((0.0, 1.0), (len(top), 1)), SYMMETRY))

    b = np.vstack([p[0] for p in b_parts])
    bn = np.vstack([p[1] for p in b_parts])
    bf = np.concatenate([np.full(len(p[0]), p[2], dtype=np.int64) for p in b_parts])

    fill = _hex_fill((xl, xr), (yb, yt), h_far, rng)
    rr = np.linalg.norm(fill, axis=1)
    fill = fill[rr > r_last + 0.5 * h_far]
    inside = (np.abs(fill[:, 0] - 0.5 * (xl + xr)) < 0.5 * (xr - xl)) & \
             (np.abs(fill[:, 1]) < geom.half_height)
    fill = fill[inside]
    rect_b = np.vstack([left, right, bottom, top])
    fill = _clear_near(fill, rect_b, _CLEARANCE * h_far)
    fill = _clear_near(fill, ring_pts, 0.8 * h_far)
    fill = np.vstack([ring_pts, fill])
    ps = _assemble(b, bf, bn, fill, h_near)
    return ps


def _gen_ellipse_two_cylinders(geom: EllipseTwoCylinders, h, rng):
    a, bb, cdx, ri = geom.semi_x, geom.semi_y, geom.center_offset, geom.r_inner
    if not (0 < ri and cdx + ri < a and ri < bb and cdx - ri > -a):
        raise InvalidGeometryError("cylinders must fit inside the ellipse")
    t = np.linspace(0, 2 * np.pi, 4000)
    dense = np.column_stack([a * np.cos(t), bb * np.sin(t)])
    n_out = max(16, int(round(_ellipse_perimeter(a, bb) / h)))
    outer = _arclength_resample(dense, n_out, offset=rng.uniform(0, 1))
    on = np.column_stack([outer[:, 0] / a**2, outer[:, 1] / bb**2])
    on /= np.linalg.norm(on, axis=1)[:, None]
    c1, u1 = _circle_pts((-cdx, 0.0), ri, h, rng)
    c2, u2 = _circle_pts((cdx, 0.0), ri, h, rng)
    b = np.vstack([outer, c1, c2])
    bn = np.vstack([on, -u1, -u2])
    bf = np.full(len(b), WALL, dtype=np.int64)
    fill = _hex_fill((-a, a), (-bb, bb), h, rng)
    inside = (fill[:, 0] / a) ** 2 + (fill[:, 1] / bb) ** 2 < 1.0
    inside &= np.linalg.norm(fill - (-cdx, 0.0), axis=1) > ri
    inside &= np.linalg.norm(fill - (cdx, 0.0), axis=1) > ri
    fill = _clear_near(fill[inside], b, _CLEARANCE * h)
    return _assemble(b, bf, bn, fill, h)


def _ellipse_perimeter(a, b):
    # Ramanujan approximation, plenty for spacing decisions
    h = ((a - b) / (a + b)) ** 2
    return np.pi * (a + b) * (1 + 3 * h / (10 + np.sqrt(4 - 3 * h)))


def _gen_bellow(geom: BellowChannel, h, rng):
    if geom.half_gap_min <= 0 or geom.period <= 0:
        raise InvalidGeometryError("bellow geometry is degenerate")
    period = (geom.period, 0.0)
    xd = np.linspace(0.0, geom.period, 6000)
    top_dense = np.column_stack([xd, geom.half_gap(xd)])
    seg = np.linalg.norm(np.diff(top_dense, axis=0), axis=1).sum()
    n_w = max(8, int(round(seg / h)))
    top = _arclength_resample(top_dense, n_w, offset=rng.uniform(0, 1))
    bot = top * np.array([1.0, -1.0])
    gs = geom.half_gap_slope(top[:, 0])
    tn = np.column_stack([-gs, np.ones_like(gs)])
    tn /= np.linalg.norm(tn, axis=1)[:, None]
    bn_bot = np.column_stack([-gs, -np.ones_like(gs)])
    bn_bot /= np.linalg.norm(bn_bot, axis=1)[:, None]
    b = np.vstack([top, bot])
    bn = np.vstack([tn, bn_bot])
    bf = np.full(len(b), WALL, dtype=np.int64)
    gmax = geom.half_gap_min + geom.amplitude
    fill = _hex_fill((0.0, geom.period), (-gmax, gmax), h, rng)
    fill[:, 0] = np.mod(fill[:, 0], geom.period)
    fill = fill[np.abs(fill[:, 1]) < geom.half_gap(fill[:, 0])]
    fill = _clear_near(fill, b, _CLEARANCE * h, period)
    return _assemble(b, bf, bn, fill, h, period)


def _refine_darts(fill, h, refinement_map, rng):
    """Generic variable-density thinning for a user refinement map."""
    scale = np.asarray(refinement_map(fill[:, 0], fill[:, 1]), dtype=np.float64)
    if np.any(scale <= 0):
        raise InvalidGeometryError("refinement map must be positive")
    radii = 0.8 * h * scale
    order = rng.permutation(len(fill))
    cell = radii.max()
    grid: dict[tuple[int, int], list[int]] = {}
    accepted = []
    for i in order:
        p = fill[i]
        ci, cj = int(np.floor(p[0] / cell)), int(np.floor(p[1] / cell))
        ok = True
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                for j in grid.get((ci + di, cj + dj), ()):
                    if np.hypot(*(p - fill[j])) < min(radii[i], radii[j]):
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            grid.setdefault((ci, cj), []).append(i)
            accepted.append(i)
    return fill[np.sort(accepted)]


def generate_points(geometry, target_dx, refinement_map=None, seed=0) -> PointSet:
    """Generate a point set for one of the built-in domains.

    `target_dx` is the interior spacing (the near-body spacing for the
    cylinder wake, which grades to refine_ratio times coarser in the far
    field). `refinement_map(x, y) -> factor` locally scales the spacing
    for the uniform-fill geometries. A str/Path loads an external file.
    """
    if isinstance(geometry, (str,)) or hasattr(geometry, "read_text"):
        return load_pointset(geometry)
    if target_dx is None or target_dx <= 0:
        raise InvalidGeometryError("target_dx must be positive")
    rng = np.random.default_rng(seed)
    if isinstance(geometry, CylinderWake):
        return _gen_cylinder_wake(geometry, target_dx, rng)
    if refinement_map is not None:
        # build at the base spacing, then thin to the local target
        hook = refinement_map
    else:
        hook = None
    if isinstance(geometry, Annulus):
        ps = _gen_annulus(geometry, target_dx, rng)
    elif isinstance(geometry, UnitSquare):
        ps = _gen_unit_square(target_dx, rng)
    elif isinstance(geometry, EllipseTwoCylinders):
        ps = _gen_ellipse_two_cylinders(geometry, target_dx, rng)
    elif isinstance(geometry, BellowChannel):
        ps = _gen_bellow(geometry, target_dx, rng)
    else:
        raise InvalidGeometryError(f"unknown geometry descriptor: {geometry!r}")
    if hook is None:
        return ps
    interior = ps.flags == INTERIOR
    kept = _refine_darts(ps.coords[interior], target_dx, hook, rng)
    coords = np.vstack([ps.coords[~interior], kept])
    flags = np.concatenate([ps.flags[~interior],
                            np.zeros(len(kept), dtype=np.int64)])
    normals = np.vstack([ps.normals[~interior], np.zeros((len(kept), 2))])
    return make_pointset(coords, flags, normals, ps.period)


# ---------------------------------------------------------------------------
# plain-text point-set files: header `N period_x period_y`,
# rows `x y flag [nx ny]`

def save_pointset(ps: PointSet, path):
    with open(path, "w") as f:
        f.write(f"{ps.n} {ps.period[0]:.9g} {ps.period[1]:.9g}\n")
        for i in range(ps.n):
            x, y = ps.coords[i]
            if ps.flags[i] == INTERIOR:
                f.write(f"{x:.17g} {y:.17g} {ps.flags[i]}\n")
            else:
                nx, ny = ps.normals[i]
                f.write(f"{x:.17g} {y:.17g} {ps.flags[i]} {nx:.17g} {ny:.17g}\n")


def load_pointset(path) -> PointSet:
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 3:
            raise InvalidGeometryError("point file header must be `N px py`")
        n = int(header[0])
        period = (float(header[1]), float(header[2]))
        coords = np.zeros((n, 2))
        flags = np.zeros(n, dtype=np.int64)
        normals = np.zeros((n, 2))
        for i in range(n):
            parts = f.readline().split()
            if len(parts) not in (3, 5):
                raise InvalidGeometryError(f"bad point record on line {i + 2}")
            coords[i] = (float(parts[0]), float(parts[1]))
            flags[i] = int(parts[2])
            if flags[i] != INTERIOR:
                if len(parts) != 5:
                    raise InvalidGeometryError(
                        f"boundary point on line {i + 2} is missing its normal")
                normals[i] = (float(parts[3]), float(parts[4]))
    return make_pointset(coords, flags, normals, period)
