"""PHS-RBF collocation: local systems, operator weights, global operators.

A scalar field is interpolated over each stencil with the cubic
polyharmonic kernel phi(r) = r^3 plus all monomials up to degree k, with
the usual moment constraints on the kernel coefficients. Differential
operator weights come from applying the operator to the kernel and the
monomials at the evaluation point and solving through the shared local
matrix. Stencils are shifted to their centroid and scaled by their radius
before assembly; weights are unscaled afterwards (required for stability
at degree 5-6).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.spatial import cKDTree

from .errors import DegenerateStencilError, OutOfDomainError
from .linalg import CsrMatrix
from .pointcloud import PointSet, StencilSet, _tiled

DDX, DDY, LAP, INTERP = "ddx", "ddy", "lap", "interp"
_OP_ORDER = {INTERP: 0, DDX: 1, DDY: 1, LAP: 2}

_REPRO_RAISE = 1e-6  # reproduction failure beyond this marks a stencil degenerate


def monomial_count(k: int) -> int:
    """Number of 2-D monomials of total degree <= k."""
    if k < 0:
        raise ValueError("degree must be >= 0")
    return comb(k + 2, 2)


@dataclass(frozen=True)
class MonomialBasis:
    """Monomials of total degree <= k in graded lexicographic order."""

    degree: int
    terms: tuple = field(init=False)

    def __post_init__(self):
        terms = tuple((d - j, j) for d in range(self.degree + 1)
                      for j in range(d + 1))
        object.__setattr__(self, "terms", terms)

    @property
    def m(self):
        return len(self.terms)

    def eval(self, pts, op=INTERP):
        """Evaluate op applied to every term at pts (..., 2) -> (..., m)."""
        x, y = pts[..., 0], pts[..., 1]
        zero = np.zeros_like(x)
        cols = []
        for ax, ay in self.terms:
            if op == INTERP:
                cols.append(x ** ax * y ** ay)
            elif op == DDX:
                cols.append(ax * x ** (ax - 1) * y ** ay if ax >= 1 else zero)
            elif op == DDY:
                cols.append(ay * x ** ax * y ** (ay - 1) if ay >= 1 else zero)
            elif op == LAP:
                t = zero
                if ax >= 2:
                    t = t + ax * (ax - 1) * x ** (ax - 2) * y ** ay
                if ay >= 2:
                    t = t + ay * (ay - 1) * x ** ax * y ** (ay - 2)
                cols.append(t)
            else:
                raise ValueError(f"unknown operator tag {op!r}")
        return np.stack(cols, axis=-1)


def _phs_op(diff, r, op):
    """op applied to phi(|x - xi|) = |x - xi|^3 as a function of x."""
    if op == INTERP:
        return r ** 3
    if op == DDX:
        return 3.0 * r * diff[..., 0]
    if op == DDY:
        return 3.0 * r * diff[..., 1]
    if op == LAP:
        return 9.0 * r
    raise ValueError(f"unknown operator tag {op!r}")


@dataclass
class OperatorWeights:
    op: str
    weights: np.ndarray  # (q,)


@dataclass
class LocalSystem:
    """One stencil's collocation matrix in shifted/scaled coordinates."""

    matrix: np.ndarray        # (q+m, q+m)
    shift: np.ndarray         # (2,) stencil centroid
    scale: float              # stencil radius
    coords_scaled: np.ndarray  # (q, 2)
    basis: MonomialBasis
    center: int = -1
    _lu: tuple | None = None

    @property
    def q(self):
        return len(self.coords_scaled)

    def factorization(self):
        if self._lu is None:
            try:
                lu, piv = lu_factor(self.matrix)
            except np.linalg.LinAlgError as exc:
                raise DegenerateStencilError(self.center, str(exc)) from exc
            u = np.abs(np.diag(lu))
            if u.min() <= 1e-14 * max(u.max(), 1.0):
                raise DegenerateStencilError(
                    self.center, f"singular local system at point {self.center}")
            self._lu = (lu, piv)
        return self._lu


def _system_blocks(coords_scaled, basis):
    diff = coords_scaled[..., :, None, :] - coords_scaled[..., None, :, :]
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    phi = r ** 3
    p = basis.eval(coords_scaled)
    return phi, p


def assemble_local_system(coords, k: int, center: int = -1) -> LocalSystem:
    """Build the (q+m)x(q+m) symmetric collocation matrix for one stencil."""
    coords = np.asarray(coords, dtype=np.float64)
    q = len(coords)
    basis = MonomialBasis(k)
    shift = coords.mean(axis=0)
    shifted = coords - shift
    scale = float(np.max(np.linalg.norm(shifted, axis=1)))
    if scale <= 0.0:
        raise DegenerateStencilError(center, "coincident stencil points")
    sc = shifted / scale
    phi, p = _system_blocks(sc, basis)
    m = basis.m
    a = np.zeros((q + m, q + m))
    a[:q, :q] = phi
    a[:q, q:] = p
    a[q:, :q] = p.T
    ls = LocalSystem(a, shift, scale, sc, basis, center)
    ls.factorization()  # surfaces the degenerate-stencil error eagerly
    return ls


def _rhs_for(ls_coords, basis, eval_scaled, op):
    """Collocation right-hand side for one operator at one eval point."""
    diff = eval_scaled[..., None, :] - ls_coords
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    top = _phs_op(diff, r, op)
    bot = basis.eval(eval_scaled, op)
    return np.concatenate([top, bot], axis=-1)


def compute_weights(ls: LocalSystem, op: str, eval_point) -> OperatorWeights:
    """Weights contracting nodal values to (op field)(eval_point).

    Reproduces every monomial of degree <= k at the evaluation point; a
    reproduction failure marks the stencil degenerate.
    """
    eval_scaled = (np.asarray(eval_point, dtype=np.float64) - ls.shift) / ls.scale
    rhs = _rhs_for(ls.coords_scaled, ls.basis, eval_scaled, op)
    sol = lu_solve(ls.factorization(), rhs)
    w = sol[:ls.q]
    target = rhs[ls.q:]
    repro = ls.basis.eval(ls.coords_scaled).T @ w
    err = np.max(np.abs(repro - target)) / max(1.0, np.max(np.abs(target)))
    if not np.isfinite(err) or err > _REPRO_RAISE:
        raise DegenerateStencilError(
            ls.center, f"polynomial reproduction failed ({err:.2e}) at point {ls.center}")
    return OperatorWeights(op, w / ls.scale ** _OP_ORDER[op])


class SparseOperator(CsrMatrix):
    """Global N x N operator; row i holds point i's stencil weights."""

    def __init__(self, indptr, indices, data, shape=None, op="", degree=0):
        super().__init__(indptr, indices, data, shape)
        self.op = op
        self.degree = degree


# reuse one slot pattern across ops built from the same stencils
def _weights_batch(nbr_coords, basis, eval_pts, ops, center_ids):
    """Solve all stencil systems in one LAPACK batch.

    nbr_coords: (B, q, 2) physical stencil coordinates.
    eval_pts:   (B, 2) physical evaluation points.
    Returns {op: (B, q) physical weights}.
    """
    b, q, _ = nbr_coords.shape
    m = basis.m
    centroid = nbr_coords.mean(axis=1)
    shifted = nbr_coords - centroid[:, None, :]
    scale = np.linalg.norm(shifted, axis=2).max(axis=1)
    bad = scale <= 0
    if np.any(bad):
        raise DegenerateStencilError(center_ids[np.argmax(bad)],
                                     "coincident stencil points")
    sc = shifted / scale[:, None, None]
    ev = (eval_pts - centroid) / scale[:, None]
    phi, p = _system_blocks(sc, basis)
    a = np.zeros((b, q + m, q + m))
    a[:, :q, :q] = phi
    a[:, :q, q:] = p
    a[:, q:, :q] = np.swapaxes(p, 1, 2)
    rhs = np.stack([_rhs_for(sc, basis, ev, op) for op in ops], axis=-1)
    try:
        sol = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError:
        for i in range(b):
            try:
                np.linalg.solve(a[i], rhs[i])
            except np.linalg.LinAlgError:
                raise DegenerateStencilError(center_ids[i]) from None
        raise
    w = sol[:, :q, :]
    # polynomial-reproduction check doubles as the degeneracy detector
    repro = np.einsum("bqm,bqo->bmo", p, w)
    target = rhs[:, q:, :]
    err = np.abs(repro - target).max(axis=(1, 2))
    err /= np.maximum(1.0, np.abs(target).max(axis=(1, 2)))
    if not np.all(np.isfinite(err)) or err.max() > _REPRO_RAISE:
        i = int(np.argmax(np.where(np.isfinite(err), err, np.inf)))
        raise DegenerateStencilError(
            center_ids[i], f"polynomial reproduction failed ({err[i]:.2e}) "
                           f"at point {center_ids[i]}")
    out = {}
    for j, op in enumerate(ops):
        out[op] = w[..., j] / scale[:, None] ** _OP_ORDER[op]
    return out


_CHUNK = 1024


def build_global_operators(ps: PointSet, stencils: StencilSet, ops, k: int):
    """Assemble several global operators sharing the stencil factorizations."""
    n = ps.n
    q = stencils.q
    basis = MonomialBasis(k)
    if q < basis.m:
        raise DegenerateStencilError(
            0, f"stencil size {q} below monomial count {basis.m} for degree {k}")
    vals = {op: np.empty((n, q)) for op in ops}
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        rows = np.arange(lo, hi)
        nbr = stencils.neighbor_coords(ps, rows)
        got = _weights_batch(nbr, basis, ps.coords[lo:hi], ops, rows)
        for op in ops:
            vals[op][lo:hi] = got[op]
    out = {}
    for op in ops:
        cols = stencils.neighbors
        order = np.argsort(cols, axis=1, kind="stable")
        scols = np.take_along_axis(cols, order, axis=1)
        svals = np.take_along_axis(vals[op], order, axis=1)
        indptr = np.arange(n + 1, dtype=np.int64) * q
        out[op] = SparseOperator(indptr, scols.ravel(), svals.ravel(),
                                 shape=(n, n), op=op, degree=k)
    return out


def build_global_operator(ps, stencils, op, k) -> SparseOperator:
    return build_global_operators(ps, stencils, [op], k)[op]


def build_eval_matrix(ps: PointSet, stencils: StencilSet, k: int,
                      targets, op: str) -> CsrMatrix:
    """Rectangular (T x N) matrix evaluating op at arbitrary targets.

    Each target uses the stencil of its nearest point; targets outside
    the bounding box raise.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    ext = ps.extents
    tol = 1e-9 * max(ext[0, 1] - ext[0, 0], ext[1, 1] - ext[1, 0], 1.0)
    per = np.asarray(ps.period)
    chk = targets.copy()
    for ax in range(2):
        if per[ax] > 0:
            chk[:, ax] = np.mod(chk[:, ax] - ext[ax, 0], per[ax]) + ext[ax, 0]
    if (np.any(chk[:, 0] < ext[0, 0] - tol) or np.any(chk[:, 0] > ext[0, 1] + tol)
            or np.any(chk[:, 1] < ext[1, 0] - tol) or np.any(chk[:, 1] > ext[1, 1] + tol)):
        raise OutOfDomainError("interpolation target outside the domain bounding box")
    pts, base, shifts = _tiled(ps.coords, ps.period)
    _, it = cKDTree(pts).query(targets, k=1)
    rows = base[it]
    # express each target in its host stencil's frame
    local = targets - shifts[it] * per
    nbr = stencils.neighbor_coords(ps, rows)
    basis = MonomialBasis(k)
    t = len(targets)
    w = np.empty((t, stencils.q))
    for lo in range(0, t, _CHUNK):
        hi = min(lo + _CHUNK, t)
        got = _weights_batch(nbr[lo:hi], basis, local[lo:hi], [op], rows[lo:hi])
        w[lo:hi] = got[op]
    return CsrMatrix.from_uniform_rows(stencils.neighbors[rows], w, ncols=ps.n)


def interpolate_field(ps, stencils, k, field_values, targets):
    """Interpolate nodal values to arbitrary in-domain positions."""
    mat = build_eval_matrix(ps, stencils, k, targets, INTERP)
    return mat.matvec(np.asarray(field_values, dtype=np.float64))


def dump_local_system(path, ls: LocalSystem, weights: dict | None = None):
    """Debug dump of one stencil's matrix and operator weights."""
    with open(path, "w") as f:
        f.write(f"# local system, center={ls.center} q={ls.q} "
                f"degree={ls.basis.degree}\n")
        f.write(f"# shift {ls.shift[0]:.9g} {ls.shift[1]:.9g} scale {ls.scale:.9g}\n")
        f.write("A\n")
        for row in ls.matrix:
            f.write(" ".join(f"{v:.9g}" for v in row) + "\n")
        for op, w in (weights or {}).items():
            f.write(f"weights {op}\n")
            f.write(" ".join(f"{v:.9g}" for v in np.asarray(w).ravel()) + "\n")
