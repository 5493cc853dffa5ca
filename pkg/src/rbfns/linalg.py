"""Sparse kernels, preconditioned BiCGSTAB and dominant-eigenvalue estimation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import _kernels
from .errors import (
    BreakdownError,
    DimensionMismatchError,
    InvalidOperatorError,
    NonConvergenceError,
    SingularPreconditionerError,
)


class CsrMatrix:
    """Compressed-row matrix with column indices sorted within each row."""

    __slots__ = ("indptr", "indices", "data", "shape")

    def __init__(self, indptr, indices, data, shape=None):
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        nrows = len(self.indptr) - 1
        if shape is None:
            shape = (nrows, nrows)
        self.shape = (int(shape[0]), int(shape[1]))
        if self.shape[0] != nrows:
            raise DimensionMismatchError("indptr length does not match row count")
        if len(self.indices) != len(self.data):
            raise DimensionMismatchError("indices/data length mismatch")

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        mask = a != 0.0
        indptr = np.concatenate(([0], np.cumsum(mask.sum(axis=1))))
        indices = np.nonzero(mask)[1]
        return cls(indptr, indices, a[mask], shape=a.shape)

    @classmethod
    def from_uniform_rows(cls, cols, vals, ncols=None):
        """Build from per-row arrays of equal width (cols sorted per row)."""
        cols = np.asarray(cols)
        vals = np.asarray(vals, dtype=np.float64)
        n, q = cols.shape
        order = np.argsort(cols, axis=1, kind="stable")
        cols = np.take_along_axis(cols, order, axis=1)
        vals = np.take_along_axis(vals, order, axis=1)
        indptr = np.arange(n + 1, dtype=np.int64) * q
        return cls(indptr, cols.ravel(), vals.ravel(),
                   shape=(n, ncols if ncols is not None else n))

    @property
    def is_square(self):
        return self.shape[0] == self.shape[1]

    def matvec(self, x, out=None):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.shape[1],):
            raise DimensionMismatchError(
                f"matvec: x has shape {x.shape}, matrix is {self.shape}")
        if out is None:
            out = np.empty(self.shape[0])
        _kernels.csr_matvec(self.indptr, self.indices, self.data,
                            np.ascontiguousarray(x), out)
        return out

    def diagonal(self):
        if not self.is_square:
            raise DimensionMismatchError("diagonal of a non-square matrix")
        d = np.zeros(self.shape[0])
        pos = self.diag_positions(strict=False)
        ok = pos >= 0
        d[ok] = self.data[pos[ok]]
        return d

    def diag_positions(self, strict=True):
        """Index into data of each row's diagonal entry (-1 if absent)."""
        n = self.shape[0]
        pos = np.full(n, -1, dtype=np.int64)
        for i in range(n):
            r0, r1 = self.indptr[i], self.indptr[i + 1]
            j = np.searchsorted(self.indices[r0:r1], i)
            if j < r1 - r0 and self.indices[r0 + j] == i:
                pos[i] = r0 + j
        if strict and np.any(pos < 0):
            raise SingularPreconditionerError("structural zero on the diagonal")
        return pos

    def to_dense(self):
        a = np.zeros(self.shape)
        for i in range(self.shape[0]):
            r0, r1 = self.indptr[i], self.indptr[i + 1]
            a[i, self.indices[r0:r1]] = self.data[r0:r1]
        return a


def spmv(a: CsrMatrix, x):
    """y = A x."""
    return a.matvec(x)


@dataclass
class Preconditioner:
    """Approximate inverse applied as a linear map."""

    kind: str  # 'identity' | 'diagonal' | 'ilu0'
    _inv_diag: np.ndarray | None = None
    _matrix: CsrMatrix | None = None
    _lu: np.ndarray | None = None
    _diag_pos: np.ndarray | None = None

    def apply(self, x, out=None):
        if out is None:
            out = np.empty_like(x)
        if self.kind == "identity":
            out[:] = x
        elif self.kind == "diagonal":
            np.multiply(x, self._inv_diag, out=out)
        else:
            m = self._matrix
            _kernels.ilu0_solve(m.indptr, m.indices, self._lu,
                                self._diag_pos, x, out)
        return out


def build_preconditioner(a: CsrMatrix, kind: str) -> Preconditioner:
    if not a.is_square:
        raise DimensionMismatchError("preconditioner requires a square matrix")
    if kind == "identity":
        return Preconditioner("identity")
    if kind == "diagonal":
        d = a.diagonal()
        if np.any(d == 0.0):
            raise SingularPreconditionerError("zero diagonal entry")
        return Preconditioner("diagonal", _inv_diag=1.0 / d)
    if kind == "ilu0":
        pos = a.diag_positions(strict=True)
        lu = _kernels.ilu0_factor(a.indptr, a.indices, a.data, pos)
        return Preconditioner("ilu0", _matrix=a, _lu=lu, _diag_pos=pos)
    raise ValueError(f"unknown preconditioner kind: {kind!r}")


def _apply_op(a, x, project):
    y = a.matvec(x)
    if project is not None:
        project(y)
    return y


def bicgstab(a: CsrMatrix, b, x0=None, tol=1e-8, max_iters=1000,
             M: Preconditioner | None = None,
             project: Callable[[np.ndarray], None] | None = None):
    """Preconditioned BiCGSTAB.

    Returns (x, history) where history holds the relative residual after
    the initial guess and after every iteration. `project`, when given,
    removes a known nullspace component in-place from operator outputs
    and the solution (used for the pure-Neumann pressure system).

    Raises BreakdownError after one failed restart, NonConvergenceError
    (carrying the best iterate) when max_iters is exhausted.
    """
    if not a.is_square:
        raise DimensionMismatchError("bicgstab requires a square matrix")
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(b, dtype=np.float64).copy()
    if project is not None:
        project(b)
    bnorm = np.linalg.norm(b)
    n = a.shape[0]
    if bnorm == 0.0:
        return np.zeros(n), [0.0]
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=np.float64).copy()
    if project is not None:
        project(x)

    eps = 1e-30
    restarted = False
    history = []
    r = b - _apply_op(a, x, project)
    res = np.linalg.norm(r) / bnorm
    history.append(res)
    if res <= tol:
        return x, history

    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    best_x, best_res = x.copy(), res

    it = 0
    while it < max_iters:
        it += 1
        rho_new = float(r_hat @ r)
        if abs(rho_new) < eps * bnorm * bnorm or abs(omega) < eps:
            if restarted:
                raise BreakdownError(f"bicgstab breakdown at iteration {it}")
            restarted = True
            r = b - _apply_op(a, x, project)
            r_hat = r.copy()
            rho = alpha = omega = 1.0
            v[:] = 0.0
            p[:] = 0.0
            continue
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        p_hat = M.apply(p) if M is not None else p
        v = _apply_op(a, p_hat, project)
        denom = float(r_hat @ v)
        if abs(denom) < eps:
            if restarted:
                raise BreakdownError(f"bicgstab breakdown at iteration {it}")
            restarted = True
            r = b - _apply_op(a, x, project)
            r_hat = r.copy()
            rho = alpha = omega = 1.0
            v[:] = 0.0
            p[:] = 0.0
            continue
        alpha = rho / denom
        s = r - alpha * v
        snorm = np.linalg.norm(s) / bnorm
        if snorm <= tol:
            x = x + alpha * p_hat
            if project is not None:
                project(x)
            history.append(snorm)
            return x, history
        s_hat = M.apply(s) if M is not None else s
        t = _apply_op(a, s_hat, project)
        tt = float(t @ t)
        if tt < eps:
            if restarted:
                raise BreakdownError(f"bicgstab breakdown at iteration {it}")
            restarted = True
            r = b - _apply_op(a, x, project)
            r_hat = r.copy()
            rho = alpha = omega = 1.0
            v[:] = 0.0
            p[:] = 0.0
            continue
        omega = float(t @ s) / tt
        x = x + alpha * p_hat + omega * s_hat
        r = s - omega * t
        res = float(np.linalg.norm(r)) / bnorm
        history.append(res)
        if res < best_res:
            best_res = res
            best_x = x.copy()
        if res <= tol:
            if project is not None:
                project(x)
            return x, history

    raise NonConvergenceError(
        f"bicgstab: {max_iters} iterations, residual {best_res:.3e} > tol {tol:.1e}",
        best_x=best_x, history=history)


class EigenEstimate(NamedTuple):
    value: float
    converged: bool


def max_real_eigenvalue(a: CsrMatrix, tol=1e-3, max_iters=40,
                        subspace=30, seed=0) -> EigenEstimate:
    """Largest-real-part eigenvalue via restarted Arnoldi.

    Restarts from the dominant Ritz vector until the Ritz value settles
    to relative tol. Non-convergence returns the best estimate flagged
    approximate rather than raising.
    """
    if not a.is_square:
        raise DimensionMismatchError("eigenvalue estimate requires a square matrix")
    n = a.shape[0]
    if n == 0 or len(a.data) == 0 or not np.any(a.data):
        raise InvalidOperatorError("eigenvalue of an empty/zero matrix")
    m = min(subspace, n)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    lam_old = None
    for _ in range(max_iters):
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        nv = np.linalg.norm(v0)
        if nv == 0.0:
            v0 = rng.standard_normal(n)
            nv = np.linalg.norm(v0)
        V[0] = v0 / nv
        k = m
        invariant = False
        for j in range(m):
            w = a.matvec(V[j])
            for i in range(j + 1):
                H[i, j] = V[i] @ w
                w -= H[i, j] * V[i]
            h = np.linalg.norm(w)
            H[j + 1, j] = h
            if h < 1e-12:
                k = j + 1
                invariant = True
                break
            V[j + 1] = w / h
        evals, evecs = np.linalg.eig(H[:k, :k])
        top = int(np.argmax(evals.real))
        lam = float(evals.real[top])
        if invariant:
            return EigenEstimate(lam, True)
        if lam_old is not None and abs(lam - lam_old) <= tol * max(abs(lam), 1e-30):
            return EigenEstimate(lam, True)
        lam_old = lam
        v0 = (V[:k].T @ evecs[:, top]).real
    return EigenEstimate(lam_old, False)


def write_residual_history(path, history):
    """Optional columnar dump: iteration index and relative residual."""
    with open(path, "w") as f:
        f.write("iter rel_residual\n")
        for i, r in enumerate(history):
            f.write(f"{i} {r:.9g}\n")
