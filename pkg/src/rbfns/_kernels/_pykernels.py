"""Pure-numpy fallbacks for the compiled CSR kernels.

Same signatures as the Cython module; selected at import time when the
extension is missing or RBFNS_BACKEND=py. The ILU factor/solve loops are
sequential by nature and noticeably slower here; correctness matches.
"""

import numpy as np


def csr_matvec(indptr, indices, data, x, out):
    """out = A @ x for a CSR matrix given by (indptr, indices, data)."""
    if len(data) == 0:
        out[:] = 0.0
        return
    prod = data * x[indices]
    starts = indptr[:-1]
    empty = starts == indptr[1:]
    # reduceat misbehaves on empty segments and on a start == len(prod)
    safe = np.minimum(starts, len(prod) - 1)
    out[:] = np.add.reduceat(prod, safe)
    out[empty] = 0.0


def ilu0_factor(indptr, indices, data, diag_pos):
    """Zero fill-in incomplete LU, returned as a modified copy of data.

    L is unit lower triangular (its entries sit left of the diagonal in
    each row), U occupies the diagonal and the right part. Tiny pivots
    are clamped to keep the triangular solves finite.
    """
    n = len(indptr) - 1
    lu = np.array(data, dtype=np.float64, copy=True)
    dvals = np.abs(lu[diag_pos])
    clamp = 1e-14 * (dvals.max() if n else 1.0) + 1e-300
    for i in range(n):
        r0 = indptr[i]
        di = diag_pos[i]
        cols_i = indices[r0:indptr[i + 1]]
        for pos in range(r0, di):
            k = indices[pos]
            piv = lu[diag_pos[k]]
            lik = lu[pos] / piv
            lu[pos] = lik
            k0, k1 = diag_pos[k] + 1, indptr[k + 1]
            if k0 == k1:
                continue
            cols_k = indices[k0:k1]
            loc = np.searchsorted(cols_i, cols_k)
            ok = loc < len(cols_i)
            loc_c = np.minimum(loc, len(cols_i) - 1)
            ok &= cols_i[loc_c] == cols_k
            lu[r0 + loc_c[ok]] -= lik * lu[k0:k1][ok]
        if abs(lu[di]) < clamp:
            lu[di] = clamp if lu[di] >= 0 else -clamp
    return lu


def ilu0_solve(indptr, indices, lu, diag_pos, b, out):
    """Solve L U out = b with the factors produced by ilu0_factor."""
    n = len(b)
    out[:] = b
    for i in range(n):
        r0, di = indptr[i], diag_pos[i]
        if di > r0:
            out[i] -= lu[r0:di] @ out[indices[r0:di]]
    for i in range(n - 1, -1, -1):
        di, r1 = diag_pos[i], indptr[i + 1]
        if r1 > di + 1:
            out[i] -= lu[di + 1:r1] @ out[indices[di + 1:r1]]
        out[i] /= lu[di]
