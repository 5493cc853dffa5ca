# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled CSR kernels: matvec, ILU(0) factorization and triangular solves."""

import numpy as np

cimport numpy as cnp

ctypedef cnp.int64_t idx_t
ctypedef cnp.float64_t val_t


def csr_matvec(idx_t[::1] indptr, idx_t[::1] indices, val_t[::1] data,
               val_t[::1] x, val_t[::1] out):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, p
    cdef val_t acc
    for i in range(n):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        out[i] = acc


def ilu0_factor(idx_t[::1] indptr, idx_t[::1] indices, val_t[::1] data,
                idx_t[::1] diag_pos):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    lu_arr = np.array(data, dtype=np.float64, copy=True)
    cdef val_t[::1] lu = lu_arr
    cdef Py_ssize_t i, pos, pk, pi
    cdef idx_t k, ck, ci
    cdef val_t piv, lik, dmax, clamp

    dmax = 0.0
    for i in range(n):
        if abs(lu[diag_pos[i]]) > dmax:
            dmax = abs(lu[diag_pos[i]])
    clamp = 1e-14 * dmax + 1e-300

    for i in range(n):
        for pos in range(indptr[i], diag_pos[i]):
            k = indices[pos]
            piv = lu[diag_pos[k]]
            lik = lu[pos] / piv
            lu[pos] = lik
            # merge the tails of row i (cols > k) and row k (cols > k)
            pk = diag_pos[k] + 1
            pi = pos + 1
            while pk < indptr[k + 1] and pi < indptr[i + 1]:
                ck = indices[pk]
                ci = indices[pi]
                if ck == ci:
                    lu[pi] -= lik * lu[pk]
                    pk += 1
                    pi += 1
                elif ck < ci:
                    pk += 1
                else:
                    pi += 1
        if abs(lu[diag_pos[i]]) < clamp:
            lu[diag_pos[i]] = clamp if lu[diag_pos[i]] >= 0 else -clamp
    return lu_arr


def ilu0_solve(idx_t[::1] indptr, idx_t[::1] indices, val_t[::1] lu,
               idx_t[::1] diag_pos, val_t[::1] b, val_t[::1] out):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, p
    cdef val_t acc
    for i in range(n):
        acc = b[i]
        for p in range(indptr[i], diag_pos[i]):
            acc -= lu[p] * out[indices[p]]
        out[i] = acc
    for i in range(n - 1, -1, -1):
        acc = out[i]
        for p in range(diag_pos[i] + 1, indptr[i + 1]):
            acc -= lu[p] * out[indices[p]]
        out[i] = acc / lu[diag_pos[i]]
