# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled buyer-choice kernels over integer ticks.

Mirrors `_kernels_py` exactly; see that module for the semantics.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

ctypedef cnp.int64_t i64


cdef inline i64 _choose(const double[::1] table, const i64[::1] order,
                        const i64[::1] v, const i64[::1] q, int m,
                        i64* sums, i64* cnts, const int* low,
                        i64* umask) noexcept nogil:
    # subset sums of min(v, q) and counted-item totals, built from the lowest bit
    cdef Py_ssize_t k, n_order = order.shape[0], full = (<Py_ssize_t>1) << m
    cdef i64 mask, best = -1, c, bc = 0, u = 0
    cdef double p, d, bd = 0.0, bp = 0.0
    cdef int i
    sums[0] = 0
    cnts[0] = 0
    for k in range(1, full):
        i = low[k]
        mask = k & (k - 1)
        if v[i] < q[i]:
            sums[k] = sums[mask] + v[i]
            cnts[k] = cnts[mask]
        else:
            sums[k] = sums[mask] + q[i]
            cnts[k] = cnts[mask] + (q[i] > 0)
    for k in range(n_order):
        mask = order[k]
        p = table[mask]
        if p == INFINITY:
            continue
        c = cnts[mask]
        d = <double>sums[mask] - p
        if best < 0 or d > bd or (d == bd and (p < bp or (p == bp and c < bc))):
            best = mask
            bd = d
            bp = p
            bc = c
    for i in range(m):
        if (not ((best >> i) & 1) and v[i] >= q[i]) or q[i] == 0:
            u |= (<i64>1) << i
    umask[0] = u
    return best


cdef class _Work:
    """Scratch tables of size 2^m shared by every row of one call."""

    cdef i64[::1] sums
    cdef i64[::1] cnts
    cdef int[::1] low

    def __init__(self, int m):
        cdef Py_ssize_t full = (<Py_ssize_t>1) << m, k
        self.sums = np.zeros(full, dtype=np.int64)
        self.cnts = np.zeros(full, dtype=np.int64)
        self.low = np.zeros(full, dtype=np.intc)
        for k in range(1, full):
            self.low[k] = ((k & -k).bit_length()) - 1


def choose_many(const double[::1] table, const i64[::1] order, const i64[:, ::1] v, const i64[:, ::1] q):
    """Principal-set and item-seller-set bitmasks for each row of (v, q)."""
    cdef Py_ssize_t n = v.shape[0], r
    cdef int m = v.shape[1]
    tmask = np.empty(n, dtype=np.int64)
    umask = np.empty(n, dtype=np.int64)
    cdef i64[::1] tm = tmask
    cdef i64[::1] um = umask
    cdef i64 u
    cdef _Work w = _Work(m)
    cdef i64* sums = &w.sums[0]
    cdef i64* cnts = &w.cnts[0]
    cdef const int* low = &w.low[0]
    with nogil:
        for r in range(n):
            tm[r] = _choose(table, order, v[r], q[r], m, sums, cnts, low, &u)
            um[r] = u
    return tmask, umask


def explicit_payoffs(const double[::1] table, const i64[::1] order, const i64[:, ::1] qprof,
                     const i64[:, ::1] vprof, const double[::1] vw):
    """Expected seller revenues (m x Q) and principal revenue (Q), in ticks."""
    cdef Py_ssize_t nq = qprof.shape[0], nv = vprof.shape[0], a, b
    cdef int m = qprof.shape[1], i
    seller = np.zeros((m, nq), dtype=np.float64)
    principal = np.zeros(nq, dtype=np.float64)
    cdef double[:, ::1] su = seller
    cdef double[::1] pr = principal
    cdef i64 t, u
    cdef double w
    cdef _Work work = _Work(m)
    cdef i64* sums = &work.sums[0]
    cdef i64* cnts = &work.cnts[0]
    cdef const int* low = &work.low[0]
    with nogil:
        for a in range(nq):
            for b in range(nv):
                w = vw[b]
                t = _choose(table, order, vprof[b], qprof[a], m, sums, cnts, low, &u)
                pr[a] += w * table[t]
                for i in range(m):
                    if (u >> i) & 1:
                        su[i, a] += w * qprof[a, i]
    return seller, principal
