"""NumPy fallback for the buyer-choice kernels.

All amounts are integer ticks except the price table, which may hold
fractional ticks and +inf for subsets without a covering entry. `order` lists
subset bitmasks from most to least preferred under the final tie-break, so a
later set replaces the incumbent only when strictly better on
(diff, lower price, fewer counted items).
"""
import numpy as np

CHUNK_ROWS = 1 << 18


def choose_many(table, order, v, q):
    """Principal-set and item-seller-set bitmasks for each row of (v, q)."""
    v = np.asarray(v, dtype=np.int64)
    q = np.asarray(q, dtype=np.int64)
    n, m = v.shape
    mins = np.minimum(v, q)
    counted = (v >= q) & (q > 0)
    best = np.full(n, -1, dtype=np.int64)
    bd = np.zeros(n)
    bp = np.zeros(n)
    bc = np.zeros(n, dtype=np.int64)
    for mask in order:
        p = table[mask]
        if np.isinf(p):
            continue
        bits = np.array([(mask >> i) & 1 for i in range(m)], dtype=bool)
        d = mins[:, bits].sum(axis=1) - p
        c = counted[:, bits].sum(axis=1)
        better = (best < 0) | (d > bd) | ((d == bd) & ((p < bp) | ((p == bp) & (c < bc))))
        best[better] = mask
        bd[better] = d[better]
        bp[better] = p
        bc[better] = c[better]
    umask = np.zeros(n, dtype=np.int64)
    for i in range(m):
        in_t = (best >> i) & 1 == 1
        sells = (~in_t & (v[:, i] >= q[:, i])) | (q[:, i] == 0)
        umask |= sells.astype(np.int64) << i
    return best, umask


def explicit_payoffs(table, order, qprof, vprof, vw):
    """Expected seller revenues (m x Q) and principal revenue (Q), in ticks."""
    qprof = np.asarray(qprof, dtype=np.int64)
    vprof = np.asarray(vprof, dtype=np.int64)
    vw = np.asarray(vw, dtype=float)
    nq, m = qprof.shape
    nv = vprof.shape[0]
    seller = np.zeros((m, nq))
    principal = np.zeros(nq)
    per = max(1, CHUNK_ROWS // max(nv, 1))
    for start in range(0, nq, per):
        qs = qprof[start:start + per]
        k = qs.shape[0]
        qq = np.repeat(qs, nv, axis=0)
        vv = np.tile(vprof, (k, 1))
        t, u = choose_many(table, order, vv, qq)
        w = np.tile(vw, k)
        principal[start:start + k] = (w * table[t]).reshape(k, nv).sum(axis=1)
        for i in range(m):
            gain = w * ((u >> i) & 1) * qq[:, i]
            seller[i, start:start + k] = gain.reshape(k, nv).sum(axis=1)
    return seller, principal
