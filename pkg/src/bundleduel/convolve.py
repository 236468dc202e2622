"""Exact pmf arithmetic over integer ticks."""
from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

from .dist import DiscreteDistribution
from .errors import GridOverflow

MAX_SUM_TICKS = 50_000_000
DIRECT_WORK = 4_000_000
SPARSE_ATOMS = 32


def convolve_pmf(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """pmf of the sum of two independent tick-valued variables."""
    n = len(a) + len(b) - 1
    if n > MAX_SUM_TICKS:
        raise GridOverflow(f"sum support of {n} ticks exceeds {MAX_SUM_TICKS}")
    if len(a) < len(b):
        a, b = b, a
    nz = np.flatnonzero(b)
    if len(nz) <= SPARSE_ATOMS:
        out = np.zeros(n)
        for k in nz:
            out[k:k + len(a)] += b[k] * a
        return out
    if len(a) * len(b) <= DIRECT_WORK:
        return np.convolve(a, b)
    out = fftconvolve(a, b)
    np.clip(out, 0.0, None, out=out)
    return out


def sum_pmf(pmfs) -> np.ndarray:
    out = np.ones(1)
    for p in pmfs:
        out = convolve_pmf(out, p)
    return out


def truncated_pmf(d: DiscreteDistribution, q: int) -> np.ndarray:
    """pmf of min(v, q) over ticks 0..q."""
    out = d.pmf_dense(q)
    out[q] = d.survival_ticks(q)
    return out


def mixture_pmf(d: DiscreteDistribution, ticks, probs) -> np.ndarray:
    """pmf of min(v, q) with q drawn from the mixed strategy (ticks, probs).

    Pr[min(v, q) = k] = Pr[v = k] Pr[q > k] + Pr[q = k] Pr[v >= k].
    """
    ticks = np.asarray(ticks, dtype=np.int64)
    probs = np.asarray(probs, dtype=float)
    n = int(ticks.max())
    q_eq = np.zeros(n + 1)
    np.add.at(q_eq, ticks, probs)
    q_gt = np.clip(1.0 - np.cumsum(q_eq), 0.0, None)
    return d.pmf_dense(n) * q_gt + q_eq * d.survival_curve(n)


def leave_one_out(pmfs) -> list:
    """For each k, the pmf of the sum of all pmfs except pmfs[k].

    Uses prefix and suffix products so the work is linear in the count.
    """
    m = len(pmfs)
    prefix = [np.ones(1)]
    for p in pmfs[:-1]:
        prefix.append(convolve_pmf(prefix[-1], p))
    suffix = [np.ones(1)] * (m + 1)
    for k in range(m - 1, 0, -1):
        suffix[k] = convolve_pmf(suffix[k + 1], pmfs[k])
    return [convolve_pmf(prefix[k], suffix[k + 1]) for k in range(m)]


def cdf_at(pmf: np.ndarray, x) -> np.ndarray:
    """Pr[S <= x] for real x (ticks), vectorized; 0 for x < 0."""
    cdf = np.cumsum(pmf)
    x = np.floor(np.asarray(x, dtype=float)).astype(np.int64)
    out = np.where(x < 0, 0.0, cdf[np.clip(x, 0, len(cdf) - 1)])
    return np.minimum(out, 1.0)
