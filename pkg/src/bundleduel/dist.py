"""Finite value distributions on a uniform grid.

Values are stored as integer multiples ("ticks") of the grid step so that
sums of values and prices compare exactly. Public functions take and return
money amounts as floats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal

import numpy as np

from .errors import OffGridValue, ProbSumMismatch, TrivialDistribution, UnsupportedFamily

PROB_TOL = 1e-12
SNAP_TOL = 1e-9


@dataclass(frozen=True)
class ValueGrid:
    """Uniform grid {0, step, 2*step, ..., max_value}."""

    step: float
    max_value: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"grid step must be positive, got {self.step}")
        if self.max_value < 0:
            raise ValueError(f"max_value must be non-negative, got {self.max_value}")
        n = self.max_value / self.step
        if abs(n - round(n)) > SNAP_TOL * max(1.0, n):
            raise OffGridValue(f"max_value {self.max_value} is not a multiple of step {self.step}")

    @property
    def n_ticks(self) -> int:
        return int(round(self.max_value / self.step))

    def ticks_real(self, x: float) -> float:
        """x measured in ticks, snapped to an integer when within rounding noise."""
        t = float(x) / self.step
        k = round(t)
        if abs(t - k) <= SNAP_TOL * max(1.0, abs(t)):
            return float(k)
        return t

    def to_ticks(self, x: float) -> int:
        t = self.ticks_real(x)
        if t != math.floor(t) or t < 0:
            raise OffGridValue(f"{x} is not a non-negative multiple of grid step {self.step}")
        return int(t)

    def value(self, ticks) -> float:
        """Money amount of an integer tick count, rounded through decimal arithmetic."""
        return float(Decimal(int(ticks)) * Decimal(repr(self.step)))

    def values(self, ticks) -> np.ndarray:
        return np.array([self.value(t) for t in np.asarray(ticks).ravel()], dtype=float)


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Probability mass function over grid ticks, ascending and duplicate free."""

    grid: ValueGrid
    ticks: np.ndarray
    probs: np.ndarray
    _survival: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ticks = np.asarray(self.ticks, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=float)
        ticks.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "ticks", ticks)
        object.__setattr__(self, "probs", probs)
        # survival[j] = Pr[v >= ticks[j]]
        surv = np.cumsum(probs[::-1])[::-1]
        surv.setflags(write=False)
        object.__setattr__(self, "_survival", surv)

    @property
    def atoms(self):
        return tuple((self.grid.value(t), float(p)) for t, p in zip(self.ticks, self.probs))

    @property
    def values(self) -> np.ndarray:
        return self.ticks * self.grid.step

    @property
    def max_tick(self) -> int:
        return int(self.ticks[-1])

    def pmf_dense(self, upper: int | None = None) -> np.ndarray:
        """Dense pmf indexed by tick 0..upper."""
        n = self.max_tick if upper is None else upper
        out = np.zeros(n + 1)
        np.add.at(out, np.minimum(self.ticks, n), self.probs)
        return out

    def survival_ticks(self, k: float) -> float:
        """Pr[v >= k] for k in (possibly fractional) ticks."""
        j = int(np.searchsorted(self.ticks, k, side="left"))
        if j >= len(self.ticks):
            return 0.0
        return float(self._survival[j])

    def survival_curve(self, upper: int) -> np.ndarray:
        """Pr[v >= k] for k = 0..upper."""
        idx = np.searchsorted(self.ticks, np.arange(upper + 1), side="left")
        padded = np.append(self._survival, 0.0)
        return padded[idx]

    def __repr__(self):
        return f"DiscreteDistribution(step={self.grid.step}, atoms={list(self.atoms)})"


def make_distribution(grid: ValueGrid, atoms) -> DiscreteDistribution:
    """Validate, sort, merge and normalize a list of (value, prob) atoms."""
    merged: dict[int, float] = {}
    total = 0.0
    for value, prob in atoms:
        prob = float(prob)
        if prob < 0 or math.isnan(prob):
            raise ProbSumMismatch(f"negative probability {prob} at value {value}")
        k = grid.to_ticks(value)
        if k > grid.n_ticks:
            raise OffGridValue(f"value {value} exceeds grid max_value {grid.max_value}")
        merged[k] = merged.get(k, 0.0) + prob
        total += prob
    if abs(total - 1.0) > PROB_TOL:
        raise ProbSumMismatch(f"probabilities sum to {total!r}, expected 1")
    ticks = np.array(sorted(k for k, p in merged.items() if p > 0), dtype=np.int64)
    probs = np.array([merged[k] for k in ticks], dtype=float)
    probs = probs / probs.sum()
    if len(ticks) == 0 or (len(ticks) == 1 and ticks[0] == 0):
        raise TrivialDistribution("all probability mass is at value 0")
    return DiscreteDistribution(grid, ticks, probs)


def point_mass(grid: ValueGrid, value: float) -> DiscreteDistribution:
    return make_distribution(grid, [(value, 1.0)])


def binary(grid: ValueGrid, high: float, prob_high: float) -> DiscreteDistribution:
    """Value `high` with probability `prob_high`, otherwise 0."""
    return make_distribution(grid, [(0.0, 1.0 - prob_high), (high, prob_high)])


def cdf_strict(d: DiscreteDistribution, x: float) -> float:
    """Pr[v < x]."""
    return 1.0 - d.survival_ticks(d.grid.ticks_real(x))


def revenue_at(d: DiscreteDistribution, x: float) -> float:
    """Posted-price revenue x * Pr[v >= x]."""
    return float(x) * d.survival_ticks(d.grid.ticks_real(x))


def revenue_curve(d: DiscreteDistribution, upper: int | None = None) -> np.ndarray:
    """Revenue at every grid tick 0..upper, in money units."""
    n = d.max_tick if upper is None else upper
    k = np.arange(n + 1)
    return k * d.grid.step * d.survival_curve(n)


def myerson_ticks(d: DiscreteDistribution) -> int:
    """Largest revenue-maximizing price, in ticks."""
    revs = d.ticks * d._survival
    best = revs.max()
    tol = 1e-12 * max(1.0, abs(best))
    return int(d.ticks[np.nonzero(revs >= best - tol)[0][-1]])


def myerson_price(d: DiscreteDistribution) -> float:
    return d.grid.value(myerson_ticks(d))


def _truncated_values(d: DiscreteDistribution, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"truncation point must be non-negative, got {t}")
    tt = d.grid.ticks_real(t)
    return np.minimum(d.ticks.astype(float), tt) * d.grid.step


def truncated_mean(d: DiscreteDistribution, t: float) -> float:
    """E[min(v, t)]."""
    return float(np.dot(d.probs, _truncated_values(d, t)))


def truncated_variance(d: DiscreteDistribution, t: float) -> float:
    """Var[min(v, t)]."""
    y = _truncated_values(d, t)
    mu = np.dot(d.probs, y)
    return float(np.dot(d.probs, (y - mu) ** 2))


def truncated_abs3(d: DiscreteDistribution, t: float) -> float:
    """E|min(v, t) - E[min(v, t)]|^3."""
    y = _truncated_values(d, t)
    mu = np.dot(d.probs, y)
    return float(np.dot(d.probs, np.abs(y - mu) ** 3))


def mean(d: DiscreteDistribution) -> float:
    return float(np.dot(d.probs, d.values))


def variance(d: DiscreteDistribution) -> float:
    return truncated_variance(d, d.grid.value(d.max_tick))


def truncate(d: DiscreteDistribution, t: float) -> DiscreteDistribution:
    """Distribution of min(v, t); t must be on the grid."""
    k = d.grid.to_ticks(t)
    keep = d.ticks < k
    above = float(d.probs[~keep].sum())
    ticks = d.ticks[keep]
    probs = d.probs[keep]
    if above > 0:
        ticks = np.append(ticks, k)
        probs = np.append(probs, above)
    if len(ticks) == 1 and ticks[0] == 0:
        raise TrivialDistribution("truncation at 0 leaves all mass at 0")
    return DiscreteDistribution(d.grid, ticks, probs)


@dataclass(frozen=True)
class SensitivityCertificate:
    lam: float
    c: float
    satisfied: bool
    worst_alpha: float
    alpha_step: float  # granularity of the alpha scan, equal to step / r


def sensitivity_lambda(d: DiscreteDistribution, c: float) -> SensitivityCertificate:
    """Smallest slope of the revenue drop below c * r, over grid-feasible alpha."""
    if not 0 < c < 1:
        raise ValueError(f"c must lie in (0, 1), got {c}")
    r = myerson_ticks(d)
    kmax = int(math.floor(c * r + SNAP_TOL))
    k = np.arange(kmax + 1)
    rev = k * np.array([d.survival_ticks(x) for x in k])
    rev_r = r * d.survival_ticks(r)
    ratio = (rev_r - rev) / (r - k)
    j = int(np.argmin(ratio))
    lam = float(ratio[j])
    return SensitivityCertificate(
        lam=lam, c=float(c), satisfied=lam > 0, worst_alpha=float(k[j] / r), alpha_step=1.0 / r
    )


def k_ratio(dists) -> float:
    """max_i (r_i - mu_i(r_i)) / min_i (r_i - mu_i(r_i))."""
    rems = [myerson_price(d) - truncated_mean(d, myerson_price(d)) for d in dists]
    return max(rems) / min(rems)


# ---------------------------------------------------------------------------
# Analytic families with piecewise-linear densities


@dataclass(frozen=True)
class PiecewiseLinearDensity:
    """Density that is linear on each piece (x0, x1, g(x0+), g(x1-))."""

    pieces: tuple

    def cdf(self, x: float) -> float:
        total = 0.0
        for x0, x1, g0, g1 in self.pieces:
            if x <= x0:
                break
            u = min(x, x1) - x0
            slope = (g1 - g0) / (x1 - x0)
            total += g0 * u + 0.5 * slope * u * u
        return min(1.0, total)

    def revenue(self, x: float) -> float:
        return x * (1.0 - self.cdf(x))

    @property
    def upper(self) -> float:
        return self.pieces[-1][1]


@dataclass(frozen=True)
class FamilyCertificate:
    family: str
    r: float
    cdf_at_r: float
    delta_smooth: float
    delta_concave: float
    c: float
    lam: float


def family_density(family: str, **params) -> PiecewiseLinearDensity:
    """Build one of the supported analytic families.

    uniform(a, b); triangular(a, mode, b); linear(b, s) with density
    (1 + s (2x/b - 1)) / b on [0, b] and s in [-1, 1].
    """
    if family == "uniform":
        a, b = float(params.get("a", 0.0)), float(params["b"])
        if not 0 <= a < b:
            raise ValueError("uniform requires 0 <= a < b")
        g = 1.0 / (b - a)
        pieces = ([(0.0, a, 0.0, 0.0)] if a > 0 else []) + [(a, b, g, g)]
    elif family == "triangular":
        a, c, b = float(params.get("a", 0.0)), float(params["mode"]), float(params["b"])
        if not (0 <= a <= c <= b and a < b):
            raise ValueError("triangular requires 0 <= a <= mode <= b, a < b")
        peak = 2.0 / (b - a)
        pieces = [(0.0, a, 0.0, 0.0)] if a > 0 else []
        if c > a:
            pieces.append((a, c, 0.0, peak))
        if b > c:
            pieces.append((c, b, peak, 0.0))
    elif family == "linear":
        b, s = float(params["b"]), float(params["s"])
        if not (b > 0 and -1 <= s <= 1):
            raise ValueError("linear requires b > 0 and -1 <= s <= 1")
        pieces = [(0.0, b, (1 - s) / b, (1 + s) / b)]
    else:
        raise UnsupportedFamily(f"no closed form for family {family!r}")
    return PiecewiseLinearDensity(tuple(pieces))


def _family_myerson(dens: PiecewiseLinearDensity) -> float:
    # h'(x) = 1 - G(x) - x g(x) is quadratic on each piece
    cands = [0.0]
    for x0, x1, g0, g1 in dens.pieces:
        cands += [x0, x1]
        k = (g1 - g0) / (x1 - x0)
        base = dens.cdf(x0)
        # G(x) = base + g0 u + k u^2 / 2,  g(x) = g0 + k u,  x = x0 + u
        # h'(u) = 1 - base - g0 u - k u^2/2 - (x0 + u)(g0 + k u)
        a2 = -1.5 * k
        a1 = -2 * g0 - k * x0
        a0 = 1 - base - x0 * g0
        roots = np.roots([a2, a1, a0]) if abs(a2) > 0 else ([-a0 / a1] if a1 != 0 else [])
        for u in np.atleast_1d(roots):
            if abs(np.imag(u)) < 1e-12 and 0 <= np.real(u) <= x1 - x0:
                cands.append(x0 + float(np.real(u)))
    revs = np.array([dens.revenue(x) for x in cands])
    best = revs.max()
    return max(x for x, h in zip(cands, revs) if h >= best - 1e-12 * max(1.0, best))


def certify_family(family: str, c: float | None = None, **params) -> FamilyCertificate:
    """Analytic smoothness and revenue-concavity constants of a named family.

    delta_smooth = r * inf g on (0, r); delta_concave = r * inf (-h'') on (0, r)
    where -h''(x) = 2 g(x) + x g'(x). lam = delta_concave / 2 * (1 - c), with
    c defaulting to 1 - G(r)^4 / 9.
    """
    dens = family_density(family, **params)
    r = _family_myerson(dens)
    inf_g = math.inf
    inf_curv = math.inf
    for x0, x1, g0, g1 in dens.pieces:
        lo, hi = max(x0, 0.0), min(x1, r)
        if hi <= lo:
            continue
        k = (g1 - g0) / (x1 - x0)
        for x in (lo, hi):
            g = g0 + k * (x - x0)
            inf_g = min(inf_g, g)
            inf_curv = min(inf_curv, 2 * g + x * k)
    delta_smooth = max(0.0, r * inf_g)
    delta_concave = max(0.0, r * inf_curv)
    g_r = dens.cdf(r)
    if c is None:
        c = 1 - g_r**4 / 9
    return FamilyCertificate(
        family=family,
        r=r,
        cdf_at_r=g_r,
        delta_smooth=delta_smooth,
        delta_concave=delta_concave,
        c=c,
        lam=delta_concave / 2 * (1 - c),
    )


def discretize_family(grid: ValueGrid, family: str, **params) -> DiscreteDistribution:
    """Round values down to the grid; Pr[v >= x] matches the family at grid points."""
    dens = family_density(family, **params)
    n = int(math.ceil(dens.upper / grid.step - SNAP_TOL))
    if n > grid.n_ticks:
        raise OffGridValue("family support exceeds the grid")
    cdf = np.array([dens.cdf(k * grid.step) for k in range(n + 1)] + [1.0])
    probs = np.diff(cdf)
    probs = np.clip(probs, 0.0, None)
    ticks = np.arange(n + 1)
    keep = probs > 0
    return DiscreteDistribution(grid, ticks[keep], probs[keep] / probs[keep].sum())
