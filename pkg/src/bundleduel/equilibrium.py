"""Item-seller pricing games: expected utilities and equilibrium search.

A game is fixed by a MarketInstance (value distributions plus price grids)
and the principal's Menu. Prices and values are integer ticks of the shared
value-grid step; utilities are reported in money units.

Two exact utility paths are provided:

* grand bundle and partition menus use leave-one-out convolutions: seller i
  in a block priced p earns Rev_i(q_i) * Pr[p - q_i >= sum_{j != i} min(v_j, q_j)];
* explicit menus on at most four items use payoff tensors from exhaustive
  buyer-choice enumeration over value and price profiles.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels
from .convolve import cdf_at, convolve_pmf, leave_one_out, mixture_pmf, sum_pmf
from .dist import ValueGrid, myerson_ticks, truncated_mean
from .errors import BudgetExceeded, UnsupportedMenuAtScale
from .market import Menu, grand_bundle, preference_order, price_table_ticks

DEFAULT_TOL = 1e-9
TENSOR_MAX_ITEMS = 4
SENTINEL_TICKS = 1 << 40
METHODS = ("PureBruteForce", "IteratedBR", "FictitiousPlay", "Verified")
TIE_BREAK_RULE = "lowest p(T); fewest counted items; empty set; larger set; lexicographic"


def _tie_tol(x: float) -> float:
    return 1e-12 * max(1.0, abs(x))


def highest_argmax(values: np.ndarray) -> int:
    best = values.max()
    return int(np.flatnonzero(values >= best - _tie_tol(best))[-1])


# ---------------------------------------------------------------------------
# Instances and profiles


@dataclass(frozen=True)
class PriceGrid:
    """Price step (default: value step) and per-seller caps (default: r_i)."""

    step: float | None = None
    caps: tuple | None = None


@dataclass(frozen=True, eq=False)
class MarketInstance:
    dists: tuple
    price_grid: PriceGrid = field(default_factory=PriceGrid)

    def __post_init__(self):
        dists = tuple(self.dists)
        if not dists:
            raise ValueError("an instance needs at least one item")
        grid = dists[0].grid
        if any(d.grid != grid for d in dists):
            raise ValueError("all distributions must share one value grid")
        object.__setattr__(self, "dists", dists)
        pg = self.price_grid
        step_ticks = 1 if pg.step is None else grid.to_ticks(pg.step)
        if step_ticks < 1:
            raise ValueError("price step must be positive")
        if pg.caps is not None and len(pg.caps) != len(dists):
            raise ValueError("one price cap per item is required")
        caps = []
        for i, d in enumerate(dists):
            cap = myerson_ticks(d) if pg.caps is None else grid.to_ticks(pg.caps[i])
            caps.append(cap - cap % step_ticks)
        object.__setattr__(self, "_step_ticks", step_ticks)
        object.__setattr__(self, "_caps", tuple(caps))

    @property
    def m(self) -> int:
        return len(self.dists)

    @property
    def grid(self) -> ValueGrid:
        return self.dists[0].grid

    @property
    def step(self) -> float:
        return self.grid.step

    @property
    def price_step_ticks(self) -> int:
        return self._step_ticks

    @property
    def caps_ticks(self) -> tuple:
        return self._caps

    def seller_grid(self, i: int) -> np.ndarray:
        return np.arange(0, self._caps[i] + 1, self._step_ticks, dtype=np.int64)

    def grid_description(self) -> dict:
        return {
            "value_step": self.step,
            "price_step": self.step * self._step_ticks,
            "caps": [self.grid.value(c) for c in self._caps],
        }


def make_instance(dists, price_step=None, caps=None) -> MarketInstance:
    return MarketInstance(tuple(dists), PriceGrid(price_step, None if caps is None else tuple(caps)))


def sub_instance(instance: MarketInstance, items) -> MarketInstance:
    items = list(items)
    caps = tuple(instance.grid.value(instance.caps_ticks[i]) for i in items)
    step = instance.step * instance.price_step_ticks
    return MarketInstance(tuple(instance.dists[i] for i in items), PriceGrid(step, caps))


@dataclass(frozen=True, eq=False)
class StrategyProfile:
    """One mixed strategy per seller: sorted tick support and probabilities."""

    step: float
    ticks: tuple
    probs: tuple

    def __post_init__(self):
        ticks, probs = [], []
        for t, p in zip(self.ticks, self.probs):
            t = np.asarray(t, dtype=np.int64)
            p = np.asarray(p, dtype=float)
            if len(t) == 0 or len(t) != len(p):
                raise ValueError("each strategy needs a non-empty support with matching probabilities")
            if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9 or (t < 0).any():
                raise ValueError("strategy probabilities must be non-negative and sum to 1")
            uniq, inv = np.unique(t, return_inverse=True)
            merged = np.zeros(len(uniq))
            np.add.at(merged, inv, p)
            keep = merged > 0
            ticks.append(uniq[keep])
            probs.append(merged[keep] / merged[keep].sum())
        object.__setattr__(self, "ticks", tuple(ticks))
        object.__setattr__(self, "probs", tuple(probs))

    @property
    def m(self) -> int:
        return len(self.ticks)

    def pairs(self) -> list:
        return [
            [(_money(t, self.step), float(p)) for t, p in zip(ts, ps)]
            for ts, ps in zip(self.ticks, self.probs)
        ]

    def sup_ticks(self, i: int) -> int:
        return int(self.ticks[i][-1])

    def is_pure(self) -> bool:
        return all(len(t) == 1 for t in self.ticks)

    def restrict(self, items) -> "StrategyProfile":
        items = list(items)
        return StrategyProfile(self.step, tuple(self.ticks[i] for i in items), tuple(self.probs[i] for i in items))


def _money(ticks, step) -> float:
    return ValueGrid(step, 0.0).value(ticks)


def pure_profile(instance: MarketInstance, prices) -> StrategyProfile:
    ticks = [np.array([instance.grid.to_ticks(p)]) for p in prices]
    return StrategyProfile(instance.step, tuple(ticks), tuple(np.ones(1) for _ in prices))


def pure_profile_ticks(step: float, ticks) -> StrategyProfile:
    return StrategyProfile(step, tuple(np.array([int(t)]) for t in ticks), tuple(np.ones(1) for _ in ticks))


def mixed_profile(instance: MarketInstance, strategies) -> StrategyProfile:
    """strategies: per seller, a list of (price, prob) pairs."""
    ticks, probs = [], []
    for s in strategies:
        ticks.append(np.array([instance.grid.to_ticks(p) for p, _ in s], dtype=np.int64))
        probs.append(np.array([w for _, w in s], dtype=float))
    return StrategyProfile(instance.step, tuple(ticks), tuple(probs))


def compose_profiles(step: float, parts) -> StrategyProfile:
    """Join block profiles; parts is a list of (items, StrategyProfile)."""
    m = sum(len(items) for items, _ in parts)
    ticks, probs = [None] * m, [None] * m
    for items, prof in parts:
        for k, i in enumerate(items):
            ticks[i] = prof.ticks[k]
            probs[i] = prof.probs[k]
    return StrategyProfile(step, tuple(ticks), tuple(probs))


# ---------------------------------------------------------------------------
# Enumeration path (any menu with a subset table)


def value_profiles(instance: MarketInstance):
    """All value profiles as a (V x m) tick array with their probabilities."""
    ticks = [d.ticks for d in instance.dists]
    probs = [d.probs for d in instance.dists]
    return _product(ticks, probs)


def _product(ticks, probs):
    grids = np.meshgrid(*ticks, indexing="ij")
    prof = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    wgrids = np.meshgrid(*probs, indexing="ij")
    w = np.ones(prof.shape[0])
    for g in wgrids:
        w = w * g.ravel()
    return np.ascontiguousarray(prof), w


def enumerate_utilities(instance: MarketInstance, menu: Menu, profile: StrategyProfile, budget=20_000_000):
    """Seller utilities E[q_i 1{i sells}] and principal revenue E[p(T)] by
    enumerating every value profile and price profile."""
    table = price_table_ticks(menu, instance.step)
    order = preference_order(menu.item_count)
    vprof, vw = value_profiles(instance)
    qprof, qw = _product(list(profile.ticks), list(profile.probs))
    if len(vprof) * len(qprof) > budget:
        raise BudgetExceeded(f"enumeration needs {len(vprof) * len(qprof)} rows")
    seller, principal = kernels.explicit_payoffs(table, order, qprof, vprof, vw)
    step = instance.step
    return seller @ qw * step, float(principal @ qw) * step


def factorized_explicit_utility(instance: MarketInstance, menu: Menu, profile: StrategyProfile, i: int) -> float:
    """E_{q_i}[Rev_i(q_i) * Pr[i sells | v_i above every price]].

    The sale indicator is constant for v_i >= q_i, so v_i is pinned to a
    sentinel far above the grid and the revenue curve supplies the rest.
    """
    table = price_table_ticks(menu, instance.step)
    order = preference_order(menu.item_count)
    m = instance.m
    vt = [instance.dists[j].ticks if j != i else np.array([SENTINEL_TICKS]) for j in range(m)]
    vp = [instance.dists[j].probs if j != i else np.ones(1) for j in range(m)]
    vprof, vw = _product(vt, vp)
    d = instance.dists[i]
    total = 0.0
    for qi, si in zip(profile.ticks[i], profile.probs[i]):
        qt = [profile.ticks[j] if j != i else np.array([qi]) for j in range(m)]
        qp = [profile.probs[j] if j != i else np.ones(1) for j in range(m)]
        qprof, qw = _product(qt, qp)
        rows_q = np.repeat(qprof, len(vprof), axis=0)
        rows_v = np.tile(vprof, (len(qprof), 1))
        _, u = kernels.choose_many(table, order, rows_v, rows_q)
        w = np.repeat(qw, len(vprof)) * np.tile(vw, len(qprof))
        sells = float(w @ ((u >> i) & 1))
        total += si * qi * instance.step * d.survival_ticks(qi) * sells
    return total


# ---------------------------------------------------------------------------
# Game models


class GameModel:
    """Exact expected utilities for a fixed instance and menu."""

    def __init__(self, instance: MarketInstance, menu: Menu):
        if menu.item_count != instance.m:
            raise ValueError("menu and instance disagree on the number of items")
        self.instance = instance
        self.menu = menu
        self.m = instance.m
        self.step = instance.step
        self.grids = [instance.seller_grid(i) for i in range(self.m)]

    def revenue_curve(self, i: int, own: np.ndarray) -> np.ndarray:
        d = self.instance.dists[i]
        return own * self.step * np.array([d.survival_ticks(k) for k in own])

    def curve(self, i: int, profile: StrategyProfile, own=None) -> np.ndarray:
        raise NotImplementedError

    def curves_all(self, profile: StrategyProfile, owns=None) -> list:
        owns = owns if owns is not None else self.grids
        return [self.curve(i, profile, owns[i]) for i in range(self.m)]

    def principal_revenue(self, profile: StrategyProfile) -> float:
        raise NotImplementedError

    def seller_utility(self, i: int, profile: StrategyProfile) -> float:
        return float(self.curve(i, profile, profile.ticks[i]) @ profile.probs[i])

    def pure_payoff_matrix(self, i: int, own: np.ndarray, others: list) -> np.ndarray:
        """Payoffs of seller i (rows: own prices) against each pure profile of
        the other sellers (columns, C-order over `others` excluding i)."""
        opp = [j for j in range(self.m) if j != i]
        cols = []
        base = [np.array([g[0]]) for g in self.grids]
        for combo in itertools.product(*[others[j] for j in opp]):
            ticks = list(base)
            for j, t in zip(opp, combo):
                ticks[j] = np.array([t])
            prof = StrategyProfile(self.step, tuple(ticks), tuple(np.ones(1) for _ in ticks))
            cols.append(self.curve(i, prof, own))
        if not cols:
            return self.curve(i, pure_profile_ticks(self.step, [g[0] for g in self.grids]), own)[:, None]
        return np.stack(cols, axis=1)

    def bound_curves(self, i: int, own: np.ndarray, others: list):
        """(lower, upper) payoff bounds over all pure profiles drawn from
        `others`, or None when no monotone bound is available."""
        return None


class BundleModel(GameModel):
    """Grand-bundle and partition menus: utilities by leave-one-out convolution."""

    def __init__(self, instance: MarketInstance, menu: Menu):
        super().__init__(instance, menu)
        if menu.kind == "grand":
            blocks = [(tuple(range(self.m)), menu.price)]
        elif menu.kind == "partition":
            blocks = [(tuple(sorted(b)), p) for b, p in menu.blocks]
        else:
            raise UnsupportedMenuAtScale("leave-one-out path needs a grand-bundle or partition menu")
        self.blocks = []
        self.block_of = [None] * self.m
        for k, (items, price) in enumerate(blocks):
            self.blocks.append((items, self.instance.grid.ticks_real(price), price))
            for i in items:
                self.block_of[i] = k

    def v_pmf(self, j: int, profile: StrategyProfile) -> np.ndarray:
        return mixture_pmf(self.instance.dists[j], profile.ticks[j], profile.probs[j])

    def loo(self, profile: StrategyProfile, block: int) -> list:
        items = self.blocks[block][0]
        return leave_one_out([self.v_pmf(j, profile) for j in items])

    def _curve_from_loo(self, i, loo_pmf, own):
        rev = self.revenue_curve(i, own)
        k = self.block_of[i]
        if k is None:
            return rev
        p_ticks = self.blocks[k][1]
        return rev * cdf_at(loo_pmf, p_ticks - own)

    def curve(self, i, profile, own=None):
        own = self.grids[i] if own is None else np.asarray(own, dtype=np.int64)
        k = self.block_of[i]
        if k is None:
            return self.revenue_curve(i, own)
        others = [self.v_pmf(j, profile) for j in self.blocks[k][0] if j != i]
        return self._curve_from_loo(i, sum_pmf(others), own)

    def curves_all(self, profile, owns=None):
        owns = owns if owns is not None else self.grids
        out = [None] * self.m
        for k, (items, _, _) in enumerate(self.blocks):
            for j, pmf in zip(items, self.loo(profile, k)):
                out[j] = self._curve_from_loo(j, pmf, owns[j])
        for i in range(self.m):
            if out[i] is None:
                out[i] = self.revenue_curve(i, owns[i])
        return out

    def block_sum_pmf(self, profile: StrategyProfile, block: int) -> np.ndarray:
        return sum_pmf([self.v_pmf(j, profile) for j in self.blocks[block][0]])

    def principal_revenue(self, profile):
        total = 0.0
        for k, (items, p_ticks, price) in enumerate(self.blocks):
            sale = 1.0 - float(cdf_at(self.block_sum_pmf(profile, k), p_ticks))
            total += price * sale
        return total

    def bound_curves(self, i, own, others):
        k = self.block_of[i]
        if k is None:
            rev = self.revenue_curve(i, own)
            return rev, rev
        items = [j for j in self.blocks[k][0] if j != i]
        d = self.instance.dists
        hi = sum_pmf([mixture_pmf(d[j], [others[j].max()], [1.0]) for j in items])
        lo = sum_pmf([mixture_pmf(d[j], [others[j].min()], [1.0]) for j in items])
        return self._curve_from_loo(i, hi, own), self._curve_from_loo(i, lo, own)

    def br_sweep(self, current: list, owns: list):
        """One Gauss-Seidel pass of pure best responses; returns (new, changed)."""
        cur = list(current)
        changed = False
        d = self.instance.dists
        for k, (items, _, _) in enumerate(self.blocks):
            pm = [mixture_pmf(d[j], [cur[j]], [1.0]) for j in items]
            suffix = [np.ones(1)] * (len(items) + 1)
            for a in range(len(items) - 1, 0, -1):
                suffix[a] = convolve_pmf(suffix[a + 1], pm[a])
            prefix = np.ones(1)
            for a, j in enumerate(items):
                c = self._curve_from_loo(j, convolve_pmf(prefix, suffix[a + 1]), owns[j])
                b = highest_argmax(c)
                now = int(np.searchsorted(owns[j], cur[j]))
                now_val = c[now] if now < len(owns[j]) and owns[j][now] == cur[j] else -math.inf
                if c[b] > now_val + _tie_tol(c[b]):
                    cur[j] = int(owns[j][b])
                    changed = True
                prefix = convolve_pmf(prefix, mixture_pmf(d[j], [cur[j]], [1.0]))
        for i in range(self.m):
            if self.block_of[i] is None:
                c = self.revenue_curve(i, owns[i])
                b = highest_argmax(c)
                if cur[i] != owns[i][b]:
                    cur[i] = int(owns[i][b])
                    changed = True
        return cur, changed


class TensorModel(GameModel):
    """Explicit menus on few items: full payoff tensors over the price grids."""

    def __init__(self, instance: MarketInstance, menu: Menu, budget=50_000_000):
        super().__init__(instance, menu)
        if self.m > TENSOR_MAX_ITEMS:
            raise UnsupportedMenuAtScale(f"payoff tensors need m <= {TENSOR_MAX_ITEMS}")
        self.table = price_table_ticks(menu, self.step)
        self.order = preference_order(self.m)
        shape = tuple(len(g) for g in self.grids)
        qprof, _ = _product(self.grids, [np.ones(len(g)) for g in self.grids])
        vprof, vw = value_profiles(instance)
        if len(qprof) * len(vprof) > budget:
            raise BudgetExceeded(f"payoff tensor needs {len(qprof) * len(vprof)} evaluations")
        seller, principal = kernels.explicit_payoffs(self.table, self.order, qprof, vprof, vw)
        self.shape = shape
        self.U = [seller[i].reshape(shape) * self.step for i in range(self.m)]
        self.R = principal.reshape(shape) * self.step

    def _dense(self, profile):
        vecs = []
        for g, t, p in zip(self.grids, profile.ticks, profile.probs):
            idx = np.searchsorted(g, t)
            if (idx >= len(g)).any() or (g[np.minimum(idx, len(g) - 1)] != t).any():
                return None
            v = np.zeros(len(g))
            v[idx] = p
            vecs.append(v)
        return vecs

    def _contract(self, tensor, vecs, keep=None):
        t = tensor
        for j in range(self.m - 1, -1, -1):
            if j != keep:
                t = np.tensordot(t, vecs[j], axes=([j], [0]))
        return t

    def curve(self, i, profile, own=None):
        vecs = self._dense(profile)
        if vecs is not None and own is None:
            return self._contract(self.U[i], vecs, keep=i)
        own = self.grids[i] if own is None else np.asarray(own, dtype=np.int64)
        if vecs is not None:
            idx = np.searchsorted(self.grids[i], own)
            if (idx < len(self.grids[i])).all() and (self.grids[i][np.minimum(idx, len(self.grids[i]) - 1)] == own).all():
                return self._contract(self.U[i], vecs, keep=i)[idx]
        return self._enumerated_curve(i, profile, own)

    def _enumerated_curve(self, i, profile, own):
        out = np.empty(len(own))
        for k, q in enumerate(own):
            ticks = list(profile.ticks)
            probs = list(profile.probs)
            ticks[i], probs[i] = np.array([q]), np.ones(1)
            seller, _ = enumerate_utilities(self.instance, self.menu, StrategyProfile(self.step, tuple(ticks), tuple(probs)))
            out[k] = seller[i]
        return out

    def principal_revenue(self, profile):
        vecs = self._dense(profile)
        if vecs is None:
            return enumerate_utilities(self.instance, self.menu, profile)[1]
        return float(self._contract(self.R, vecs))

    def pure_payoff_matrix(self, i, own, others):
        idx = [np.searchsorted(self.grids[j], own if j == i else others[j]) for j in range(self.m)]
        sub = self.U[i][np.ix_(*idx)]
        sub = np.moveaxis(sub, i, 0)
        return sub.reshape(len(own), -1)


@lru_cache(maxsize=64)
def game_model(instance: MarketInstance, menu: Menu) -> GameModel:
    if menu.kind in ("grand", "partition"):
        return BundleModel(instance, menu)
    if instance.m <= TENSOR_MAX_ITEMS:
        return TensorModel(instance, menu)
    raise UnsupportedMenuAtScale(
        "explicit menus beyond four items only support seeded Monte Carlo estimates"
    )


# ---------------------------------------------------------------------------
# Public utility operations


def loo_convolutions(instance: MarketInstance, profile: StrategyProfile, items=None) -> list:
    """Dense tick pmfs of sum_{j != i} min(v_j, q_j) for each i in `items`."""
    items = list(range(instance.m)) if items is None else list(items)
    pmfs = [mixture_pmf(instance.dists[j], profile.ticks[j], profile.probs[j]) for j in items]
    return leave_one_out(pmfs)


def seller_utility(instance, menu, profile, i) -> float:
    return game_model(instance, menu).seller_utility(i, profile)


def principal_revenue(instance, menu, profile) -> float:
    return game_model(instance, menu).principal_revenue(profile)


def monte_carlo_utilities(instance, menu, profile, samples=1_000_000, seed=0):
    """Seeded sampling estimate of seller utilities and principal revenue.

    Intended for explicit menus on 5 to 12 items where enumeration is too
    large. Returns (seller utilities, principal revenue, standard errors).
    """
    rng = np.random.default_rng(seed)
    table = price_table_ticks(menu, instance.step)
    order = preference_order(menu.item_count)
    m = instance.m
    v = np.stack([rng.choice(d.ticks, size=samples, p=d.probs) for d in instance.dists], axis=1)
    q = np.stack([rng.choice(t, size=samples, p=p) for t, p in zip(profile.ticks, profile.probs)], axis=1)
    t, u = kernels.choose_many(table, order, np.ascontiguousarray(v), np.ascontiguousarray(q))
    gains = np.stack([((u >> i) & 1) * q[:, i] for i in range(m)], axis=1) * instance.step
    rev = table[t] * instance.step
    se = np.append(gains.std(axis=0), rev.std()) / math.sqrt(samples)
    return gains.mean(axis=0), float(rev.mean()), se


def best_response(instance, menu, profile, i):
    """All grid maximizers of seller i's utility (ascending) and the value."""
    model = game_model(instance, menu)
    c = model.curve(i, profile)
    best = float(c.max())
    idx = np.flatnonzero(c >= best - _tie_tol(best))
    return tuple(instance.grid.value(model.grids[i][k]) for k in idx), best


# ---------------------------------------------------------------------------
# Certificates


@dataclass(frozen=True)
class EquilibriumCertificate:
    menu: Menu
    profile: StrategyProfile
    per_seller_regret: tuple
    epsilon: float
    principal_revenue: float
    method: str
    seed: int | None
    grid: dict
    truncated_welfare: float
    notes: tuple = ()

    @property
    def within_welfare_bound(self) -> bool:
        return self.principal_revenue <= self.truncated_welfare + 1e-9

    def is_equilibrium(self, tol=DEFAULT_TOL) -> bool:
        return self.epsilon <= tol

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "menu": self.menu.describe(),
            "profile": [
                {"prices": [p for p, _ in s], "probs": [w for _, w in s]} for s in self.profile.pairs()
            ],
            "per_seller_regret": list(self.per_seller_regret),
            "epsilon": self.epsilon,
            "principal_revenue": self.principal_revenue,
            "truncated_welfare": self.truncated_welfare,
            "method": self.method,
            "seed": self.seed,
            "grid": self.grid,
            "tie_break": TIE_BREAK_RULE,
            "notes": list(self.notes),
        }


def truncated_welfare_of(instance: MarketInstance) -> float:
    return sum(truncated_mean(d, d.grid.value(myerson_ticks(d))) for d in instance.dists)


def owns_on_grid(grid, own, pos) -> bool:
    return bool((pos < len(grid)).all() and (grid[np.minimum(pos, len(grid) - 1)] == own).all())


def _certificate(instance, menu, profile, model, method, seed, tol, notes=(), curves=None):
    curves = model.curves_all(profile) if curves is None else curves
    regrets = []
    for i in range(model.m):
        grid = instance.seller_grid(i)
        own = profile.ticks[i]
        pos = np.searchsorted(grid, own)
        if owns_on_grid(grid, own, pos):
            current = float(curves[i][pos] @ profile.probs[i])
        else:
            current = float(model.curve(i, profile, own) @ profile.probs[i])
        regrets.append(max(0.0, float(curves[i].max()) - current))
    eps = max(regrets)
    if method == "Verified" and eps > tol:
        notes = tuple(notes) + (f"regret {eps:.3g} exceeds tolerance {tol:g}",)
    return EquilibriumCertificate(
        menu=menu,
        profile=profile,
        per_seller_regret=tuple(regrets),
        epsilon=eps,
        principal_revenue=model.principal_revenue(profile),
        method=method,
        seed=seed,
        grid=instance.grid_description(),
        truncated_welfare=truncated_welfare_of(instance),
        notes=tuple(notes),
    )


def verify_equilibrium(instance, menu, profile, tol=DEFAULT_TOL) -> EquilibriumCertificate:
    """Regret of every seller against all pure deviations on its price grid."""
    return _certificate(instance, menu, profile, game_model(instance, menu), "Verified", None, tol)


# ---------------------------------------------------------------------------
# Dominance


@dataclass
class DominanceResult:
    grids: list
    rounds: list
    exact: bool
    step: float

    def prices(self, i: int) -> list:
        return [_money(t, self.step) for t in self.grids[i]]

    @property
    def profile_count(self) -> int:
        return int(np.prod([len(g) for g in self.grids], dtype=float))

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "surviving_prices": [self.prices(i) for i in range(len(self.grids))],
            "exact": self.exact,
            "rounds": self.rounds,
        }


def _dominated_rows(P: np.ndarray):
    """Indices of rows strictly dominated by another row, with a dominator each."""
    out = {}
    for b in range(P.shape[0]):
        dom = np.flatnonzero((P > P[b]).all(axis=1))
        if len(dom):
            out[b] = int(dom[-1])
    return out


def iterated_dominance(instance, menu, budget=50_000_000, max_rounds=10_000) -> DominanceResult:
    """Clip to [0, r_i], then remove strictly dominated pure prices to a fixpoint.

    A price is removed when some surviving price earns strictly more against
    every surviving pure profile of the other sellers. The test is exact when
    the payoff matrix fits in `budget` comparisons; otherwise, for bundle
    menus, a sound sufficient test compares the best worst-case payoff
    (others at their highest surviving prices) with each price's best case
    (others at their lowest), using that min(v_j, q_j) increases with q_j.
    Both tests only remove strictly dominated prices, so the survivors always
    contain every equilibrium support; `exact` records whether every round
    used the full comparison, i.e. whether the fixpoint is also complete.
    """
    model = game_model(instance, menu)
    step = instance.step
    grids = []
    rounds = []
    for i, g in enumerate(model.grids):
        r = myerson_ticks(instance.dists[i])
        keep = g[g <= r]
        if len(keep) < len(g):
            rounds.append({"round": 0, "seller": i, "test": "clip", "removed": [_money(t, step) for t in g[g > r]]})
        grids.append(keep)
    exact = True
    for rnd in range(1, max_rounds + 1):
        changed = False
        for i in range(model.m):
            own = grids[i]
            if len(own) <= 1:
                continue
            cols = np.prod([len(grids[j]) for j in range(model.m) if j != i], dtype=float)
            removed = {}
            test = None
            if len(own) ** 2 * cols <= budget:
                P = model.pure_payoff_matrix(i, own, grids)
                removed = _dominated_rows(P)
                test = "exact"
            else:
                bounds = model.bound_curves(i, own, grids)
                if bounds is None:
                    exact = False
                    continue
                lower, upper = bounds
                a = highest_argmax(lower)
                removed = {b: a for b in np.flatnonzero(upper < lower[a])}
                test = "bound"
                exact = False
            if removed:
                keep = np.array([k for k in range(len(own)) if k not in removed])
                rounds.append(
                    {
                        "round": rnd,
                        "seller": i,
                        "test": test,
                        "removed": [_money(own[b], step) for b in sorted(removed)],
                        "dominated_by": sorted({_money(own[a], step) for a in removed.values()}),
                    }
                )
                grids[i] = own[keep]
                changed = True
        if not changed:
            break
    return DominanceResult(grids=grids, rounds=rounds, exact=exact, step=step)


# ---------------------------------------------------------------------------
# Equilibrium search


def find_pure_equilibria(instance, menu, grids=None, tol=DEFAULT_TOL, budget=2_000_000) -> list:
    """Every pure profile from `grids` (default: dominance-reduced) whose
    regret against the full price grids is at most tol."""
    model = game_model(instance, menu)
    if grids is None:
        grids = iterated_dominance(instance, menu).grids
    total = np.prod([len(g) for g in grids], dtype=float)
    if total > budget:
        raise BudgetExceeded(f"{int(total)} pure profiles exceed the budget of {budget}")
    found = []
    if isinstance(model, TensorModel):
        idx = [np.searchsorted(model.grids[j], grids[j]) for j in range(model.m)]
        ok = np.ones(tuple(len(g) for g in grids), dtype=bool)
        for i in range(model.m):
            best = model.U[i].max(axis=i, keepdims=True)
            regret = (best - model.U[i])[np.ix_(*idx)]
            ok &= regret <= tol
        candidates = [tuple(int(grids[j][k]) for j, k in enumerate(c)) for c in zip(*np.nonzero(ok))]
    else:
        candidates = list(itertools.product(*[[int(t) for t in g] for g in grids]))
    for combo in candidates:
        prof = pure_profile_ticks(model.step, combo)
        cert = _certificate(instance, menu, prof, model, "PureBruteForce", None, tol)
        if cert.epsilon <= tol:
            found.append(cert)
    return found


def _profile_from_counts(step, grids, counts):
    ticks, probs = [], []
    for g, c in zip(grids, counts):
        nz = np.flatnonzero(c)
        ticks.append(g[nz])
        probs.append(c[nz] / c[nz].sum())
    return StrategyProfile(step, tuple(ticks), tuple(probs))


def fictitious_play(instance, menu, seed=0, max_iters=2000, tol=DEFAULT_TOL, grids=None, check_every=25):
    """Simultaneous fictitious play from a seeded random pure start.

    At each check the empirical profile, the last best-response profile and
    the empirical profile with rarely played prices trimmed are verified; the
    run stops once one of them has regret <= tol. The certificate holds the
    candidate with the smallest regret found.
    """
    model = game_model(instance, menu)
    grids = model.grids if grids is None else [np.asarray(g, dtype=np.int64) for g in grids]
    rng = np.random.default_rng(seed)
    counts = [np.zeros(len(g)) for g in grids]
    last = [int(rng.integers(len(g))) for g in grids]
    for i, k in enumerate(last):
        counts[i][k] += 1
    best_cert = None
    for t in range(1, max_iters + 1):
        prof = _profile_from_counts(model.step, grids, counts)
        curves = model.curves_all(prof, grids)
        last = [highest_argmax(c) for c in curves]
        for i, k in enumerate(last):
            counts[i][k] += 1
        if t % check_every and t != max_iters:
            continue
        cands = {
            "empirical": _profile_from_counts(model.step, grids, counts),
            "last_iterate": pure_profile_ticks(model.step, [g[k] for g, k in zip(grids, last)]),
        }
        trimmed = [np.where(c >= 0.05 * c.sum(), c, 0.0) for c in counts]
        if all(c.sum() > 0 for c in trimmed):
            cands["trimmed"] = _profile_from_counts(model.step, grids, trimmed)
        for name, cand in cands.items():
            cert = _certificate(instance, menu, cand, model, "FictitiousPlay", seed, tol,
                                notes=(f"candidate={name}", f"iterations={t}"))
            if best_cert is None or cert.epsilon < best_cert.epsilon:
                best_cert = cert
        if best_cert.epsilon <= tol:
            break
    return best_cert


def best_response_dynamics(instance, menu, seed=0, max_rounds=200, tol=DEFAULT_TOL, grids=None, start=None):
    """Sequential pure best responses from a seeded start until no seller moves.

    A seller only moves on a strict improvement, to the highest maximizer.
    """
    model = game_model(instance, menu)
    grids = model.grids if grids is None else [np.asarray(g, dtype=np.int64) for g in grids]
    rng = np.random.default_rng(seed)
    cur = list(start) if start is not None else [int(g[rng.integers(len(g))]) for g in grids]
    rounds = 0
    converged = False
    for rounds in range(1, max_rounds + 1):
        if isinstance(model, BundleModel):
            cur, changed = model.br_sweep(cur, grids)
        else:
            changed = False
            for i in range(model.m):
                c = model.curve(i, pure_profile_ticks(model.step, cur), grids[i])
                b = highest_argmax(c)
                k = np.flatnonzero(grids[i] == cur[i])
                now = c[k[0]] if len(k) else -math.inf
                if c[b] > now + _tie_tol(c[b]):
                    cur[i] = int(grids[i][b])
                    changed = True
        if not changed:
            converged = True
            break
    prof = pure_profile_ticks(model.step, cur)
    notes = (f"rounds={rounds}", "converged" if converged else "round limit reached")
    return _certificate(instance, menu, prof, model, "IteratedBR", seed, tol, notes=notes)


def support_enumeration(instance, menu, grids=None, max_support=3, tol=DEFAULT_TOL, budget=200_000) -> list:
    """Mixed equilibria of a two-seller game with equal-size supports 2..max_support.

    Solves the indifference conditions on each support pair and keeps the
    solutions whose regret on the full grids is at most tol.
    """
    model = game_model(instance, menu)
    if model.m != 2:
        raise ValueError("support enumeration is implemented for two sellers")
    if grids is None:
        grids = iterated_dominance(instance, menu).grids
    A = model.pure_payoff_matrix(0, grids[0], grids)
    B = model.pure_payoff_matrix(1, grids[1], grids).T
    n1, n2 = A.shape
    found = []
    seen = set()
    for k in range(2, max_support + 1):
        if math.comb(n1, k) * math.comb(n2, k) > budget:
            break
        for I in itertools.combinations(range(n1), k):
            for J in itertools.combinations(range(n2), k):
                y = _indifference(A[np.ix_(I, J)])
                if y is None:
                    continue
                x = _indifference(B[np.ix_(I, J)].T)
                if x is None:
                    continue
                key = (I, J)
                if key in seen:
                    continue
                prof = StrategyProfile(
                    model.step,
                    (grids[0][list(I)], grids[1][list(J)]),
                    (x, y),
                )
                cert = _certificate(instance, menu, prof, model, "Verified", None, tol,
                                    notes=("support enumeration",))
                if cert.epsilon <= tol:
                    seen.add(key)
                    found.append(cert)
    return found


def _indifference(M):
    """Mixture y > 0 over columns making every row of M earn the same."""
    k = M.shape[0]
    lhs = np.zeros((k + 1, k + 1))
    lhs[:k, :k] = M
    lhs[:k, k] = -1.0
    lhs[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        return None
    y = sol[:k]
    if (y <= 1e-12).any():
        return None
    return y / y.sum()


# ---------------------------------------------------------------------------
# Partition menus


@dataclass(frozen=True)
class SubGame:
    items: tuple
    instance: MarketInstance
    menu: Menu


def partition_decompose(instance: MarketInstance, menu: Menu) -> list:
    """One independent grand-bundle game per block; uncovered items become
    one-seller games whose bundle price exceeds every value (never sold)."""
    if menu.kind != "partition":
        raise ValueError("partition_decompose needs a partition menu")
    subs = []
    covered = set()
    for block, price in menu.blocks:
        items = tuple(sorted(block))
        covered |= set(items)
        subs.append(SubGame(items, sub_instance(instance, items), grand_bundle(len(items), price)))
    for i in range(instance.m):
        if i not in covered:
            d = instance.dists[i]
            above = d.grid.value(d.max_tick + 1)
            subs.append(SubGame((i,), sub_instance(instance, [i]), grand_bundle(1, above)))
    return subs


# ---------------------------------------------------------------------------
# Orchestration


@dataclass
class SolveReport:
    certificates: list
    attempts: list
    dominance: DominanceResult | None
    pure_complete: bool
    notes: list
    blocks: list = field(default_factory=list)

    @property
    def min_revenue(self):
        revs = [c.principal_revenue for c in self.certificates]
        return min(revs) if revs else None

    @property
    def max_revenue(self):
        revs = [c.principal_revenue for c in self.certificates]
        return max(revs) if revs else None

    def summary(self) -> dict:
        return {
            "schema": 1,
            "n_equilibria": len(self.certificates),
            "min_revenue_found": self.min_revenue,
            "max_revenue_found": self.max_revenue,
            "pure_enumeration_complete": self.pure_complete,
            "dominance_exact": None if self.dominance is None else self.dominance.exact,
            "welfare_bound_ok": all(c.within_welfare_bound for c in self.certificates),
            "coverage": "minimum over equilibria found, not over all equilibria",
            "notes": list(self.notes),
        }


def _dedupe(certs):
    out, seen = [], set()
    for c in certs:
        key = tuple((tuple(t), tuple(np.round(p, 12))) for t, p in zip(c.profile.ticks, c.profile.probs))
        if key not in seen:
            seen.add(key)
            out.append(c)
    return out


def solve(instance, menu, seeds=(0, 1, 2, 3, 4), tol=DEFAULT_TOL, max_iters=2000,
          budget=2_000_000, dominance_budget=50_000_000, support_enum=True, br_dynamics=True) -> SolveReport:
    """Dominance, pure brute force, fictitious play and best-response dynamics.

    Partition menus are solved block by block and composed; the composed
    profiles are re-verified on the whole game.
    """
    if menu.kind == "partition":
        return _solve_partition(instance, menu, seeds, tol, max_iters, budget, dominance_budget,
                                support_enum, br_dynamics)
    notes = []
    dom = iterated_dominance(instance, menu, budget=dominance_budget)
    certs = []
    pure_complete = True
    try:
        certs += find_pure_equilibria(instance, menu, grids=dom.grids, tol=tol, budget=budget)
    except BudgetExceeded as exc:
        pure_complete = False
        notes.append(f"pure enumeration skipped: {exc}")
    if not dom.exact:
        pure_complete = False
        notes.append("dominance used bound tests; the reduced grids may keep undominated-looking prices")
    attempts = []
    for s in seeds:
        attempts.append(fictitious_play(instance, menu, seed=s, max_iters=max_iters, tol=tol, grids=dom.grids))
        if br_dynamics:
            attempts.append(best_response_dynamics(instance, menu, seed=s, tol=tol, grids=dom.grids))
    if support_enum and instance.m == 2:
        certs += support_enumeration(instance, menu, grids=dom.grids, tol=tol)
    certs += [a for a in attempts if a.epsilon <= tol]
    return SolveReport(_dedupe(certs), attempts, dom, pure_complete, notes)


def _solve_partition(instance, menu, seeds, tol, max_iters, budget, dominance_budget, support_enum, br_dynamics):
    subs = partition_decompose(instance, menu)
    reports = [
        solve(s.instance, s.menu, seeds, tol, max_iters, budget, dominance_budget, support_enum, br_dynamics)
        for s in subs
    ]
    notes = []
    certs = []
    if all(r.certificates for r in reports):
        picks = {
            "min": [min(r.certificates, key=lambda c: c.principal_revenue) for r in reports],
            "max": [max(r.certificates, key=lambda c: c.principal_revenue) for r in reports],
        }
        for name, chosen in picks.items():
            prof = compose_profiles(instance.step, [(s.items, c.profile) for s, c in zip(subs, chosen)])
            cert = verify_equilibrium(instance, menu, prof, tol)
            cert = EquilibriumCertificate(**{**cert.__dict__, "notes": cert.notes + (f"composed from block certificates ({name} revenue)",)})
            certs.append(cert)
            block_total = sum(c.principal_revenue for c in chosen)
            if abs(block_total - cert.principal_revenue) > 1e-9 * max(1.0, block_total):
                notes.append(f"composed revenue {cert.principal_revenue} differs from block sum {block_total}")
    else:
        notes.append("some block has no certified equilibrium; nothing composed")
    return SolveReport(
        certificates=_dedupe([c for c in certs if c.epsilon <= tol]),
        attempts=certs,
        dominance=None,
        pure_complete=all(r.pure_complete for r in reports),
        notes=notes,
        blocks=list(zip(subs, reports)),
    )
