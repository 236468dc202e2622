"""Principal menus and the buyer's purchase decision.

The buyer picks the set T bought from the principal that maximizes
diff(T) = sum_{i in T} min(v_i, q_i) - p(T); every other item with v_i >= q_i
is bought from its item seller. Ties are broken in order by:

1. lowest principal price p(T);
2. fewest items i in T with v_i >= q_i > 0 (more purchases from item sellers);
3. T = {} when the empty set is still tied;
4. larger |T|, then the lexicographically smallest sorted item tuple.

`buyer_choice` is exact: money amounts are converted to rationals through
their shortest decimal representation. The solver uses tick-based kernels
that share this order (see `preference_order`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations

import numpy as np

from .dist import SNAP_TOL, ValueGrid
from .errors import NonThresholdBehavior, UnsupportedMenuAtScale

EXPLICIT_MAX_ITEMS = 12


def _items(subset) -> frozenset:
    return frozenset(int(i) for i in subset)


@dataclass(frozen=True)
class Menu:
    """Deterministic price menu over item subsets (items are 0-based)."""

    kind: str
    item_count: int
    price: float | None = None
    blocks: tuple = ()  # partition: ((frozenset, price), ...)
    entries: tuple = ()  # explicit: ((frozenset, price), ...)

    def __post_init__(self):
        if self.item_count < 1:
            raise ValueError("menu needs at least one item")
        if self.kind == "grand":
            _check_price(self.price)
        elif self.kind == "partition":
            seen = set()
            for block, p in self.blocks:
                _check_price(p)
                if not block:
                    raise ValueError("empty partition block")
                if seen & block:
                    raise ValueError("partition blocks overlap")
                if min(block) < 0 or max(block) >= self.item_count:
                    raise ValueError(f"block {sorted(block)} outside items 0..{self.item_count - 1}")
                seen |= block
        elif self.kind == "explicit":
            if self.item_count > EXPLICIT_MAX_ITEMS:
                raise UnsupportedMenuAtScale(
                    f"explicit menus support at most {EXPLICIT_MAX_ITEMS} items"
                )
            for subset, p in self.entries:
                _check_price(p)
                if subset and (min(subset) < 0 or max(subset) >= self.item_count):
                    raise ValueError(f"entry {sorted(subset)} outside items")
                if not subset and p != 0:
                    raise ValueError("the empty set always has price 0")
        else:
            raise ValueError(f"unknown menu kind {self.kind!r}")

    @property
    def all_items(self) -> frozenset:
        return frozenset(range(self.item_count))

    def describe(self) -> str:
        if self.kind == "grand":
            return f"grand {self.price!r}"
        parts = self.blocks if self.kind == "partition" else self.entries
        body = " ".join(
            "{" + ",".join(str(i + 1) for i in sorted(s)) + "}=" + repr(p) for s, p in parts
        )
        return f"{self.kind} {body}"


def _check_price(p):
    if p is None or not (p >= 0) or math.isinf(p):
        raise ValueError(f"menu prices must be finite and non-negative, got {p}")


def grand_bundle(m: int, price: float) -> Menu:
    return Menu("grand", m, price=float(price))


def partition_menu(m: int, blocks) -> Menu:
    """blocks: iterable of (item-set, price)."""
    return Menu("partition", m, blocks=tuple((_items(b), float(p)) for b, p in blocks))


def explicit_menu(m: int, entries) -> Menu:
    """entries: mapping or iterable of (item-set, price)."""
    if isinstance(entries, dict):
        entries = entries.items()
    items = sorted(((_items(s), float(p)) for s, p in entries), key=lambda e: (len(e[0]), sorted(e[0])))
    return Menu("explicit", m, entries=tuple(items))


def menu_price(menu: Menu, subset) -> float:
    """Price of a subset under free disposal; +inf if no entry covers it."""
    t = _items(subset)
    if not t:
        return 0.0
    if menu.kind == "grand":
        return menu.price
    if menu.kind == "partition":
        total = 0.0
        covered = frozenset()
        for block, p in menu.blocks:
            if block & t:
                total += p
                covered |= block
        return total if t <= covered else math.inf
    best = math.inf
    for s, p in menu.entries:
        if t <= s:
            best = min(best, p)
    return best


# ---------------------------------------------------------------------------
# Tick-space tables used by the kernels


@lru_cache(maxsize=None)
def preference_order(m: int) -> np.ndarray:
    """Subset bitmasks ordered by tie-break preference: {} first, then larger
    sets, then lexicographically smallest item tuple."""
    order = [0]
    for size in range(m, 0, -1):
        for combo in combinations(range(m), size):
            order.append(sum(1 << i for i in combo))
    out = np.array(order, dtype=np.int64)
    out.setflags(write=False)
    return out


def _snap(x: float) -> float:
    k = round(x)
    return float(k) if abs(x - k) <= SNAP_TOL * max(1.0, abs(x)) else float(x)


def price_table_ticks(menu: Menu, step: float) -> np.ndarray:
    """p(T) in ticks for every bitmask T, with +inf where undefined."""
    m = menu.item_count
    if m > EXPLICIT_MAX_ITEMS:
        raise UnsupportedMenuAtScale(f"subset tables need m <= {EXPLICIT_MAX_ITEMS}")
    size = 1 << m
    if menu.kind == "explicit":
        table = np.full(size, np.inf)
        table[0] = 0.0
        for s, p in menu.entries:
            mask = sum(1 << i for i in s)
            table[mask] = min(table[mask], _snap(p / step))
        # free disposal: each mask inherits the cheapest superset price
        for mask in range(size - 1, -1, -1):
            for i in range(m):
                if not mask & (1 << i):
                    table[mask] = min(table[mask], table[mask | (1 << i)])
        return table
    table = np.empty(size)
    for mask in range(size):
        subset = [i for i in range(m) if mask & (1 << i)]
        p = menu_price(menu, subset)
        table[mask] = p if math.isinf(p) else _snap(p / step)
    return table


def mask_to_set(mask: int) -> frozenset:
    return frozenset(i for i in range(int(mask).bit_length()) if mask >> i & 1)


# ---------------------------------------------------------------------------
# Exact buyer choice


@dataclass(frozen=True)
class Outcome:
    principal_set: frozenset
    item_seller_set: frozenset
    principal_revenue: float
    seller_revenues: tuple
    buyer_utility: float


def _exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    x = float(x)
    if math.isinf(x):
        raise ValueError("infinite amount")
    return Fraction(repr(x))


def _exact_price(menu: Menu, subset) -> Fraction | None:
    p = menu_price(menu, subset)
    return None if math.isinf(p) else _exact(p)


def _key(menu_price_exact, mins, counted, subset):
    diff = sum((mins[i] for i in subset), Fraction(0)) - menu_price_exact
    return (diff, -menu_price_exact, -sum(1 for i in subset if counted[i]))


def choose_principal_set(menu: Menu, q, v) -> frozenset:
    """Set bought from the principal, with exact arithmetic and full tie-breaking."""
    m = menu.item_count
    if len(q) != m or len(v) != m:
        raise ValueError("price and value vectors must have one entry per item")
    qe = [_exact(x) for x in q]
    ve = [_exact(x) for x in v]
    if any(x < 0 for x in qe + ve):
        raise ValueError("prices and values must be non-negative")
    mins = [min(a, b) for a, b in zip(ve, qe)]
    counted = [ve[i] >= qe[i] and qe[i] > 0 for i in range(m)]

    if menu.kind == "grand":
        return menu.all_items if sum(mins) > _exact(menu.price) else frozenset()

    if menu.kind == "partition":
        # Levels 1 and 2 add up over blocks, so each block is decided alone and
        # a whole block always beats its proper subsets. Tied blocks are
        # skipped only when nothing is bought at all (level 3), else taken.
        strict, tied = [], []
        skip = (Fraction(0), Fraction(0), 0)
        for block, p in menu.blocks:
            pe = _exact(p)
            buy = (sum(mins[i] for i in block) - pe, -pe, -sum(counted[i] for i in block))
            if buy > skip:
                strict.append(block)
            elif buy == skip:
                tied.append(block)
        if not strict:
            return frozenset()
        return frozenset().union(*strict, *tied)

    best_set, best_key = None, None
    for mask in preference_order(m):
        subset = mask_to_set(int(mask))
        pe = _exact_price(menu, subset)
        if pe is None:
            continue
        key = _key(pe, mins, counted, subset)
        if best_key is None or key > best_key:
            best_set, best_key = subset, key
    return best_set


def buyer_choice(menu: Menu, q, v) -> Outcome:
    """Buyer's purchase decision and the resulting revenue accounting."""
    t = choose_principal_set(menu, q, v)
    qe = [_exact(x) for x in q]
    ve = [_exact(x) for x in v]
    m = menu.item_count
    u = frozenset(i for i in range(m) if (i not in t and ve[i] >= qe[i]) or qe[i] == 0)
    pe = _exact_price(menu, t)
    seller = tuple(float(qe[i]) if i in u else 0.0 for i in range(m))
    util = sum((ve[i] for i in t | u), Fraction(0)) - pe - sum((qe[i] for i in u), Fraction(0))
    return Outcome(
        principal_set=t,
        item_seller_set=u,
        principal_revenue=float(pe),
        seller_revenues=seller,
        buyer_utility=float(util),
    )


def grand_bundle_sale(p, q, v) -> bool:
    """Whether the buyer takes the grand bundle: p < sum_i min(v_i, q_i)."""
    return _exact(p) < sum((min(_exact(a), _exact(b)) for a, b in zip(v, q)), Fraction(0))


def value_change_check(menu: Menu, q, v, v2, subset) -> bool:
    """If the principal sets under v and v2 agree on `subset`, they are equal.

    v and v2 may differ only on `subset`. Returns True when the implication
    holds for this input.
    """
    s = _items(subset)
    for i in range(menu.item_count):
        if i not in s and _exact(v[i]) != _exact(v2[i]):
            raise ValueError("value vectors differ outside the given subset")
    t1 = choose_principal_set(menu, q, v)
    t2 = choose_principal_set(menu, q, v2)
    return (t1 & s) != (t2 & s) or t1 == t2


def threshold_structure(menu: Menu, q, v, i: int, grid: ValueGrid, upper: float | None = None):
    """Sweep seller i's price over the grid and check the two-set structure.

    Returns (T_with_i, T_without_i, theta): the buyer takes T_without_i for
    q_i <= theta and T_with_i for q_i > theta. A set that never occurs in the
    sweep is returned as None; theta is -inf when T_with_i occurs already at 0.
    """
    n = grid.n_ticks if upper is None else grid.to_ticks(upper)
    q = list(q)
    sets = []
    for k in range(n + 1):
        q[i] = grid.value(k)
        sets.append(choose_principal_set(menu, q, v))
    without = [s for s in sets if i not in s]
    with_i = [s for s in sets if i in s]
    if len(set(without)) > 1 or len(set(with_i)) > 1:
        raise NonThresholdBehavior(f"more than two distinct buyer sets along seller {i}'s prices")
    first_with = next((k for k, s in enumerate(sets) if i in s), n + 1)
    if any(i not in s for s in sets[first_with:]):
        raise NonThresholdBehavior(f"buyer set switches back as seller {i}'s price rises")
    theta = grid.value(first_with - 1) if first_with > 0 else -math.inf
    return (with_i[0] if with_i else None, without[0] if without else None, theta)


def sale_indicator(menu: Menu, q, v, i: int) -> bool:
    """Whether item seller i sells (at a positive or zero price)."""
    return i in buyer_choice(menu, q, v).item_seller_set
