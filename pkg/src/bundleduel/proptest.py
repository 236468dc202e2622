"""Randomized property suites shared by the CLI, the test suite and the
acceptance checks.

Every generator takes a `Source` so the same code runs from a seeded NumPy
generator (fixed trial counts) or from hypothesis (shrinking counterexamples).
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import seed as hyp_seed
from hypothesis import strategies as st

from . import kernels
from .dist import (
    ValueGrid,
    cdf_strict,
    make_distribution,
    myerson_price,
    myerson_ticks,
    truncated_mean,
)
from .equilibrium import (
    DEFAULT_TOL,
    MarketInstance,
    StrategyProfile,
    enumerate_utilities,
    factorized_explicit_utility,
    game_model,
    make_instance,
    mixed_profile,
    solve,
)
from .market import (
    buyer_choice,
    choose_principal_set,
    explicit_menu,
    grand_bundle,
    grand_bundle_sale,
    mask_to_set,
    partition_menu,
    preference_order,
    price_table_ticks,
    threshold_structure,
    value_change_check,
)
from .theory import (
    berry_esseen_delta,
    check_bound_variance,
    check_const_variance,
    check_high_mean_var,
    check_mean_to_var,
    check_rem_bound,
    kolmogorov_distance,
    supremum_bound,
)

SLACK_TOL = 1e-12


class Source:
    """Integer choices; `hi` is inclusive."""

    def integers(self, lo: int, hi: int) -> int:
        raise NotImplementedError

    def choice(self, options):
        return options[self.integers(0, len(options) - 1)]

    def subset(self, pool, lo=1, hi=None):
        pool = list(pool)
        hi = len(pool) if hi is None else hi
        k = self.integers(lo, hi)
        out = []
        rest = pool[:]
        for _ in range(k):
            out.append(rest.pop(self.integers(0, len(rest) - 1)))
        return sorted(out)


class RngSource(Source):
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def integers(self, lo, hi):
        return int(self.rng.integers(lo, hi + 1))


class DrawSource(Source):
    def __init__(self, data):
        self.data = data

    def integers(self, lo, hi):
        return self.data.draw(st.integers(lo, hi))


# ---------------------------------------------------------------------------
# Generators


def gen_distribution(src: Source, grid: ValueGrid, max_atoms: int = 4):
    n = grid.n_ticks
    count = src.integers(1, max_atoms)
    ticks = [src.integers(0, n) for _ in range(count)]
    if max(ticks) == 0:
        ticks[-1] = src.integers(1, n)
    weights = [src.integers(1, 20) for _ in ticks]
    total = sum(weights)
    return make_distribution(grid, [(grid.value(t), w / total) for t, w in zip(ticks, weights)])


def gen_instance(src: Source, m: int, step: float = 0.05, max_ticks: int = 10, max_atoms: int = 4):
    grid = ValueGrid(step, grid_value(step, max_ticks))
    return make_instance([gen_distribution(src, grid, max_atoms) for _ in range(m)])


def grid_value(step, ticks):
    return ValueGrid(step, 0.0).value(ticks)


def _price(src: Source, step: float, hi_ticks: int) -> float:
    # half-step prices exercise off-grid menus as well as exact ties
    return grid_value(step / 2, src.integers(0, 2 * hi_ticks))


def gen_menu(src: Source, m: int, step: float, hi_ticks: int, kinds=("grand", "partition", "explicit")):
    kind = src.choice(list(kinds))
    if kind == "grand":
        return grand_bundle(m, _price(src, step, m * hi_ticks))
    if kind == "partition":
        items = list(range(m))
        blocks = []
        while items:
            block = src.subset(items, 1, len(items))
            items = [i for i in items if i not in block]
            blocks.append((block, _price(src, step, len(block) * hi_ticks)))
        if len(blocks) > 1 and src.integers(0, 3) == 0:
            blocks.pop(src.integers(0, len(blocks) - 1))  # leave items uncovered
        return partition_menu(m, blocks)
    masks = list(range(1, 1 << m))
    chosen = src.subset(masks, 1, len(masks))
    entries = [(sorted(mask_to_set(k)), _price(src, step, bin(k).count("1") * hi_ticks)) for k in chosen]
    return explicit_menu(m, entries)


def gen_profile(src: Source, instance: MarketInstance, max_support: int = 3) -> StrategyProfile:
    strategies = []
    for i in range(instance.m):
        grid = instance.seller_grid(i)
        ticks = src.subset(range(len(grid)), 1, min(max_support, len(grid)))
        weights = [src.integers(1, 10) for _ in ticks]
        total = sum(weights)
        strategies.append([(instance.grid.value(grid[t]), w / total) for t, w in zip(ticks, weights)])
    return mixed_profile(instance, strategies)


def gen_vector(src: Source, m: int, step: float, hi_ticks: int):
    return [grid_value(step, src.integers(0, hi_ticks)) for _ in range(m)]


def gen_k_instance(src: Source, K: float, m_range=(2, 4), max_ticks=200, max_atoms=5, tries=200):
    """Instance whose K-ratio is at most K; K = 1 gives i.i.d. items."""
    grid = ValueGrid(1.0, float(max_ticks))
    m = src.integers(*m_range)
    for _ in range(tries):
        if K <= 1:
            d = gen_distribution(src, grid, max_atoms)
            if _rem(d) > 0:
                return make_instance([d] * m)
            continue
        dists = [gen_distribution(src, grid, max_atoms) for _ in range(m)]
        rems = [_rem(d) for d in dists]
        if min(rems) > 0 and max(rems) / min(rems) <= K:
            return make_instance(dists)
    d = gen_distribution(src, grid, max_atoms)
    while _rem(d) <= 0:
        d = gen_distribution(src, grid, max_atoms)
    return make_instance([d] * m)


def _rem(d):
    r = myerson_price(d)
    return r - truncated_mean(d, r)


# ---------------------------------------------------------------------------
# Single-trial properties; each raises AssertionError on violation


def prop_buyer(src: Source):
    """Exact choice matches the tick kernel; accounting identities hold."""
    m = src.integers(1, 4)
    step = 0.5
    menu = gen_menu(src, m, step, 4)
    q = gen_vector(src, m, step, 5)
    v = gen_vector(src, m, step, 5)
    out = buyer_choice(menu, q, v)
    table = price_table_ticks(menu, step)
    tmask, umask = kernels.choose_many(
        table, preference_order(m), np.array([[round(x / step) for x in v]], dtype=np.int64),
        np.array([[round(x / step) for x in q]], dtype=np.int64),
    )
    assert mask_to_set(int(tmask[0])) == out.principal_set, (menu, q, v)
    assert mask_to_set(int(umask[0])) == out.item_seller_set, (menu, q, v)
    assert not (out.principal_set & out.item_seller_set - {i for i in range(m) if q[i] == 0})
    assert out.buyer_utility >= -1e-12
    if menu.kind == "grand":
        assert grand_bundle_sale(menu.price, q, v) == (out.principal_set == menu.all_items)


def prop_monotone(src: Source):
    """Sale indicator falls in q_i; two-set threshold shape; value-change claim."""
    m = src.integers(1, 3)
    step = 1.0
    grid = ValueGrid(step, 5.0)
    menu = gen_menu(src, m, step, 5)
    v = gen_vector(src, m, step, 5)
    q = gen_vector(src, m, step, 5)
    i = src.integers(0, m - 1)
    sells = []
    for k in range(grid.n_ticks + 1):
        q2 = list(q)
        q2[i] = float(k)
        sells.append(i in buyer_choice(menu, q2, v).item_seller_set)
    assert all(a >= b for a, b in zip(sells, sells[1:])), (menu, q, v, i, sells)
    threshold_structure(menu, q, v, i, grid)
    subset = src.subset(range(m), 1, m)
    v2 = list(v)
    for j in subset:
        v2[j] = float(src.integers(0, 5))
    assert value_change_check(menu, q, v, v2, subset), (menu, q, v, v2, subset)


def structure_menus(m: int, points: int) -> list:
    """A fixed family of grand, partition and explicit menus for exhaustive checks."""
    top = float(points - 1)
    menus = [grand_bundle(m, p) for p in (0.0, 0.5, top, top * m / 2 + 0.5, top * m)]
    items = list(range(m))
    menus.append(partition_menu(m, [([i], top / 2 + 0.5) for i in items]))
    if m > 1:
        menus.append(partition_menu(m, [(items[:1], 1.0), (items[1:], top)]))
        menus.append(partition_menu(m, [(items[1:], top / 2)]))
    full = (1 << m) - 1
    menus.append(explicit_menu(m, [(sorted(mask_to_set(k)), 0.5 * bin(k).count("1") * top) for k in range(1, full + 1)]))
    menus.append(explicit_menu(m, [(items, top), (items[:1], 1.0)]))
    return menus


def exhaustive_structure(m: int, points: int, menus=None) -> dict:
    """Check sale monotonicity, the two-set threshold shape and the value-change
    claim over every price and value vector on {0, 1, ..., points-1}.

    Returns the violation count for each claim.
    """
    menus = structure_menus(m, points) if menus is None else menus
    vals = [float(k) for k in range(points)]
    vecs = list(itertools.product(vals, repeat=m))
    bad = {"monotone": 0, "threshold": 0, "value_change": 0}
    for menu in menus:
        choice = {(q, v): choose_principal_set(menu, q, v) for q in vecs for v in vecs}
        for v in vecs:
            for q in vecs:
                for i in range(m):
                    if q[i] != 0:
                        continue
                    seq = []
                    for k in vals:
                        q2 = q[:i] + (k,) + q[i + 1:]
                        seq.append(choice[(q2, v)])
                    sells = [(i not in t and v[i] >= k) or k == 0 for t, k in zip(seq, vals)]
                    if any(b > a for a, b in zip(sells, sells[1:])):
                        bad["monotone"] += 1
                    without = {t for t in seq if i not in t}
                    with_i = {t for t in seq if i in t}
                    first = next((j for j, t in enumerate(seq) if i in t), len(seq))
                    if len(without) > 1 or len(with_i) > 1 or any(i not in t for t in seq[first:]):
                        bad["threshold"] += 1
            for q in vecs:
                t1 = choice[(q, v)]
                for v2 in vecs:
                    S = frozenset(j for j in range(m) if v2[j] != v[j])
                    t2 = choice[(q, v2)]
                    if (t1 & S) == (t2 & S) and t1 != t2:
                        bad["value_change"] += 1
    return bad


def prop_factorized_utility(src: Source, tol=1e-12):
    """Factorized seller utility equals brute-force enumeration."""
    m = src.integers(1, 3)
    step = 0.05
    inst = gen_instance(src, m, step, 8, 3)
    menu = gen_menu(src, m, step, 8)
    prof = gen_profile(src, inst)
    seller, principal = enumerate_utilities(inst, menu, prof)
    model = game_model(inst, menu)
    for i in range(m):
        fast = model.seller_utility(i, prof)
        assert abs(fast - seller[i]) <= tol * max(1.0, abs(seller[i])), (menu, i, fast, seller[i])
        if menu.kind == "explicit":
            fac = factorized_explicit_utility(inst, menu, prof, i)
            assert abs(fac - seller[i]) <= tol * max(1.0, abs(seller[i])), (menu, i, fac, seller[i])
    rev = model.principal_revenue(prof)
    assert abs(rev - principal) <= tol * max(1.0, principal), (menu, rev, principal)


def prop_supremum(src: Source):
    """Principal revenue is at most sum_i E[min(v_i, sup s_i)] for any profile."""
    m = src.integers(1, 3)
    step = 0.05
    inst = gen_instance(src, m, step, 10, 4)
    menu = gen_menu(src, m, step, 10)
    prof = gen_profile(src, inst)
    _, rev = enumerate_utilities(inst, menu, prof)
    bound = supremum_bound(inst, prof)
    assert rev <= bound + 1e-12, (menu, rev, bound)


def prop_berry_esseen(src: Source):
    m = src.integers(5, 40)
    grid = ValueGrid(1.0, 20.0)
    dists = []
    while len(dists) < m:
        d = gen_distribution(src, grid, 4)
        if len(d.ticks) > 1 or d.ticks[0] > 0:
            if len(d.ticks) > 1:
                dists.append(d)
            else:
                # give single-atom draws a second atom so variance is positive
                dists.append(make_distribution(grid, [(0.0, 0.5), (grid.value(d.ticks[0]), 0.5)]))
    dist = kolmogorov_distance(dists)
    delta = berry_esseen_delta(dists)
    assert dist <= delta + 1e-12, (dist, delta)


def lemma_trial(src: Source, K: int) -> list:
    """One draw of every lemma at K; returns the LemmaCheck list."""
    checks = []
    grid = ValueGrid(1.0, 200.0)
    d = gen_distribution(src, grid, 5)
    f = cdf_strict(d, myerson_price(d))
    gap = src.integers(0, 4) / 4  # position between the threshold and 1
    c2 = 1 - (1 - gap) * f**4 / (2 * K + 1)
    c8 = 1 - (1 - gap) * f**4 / (8 * K + 1)
    checks.append(check_const_variance(d, c2, K))
    checks.append(check_rem_bound(d, c8, K))
    r = myerson_ticks(d)
    ticks = src.subset(range(r + 1), 1, min(3, r + 1))
    w = [src.integers(1, 10) for _ in ticks]
    checks.append(check_mean_to_var(d, ticks, [x / sum(w) for x in w]))
    lo = int(math.ceil(c2 * r - 1e-9))
    if lo <= r:
        bt = src.subset(range(lo, r + 1), 1, min(2, r + 1 - lo))
        checks.append(check_bound_variance(d, c2, bt, [1 / len(bt)] * len(bt)))
    inst = gen_k_instance(src, K)
    dists = inst.dists
    rs = [myerson_ticks(x) for x in dists]
    rems = [myerson_price(x) - truncated_mean(x, myerson_price(x)) for x in dists]
    kf = max(rems) / min(rems)
    fmin = min(cdf_strict(x, myerson_price(x)) for x in dists)
    C = 1 - fmin**4 / (8 * kf + 1)
    strategies = []
    wide = src.integers(0, 1) == 1
    for x, r_i in zip(dists, rs):
        low = 0 if wide else int(math.ceil(C * r_i - 1e-9))
        low = min(low, r_i)
        t = src.subset(range(low, r_i + 1), 1, min(2, r_i + 1 - low))
        ww = [src.integers(1, 5) for _ in t]
        strategies.append([(float(k), a / sum(ww)) for k, a in zip(t, ww)])
    checks.append(check_high_mean_var(dists, C, mixed_profile(inst, strategies)))
    return checks


def prop_lemmas(src: Source):
    K = src.choice([1, 2, 4])
    for chk in lemma_trial(src, K):
        if chk.hypothesis_met:
            assert chk.slack >= -SLACK_TOL, (chk.lemma, chk.slack, chk.detail)


def welfare_bound_trial(src: Source, seeds=(0, 1, 2, 3, 4), max_iters=300, tol=DEFAULT_TOL):
    """Solve one random instance; return the list of certified equilibria."""
    m = src.integers(2, 3)
    step = 0.05
    inst = gen_instance(src, m, step, 6, 3)
    menu = gen_menu(src, m, step, 6)
    rep = solve(inst, menu, seeds=seeds, tol=tol, max_iters=max_iters, support_enum=False,
                br_dynamics=False)
    return inst, menu, rep.certificates


def prop_welfare_bound(src: Source):
    inst, menu, certs = welfare_bound_trial(src, seeds=(0, 1), max_iters=200)
    for c in certs:
        assert c.within_welfare_bound, (menu, c.principal_revenue, c.truncated_welfare)


SUITES = {
    "buyer": prop_buyer,
    "monotone": prop_monotone,
    "eq3": prop_factorized_utility,
    "supremum": prop_supremum,
    "lemmas": prop_lemmas,
    "berry_esseen": prop_berry_esseen,
    "thm3": prop_welfare_bound,
}


@dataclass
class SuiteResult:
    suite: str
    trials: int
    seed: int
    passed: bool
    seconds: float
    failure: str | None = None

    def to_json(self):
        return {
            "schema": 1,
            "suite": self.suite,
            "trials": self.trials,
            "seed": self.seed,
            "passed": self.passed,
            "failure": self.failure,
        }


def run_suite(name: str, trials: int = 100, seed: int = 0) -> SuiteResult:
    """Run a suite through hypothesis; failures are shrunk and reproduce with `seed`."""
    prop = SUITES[name]

    @settings(max_examples=trials, deadline=None, database=None, derandomize=False,
              suppress_health_check=list(HealthCheck), print_blob=False)
    @hyp_seed(seed)
    @given(st.data())
    def check(data):
        prop(DrawSource(data))

    t0 = time.perf_counter()
    try:
        check()
    except Exception as exc:  # hypothesis re-raises the shrunk failure
        notes = "\n".join(getattr(exc, "__notes__", []))
        msg = f"{type(exc).__name__}: {exc}"
        return SuiteResult(name, trials, seed, False, time.perf_counter() - t0,
                           (msg + "\n" + notes).strip())
    return SuiteResult(name, trials, seed, True, time.perf_counter() - t0)


def run_seeded(prop, trials: int, seed: int = 0) -> int:
    """Run a property `trials` times from a seeded NumPy generator; returns violations."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(trials):
        try:
            prop(RngSource(rng))
        except AssertionError:
            bad += 1
    return bad
