"""Menus, the buyer's purchase decision and the threshold structure."""
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bundleduel import kernels
from bundleduel.dist import ValueGrid
from bundleduel.errors import UnsupportedMenuAtScale
from bundleduel.market import (
    buyer_choice,
    choose_principal_set,
    explicit_menu,
    grand_bundle,
    grand_bundle_sale,
    mask_to_set,
    menu_price,
    partition_menu,
    preference_order,
    price_table_ticks,
    sale_indicator,
    threshold_structure,
    value_change_check,
)
from bundleduel.proptest import DrawSource, exhaustive_structure, gen_menu, prop_buyer, prop_monotone


def _brute_force_utility(menu, q, v):
    """max over T and U (U outside T) of sum_{T u U} v - p(T) - sum_U q."""
    m = menu.item_count
    best = -math.inf
    for tm in range(1 << m):
        t = mask_to_set(tm)
        p = menu_price(menu, t)
        if math.isinf(p):
            continue
        rest = [i for i in range(m) if i not in t]
        for k in range(len(rest) + 1):
            for u in itertools.combinations(rest, k):
                val = sum(v[i] for i in t) + sum(v[i] - q[i] for i in u) - p
                best = max(best, val)
    return best


class TestMenuPrice:
    def test_grand_closure(self):
        assert menu_price(grand_bundle(2, 1.0), {0}) == 1.0

    def test_explicit_entry_beats_closure(self):
        menu = explicit_menu(2, {(0, 1): 1.0, (0,): 0.7})
        assert menu_price(menu, {0}) == 0.7
        assert menu_price(menu, {1}) == 1.0

    def test_empty_set_is_free(self):
        for menu in (grand_bundle(2, 3.0), explicit_menu(2, {(0,): 2.0}), partition_menu(2, [({0}, 1.0)])):
            assert menu_price(menu, set()) == 0.0

    def test_uncovered_items(self):
        assert math.isinf(menu_price(explicit_menu(2, {(0,): 2.0}), {1}))
        assert math.isinf(menu_price(partition_menu(2, [({0}, 1.0)]), {1}))

    def test_partition_sums_blocks(self):
        menu = partition_menu(4, [({0, 1}, 2.0), ({2, 3}, 5.0)])
        assert menu_price(menu, {0}) == 2.0
        assert menu_price(menu, {0, 3}) == 7.0

    def test_validation(self):
        with pytest.raises(ValueError):
            partition_menu(3, [({0, 1}, 1.0), ({1, 2}, 1.0)])
        with pytest.raises(ValueError):
            grand_bundle(2, -1.0)
        with pytest.raises(UnsupportedMenuAtScale):
            explicit_menu(13, {(0,): 1.0})

    def test_price_table_matches_menu_price(self):
        menu = explicit_menu(3, {(0, 1): 1.5, (2,): 0.5, (0, 1, 2): 1.75})
        table = price_table_ticks(menu, 0.25)
        for mask in range(8):
            assert table[mask] * 0.25 == menu_price(menu, mask_to_set(mask))

    def test_preference_order_starts_with_empty_then_large(self):
        order = list(preference_order(3))
        assert order[0] == 0 and order[1] == 0b111
        assert sorted(order) == list(range(8))


class TestBuyerChoice:
    def test_bundle_bought(self):
        out = buyer_choice(grand_bundle(2, 1.0), [0.6, 0.6], [0.9, 0.9])
        assert out.principal_set == {0, 1}
        assert out.principal_revenue == 1.0
        assert out.item_seller_set == frozenset()

    def test_item_sellers_win(self):
        out = buyer_choice(grand_bundle(2, 1.0), [0.4, 0.4], [0.7, 0.8])
        assert out.principal_set == frozenset()
        assert out.item_seller_set == {0, 1}
        assert out.seller_revenues == (0.4, 0.4)

    def test_tie_goes_against_principal(self):
        out = buyer_choice(grand_bundle(2, 0.8), [0.4, 0.4], [0.7, 0.8])
        assert out.principal_set == frozenset()
        assert out.principal_revenue == 0.0

    def test_zero_price_counts_as_seller_sale(self):
        out = buyer_choice(grand_bundle(2, 0.5), [0.0, 1.0], [1.0, 1.0])
        assert 0 in out.item_seller_set and out.seller_revenues[0] == 0.0

    def test_accounting_identity(self):
        menu = explicit_menu(3, {(0, 1): 1.2, (2,): 0.3, (0, 1, 2): 1.4})
        q, v = [0.5, 0.9, 0.4], [1.0, 0.6, 0.7]
        out = buyer_choice(menu, q, v)
        total = sum(v[i] for i in out.principal_set | out.item_seller_set)
        assert out.buyer_utility + out.principal_revenue + sum(out.seller_revenues) == pytest.approx(total)

    def test_grand_bundle_sale(self):
        assert grand_bundle_sale(1.0, [0.6, 0.6], [0.9, 0.9])
        assert not grand_bundle_sale(1.0, [0.5, 0.5], [0.9, 0.9])
        assert grand_bundle_sale(0.0, [0.1, 0.0], [0.2, 0.0])
        assert not grand_bundle_sale(0.0, [0.0, 0.0], [1.0, 1.0])

    def test_grand_sale_matches_choice_exhaustive(self):
        vals = [0.0, 0.5, 1.0, 1.5]
        for m in (1, 2, 3):
            for p in vals:
                menu = grand_bundle(m, p)
                for q in itertools.product(vals, repeat=m):
                    for v in itertools.product(vals, repeat=m):
                        t = choose_principal_set(menu, q, v)
                        assert grand_bundle_sale(p, q, v) == (t == menu.all_items)

    @settings(max_examples=300, deadline=None)
    @given(st.data())
    def test_choice_maximizes_buyer_utility(self, data):
        src = DrawSource(data)
        m = src.integers(1, 4)
        menu = gen_menu(src, m, 0.5, 4)
        q = [0.5 * src.integers(0, 6) for _ in range(m)]
        v = [0.5 * src.integers(0, 6) for _ in range(m)]
        out = buyer_choice(menu, q, v)
        assert out.buyer_utility == pytest.approx(_brute_force_utility(menu, q, v), abs=1e-12)

    @settings(max_examples=300, deadline=None)
    @given(st.data())
    def test_kernel_agrees_with_exact_choice(self, data):
        prop_buyer(DrawSource(data))

    def test_python_and_compiled_kernels_agree(self):
        if not kernels.compiled_available():
            pytest.skip("compiled kernels not built")
        from bundleduel import _kernels, _kernels_py

        rng = np.random.default_rng(3)
        for m in (1, 2, 3, 4):
            menu = explicit_menu(m, {tuple(sorted(mask_to_set(k))): float(rng.integers(0, 12)) for k in range(1, 1 << m)})
            table = price_table_ticks(menu, 1.0)
            order = preference_order(m)
            v = rng.integers(0, 6, size=(500, m)).astype(np.int64)
            q = rng.integers(0, 6, size=(500, m)).astype(np.int64)
            a = _kernels.choose_many(table, order, v, q)
            b = _kernels_py.choose_many(table, order, v, q)
            assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
            vw = np.full(len(v), 1 / len(v))
            sa, pa = _kernels.explicit_payoffs(table, order, q, v, vw)
            sb, pb = _kernels_py.explicit_payoffs(table, order, q, v, vw)
            assert np.allclose(sa, sb, atol=1e-12) and np.allclose(pa, pb, atol=1e-12)


class TestStructure:
    def test_single_item_threshold(self):
        # the buyer takes the bundle only once the item seller asks more than 0.5
        grid = ValueGrid(0.1, 1.0)
        with_i, without, theta = threshold_structure(grand_bundle(1, 0.5), [0.0], [0.6], 0, grid)
        assert with_i == {0} and without == frozenset()
        assert theta == 0.5

    def test_point_mass_threshold(self):
        grid = ValueGrid(0.5, 1.0)
        _, without, theta = threshold_structure(grand_bundle(3, 1.5), [0.0, 0.5, 0.5], [1.0, 1.0, 1.0], 0, grid)
        assert without == frozenset() and theta == 0.5

    def test_value_above_price_keeps_indicator_constant(self):
        menu = grand_bundle(2, 10.0)
        grid = ValueGrid(1.0, 3.0)
        with_i, without, theta = threshold_structure(menu, [0.0, 1.0], [3.0, 3.0], 0, grid)
        assert with_i is None and without == frozenset() and theta == 3.0

    def test_sale_indicator(self):
        assert sale_indicator(grand_bundle(2, 1.0), [0.4, 0.4], [0.7, 0.8], 0)
        assert not sale_indicator(grand_bundle(2, 1.0), [0.6, 0.6], [0.9, 0.9], 0)

    def test_value_change_requires_matching_vectors(self):
        with pytest.raises(ValueError):
            value_change_check(grand_bundle(2, 1.0), [0.5, 0.5], [1.0, 1.0], [1.0, 0.5], {0})
        assert value_change_check(grand_bundle(2, 1.0), [0.5, 0.5], [1.0, 1.0], [1.0, 1.0], {0})

    def test_exhaustive_two_items(self):
        assert exhaustive_structure(2, 6) == {"monotone": 0, "threshold": 0, "value_change": 0}

    @settings(max_examples=200, deadline=None)
    @given(st.data())
    def test_random_menus(self, data):
        prop_monotone(DrawSource(data))


class TestBackends:
    def test_fallback_reproduces_compiled_solve(self):
        from bundleduel.equilibrium import make_instance, solve
        from bundleduel.dist import make_distribution

        grid = ValueGrid(0.25, 1.0)
        d = make_distribution(grid, [(0.25, 0.5), (1.0, 0.5)])
        inst = make_instance([d, d, d])
        menu = explicit_menu(3, {(0, 1): 0.75, (0, 1, 2): 1.25, (2,): 0.5})
        before = kernels.backend_name()
        results = {}
        try:
            for name in ("python", "compiled") if kernels.compiled_available() else ("python",):
                kernels.use_backend(name)
                rep = solve(inst, menu, seeds=(0, 1), max_iters=100)
                results[name] = sorted(round(c.principal_revenue, 12) for c in rep.certificates)
        finally:
            kernels.use_backend(before)
        assert len(set(map(tuple, results.values()))) == 1
        with pytest.raises(ValueError):
            kernels.use_backend("fortran")
