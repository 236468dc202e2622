"""Exact utilities, dominance, equilibrium search and certificates."""
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bundleduel.convolve import convolve_pmf, cdf_at, leave_one_out, mixture_pmf, sum_pmf
from bundleduel.dist import ValueGrid, binary, make_distribution, point_mass
from bundleduel.equilibrium import (
    best_response,
    enumerate_utilities,
    find_pure_equilibria,
    fictitious_play,
    iterated_dominance,
    loo_convolutions,
    make_instance,
    mixed_profile,
    monte_carlo_utilities,
    partition_decompose,
    principal_revenue,
    pure_profile,
    seller_utility,
    solve,
    verify_equilibrium,
)
from bundleduel.errors import GridOverflow
from bundleduel.market import explicit_menu, grand_bundle, partition_menu
from bundleduel.proptest import DrawSource, gen_instance, gen_menu, gen_profile, prop_factorized_utility

G100 = ValueGrid(0.1, 100.0)


def _claim_instance():
    d = binary(G100, 100, 0.1)
    return make_instance([d, d]), grand_bundle(2, 100.1)


def _point_mass_instance():
    d = point_mass(ValueGrid(0.5, 1.0), 1.0)
    return make_instance([d, d, d]), grand_bundle(3, 1.5)


class TestConvolution:
    def test_paths_agree(self):
        rng = np.random.default_rng(0)
        a = rng.random(3000)
        b = rng.random(2000)
        sparse = np.zeros(2000)
        sparse[[3, 700, 1999]] = [0.2, 0.3, 0.5]
        ref = np.convolve(a, sparse)
        assert np.allclose(convolve_pmf(a, sparse), ref, atol=1e-12)
        assert np.allclose(convolve_pmf(a, b), np.convolve(a, b), rtol=1e-9, atol=1e-9)

    def test_overflow(self):
        with pytest.raises(GridOverflow):
            convolve_pmf(np.ones(30_000_000), np.ones(30_000_000))

    def test_binomial_leave_one_out(self):
        d = binary(ValueGrid(1.0, 1.0), 1.0, 0.5)
        inst = make_instance([d, d, d])
        loo = loo_convolutions(inst, pure_profile(inst, [1, 1, 1]))
        for pmf in loo:
            assert np.allclose(pmf, [0.25, 0.5, 0.25])

    def test_point_mass_leave_one_out(self):
        d = point_mass(ValueGrid(0.5, 1.0), 1.0)
        inst = make_instance([d, d])
        loo = loo_convolutions(inst, pure_profile(inst, [0.5, 0.5]))
        for pmf in loo:
            assert np.allclose(pmf, [0.0, 1.0])

    def test_leave_one_out_recombines(self):
        rng = np.random.default_rng(1)
        pmfs = [rng.dirichlet(np.ones(k)) for k in (3, 5, 2, 7)]
        full = sum_pmf(pmfs)
        for k, loo in enumerate(leave_one_out(pmfs)):
            assert np.allclose(convolve_pmf(loo, pmfs[k]), full, atol=1e-14)

    def test_mixture_matches_monte_carlo(self):
        grid = ValueGrid(1.0, 6.0)
        d = make_distribution(grid, [(1, 0.3), (3, 0.3), (6, 0.4)])
        pmf = mixture_pmf(d, [2, 5], [0.4, 0.6])
        rng = np.random.default_rng(2)
        n = 1_000_000
        v = rng.choice([1, 3, 6], p=[0.3, 0.3, 0.4], size=n)
        q = rng.choice([2, 5], p=[0.4, 0.6], size=n)
        emp = np.bincount(np.minimum(v, q), minlength=len(pmf)) / n
        sd = np.sqrt(pmf * (1 - pmf) / n)
        assert np.all(np.abs(emp - pmf) <= 3 * sd + 1e-12)

    def test_cdf_at(self):
        pmf = np.array([0.25, 0.5, 0.25])
        assert cdf_at(pmf, -0.5) == 0.0
        assert cdf_at(pmf, 1.5) == pytest.approx(0.75)
        assert cdf_at(pmf, 10) == 1.0


class TestUtilities:
    def test_single_seller_grand_bundle(self):
        inst = make_instance([binary(G100, 100, 0.1)])
        menu = grand_bundle(1, 50)
        assert seller_utility(inst, menu, pure_profile(inst, [40]), 0) == pytest.approx(4.0)
        assert seller_utility(inst, menu, pure_profile(inst, [60]), 0) == 0.0
        assert seller_utility(inst, menu, pure_profile(inst, [50]), 0) == pytest.approx(5.0)

    def test_point_mass_revenue_zero(self):
        inst, menu = _point_mass_instance()
        assert principal_revenue(inst, menu, pure_profile(inst, [0.5] * 3)) == 0.0

    def test_partition_claim_revenue(self):
        d = binary(G100, 100, 0.1)
        inst = make_instance([d, d])
        menu = partition_menu(2, [({0, 1}, 100.1)])
        assert principal_revenue(inst, menu, pure_profile(inst, [100, 100])) == pytest.approx(1.001)

    @settings(max_examples=150, deadline=None)
    @given(st.data())
    def test_fast_paths_match_enumeration(self, data):
        prop_factorized_utility(DrawSource(data))

    def test_monte_carlo_agrees(self):
        rng = np.random.default_rng(4)
        from bundleduel.proptest import RngSource

        src = RngSource(rng)
        inst = gen_instance(src, 3, 0.05, 8, 3)
        menu = explicit_menu(3, {(0, 1): 0.4, (2,): 0.2, (0, 1, 2): 0.55})
        prof = gen_profile(src, inst)
        seller, principal = enumerate_utilities(inst, menu, prof)
        mc_seller, mc_principal, se = monte_carlo_utilities(inst, menu, prof, samples=400_000, seed=0)
        assert np.all(np.abs(mc_seller - seller) <= 4 * se[:3] + 1e-12)
        assert abs(mc_principal - principal) <= 4 * se[3] + 1e-12


class TestBestResponse:
    def test_point_mass(self):
        inst, menu = _point_mass_instance()
        prices, value = best_response(inst, menu, pure_profile(inst, [0.5] * 3), 0)
        assert prices == (0.5,) and value == pytest.approx(0.5)

    def test_uniform_atoms(self):
        grid = ValueGrid(0.25, 1.0)
        d = make_distribution(grid, [(0.25, 0.25), (0.5, 0.25), (0.75, 0.25), (1.0, 0.25)])
        inst = make_instance([d])
        prices, value = best_response(inst, grand_bundle(1, 0.6), pure_profile(inst, [0.25]), 0)
        assert prices == (0.5,) and value == pytest.approx(0.375)

    def test_claim_subgame(self):
        inst, menu = _claim_instance()
        prices, _ = best_response(inst, menu, pure_profile(inst, [100, 100]), 0)
        assert prices == (100.0,)


class TestDominance:
    def test_claim_reduces_to_unique_profile(self):
        inst, menu = _claim_instance()
        dom = iterated_dominance(inst, menu)
        assert dom.prices(0) == [100.0] and dom.prices(1) == [100.0]

    def test_prices_above_r_removed(self):
        inst, menu = _claim_instance()
        dom = iterated_dominance(inst, menu)
        assert all(p <= 100.0 for i in range(2) for p in dom.prices(i))

    def test_single_seller_keeps_only_revenue_maximizers(self):
        # with one seller and a bundle priced above every value, utility is Rev(q)
        grid = ValueGrid(1.0, 4.0)
        d = make_distribution(grid, [(1, 0.5), (2, 0.25), (4, 0.25)])
        inst = make_instance([d])
        dom = iterated_dominance(inst, grand_bundle(1, 10.0))
        assert dom.prices(0) == [1.0, 2.0, 4.0]


class TestEquilibria:
    def test_claim_pure_equilibrium_unique(self):
        inst, menu = _claim_instance()
        certs = find_pure_equilibria(inst, menu, grids=iterated_dominance(inst, menu).grids)
        assert len(certs) == 1
        assert certs[0].profile.pairs() == [[(100.0, 1.0)], [(100.0, 1.0)]]
        assert certs[0].principal_revenue == pytest.approx(1.001, abs=1e-12)

    def test_claim_fictitious_play(self):
        inst, menu = _claim_instance()
        cert = fictitious_play(inst, menu, seed=0, max_iters=500)
        assert cert.epsilon < 1e-9

    def test_point_mass_equilibrium(self):
        inst, menu = _point_mass_instance()
        certs = find_pure_equilibria(inst, menu)
        assert any(c.profile.pairs() == [[(0.5, 1.0)]] * 3 for c in certs)
        cert = verify_equilibrium(inst, menu, pure_profile(inst, [0.5] * 3))
        assert cert.epsilon == 0.0 and cert.principal_revenue == 0.0

    def test_perturbed_claim_profile_has_regret(self):
        inst, menu = _claim_instance()
        cert = verify_equilibrium(inst, menu, pure_profile(inst, [99.9, 100]))
        assert cert.epsilon > 0

    def test_regret_matches_enumeration(self):
        from bundleduel.proptest import RngSource

        src = RngSource(np.random.default_rng(7))
        inst = gen_instance(src, 2, 0.05, 6, 3)
        menu = gen_menu(src, 2, 0.05, 6)
        prof = gen_profile(src, inst)
        cert = verify_equilibrium(inst, menu, prof)
        for i in range(2):
            base = enumerate_utilities(inst, menu, prof)[0][i]
            best = base
            for t in inst.seller_grid(i):
                strategies = [list(s) for s in prof.pairs()]
                strategies[i] = [(inst.grid.value(t), 1.0)]
                best = max(best, enumerate_utilities(inst, menu, mixed_profile(inst, strategies))[0][i])
            assert cert.per_seller_regret[i] == pytest.approx(best - base, abs=1e-12)

    def test_bertrand_single_seller(self):
        inst = make_instance([binary(ValueGrid(0.5, 3.0), 3.0, 0.5)])
        for p in (0.0, 1.0, 2.5, 10.0):
            rep = solve(inst, grand_bundle(1, p))
            assert rep.certificates
            assert all(c.principal_revenue == 0.0 for c in rep.certificates)

    def test_above_r_pricing_earns_nothing(self):
        # sellers may price above r_i = 2 here; any that does so at equilibrium earns zero
        grid = ValueGrid(1.0, 4.0)
        d = make_distribution(grid, [(2, 0.9), (4, 0.1)])
        inst = make_instance([d, d], caps=[4.0, 4.0])
        above = 0
        for p in (1.0, 3.0, 4.0, 5.0, 8.0, 9.0):
            menu = grand_bundle(2, p)
            full = [inst.seller_grid(i) for i in range(2)]
            for cert in find_pure_equilibria(inst, menu, grids=full):
                for i in range(2):
                    if cert.profile.sup_ticks(i) > 2:
                        above += 1
                        assert seller_utility(inst, menu, cert.profile, i) == 0.0
        assert above > 0

    def test_determinism(self):
        inst, menu = _claim_instance()
        a = solve(inst, menu, seeds=(3,))
        b = solve(inst, menu, seeds=(3,))
        ja = [json.dumps(c.to_json(), sort_keys=True) for c in a.certificates]
        jb = [json.dumps(c.to_json(), sort_keys=True) for c in b.certificates]
        assert ja == jb

    def test_certificate_json_fields(self):
        inst, menu = _claim_instance()
        cert = solve(inst, menu).certificates[0]
        doc = cert.to_json()
        for key in ("schema", "menu", "profile", "per_seller_regret", "epsilon", "principal_revenue", "method", "seed", "grid"):
            assert key in doc
        assert doc["schema"] == 1


class TestPartition:
    def test_decompose(self):
        from bundleduel.theory import build_counterexample

        inst, spec = build_counterexample(3, 2)
        subs = partition_decompose(inst, spec.partition_menu)
        assert [tuple(s.items) for s in subs] == [(0, 1), (2, 3)]
        assert all(s.instance.m == 2 for s in subs)

    def test_singleton_block(self):
        d = binary(ValueGrid(1.0, 4.0), 4.0, 0.5)
        inst = make_instance([d, d])
        subs = partition_decompose(inst, partition_menu(2, [({0}, 3.0), ({1}, 2.0)]))
        assert [s.instance.m for s in subs] == [1, 1]

    def test_composed_equilibrium_verified(self):
        from bundleduel.theory import build_counterexample

        inst, spec = build_counterexample(3, 2)
        rep = solve(inst, spec.partition_menu)
        assert rep.certificates
        for cert in rep.certificates:
            whole = verify_equilibrium(inst, spec.partition_menu, cert.profile)
            assert whole.epsilon <= 1e-9
            assert cert.principal_revenue == pytest.approx(
                sum(min(c.principal_revenue for c in r.certificates) for _, r in rep.blocks), abs=1e-9
            ) or cert.principal_revenue == pytest.approx(
                sum(max(c.principal_revenue for c in r.certificates) for _, r in rep.blocks), abs=1e-9
            )
