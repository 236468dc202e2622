"""Compare the compiled buyer-choice kernels with the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--json PATH]

Each case runs on both backends with identical inputs; outputs are checked
for agreement before timings are reported.
"""
import argparse
import json
import sys
import timeit

import numpy as np

from bundleduel import kernels
from bundleduel.dist import ValueGrid, make_distribution
from bundleduel.equilibrium import make_instance, solve
from bundleduel.market import explicit_menu, mask_to_set, preference_order, price_table_ticks


def _menu(rng, m):
    entries = {tuple(sorted(mask_to_set(k))): float(rng.integers(1, 40)) for k in range(1, 1 << m)}
    return explicit_menu(m, entries)


def _choose_case(rng, m, rows):
    table = price_table_ticks(_menu(rng, m), 1.0)
    order = preference_order(m)
    v = rng.integers(0, 20, size=(rows, m)).astype(np.int64)
    q = rng.integers(0, 20, size=(rows, m)).astype(np.int64)
    return lambda: kernels.choose_many(table, order, v, q)


def _payoff_case(rng, m, nq, nv):
    table = price_table_ticks(_menu(rng, m), 1.0)
    order = preference_order(m)
    q = rng.integers(0, 20, size=(nq, m)).astype(np.int64)
    v = rng.integers(0, 20, size=(nv, m)).astype(np.int64)
    w = np.full(nv, 1.0 / nv)
    return lambda: kernels.explicit_payoffs(table, order, q, v, w)


def _solve_case(rng):
    grid = ValueGrid(0.05, 0.5)
    dists = []
    for _ in range(3):
        ticks = rng.choice(np.arange(1, 11), size=3, replace=False)
        w = rng.integers(1, 6, size=3)
        dists.append(make_distribution(grid, [(0.05 * t, x / w.sum()) for t, x in zip(ticks, w)]))
    inst = make_instance(dists)
    menu = explicit_menu(3, {(0, 1): 0.4, (1, 2): 0.35, (0, 1, 2): 0.6, (2,): 0.25})
    return lambda: [c.principal_revenue for c in solve(inst, menu, seeds=(0, 1), max_iters=200).certificates]


CASES = {
    "choose_many m=4 rows=200k": lambda rng: _choose_case(rng, 4, 200_000),
    "choose_many m=8 rows=50k": lambda rng: _choose_case(rng, 8, 50_000),
    "explicit_payoffs m=3 400x400": lambda rng: _payoff_case(rng, 3, 400, 400),
    "solve explicit m=3": _solve_case,
}


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), atol=1e-12)


def run(repeat=3):
    if not kernels.compiled_available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    rows = []
    for name, make in CASES.items():
        fn = make(np.random.default_rng(0))
        times, outs = {}, {}
        for backend in ("python", "compiled"):
            kernels.use_backend(backend)
            outs[backend] = fn()
            times[backend] = min(timeit.repeat(fn, number=1, repeat=repeat))
        kernels.use_backend("compiled")
        rows.append({
            "case": name,
            "python_s": times["python"],
            "compiled_s": times["compiled"],
            "speedup": times["python"] / times["compiled"],
            "agree": bool(_same(outs["python"], outs["compiled"])),
        })
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None, help="also write the rows as JSON")
    args = ap.parse_args(argv)
    rows = run(args.repeat)
    print(f"{'case':32s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s} agree")
    for r in rows:
        print(f"{r['case']:32s} {r['python_s']:10.4f} {r['compiled_s']:11.4f} {r['speedup']:8.1f} {r['agree']}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"schema": 1, "rows": rows}, fh, indent=2, sort_keys=True)
    return 0 if all(r["agree"] for r in rows) else 2


if __name__ == "__main__":
    sys.exit(main())
