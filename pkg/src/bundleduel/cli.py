"""Command-line front end.

    bundleduel analyze [FILES...] [--config PATH] [--out DIR]
    bundleduel solve --config PATH [--seed N] [--out DIR]
    bundleduel sweep --config PATH [--seed N] [--out DIR]
    bundleduel proptest SUITE [--trials N] [--seed N] [--out DIR]

Exit codes: 0 success, 2 check failure, 3 input error, 4 budget exceeded.
Every JSON document carries `schema: 1`; all files are written once, at the
end of a command.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import os
import sys
from pathlib import Path

from . import __version__
from .dist import cdf_strict, myerson_price, revenue_at, truncated_mean, truncated_variance
from .equilibrium import DEFAULT_TOL, make_instance, solve
from .errors import (
    BudgetExceeded,
    BundleDuelError,
    GridOverflow,
    ParseError,
)
from .io import (
    OUT_ENV,
    ExperimentConfig,
    build_instance,
    dump_json,
    load_config,
    load_distribution,
    load_menu,
    parse_menu,
    sweep_prices,
)
from .market import grand_bundle
from .proptest import SUITES, run_suite
from .theory import (
    SWEEP_COLUMNS,
    bundle_price_formula,
    grand_bundle_sweep,
    rev_plus_welfare_terms,
    truncated_welfare,
)

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_BUDGET = 0, 2, 3, 4


class Outputs:
    """Collects files in memory and writes them together."""

    def __init__(self, root):
        self.root = Path(root)
        self.files = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def flush(self):
        for name, text in sorted(self.files.items()):
            path = self.root / name
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="") as fh:
                fh.write(text)


def _csv(rows, header) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _out_dir(args, cfg: ExperimentConfig | None):
    if args.out:
        return args.out
    if cfg is not None:
        return cfg.output_dir
    return os.environ.get(OUT_ENV, "out")


def _instance(cfg: ExperimentConfig):
    dists, spec = build_instance(cfg)
    step = cfg.solver.get("price_step")
    return make_instance(dists, price_step=float(step) if step else None), spec


def _menu(cfg: ExperimentConfig, instance, spec):
    mc = cfg.menu
    if "file" in mc:
        return load_menu(cfg.resolve(mc["file"]), instance.m)
    if "spec" in mc:
        return parse_menu(mc["spec"], instance.m, path="[menu] spec")
    if mc.get("bundle_price") == "formula":
        return grand_bundle(instance.m, bundle_price_formula(instance).bundle_price)
    if spec is not None:
        return spec.partition_menu
    raise ParseError("[menu] needs file, spec or bundle_price = formula")


# ---------------------------------------------------------------------------
# Commands


def cmd_analyze(args) -> int:
    cfg = load_config(args.config) if args.config else None
    if args.files:
        instance = make_instance([load_distribution(f) for f in args.files])
        names = [str(f) for f in args.files]
    elif cfg is not None:
        instance, _ = _instance(cfg)
        names = [f"item{i + 1}" for i in range(instance.m)]
    else:
        raise ParseError("analyze needs distribution files or --config")
    rep = bundle_price_formula(instance)
    items = []
    for name, d, it in zip(names, instance.dists, rep.items):
        r = myerson_price(d)
        items.append({
            "source": name,
            "r": r,
            "revenue_at_r": revenue_at(d, r),
            "mu_r": truncated_mean(d, r),
            "sigma_r": truncated_variance(d, r) ** 0.5,
            "F_r": cdf_strict(d, r),
            "lambda": it.get("lambda"),
        })
    doc = {
        "schema": 1,
        "version": __version__,
        "items": items,
        "K": rep.K,
        "C": rep.C,
        "sigma_truncated": rep.sigma_truncated,
        "truncated_welfare": rep.truncated_welfare,
        "bundle_price": rep.bundle_price,
        "lambda_min": rep.lambda_min,
        "hypothesis": rep.hypothesis,
        "hypothesis_ok": rep.hypothesis_ok,
        "reasons": rep.reasons,
    }
    out = Outputs(_out_dir(args, cfg))
    out.add("analysis.json", dump_json(doc))
    out.flush()
    for it in items:
        print(f"{it['source']}: r={it['r']:g} Rev={it['revenue_at_r']:g} mu={it['mu_r']:g} sigma={it['sigma_r']:g}")
    print(f"K={rep.K:g} C={rep.C:.6g} sigma={rep.sigma_truncated:g} bundle_price={rep.bundle_price:g}")
    print(f"hypothesis_ok={str(rep.hypothesis_ok).lower()}" + (f" ({'; '.join(rep.reasons)})" if rep.reasons else ""))
    return EXIT_OK


def _solver_settings(cfg, args):
    return dict(
        seeds=cfg.seeds(args.seed),
        tol=cfg.solver_float("tolerance", DEFAULT_TOL),
        max_iters=cfg.solver_int("max_iters", 2000),
        budget=cfg.solver_int("budget", 2_000_000),
    )


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    instance, spec = _instance(cfg)
    menu = _menu(cfg, instance, spec)
    settings = _solver_settings(cfg, args)
    rep = solve(instance, menu, **settings)
    out = Outputs(_out_dir(args, cfg))
    welfare = truncated_welfare(instance)
    checks = []
    for k, c in enumerate(rep.certificates):
        out.add(f"certificates/cert_{k:03d}.json", dump_json(c.to_json()))
        bound, tight = rev_plus_welfare_terms(instance, c)
        checks.append({
            "certificate": k,
            "principal_revenue": c.principal_revenue,
            "within_truncated_welfare": c.principal_revenue <= welfare + 1e-9,
            "rev_plus_welfare_bound": bound,
            "rev_plus_welfare_tight": tight,
            "within_rev_plus_welfare": c.principal_revenue <= min(bound, tight) + 1e-9,
        })
    for b, (sub, srep) in enumerate(rep.blocks):
        for k, c in enumerate(srep.certificates):
            out.add(f"certificates/block_{b:02d}_cert_{k:03d}.json", dump_json(c.to_json()))
    summary = rep.summary()
    summary.update({
        "config": cfg.to_json(),
        "menu": menu.describe(),
        "truncated_welfare": welfare,
        "welfare_checks": checks,
        "dominance": None if rep.dominance is None else rep.dominance.to_json(),
        "unconverged_attempts": [
            {"method": a.method, "seed": a.seed, "epsilon": a.epsilon}
            for a in rep.attempts if a.epsilon > settings["tol"]
        ],
        "blocks": [
            {"items": [i + 1 for i in sub.items], "summary": srep.summary()} for sub, srep in rep.blocks
        ],
    })
    all_notes = list(rep.notes) + [n for _, srep in rep.blocks for n in srep.notes]
    budget_hit = any("pure enumeration skipped" in n for n in all_notes)
    summary["budget_exceeded"] = budget_hit
    if rep.dominance is not None and rep.dominance.profile_count == 1:
        summary["dominance_note"] = "iterated strict dominance leaves a single profile; it is the unique equilibrium"
    out.add("summary.json", dump_json(summary))
    out.flush()
    print(f"menu: {menu.describe()}")
    print(f"certified equilibria: {len(rep.certificates)}; revenue min={rep.min_revenue} max={rep.max_revenue}")
    ok = all(c["within_truncated_welfare"] and c["within_rev_plus_welfare"] for c in checks)
    print(f"truncated-welfare bound {welfare:g}: {'ok' if ok else 'VIOLATED'}")
    if not ok:
        return EXIT_CHECK
    if budget_hit:
        print("pure enumeration exceeded its budget; outputs are partial")
        return EXIT_BUDGET
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    instance, spec = _instance(cfg)
    default_high = 3 * spec.H[-1] if spec is not None else None
    prices = sweep_prices(cfg, default_high)
    settings = _solver_settings(cfg, args)
    rows = grand_bundle_sweep(instance, prices, spec, seeds=settings["seeds"], tol=settings["tol"],
                              max_iters=min(settings["max_iters"], 300), budget=settings["budget"])
    out = Outputs(_out_dir(args, cfg))
    out.add("sweep.csv", _csv([r.csv_row() for r in rows], SWEEP_COLUMNS))
    plot = ["# x=price y_min=min revenue y_max=max revenue band"]
    for r in rows:
        lo = "nan" if r.min_rev is None else repr(r.min_rev)
        hi = "nan" if r.max_rev is None else repr(r.max_rev)
        plot.append(f"{r.price!r}\t{lo}\t{hi}\t{r.band or '-'}")
    out.add("sweep_plot.dat", "\n".join(plot) + "\n")
    checks = sweep_checks(rows, spec)
    out.add("sweep.json", dump_json({
        "schema": 1,
        "config": cfg.to_json(),
        "rows": [r.__dict__ for r in rows],
        "checks": checks,
    }))
    out.flush()
    print(f"{len(rows)} prices swept; max revenue found {max((r.max_rev or 0) for r in rows):g}")
    for name, ok in checks.items():
        print(f"{name}: {'ok' if ok else 'FAILED'}")
    return EXIT_OK if all(checks.values()) else EXIT_CHECK


def sweep_checks(rows, spec) -> dict:
    """Band checks for the separating family; empty without one."""
    if spec is None:
        return {}
    low_cap = 3 * spec.H[0]
    zero_from = 2 * sum(spec.H)
    checks = {
        "low_band_at_most_3H1": all(r.max_rev is None or r.max_rev <= low_cap + 1e-9
                                    for r in rows if r.band == "low"),
        "mid_band_at_most_36": all(r.bound_36_flag for r in rows if r.band == "mid"),
        "zero_above_sum_H": all(r.max_rev is None or r.max_rev <= 1e-12
                                for r in rows if r.price >= zero_from),
        "every_price_has_equilibrium": all(r.n_equilibria > 0 for r in rows),
    }
    return checks


def cmd_proptest(args) -> int:
    if args.suite not in SUITES:
        raise ParseError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    seed = 0 if args.seed is None else args.seed
    res = run_suite(args.suite, trials=args.trials, seed=seed)
    out = Outputs(_out_dir(args, None))
    out.add(f"proptest_{args.suite}.json", dump_json(res.to_json()))
    out.flush()
    status = "pass" if res.passed else "FAIL"
    print(f"proptest {args.suite}: {status} ({res.trials} trials, seed {seed})")
    if not res.passed:
        print(res.failure)
        print(f"reproduce: bundleduel proptest {args.suite} --trials {res.trials} --seed {seed}")
    return EXIT_OK if res.passed else EXIT_CHECK


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 3), not check failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INPUT)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bundleduel", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", type=str, default=None, help="experiment config (INI)")
        p.add_argument("--seed", type=int, default=None, help="override seeds with a single seed")
        p.add_argument("--out", type=str, default=None, help=f"output directory (env {OUT_ENV})")

    p = sub.add_parser("analyze", help="per-item and instance-level benchmark report")
    p.add_argument("files", nargs="*", help="distribution files")
    common(p)
    p.set_defaults(func=cmd_analyze)
    p = sub.add_parser("solve", help="certified equilibria for an instance and menu")
    common(p)
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("sweep", help="grand-bundle price sweep")
    common(p)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("proptest", help="randomized property suite")
    p.add_argument("suite", help=", ".join(SUITES))
    p.add_argument("--trials", type=int, default=100)
    common(p)
    p.set_defaults(func=cmd_proptest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("solve", "sweep") and not args.config:
        parser.error(f"{args.command} needs --config")
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (BudgetExceeded, GridOverflow) as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (BundleDuelError, ValueError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
