"""Text formats for distributions, menus and experiment configs.

Distribution file::

    # grid_step=0.1 max_value=100
    0<TAB>0.9
    100<TAB>0.1

Menu file (items 1-based), one of::

    grand 100.1
    partition {1,2}=10 {3,4}=730
    explicit {1}=2 {1,2}=3

Experiment config (INI sections; input paths resolve against the config file's
directory, the output directory against the working directory)::

    [instance]
    # either files, or a generator
    files = a.txt, b.txt
    generator = binary          ; binary | point_mass | counterexample
    count = 2
    grid_step = 0.1
    max_value = 100
    high = 100
    prob_high = 0.1
    value = 1                   ; point_mass
    K = 3                       ; counterexample
    n = 2

    [menu]
    file = menu.txt             ; or
    spec = grand 100.1          ; or
    bundle_price = formula      ; grand bundle at the benchmark price

    [solver]
    price_step = 0.1
    seeds = 0, 1, 2, 3, 4
    max_iters = 2000
    tolerance = 1e-9
    budget = 2000000

    [sweep]
    prices = 10, 100, 1000      ; or count/per_decade/high
    count = 120
    per_decade = 40
    high = 2187

    [output]
    dir = out
"""
from __future__ import annotations

import configparser
import json
import math
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dist import DiscreteDistribution, ValueGrid, binary, make_distribution, point_mass
from .errors import BundleDuelError, ParseError
from .market import Menu, explicit_menu, grand_bundle, partition_menu

OUT_ENV = "BUNDLEDUEL_OUT"

_HEADER = re.compile(r"#\s*grid_step=(\S+)\s+max_value=(\S+)\s*$")
_ENTRY = re.compile(r"\{([^{}]*)\}=(\S+)")


def _number(text: str, path, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", line=line, path=path) from None


def parse_distribution(text: str, path=None) -> DiscreteDistribution:
    grid = None
    atoms = []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if grid is None:
            m = _HEADER.match(line)
            if not m:
                raise ParseError("expected header '# grid_step=<step> max_value=<max>'", line=n, path=path)
            try:
                grid = ValueGrid(_number(m.group(1), path, n), _number(m.group(2), path, n))
            except BundleDuelError as exc:
                raise ParseError(str(exc), line=n, path=path) from None
            except ValueError as exc:
                raise ParseError(str(exc), line=n, path=path) from None
            continue
        if line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) != 2:
            raise ParseError("expected 'value<TAB>prob'", line=n, path=path)
        atoms.append((_number(parts[0], path, n), _number(parts[1], path, n)))
    if grid is None:
        raise ParseError("empty distribution file", line=1, path=path)
    try:
        return make_distribution(grid, atoms)
    except (BundleDuelError, ValueError) as exc:
        raise ParseError(str(exc), line=None, path=path) from None


def load_distribution(path) -> DiscreteDistribution:
    return parse_distribution(Path(path).read_text(), path=str(path))


def format_distribution(d: DiscreteDistribution) -> str:
    lines = [f"# grid_step={d.grid.step!r} max_value={d.grid.max_value!r}"]
    for v, p in d.atoms:
        lines.append(f"{v!r}\t{p!r}")
    return "\n".join(lines) + "\n"


def parse_menu(text: str, m: int, path=None) -> Menu:
    lines = [(n, ln.strip()) for n, ln in enumerate(text.splitlines(), start=1)]
    lines = [(n, ln) for n, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ParseError("empty menu", line=1, path=path)
    n, head = lines[0]
    body = " ".join(ln for _, ln in lines)
    kind, _, rest = body.partition(" ")
    try:
        if kind == "grand":
            return grand_bundle(m, _number(rest.strip(), path, n))
        if kind in ("partition", "explicit"):
            entries = []
            pos = 0
            rest = rest.strip()
            for match in _ENTRY.finditer(rest):
                if rest[pos:match.start()].strip():
                    raise ParseError(f"unexpected text {rest[pos:match.start()].strip()!r}", line=n, path=path)
                pos = match.end()
                items = []
                for tok in match.group(1).split(","):
                    tok = tok.strip()
                    if not tok:
                        continue
                    if not tok.isdigit() or int(tok) < 1:
                        raise ParseError(f"bad item index {tok!r} (items are 1-based)", line=n, path=path)
                    items.append(int(tok) - 1)
                entries.append((items, _number(match.group(2), path, n)))
            if rest[pos:].strip():
                raise ParseError(f"unexpected text {rest[pos:].strip()!r}", line=n, path=path)
            if not entries:
                raise ParseError(f"{kind} menu has no entries", line=n, path=path)
            if kind == "partition":
                return partition_menu(m, entries)
            return explicit_menu(m, entries)
    except ParseError:
        raise
    except (BundleDuelError, ValueError) as exc:
        raise ParseError(str(exc), line=n, path=path) from None
    raise ParseError(f"unknown menu kind {kind!r}", line=n, path=path)


def load_menu(path, m: int) -> Menu:
    return parse_menu(Path(path).read_text(), m, path=str(path))


# ---------------------------------------------------------------------------
# Experiment config


@dataclass
class ExperimentConfig:
    instance: dict = field(default_factory=dict)
    menu: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    output_dir: str = "out"
    base_dir: str = "."

    def to_json(self) -> dict:
        out = asdict(self)
        out["schema"] = 1
        return out

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q

    # typed accessors -----------------------------------------------------

    def solver_float(self, key, default):
        return float(self.solver.get(key, default))

    def solver_int(self, key, default):
        return int(float(self.solver.get(key, default)))

    def seeds(self, override=None):
        if override is not None:
            return (int(override),)
        raw = self.solver.get("seeds", "0, 1, 2, 3, 4")
        return tuple(int(s) for s in raw.replace(",", " ").split())


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ParseError(str(exc), line=line, path=str(path)) from None
    known = {"instance", "menu", "solver", "sweep", "output", "checks"}
    for sec in parser.sections():
        if sec not in known:
            raise ParseError(f"unknown section [{sec}]", path=str(path))
    sect = lambda name: dict(parser[name]) if parser.has_section(name) else {}
    out = sect("output").get("dir", "out")
    return ExperimentConfig(
        instance=sect("instance"),
        menu=sect("menu"),
        solver=sect("solver"),
        sweep=sect("sweep"),
        output_dir=os.environ.get(OUT_ENV, out),
        base_dir=str(path.parent),
    )


def build_instance(cfg: ExperimentConfig):
    """Returns (dists, counterexample spec or None)."""
    from .theory import build_counterexample

    inst = cfg.instance
    try:
        if "files" in inst:
            files = [f.strip() for f in inst["files"].split(",") if f.strip()]
            return [load_distribution(cfg.resolve(f)) for f in files], None
        gen = inst.get("generator")
        if gen == "counterexample":
            instance, spec = build_counterexample(
                int(inst.get("K", 3)), int(inst.get("n", 2)), float(inst.get("grid_step", 1.0))
            )
            return list(instance.dists), spec
        count = int(inst.get("count", 2))
        grid = ValueGrid(float(inst["grid_step"]), float(inst["max_value"]))
        if gen == "binary":
            d = binary(grid, float(inst["high"]), float(inst["prob_high"]))
        elif gen == "point_mass":
            d = point_mass(grid, float(inst["value"]))
        else:
            raise ParseError(f"unknown instance generator {gen!r}")
        return [d] * count, None
    except KeyError as exc:
        raise ParseError(f"[instance] missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ParseError(f"[instance] {exc}") from None


def sweep_prices(cfg: ExperimentConfig, default_high=None) -> list:
    from .theory import log_spaced_prices

    sw = cfg.sweep
    if "prices" in sw:
        return [float(x) for x in sw["prices"].replace(",", " ").split()]
    high = float(sw.get("high", default_high if default_high is not None else 0))
    if high <= 0:
        raise ParseError("[sweep] needs prices or a positive high")
    return log_spaced_prices(high, int(sw.get("count", 120)), int(sw.get("per_decade", 40)))


def _finite(obj):
    """Replace non-finite floats by strings so the output is strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return _finite(obj.item())
    return obj


def dump_json(obj) -> str:
    return json.dumps(_finite(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"
