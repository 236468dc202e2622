"""File formats, experiment configs and the command-line front end."""
import json
import subprocess
import sys
from pathlib import Path

import pytest

from bundleduel.cli import main
from bundleduel.dist import ValueGrid, binary
from bundleduel.errors import ParseError
from bundleduel.io import (
    OUT_ENV,
    build_instance,
    dump_json,
    format_distribution,
    load_config,
    parse_distribution,
    parse_menu,
    sweep_prices,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(path, text):
    path.write_text(text)
    return path


class TestDistributionFormat:
    def test_round_trip(self):
        d = binary(ValueGrid(0.1, 100.0), 100, 0.1)
        assert parse_distribution(format_distribution(d)).atoms == d.atoms

    def test_whitespace_and_comments(self):
        d = parse_distribution("# grid_step=0.5 max_value=2\n\n# a comment\n0.5 0.5\n2\t0.5\n")
        assert list(d.atoms) == [(0.5, 0.5), (2.0, 0.5)]

    @pytest.mark.parametrize(
        "text,line",
        [
            ("0 1\n", 1),
            ("# grid_step=1 max_value=2\n1\t0.5\n2\tabc\n", 3),
            ("# grid_step=1 max_value=2\n1 0.5 7\n", 2),
            ("\n\n# grid_step=0.3 max_value=1\n", 3),
        ],
    )
    def test_errors_carry_line(self, text, line):
        with pytest.raises(ParseError) as info:
            parse_distribution(text, path="f.txt")
        assert info.value.line == line
        assert str(info.value).startswith(f"f.txt:{line}:")

    def test_bad_probabilities(self):
        with pytest.raises(ParseError):
            parse_distribution("# grid_step=1 max_value=2\n1\t0.5\n2\t0.4\n")


class TestMenuFormat:
    def test_grand(self):
        menu = parse_menu("grand 100.1", 2)
        assert menu.kind == "grand" and menu.price == 100.1

    def test_partition_is_one_based(self):
        menu = parse_menu("partition {1,2}=10 {3,4}=730", 4)
        assert menu.blocks == ((frozenset({0, 1}), 10.0), (frozenset({2, 3}), 730.0))

    def test_explicit_over_lines(self):
        menu = parse_menu("# comment\nexplicit {1}=0.7\n{1,2}=1.0\n", 2)
        assert menu.kind == "explicit" and len(menu.entries) == 2

    @pytest.mark.parametrize(
        "text,line",
        [
            ("\n\nauction 3", 3),
            ("grand x", 1),
            ("partition {0,1}=2", 1),
            ("partition {1,2}=2 junk", 1),
            ("partition {1,2}=2 {2,3}=1", 1),
            ("explicit", 1),
        ],
    )
    def test_errors_carry_line(self, text, line):
        with pytest.raises(ParseError) as info:
            parse_menu(text, 3)
        assert info.value.line == line


class TestConfig:
    def test_claim_config(self):
        cfg = load_config(CONFIGS / "claim_unique_ne.ini")
        dists, spec = build_instance(cfg)
        assert len(dists) == 2 and spec is None
        assert cfg.seeds() == (0, 1, 2, 3, 4) and cfg.seeds(7) == (7,)
        assert cfg.solver_float("tolerance", 0) == 1e-9

    def test_sweep_config(self):
        cfg = load_config(CONFIGS / "separation_sweep.ini")
        prices = sweep_prices(cfg)
        assert len(prices) == 120 and prices[-1] == pytest.approx(2187)

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ParseError):
            load_config(_write(tmp_path / "c.ini", "[instances]\nfiles = a\n"))

    def test_syntax_error_reports_line(self, tmp_path):
        with pytest.raises(ParseError) as info:
            load_config(_write(tmp_path / "c.ini", "[instance]\ncount = 2\nno equals sign here\n"))
        assert info.value.line == 3

    def test_env_overrides_output(self, tmp_path, monkeypatch):
        monkeypatch.setenv(OUT_ENV, str(tmp_path / "elsewhere"))
        cfg = load_config(CONFIGS / "point_mass.ini")
        assert cfg.output_dir == str(tmp_path / "elsewhere")

    def test_config_serializes(self):
        cfg = load_config(CONFIGS / "point_mass.ini")
        assert json.loads(dump_json(cfg.to_json()))["schema"] == 1

    def test_strict_json(self):
        text = dump_json({"b": float("inf"), "a": [float("nan"), -float("inf")]})
        assert json.loads(text) == {"a": ["nan", "-inf"], "b": "inf"}
        assert text.index('"a"') < text.index('"b"')


def _run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


class TestCli:
    def test_analyze_binary(self, tmp_path, capsys):
        f = str(CONFIGS / "binary100.txt")
        code, _ = _run(["analyze", f, f, "--out", str(tmp_path)], capsys)
        assert code == 0
        rep = json.loads((tmp_path / "analysis.json").read_text())
        assert rep["schema"] == 1 and rep["K"] == 1.0
        item = rep["items"][0]
        assert item["r"] == 100.0 and item["revenue_at_r"] == pytest.approx(10.0)
        assert item["mu_r"] == pytest.approx(10.0)

    def test_analyze_equal_revenue(self, tmp_path, capsys):
        f = str(CONFIGS / "equal_revenue.txt")
        code, cap = _run(["analyze", f, f, "--out", str(tmp_path)], capsys)
        assert code == 0
        rep = json.loads((tmp_path / "analysis.json").read_text())
        assert rep["hypothesis_ok"] is False and "lambda=0" in rep["reasons"]
        assert "lambda=0" in cap.out

    def test_solve_claim(self, tmp_path, capsys):
        code, _ = _run(["solve", "--config", str(CONFIGS / "claim_unique_ne.ini"), "--out", str(tmp_path)], capsys)
        assert code == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["schema"] == 1
        assert "unique equilibrium" in summary["dominance_note"]
        certs = sorted((tmp_path / "certificates").glob("cert_*.json"))
        assert len(certs) == 1
        cert = json.loads(certs[0].read_text())
        assert cert["profile"] == [{"prices": [100.0], "probs": [1.0]}] * 2
        assert cert["epsilon"] == 0.0 and cert["principal_revenue"] >= 1.0

    def test_solve_point_mass(self, tmp_path, capsys):
        code, _ = _run(["solve", "--config", str(CONFIGS / "point_mass.ini"), "--out", str(tmp_path)], capsys)
        assert code == 0
        certs = [json.loads(p.read_text()) for p in (tmp_path / "certificates").glob("cert_*.json")]
        half = [c for c in certs if all(s["prices"] == [0.5] for s in c["profile"])]
        assert half and half[0]["principal_revenue"] == 0.0

    def test_solve_partition_writes_blocks(self, tmp_path, capsys):
        cfg = CONFIGS / "separation_partition.ini"
        code, _ = _run(["solve", "--config", str(cfg), "--out", str(tmp_path)], capsys)
        assert code == 0
        assert list((tmp_path / "certificates").glob("block_00_cert_*.json"))
        assert list((tmp_path / "certificates").glob("block_01_cert_*.json"))
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert [b["items"] for b in summary["blocks"]] == [[1, 2], [3, 4]]
        assert summary["min_revenue_found"] >= 2.0

    def test_outputs_are_byte_identical(self, tmp_path, capsys):
        cfg = str(CONFIGS / "claim_unique_ne.ini")
        a, b = tmp_path / "a", tmp_path / "b"
        assert _run(["solve", "--config", cfg, "--out", str(a)], capsys)[0] == 0
        assert _run(["solve", "--config", cfg, "--out", str(b)], capsys)[0] == 0
        files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
        assert files
        for rel in files:
            assert (a / rel).read_bytes() == (b / rel).read_bytes()

    def test_sweep_csv(self, tmp_path, capsys):
        cfg = _write(
            tmp_path / "s.ini",
            "[instance]\ngenerator = counterexample\nK = 3\nn = 1\n[sweep]\nprices = 3, 20, 27, 40\n",
        )
        code, _ = _run(["sweep", "--config", str(cfg), "--seed", "0", "--out", str(tmp_path / "o")], capsys)
        assert code == 0
        raw = (tmp_path / "o" / "sweep.csv").read_bytes()
        lines = raw.split(b"\r\n")
        assert lines[0] == b"price,min_rev,max_rev,n_equilibria,bound_36_flag"
        assert len([ln for ln in lines if ln]) == 5
        assert (tmp_path / "o" / "sweep_plot.dat").exists()
        data = json.loads((tmp_path / "o" / "sweep.json").read_text())
        assert all(data["checks"].values())

    def test_proptest(self, tmp_path, capsys):
        code, cap = _run(["proptest", "eq3", "--trials", "20", "--out", str(tmp_path)], capsys)
        assert code == 0 and "pass" in cap.out
        rep = json.loads((tmp_path / "proptest_eq3.json").read_text())
        assert rep["passed"] and rep["trials"] == 20

    def test_exit_codes_for_bad_input(self, tmp_path, capsys):
        bad = _write(tmp_path / "bad.txt", "# grid_step=1 max_value=2\n1\tx\n")
        code, cap = _run(["analyze", str(bad), "--out", str(tmp_path)], capsys)
        assert code == 3 and "bad.txt:2:" in cap.err
        assert _run(["proptest", "nosuch", "--out", str(tmp_path)], capsys)[0] == 3
        assert _run(["analyze", str(tmp_path / "missing.txt")], capsys)[0] == 3
        with pytest.raises(SystemExit) as info:
            main(["solve"])
        assert info.value.code == 3
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 3

    def test_budget_exit_code(self, tmp_path, capsys):
        cfg = _write(
            tmp_path / "b.ini",
            "[instance]\ngenerator = binary\ncount = 3\ngrid_step = 0.05\nmax_value = 1\nhigh = 1\n"
            "prob_high = 0.5\n[menu]\nspec = grand 1.2\n[solver]\nbudget = 10\nseeds = 0\n",
        )
        code, cap = _run(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")], capsys)
        assert code == 4
        assert json.loads((tmp_path / "o" / "summary.json").read_text())["budget_exceeded"] is True

    def test_console_script(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "bundleduel.cli", "analyze", str(CONFIGS / "binary100.txt"), "--out", str(tmp_path)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0 and "r=100" in proc.stdout
