import csv
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from mutsis import cli
from mutsis import config as cfgmod
from mutsis.config import ConfigError, ExplicitSequence, parse_config
from mutsis.spectral import BoundCheck
from mutsis.svg import Chart

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SVG_NS = "{http://www.w3.org/2000/svg}"


def small_mobility(tmp_path, **extra):
    body = {"schema_version": 1, "model": "mobility", "n": 12, "horizon": 40, "seed": 3, **extra}
    path = tmp_path / "small.yaml"
    path.write_text("\n".join(f"{k}: {v}" for k, v in body.items()) + "\n")
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestSimulate:
    def test_outputs(self, tmp_path):
        out = tmp_path / "run"
        assert cli.main(["simulate", "--config", str(small_mobility(tmp_path)), "--out", str(out)]) == 0
        for name in ("config.yaml", "trajectory.csv", "rho.csv", "avg_infection.svg", "rho.svg"):
            assert (out / name).is_file(), name
        assert not (out / "controller_trace.csv").exists()
        rows = read_csv(out / "trajectory.csv")
        assert rows[0] == ["k", "avg_infection", "state_norm", "rho_M"]
        assert len(rows) == 42
        for name in ("avg_infection.svg", "rho.svg"):
            root = ET.parse(out / name).getroot()
            assert root.tag == SVG_NS + "svg" and root.get("version") == "1.1"

    def test_deterministic_bytes(self, tmp_path):
        cfg = small_mobility(tmp_path, controller="distributed")
        for d in ("a", "b"):
            assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / d), "--per-node"]) == 0
        for name in ("trajectory.csv", "rho.csv", "controller_trace.csv", "rho.svg", "config.yaml"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_centralized_run(self, tmp_path, capsys):
        out = tmp_path / "c"
        cfg = small_mobility(tmp_path)
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(out), "--controller", "centralized",
                         "--horizon", "150"]) == 0
        assert "rho < 1 from k=" in capsys.readouterr().out
        rho = [float(r[1]) for r in read_csv(out / "rho.csv")[1:]]
        assert len(rho) == 151 and max(rho[-50:]) < 1
        trace = read_csv(out / "controller_trace.csv")
        assert trace[0][0] == "k" and len(trace) == 1 + 151 * 12
        assert "controller: centralized" in (out / "config.yaml").read_text()

    def test_horizon_zero(self, tmp_path):
        out = tmp_path / "z"
        assert cli.main(["simulate", "--config", str(small_mobility(tmp_path)), "--out", str(out),
                         "--horizon", "0"]) == 0
        assert len(read_csv(out / "trajectory.csv")) == 2
        root = ET.parse(out / "avg_infection.svg").getroot()
        assert len(root.findall(f".//{SVG_NS}circle")) == 1
        assert not root.findall(f".//{SVG_NS}polyline")

    def test_stride_leaves_gaps(self, tmp_path):
        out = tmp_path / "s"
        assert cli.main(["simulate", "--config", str(small_mobility(tmp_path)), "--out", str(out),
                         "--stride", "10"]) == 0
        assert [r[0] for r in read_csv(out / "rho.csv")[1:]] == ["0", "10", "20", "30", "40"]
        rows = read_csv(out / "trajectory.csv")
        assert rows[2][3] == "" and rows[11][3] != ""


class TestAnalyze:
    def test_stable_constant(self, tmp_path, capsys):
        out = tmp_path / "a"
        assert cli.main(["analyze", "--config", str(CONFIGS / "stable_constant.yaml"), "--out", str(out)]) == 0
        text = (out / "certificate_T1.txt").read_text()
        assert "verdict: premises_hold" in text
        omega = float((out / "decay.txt").read_text().split("omega=")[1].split()[0])
        assert omega < 1
        assert "violations: 0" in (out / "decrease_T1.txt").read_text() or \
            "violations:" not in (out / "decrease_T1.txt").read_text()

    def test_rho_spike_lists_step(self, tmp_path):
        out = tmp_path / "r"
        assert cli.main(["analyze", "--config", str(CONFIGS / "rho_spike.yaml"), "--out", str(out)]) == 0
        text = (out / "certificate_T1.txt").read_text()
        assert "premises_fail" in text and "spectral_radius [k=50]" in text
        assert "skipped" in (out / "decrease_T2.txt").read_text()

    def test_healthy_start(self, tmp_path):
        src = (CONFIGS / "stable_constant.yaml").read_text().replace("x0: [0.9, 0.3, 0.6]", "x0: [0, 0, 0]")
        cfg = tmp_path / "h.yaml"
        cfg.write_text(src)
        out = tmp_path / "h"
        assert cli.main(["analyze", "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / "decay.txt").read_text() == "already healthy\n"

    def test_from_run_directory(self, tmp_path):
        run = tmp_path / "run"
        assert cli.main(["simulate", "--config", str(small_mobility(tmp_path)), "--out", str(run),
                         "--controller", "distributed"]) == 0
        out = tmp_path / "an"
        assert cli.main(["analyze", "--run", str(run), "--out", str(out)]) == 0
        assert "theorem: T4" in (out / "controller_hypotheses.txt").read_text()

    def test_missing_run_directory(self, tmp_path):
        assert cli.main(["analyze", "--run", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 1


class TestVerifyBounds:
    @pytest.mark.parametrize("name", ["stable_constant", "slow_varying"])
    def test_passes(self, tmp_path, name, capsys):
        out = tmp_path / name
        assert cli.main(["verify-bounds", "--config", str(CONFIGS / f"{name}.yaml"), "--out", str(out),
                         "--fmax", "16"]) == 0
        assert "0 violated" in capsys.readouterr().out
        assert (out / "bounds.txt").is_file()

    def test_unstable_is_not_asserted(self, tmp_path, capsys):
        assert cli.main(["verify-bounds", "--config", str(CONFIGS / "rho_spike.yaml"),
                         "--out", str(tmp_path / "u")]) == 0
        assert "bounds not asserted" in capsys.readouterr().out

    def test_violation_exit_code(self, tmp_path, monkeypatch):
        real = cli.verify_appendix_bounds

        def broken(*args, **kwargs):
            report = real(*args, **kwargs)
            report.checks.append(BoundCheck("power_bound", 0, 2.0, 1.0))
            return report

        monkeypatch.setattr(cli, "verify_appendix_bounds", broken)
        code = cli.main(["verify-bounds", "--config", str(CONFIGS / "stable_constant.yaml"),
                         "--out", str(tmp_path / "v"), "--fmax", "4"])
        assert code == 3

    def test_bad_epsilon(self, tmp_path):
        assert cli.main(["verify-bounds", "--config", str(CONFIGS / "stable_constant.yaml"),
                         "--out", str(tmp_path / "e"), "--epsilon", "1.5"]) == 1


class TestErrors:
    def test_config_error_has_line_number(self, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("schema_version: 1\nn: 10\nfoo: 3\n")
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "bad.yaml:3:1: unknown key 'foo'" in capsys.readouterr().err

    def test_assumption_error_names_step_and_node(self, tmp_path, capsys):
        cfg = tmp_path / "x.yaml"
        cfg.write_text((CONFIGS / "rho_spike.yaml").read_text().replace("delta: [0.0]", "delta: [3.0]"))
        assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        err = capsys.readouterr().err
        assert "step 26, node 0" in err

    def test_bad_seeds(self, tmp_path):
        cfg = small_mobility(tmp_path)
        assert cli.main(["batch", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seeds", "a-b"]) == 1
        assert cli.main(["batch", "--config", str(cfg), "--out", str(tmp_path / "b"),
                         "--controller", "bogus"]) == 1


class TestBatch:
    def test_parallel_matches_serial(self, tmp_path):
        cfg = small_mobility(tmp_path, horizon=20)
        base = ["batch", "--config", str(cfg), "--seeds", "0-1", "--controller", "none,centralized"]
        assert cli.main(base + ["--out", str(tmp_path / "s")]) == 0
        assert cli.main(base + ["--out", str(tmp_path / "p"), "--jobs", "2"]) == 0
        serial = sorted(p.relative_to(tmp_path / "s") for p in (tmp_path / "s").rglob("*") if p.is_file())
        parallel = sorted(p.relative_to(tmp_path / "p") for p in (tmp_path / "p").rglob("*") if p.is_file())
        assert serial == parallel and len(serial) == 1 + 2 * 5 + 2 * 6
        for rel in serial:
            assert (tmp_path / "s" / rel).read_bytes() == (tmp_path / "p" / rel).read_bytes()
        rows = read_csv(tmp_path / "s" / "batch_summary.csv")
        assert [r[:2] for r in rows[1:]] == [["none", "0"], ["none", "1"], ["centralized", "0"], ["centralized", "1"]]

    def test_parse_seeds(self):
        assert cli.parse_seeds("0-3,7") == [0, 1, 2, 3, 7]
        with pytest.raises(ConfigError):
            cli.parse_seeds(",")


def test_module_help():
    res = subprocess.run([sys.executable, "-m", "mutsis", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "simulate" in res.stdout and "verify-bounds" in res.stdout


class TestConfig:
    @pytest.mark.parametrize("name", ["default", "n1000", "stable_constant", "rho_spike", "slow_varying"])
    def test_round_trip(self, name):
        cfg = cfgmod.load_config(CONFIGS / f"{name}.yaml")
        again = parse_config(cfgmod.dump_config(cfg))
        assert cfgmod.to_dict(again) == cfgmod.to_dict(cfg)

    def test_interpolation(self):
        cfg = cfgmod.load_config(CONFIGS / "rho_spike.yaml")
        seq = ExplicitSequence(cfg)
        assert len(seq) == 101
        assert seq.step_at(25).delta[0] == pytest.approx(0.5)
        assert seq.step_at(50).delta[0] == 0.0
        assert seq.step_at(500).delta[0] == 1.0

    @pytest.mark.parametrize("text, fragment", [
        ("schema_version: 2\n", "schema_version"),
        ("schema_version: 1\nn: true\n", "t.yaml:2:1: n must be integer"),
        ("- 1\n- 2\n", "mapping"),
        ("schema_version: 1\nmodel: explicit\nh: 0.1\nhorizon: 5\nx0: [0.1]\nsteps: []\n", "steps"),
        ("schema_version: 1\nmodel: explicit\nh: 0.1\nhorizon: 5\nx0: [0.1, 0.2]\nsteps:\n  - {A: [[1]], beta: [1], delta: [0]}\n",
         "x0"),
        ("schema_version: 1\nn: 5\ncontroller: smart\n", "controller"),
    ])
    def test_rejects(self, text, fragment):
        with pytest.raises((ConfigError, ValueError), match=fragment):
            parse_config(text, "t.yaml")

    def test_override(self):
        cfg = cfgmod.load_config(CONFIGS / "default.yaml")
        o = cfgmod.override(cfg, seed=5, controller="distributed", horizon=10, stride=0)
        assert (o.seed, o.controller, o.horizon, o.rho_stride) == (5, "distributed", 10, 0)
        assert cfg.seed == 0


class TestSvg:
    def test_nan_gap_splits_series(self):
        svg = Chart("t", "x", "y").add("s", [0, 1, 2, 3, 4], [1, 2, np.nan, 3, 4]).render()
        root = ET.fromstring(svg)
        assert len(root.findall(f".//{SVG_NS}polyline")) == 2

    def test_deterministic_and_escaped(self):
        c = Chart("a < b & c", "x", "y", hlines=[(1.0, "one")]).add("s", [0, 1], [0.5, 2.0])
        assert c.render() == c.render()
        root = ET.fromstring(c.render())
        assert any(t.text == "a < b & c" for t in root.iter(f"{SVG_NS}text"))
