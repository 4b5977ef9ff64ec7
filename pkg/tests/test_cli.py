import json
import math
import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from logdiff import Grid1D, save_snapshot
from logdiff.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main
from logdiff.experiments import (ConfigError, ExperimentSpec, InitialDataSpec, load_spec, resolve_threads,
                                 spec_from_dict, sweep)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SMALL = """
name = "small"
suites = ["mass", "monotone", "positivity", "mild"]
[grid]
n = 128
L = 15.0
[time]
t_end = 0.3
dt = 0.05
[initial]
kind = "gaussian"
amplitude = 3.0
"""


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def run(*argv):
    return main([str(a) for a in argv])


class TestSpecs:
    # the Poisson profile has an algebraic tail, flagged at load
    @pytest.mark.filterwarnings("ignore:initial data is not negligible")
    @pytest.mark.parametrize("name", ["gaussian.toml", "linear_poisson.toml", "zero.toml"])
    def test_shipped_configs_load(self, name):
        spec = load_spec(CONFIGS / name)
        assert spec_from_dict(spec.to_dict()) == spec

    def test_json_equivalent(self, small, tmp_path):
        p = tmp_path / "s.json"
        p.write_text(json.dumps(load_spec(small).to_dict()))
        assert load_spec(p) == load_spec(small)

    @pytest.mark.parametrize("bad, field", [
        ({"grid": {"n": 100}}, "grid"),
        ({"grid": {"m": 3}}, "grid.m"),
        ({"time": {"dt": "fast"}}, "time.dt"),
        ({"time": {"dt": -1.0}}, "run parameters"),
        ({"initial": {"kind": "gaussian", "width": 0.0}}, "initial.width"),
        ({"initial": {"kind": "triangle"}}, "initial.kind"),
        ({"nonlinearity": {"kind": "cubic"}}, "nonlinearity.kind"),
        ({"suites": ["mass", "nope"]}, "suites"),
        ({"extra": 1}, "extra"),
    ])
    def test_errors_name_the_field(self, bad, field):
        with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
            spec_from_dict({"name": "x", **bad})

    def test_name_required(self):
        with pytest.raises(ConfigError, match="name"):
            spec_from_dict({})

    def test_toml_syntax_error_has_location(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text('name = "x"\n[grid\nn = 8\n')
        with pytest.raises(ConfigError, match="line 2"):
            load_spec(p)

    def test_from_file_grid_mismatch(self, tmp_path):
        g = Grid1D(64, 5.0)
        save_snapshot(tmp_path / "f.json", g.zeros(), 0.0)
        ini = InitialDataSpec("from_file", {"path": str(tmp_path / "f.json")})
        assert np.all(ini.sample(g).values == 0)
        with pytest.raises(ConfigError, match="does not match"):
            ini.sample(Grid1D(128, 5.0))

    def test_boundary_warning(self):
        with pytest.warns(UserWarning, match="boundary"):
            InitialDataSpec("gaussian", {"width": 10.0}).sample(Grid1D(64, 5.0))

    def test_scaling(self):
        s = InitialDataSpec("double_bump", {"amplitude": 1.0})
        assert s.scaled(3.0).value("amplitude2") == 3.0
        with pytest.raises(ConfigError):
            InitialDataSpec("zero").scaled(2.0)


class TestCommands:
    def test_zero_spec_solves(self, tmp_path):
        out = tmp_path / "zero"
        assert run("solve", "--config", CONFIGS / "zero.toml", "--out", out) == EXIT_OK
        rep = json.loads((out / "report.json").read_text())
        assert rep["passed"] and set(rep["suites"]) == {"mass", "monotone", "positivity"}

    def test_artifacts(self, small, tmp_path, capsys):
        out = tmp_path / "o"
        assert run("solve", "--config", small, "--out", out) == EXIT_OK
        assert sorted(p.name for p in out.iterdir()) == ["diagnostics.csv", "report.json", "spec.json",
                                                           "trajectory.json"]
        lines = (out / "diagnostics.csv").read_text().splitlines()
        assert lines[0] == "t,mass,l1,l2,l4,linf,lx,energy,min,max" and len(lines) == 8
        assert "small: PASS" in capsys.readouterr().out

    def test_reruns_are_byte_identical(self, small, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run("solve", "--config", small, "--out", a, "--seed", 3)
        run("solve", "--config", small, "--out", b, "--seed", 3)
        for name in ("diagnostics.csv", "report.json", "spec.json", "trajectory.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_seed_override_recorded(self, small, tmp_path):
        run("solve", "--config", small, "--out", tmp_path / "o", "--seed", 11)
        assert json.loads((tmp_path / "o" / "spec.json").read_text())["seed"] == 11

    @pytest.mark.parametrize("text", ['name = "x"\n[grid]\nn = 100\n', 'name = "x"\n[grid\n', "name = 3\n"])
    def test_malformed_config_writes_nothing(self, tmp_path, text, capsys):
        p = tmp_path / "bad.toml"
        p.write_text(text)
        out = tmp_path / "never"
        assert run("solve", "--config", p, "--out", out) == EXIT_CONFIG
        assert not out.exists()
        assert "config error" in capsys.readouterr().err

    def test_missing_config_and_unknown_suite(self, small, tmp_path):
        assert run("solve", "--config", tmp_path / "nope.toml") == EXIT_CONFIG
        assert run("verify", "--config", small, "--suite", "mass,bogus") == EXIT_CONFIG
        assert run("frobnicate") == EXIT_CONFIG

    def test_verify_suite_subset(self, small, tmp_path):
        out = tmp_path / "v"
        assert run("verify", "--config", small, "--out", out, "--suite", "mass,inequalities") == EXIT_OK
        assert set(json.loads((out / "report.json").read_text())["suites"]) == {"mass", "inequalities"}

    def test_solver_failure_exits_one(self, tmp_path):
        p = tmp_path / "hard.toml"
        p.write_text('name = "hard"\n[grid]\nn = 64\nL = 10.0\n[time]\nt_end = 1.0\ndt = 1.0\n'
                     '[solver]\nmax_newton_iters = 1\n[initial]\nkind = "gaussian"\namplitude = 50.0\n')
        out = tmp_path / "o"
        assert run("solve", "--config", p, "--out", out) == EXIT_FAIL
        rep = json.loads((out / "report.json").read_text())
        assert "t=1.0" in rep["error"]

    def test_transport_needs_log1p(self, tmp_path):
        spec = load_spec(CONFIGS / "zero.toml")
        p = tmp_path / "lin.json"
        d = spec.to_dict() | {"nonlinearity": {"kind": "linear"}, "suites": ["transport"]}
        p.write_text(json.dumps(d))
        assert run("transport", "--config", p) == EXIT_CONFIG

    def test_transport(self, small, tmp_path):
        out = tmp_path / "t"
        assert run("transport", "--config", small, "--out", out) == EXIT_OK
        recs = sorted((out / "transport").iterdir())
        assert len(recs) == 7 and recs[0].read_text().startswith("y,v\n")
        res = (out / "transport_residual.csv").read_text().splitlines()
        assert res[0] == "t,residual_l2" and len(res) == 7
        assert json.loads((out / "transport_report.json").read_text())["passed"]

    def test_sweep_and_inspect(self, small, tmp_path, capsys):
        out = tmp_path / "s"
        assert run("sweep", "--config", small, "--out", out, "--axis", "dt", "--values", "0.1,0.05,0.025") == EXIT_OK
        rows = (out / "convergence.csv").read_text().splitlines()
        assert rows[0] == "value,error,order" and len(rows) == 3
        rep = json.loads((out / "sweep.json").read_text())
        assert rep["axis"] == "dt" and len(rep["points"]) == 3
        capsys.readouterr()
        for f in ("sweep.json", "convergence.csv"):
            assert run("inspect", out / f) == EXIT_OK
        assert "rows" in capsys.readouterr().out

    def test_sweep_bad_values(self, small):
        assert run("sweep", "--config", small, "--axis", "dt", "--values", "a,b") == EXIT_CONFIG
        assert run("sweep", "--config", small, "--axis", "temperature", "--values", "1") == EXIT_CONFIG

    def test_inspect_kinds(self, small, tmp_path, capsys):
        out = tmp_path / "o"
        run("solve", "--config", small, "--out", out)
        g = Grid1D(16, 1.0)
        save_snapshot(tmp_path / "snap.json", g.zeros(), 0.5)
        capsys.readouterr()
        for f in (out / "trajectory.json", out / "report.json", tmp_path / "snap.json"):
            assert run("inspect", f) == EXIT_OK
        text = capsys.readouterr().out
        assert "trajectory n=128" in text and "report small PASS" in text and "field n=16" in text
        (tmp_path / "broken.json").write_text("{")
        assert run("inspect", tmp_path / "broken.json") == EXIT_CONFIG
        assert run("inspect", tmp_path / "absent.json") == EXIT_CONFIG


class TestSweepLibrary:
    def test_amplitude_sweep_reports_smoothing(self, small):
        rep = sweep(load_spec(small), "amplitude", [1.0, 2.0, 4.0])
        assert rep["smoothing"]["passed"] and rep["convergence"] == []

    def test_failures_are_recorded(self, small):
        rep = sweep(load_spec(small), "n", [128, 100])
        assert rep["points"][0]["passed"] and not rep["points"][1]["passed"]
        assert "power of two" in rep["points"][1]["error"]

    def test_threads_match_serial(self, small):
        spec = load_spec(small)
        a = sweep(spec, "dt", [0.1, 0.05], threads=1)
        b = sweep(spec, "dt", [0.1, 0.05], threads=2)
        assert a["convergence"] == b["convergence"]

    def test_thread_resolution(self, monkeypatch):
        monkeypatch.setenv("LOGDIFF_THREADS", "3")
        assert resolve_threads(None) == 3 and resolve_threads(2) == 2
        monkeypatch.setenv("LOGDIFF_THREADS", "lots")
        with pytest.raises(ConfigError):
            resolve_threads(None)

    def test_console_script(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "logdiff.cli", "solve", "--config", str(CONFIGS / "zero.toml")],
                           capture_output=True, text=True)
        assert r.returncode == 0 and "zero: PASS" in r.stdout
