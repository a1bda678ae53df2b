import csv
import json

import pytest
import yaml

from cosim.cli import main
from cosim.errors import ConfigError
from cosim.scenario import parse_scenario

LIN2_GS = {
    "model": "lin2",
    "t_end": 0.4,
    "params": {"a": 0.5, "b": 1.0},
    "integrator": {"h": 0.01},
    "coupling": {"mode": "gauss-seidel", "window": 0.1, "tol": 1e-10},
}

SMALL_EQS = {
    "model": "eqs-arr2d",
    "t_end": 6.0,
    "params": {"nx": 14, "ny": 14, "column_width": 5, "varistor_width": 3, "column_height": 9, "t_rise": 3.0},
    "integrator": {"h": 0.5},
}


def scenario(tmp_path, doc, name="s.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


class TestScenarioSchema:
    def test_defaults(self):
        scn = parse_scenario({"model": "cable"})
        assert scn.integrator["h"] == 60.0 and scn.t_end == 3600.0

    @pytest.mark.parametrize(
        "doc, key",
        [
            ({"model": "lin2", "bogus": 1}, "bogus"),
            ({"model": "lin2", "params": {"q": 1}}, "params.q"),
            ({"model": "lin2", "coupling": {"mode": "gauss-seidel"}}, "coupling.window"),
            ({"model": "lin2", "coupling": {"mode": "weak"}}, "coupling.sync_step"),
            ({"model": "lin2", "coupling": {"mode": "sor"}}, "coupling.mode"),
            ({"model": "lin2", "integrator": {"h": -1.0}}, "integrator.h"),
            ({"model": "lin2", "params": {"a": "x"}}, "params.a"),
            ({"model": "nope"}, "model"),
            ({"model": "user-dae", "params": {"factory": "nocolon"}}, "params.factory"),
            ({"model": "eqs-arr2d", "mor": {"p": [0]}}, "mor.p"),
            (
                {"model": "lin2", "coupling": {"mode": "weak", "sync_step": 0.1}, "study": {"parameter": "window", "values": [1, 2, 3]}},
                "study.parameter",
            ),
            ({"model": "lin2", "coupling": {"mode": "gauss-seidel"}, "study": {"parameter": "window", "values": [0.1, 0.2]}}, "study.values"),
        ],
    )
    def test_errors_name_the_key(self, doc, key):
        with pytest.raises(ConfigError) as info:
            parse_scenario(doc)
        assert info.value.key == key
        assert key in str(info.value)

    def test_hash_ignores_key_order(self):
        a = parse_scenario({"model": "lin2", "params": {"a": 0.5, "b": 1.0}})
        b = parse_scenario({"params": {"b": 1.0, "a": 0.5}, "model": "lin2"})
        assert a.config_hash == b.config_hash
        assert a.config_hash != parse_scenario({"model": "lin2", "params": {"a": 0.4}}).config_hash


class TestExitCodes:
    def test_validate(self, tmp_path, capsys):
        assert main(["validate", "--scenario", scenario(tmp_path, LIN2_GS)]) == 0
        assert "valid" in capsys.readouterr().out

    def test_config_error(self, tmp_path, capsys):
        bad = {**LIN2_GS, "coupling": {"mode": "gauss-seidel", "window": 0.1, "extra": 1}}
        assert main(["run", "--scenario", scenario(tmp_path, bad), "--out", str(tmp_path / "o")]) == 2
        assert "coupling.extra" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["run", "--scenario", str(tmp_path / "none.yaml")]) == 2

    def test_grid_mismatch_is_config_error(self, tmp_path):
        doc = {**LIN2_GS, "coupling": {"mode": "gauss-seidel", "window": 0.15}}
        assert main(["run", "--scenario", scenario(tmp_path, doc), "--out", str(tmp_path / "o")]) == 2

    def test_bad_thread_count(self, tmp_path, monkeypatch):
        monkeypatch.setenv("COSIM_THREADS", "zero")
        assert main(["run", "--scenario", scenario(tmp_path, LIN2_GS), "--out", str(tmp_path / "o")]) == 2

    def test_divergence_writes_diagnostics(self, tmp_path):
        doc = {**LIN2_GS, "params": {"a": 1.5, "b": 1.0}}
        out = tmp_path / "o"
        assert main(["run", "--scenario", scenario(tmp_path, doc), "--out", str(out)]) == 3
        diag = json.loads((out / "diagnostics.json").read_text())
        assert diag["error"] == "IterationDiverged" and diag["contraction_factor"] > 1.0
        assert manifest(out)["failure"] == "IterationDiverged"


class TestRun:
    def test_lin2_outputs(self, tmp_path):
        out = tmp_path / "o"
        assert main(["run", "--scenario", scenario(tmp_path, LIN2_GS), "--out", str(out), "--seed", "7"]) == 0
        rows = read_csv(out / "trajectory.csv")
        assert rows[0] == ["t [-]", "S1.y0 [-]", "S1.z0 [-]", "S2.y0 [-]", "S2.z0 [-]"]
        assert len(rows) == 42
        assert read_csv(out / "sweeps.csv")[0][5] == "delta_z [-]"
        m = manifest(out)
        assert m["seed"] == 7 and m["threads"] == 1
        assert m["alpha_jacobian"] == pytest.approx(0.5, abs=1e-6)
        assert len(m["config_sha256"]) == 64

    def test_output_times_and_prefix(self, tmp_path):
        doc = {**LIN2_GS, "output": {"times": [0.0, 0.2, 0.4], "prefix": "x_"}}
        out = tmp_path / "o"
        assert main(["run", "--scenario", scenario(tmp_path, doc), "--out", str(out)]) == 0
        assert len(read_csv(out / "x_trajectory.csv")) == 4

    def test_cable_weak(self, tmp_path):
        doc = {
            "model": "cable",
            "t_end": 600.0,
            "params": {"n_cells": 8},
            "integrator": {"h": 60.0},
            "coupling": {"mode": "weak", "sync_step": 120.0},
        }
        out = tmp_path / "o"
        assert main(["run", "--scenario", scenario(tmp_path, doc), "--out", str(out)]) == 0
        prof = read_csv(out / "profiles.csv")
        assert prof[0] == ["t [s]", "r [m]", "phi [V]", "E [kV/mm]", "T [degC]", "Q_E [W/m^3]"]
        assert len(prof) == 1 + 11 * 8
        assert len(read_csv(out / "sync.csv")) == 6

    def test_eqs_potential(self, tmp_path):
        out = tmp_path / "o"
        assert main(["run", "--scenario", scenario(tmp_path, SMALL_EQS), "--out", str(out)]) == 0
        assert len(read_csv(out / "potential.csv")) == 1 + 14 * 14

    def test_bit_identical_reruns(self, tmp_path):
        path = scenario(tmp_path, LIN2_GS)
        for d in ("a", "b"):
            assert main(["run", "--scenario", path, "--out", str(tmp_path / d)]) == 0
        for f in ("trajectory.csv", "sweeps.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


class TestStudies:
    def test_window_study_slope(self, tmp_path):
        doc = {
            "model": "lin2",
            "t_end": 0.8,
            "params": {"a": 0.0, "b": 1.0, "c1": 1.0},
            "integrator": {"h": 0.005},
            "coupling": {"mode": "gauss-seidel"},
            "study": {"parameter": "window", "values": [0.4, 0.2, 0.1, 0.05]},
        }
        out = tmp_path / "o"
        assert main(["convergence-study", "--scenario", scenario(tmp_path, doc), "--out", str(out)]) == 0
        fit = read_csv(out / "convergence_fit.csv")
        assert float(fit[1][0]) == pytest.approx(1.0, abs=0.3)
        assert len(read_csv(out / "convergence.csv")) == 5

    def test_floor_reached_on_decoupled_pair(self, tmp_path):
        doc = {
            "model": "user-dae",
            "t_end": 0.4,
            "params": {"factory": "cosim.testsystems:decoupled_pair"},
            "coupling": {"mode": "gauss-seidel"},
            "study": {"parameter": "window", "values": [0.4, 0.2, 0.1]},
        }
        out = tmp_path / "o"
        assert main(["convergence-study", "--scenario", scenario(tmp_path, doc), "--out", str(out)]) == 0
        m = manifest(out)
        assert m["floor_reached"] is True and m["slope"] is None

    def test_bad_factory(self, tmp_path):
        doc = {"model": "user-dae", "params": {"factory": "cosim.testsystems:nothing"}}
        assert main(["run", "--scenario", scenario(tmp_path, doc), "--out", str(tmp_path / "o")]) == 2

    def test_mor_study(self, tmp_path):
        doc = {**SMALL_EQS, "mor": {"p": [1, 2, "n"], "energy": 0.999999}}
        out = tmp_path / "o"
        assert main(["mor-study", "--scenario", scenario(tmp_path, doc), "--out", str(out)]) == 0
        rows = read_csv(out / "mor_errors.csv")
        assert [r[0] for r in rows[1:]] == ["fixed", "fixed", "fixed", "energy"]
        assert float(rows[3][3]) <= 1e-8
        assert read_csv(out / "spectrum.csv")[0][0] == "index [-]"

    def test_mor_study_needs_eqs(self, tmp_path):
        assert main(["mor-study", "--scenario", scenario(tmp_path, LIN2_GS), "--out", str(tmp_path / "o")]) == 2
