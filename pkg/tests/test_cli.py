import csv
import json

import numpy as np
import pytest

from frontlab.cli import DEFAULTS, load_config, main

C_STAR = 3 / np.sqrt(2)


def report(path):
    return json.loads((path / "report.json").read_text())


def test_fisher_table(tmp_path, capsys):
    assert main(["fisher-table", "-o", str(tmp_path)]) == 0
    with open(tmp_path / "fisher_table.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["nu"]) for r in rows] == [1.0, 0.7, 0.5, 0.25]
    assert [int(r["case"]) for r in rows] == [2, 3, 3, 4]
    assert [r["verdict"] for r in rows] == ["pulled", "pulled", "pulled", "pushed"]
    assert float(rows[3]["pushed_speed"]) == pytest.approx(C_STAR, abs=1e-6)
    assert "case=4 pushed" in capsys.readouterr().out


def test_speeds_quarter(tmp_path):
    assert main(["speeds", "--nu", "0.25", "-o", str(tmp_path)]) == 0
    atlas = json.loads((tmp_path / "atlas.json").read_text())
    assert atlas["case"] == 4
    assert atlas["c_quad_hull"] == pytest.approx(np.sqrt(6), abs=1e-6)
    assert report(tmp_path)["results"]["invariant_violations"] == []


def test_speeds_rejects_global_minimum(tmp_path, capsys):
    code = main(["speeds", "--set", "potential={family: quadratic, mu: 1.0}", "-o", str(tmp_path)])
    assert code == 2
    assert "V_min" in capsys.readouterr().err
    assert report(tmp_path)["status"] == "error"


def test_front_files(tmp_path):
    assert main(["front", "--bracket", "2.01,2.4", "-o", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "front.json").read_text())
    assert meta["c"] == pytest.approx(C_STAR, abs=1e-6)
    assert (tmp_path / "front.csv").read_text().startswith("xi,phi_1,dphi_1\n")


def test_front_pulled_regime_exit_code(tmp_path):
    assert main(["front", "--nu", "0.7", "--bracket", "2.001,2.1", "-o", str(tmp_path)]) == 3
    assert report(tmp_path)["error"]["type"] == "NoBracketError"


def test_front_without_bracket(tmp_path):
    assert main(["front", "-o", str(tmp_path)]) == 2


def test_energy_scan(tmp_path):
    assert main(["energy-scan", "--bracket", "2.01,2.4", "-o", str(tmp_path)]) == 0
    speed = report(tmp_path)["results"]["scan"]["speed"]
    assert speed == pytest.approx(C_STAR, abs=1e-3)
    assert (tmp_path / "scan.csv").read_text().startswith("c,E_c\n")


def test_simulate_short_run(tmp_path):
    args = ["simulate", "--L", "150", "--T", "20", "--tracked-speeds", "2.2", "-o", str(tmp_path)]
    assert main(args) == 0
    res = report(tmp_path)["results"]
    assert res["status"] == "ok"
    assert res["energy_increase"]["2.2"] == 0.0
    header = (tmp_path / "trace.csv").read_text().splitlines()[0]
    assert header == "t,xbar,xhat,c,E_c,D_c,Ehat_c,F_c"
    assert any((tmp_path / "snapshots").iterdir())


def test_simulate_is_deterministic(tmp_path):
    args = ["simulate", "--L", "100", "--T", "5", "--tracked-speeds", "2.2"]
    assert main(args + ["-o", str(tmp_path / "a")]) == 0
    assert main(args + ["-o", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()
    ra, rb = report(tmp_path / "a"), report(tmp_path / "b")
    ra["config"].pop("output")
    rb["config"].pop("output")
    assert ra == rb


def test_report_echoes_config(tmp_path):
    main(["simulate", "--L", "100", "--T", "2", "--dt", "0.01", "-o", str(tmp_path)])
    cfg = report(tmp_path)["config"]
    assert cfg["grid"]["dt"] == 0.01 and cfg["grid"]["L"] == 100.0
    assert cfg["grid"]["delta_stab"] is not None
    assert "numpy" in report(tmp_path)["versions"]


def test_output_env(tmp_path, monkeypatch):
    monkeypatch.setenv("FRONTLAB_OUTPUT", str(tmp_path))
    assert main(["speeds"]) == 0
    assert (tmp_path / "speeds" / "report.json").exists()


def test_config_file_and_set(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("potential:\n  family: fisher\n  nu: 0.4\nsearch:\n  resolution: 0.05\n")
    cfg = load_config(path, ["grid.dt=0.0025"])
    assert cfg["potential"]["nu"] == 0.4
    assert cfg["search"]["resolution"] == 0.05
    assert cfg["grid"]["dt"] == 0.0025
    assert cfg["grid"]["dx"] == DEFAULTS["grid"]["dx"]


@pytest.mark.parametrize("text", ["grid: [1, 2\n", "nonsense_key: 1\n", "grid:\n  dt: -1\n"])
def test_malformed_config_exits_2(tmp_path, text):
    path = tmp_path / "bad.yaml"
    path.write_text(text)
    assert main(["simulate", "--config", str(path), "-o", str(tmp_path / "out")]) == 2


def test_bad_set_syntax():
    assert main(["speeds", "--set", "no_equals_sign"]) == 2
    assert main(["speeds", "--set", "grid.typo=1"]) == 2
