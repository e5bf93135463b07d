"""End-to-end CLI coverage through dcqe.cli.main."""

import json

import pytest

from dcqe.cli import main


def _run(argv):
    return main([str(a) for a in argv])


def test_simulate(tmp_path, capsys):
    rc = _run(["simulate", "--events", 500, "--seed", 7, "--out", tmp_path])
    assert rc == 0
    assert "events.csv" in capsys.readouterr().out
    lines = (tmp_path / "events.csv").read_text().splitlines()
    assert lines[0] == "pair_id,channel,t,x"
    assert len(lines) == 2 * 500 + 1
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["n_events"] == 500
    assert manifest["results"]["detector_counts"].keys() == {"D1", "D2", "D3", "D4"}


def test_simulate_debug_tags(tmp_path):
    _run(["simulate", "--events", 50, "--seed", 7, "--out", tmp_path, "--debug-tags"])
    header = (tmp_path / "events.csv").read_text().splitlines()[0]
    assert header == "pair_id,channel,t,x,branch_tag"


def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        _run(["simulate", "--events", 2000, "--seed", 321, "--out", out])
    assert (a / "events.csv").read_bytes() == (b / "events.csv").read_bytes()


def test_coincide(tmp_path, capsys):
    rc = _run(["coincide", "--events", 1000, "--seed", 7, "--out", tmp_path])
    assert rc == 0
    assert "purity" in capsys.readouterr().out
    lines = (tmp_path / "coincidences.csv").read_text().splitlines()
    assert lines[0] == "d0_t,x,idler_det,idler_t,dt,true_pair"
    assert len(lines) >= 990  # a clean bench matches nearly every pair


def test_coincide_no_true_pair(tmp_path):
    _run([
        "coincide", "--events", 200, "--seed", 7, "--out", tmp_path,
        "--no-true-pair",
    ])
    header = (tmp_path / "coincidences.csv").read_text().splitlines()[0]
    assert header == "d0_t,x,idler_det,idler_t,dt"


def test_fringes_with_figures(tmp_path, capsys):
    rc = _run(["fringes", "--events", 30000, "--seed", 11, "--out", tmp_path])
    assert rc == 0
    out = capsys.readouterr().out
    assert "D1: V =" in out and "D4: V =" in out
    for name in ("fringes.csv", "visibility.csv", "marginal.csv",
                 "plot_series.csv", "fringes.png", "marginal.png"):
        assert (tmp_path / name).exists(), name
    assert (tmp_path / "fringes.png").stat().st_size > 1000


def test_fringes_no_figures(tmp_path):
    rc = _run([
        "fringes", "--events", 20000, "--seed", 11, "--out", tmp_path,
        "--no-figures",
    ])
    assert rc == 0
    assert (tmp_path / "fringes.csv").exists()
    assert not (tmp_path / "fringes.png").exists()


def test_sweep(tmp_path, capsys):
    rc = _run([
        "sweep", "--events", 20000, "--seed", 4, "--points", 4,
        "--out", tmp_path,
    ])
    assert rc == 0
    assert "rank correlation" in capsys.readouterr().out
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 5
    assert lines[0].startswith("sigma_eff,v_d1")
    assert (tmp_path / "sweep.png").exists()
    assert (tmp_path / "sweep_long.csv").read_text().splitlines()[0] == "series,x,y"


def test_audit(tmp_path, capsys):
    rc = _run(["audit", "--events", 2000, "--seed", 4, "--out", tmp_path])
    assert rc == 0
    assert "= 1.0" in capsys.readouterr().out


def test_scenario_oracle_check(tmp_path, capsys):
    rc = _run(["scenario", "oracle-check", "--out", tmp_path])
    assert rc == 0
    assert "ok" in capsys.readouterr().out
    assert (tmp_path / "oracle_checks.csv").exists()


def test_scenario_rejects_unknown_name(tmp_path):
    with pytest.raises(SystemExit) as exc:
        _run(["scenario", "warp-drive", "--out", tmp_path])
    assert exc.value.code == 2


def test_oracle_check_command(tmp_path, capsys):
    rc = _run(["oracle-check", "--out", tmp_path])
    assert rc == 0
    out = capsys.readouterr().out
    assert "reference checks passed" in out
    assert "FAIL" not in out
    lines = (tmp_path / "oracle_checks.csv").read_text().splitlines()
    assert lines[0] == "name,expected,actual,tolerance,passed"


def test_bad_config_path_is_reported(tmp_path, capsys):
    rc = _run([
        "simulate", "--config", tmp_path / "nope.json", "--events", 10,
        "--out", tmp_path,
    ])
    assert rc == 2
    assert capsys.readouterr().err != ""


def test_invalid_config_value_is_reported(tmp_path, capsys):
    import dcqe

    raw = dcqe.default_config().to_json_dict()
    raw["wavelength"] = -1.0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(raw))
    rc = _run(["simulate", "--config", bad, "--events", 10, "--out", tmp_path])
    assert rc == 2
    assert "wavelength" in capsys.readouterr().err


def test_capacity_error_is_reported(tmp_path, capsys):
    import dcqe

    raw = dcqe.default_config().to_json_dict()
    raw["max_events"] = 5
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps(raw))
    rc = _run(["simulate", "--config", cfg, "--events", 10, "--out", tmp_path])
    assert rc == 2
    assert capsys.readouterr().err != ""


def test_custom_config_roundtrip(tmp_path):
    import dcqe

    raw = dcqe.default_config().to_json_dict()
    raw["x_bins"] = 64
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(raw))
    rc = _run([
        "fringes", "--config", cfg, "--events", 10000, "--seed", 2,
        "--out", tmp_path, "--no-figures",
    ])
    assert rc == 0
    lines = (tmp_path / "fringes.csv").read_text().splitlines()
    assert len(lines) == 1 + 4 * 64
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["x_bins"] == 64
