import json

import pytest

from weighted_integrability import __version__
from weighted_integrability.cli import ConfigError, RunConfig, load_config, main, read_config_file
from weighted_integrability.outputs import read_csv_params, read_csv_rows

FAST = ["--t-max", "20", "--grid-nx", "2"]


def test_defaults_match_reference_setup():
    cfg = load_config(["compute"])
    assert (cfg.epsilon, cfg.delta, cfg.alpha) == (0.5, 0.3, 0.1)
    assert (cfg.grid_nx, cfg.dt, cfg.t_max, cfg.tol) == (5, 0.01, 1500.0, 1e-2)
    assert (cfg.fd_h, cfg.escape_radius, cfg.method) == (1e-6, 10.0, "euler")
    assert cfg == RunConfig(subcommand="compute")


def test_flag_overrides_file(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text("dt = 0.01\nt-max = 300\nalphas = [0.0, 0.2]\n")
    cfg = load_config(["compute", "--config", str(p), "--dt", "0.005"])
    assert cfg.dt == 0.005 and cfg.t_max == 300.0 and cfg.alphas == (0.0, 0.2)


def test_empty_config_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.toml"
    p.write_text("")
    cfg = load_config(["compute", "--config", str(p)])
    assert cfg == RunConfig(subcommand="compute", config=str(p))


def test_unknown_key_lists_valid_keys(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("time-step = 0.1\n")
    with pytest.raises(ConfigError, match="valid keys: .*t-max"):
        read_config_file(str(p))
    assert main(["compute", "--config", str(p)]) == 1


def test_invalid_values_exit_one(capsys):
    assert main(["compute", "--dt", "-0.01"]) == 1
    assert "--dt must be > 0" in capsys.readouterr().err
    assert main(["compute", "--grid-nx", "0"]) == 1
    assert main(["poincare", "--quad-nodes", "63"]) == 1
    assert main(["compute", "--config", "/nonexistent.toml"]) == 1


def test_tol_below_euler_bias_is_config_error(tmp_path, capsys):
    rc = main(["compute", "--tol", "0.005", *FAST, "--out", str(tmp_path / "r.json"),
               "--ftle-csv", str(tmp_path / "f.csv")])
    assert rc == 1 and "bias" in capsys.readouterr().err


def test_compute_writes_outputs(tmp_path, capsys):
    out, csv = tmp_path / "r.json", tmp_path / "f.csv"
    rc = main(["compute", "--alpha", "0", "--tol", "0.5", *FAST, "--out", str(out),
               "--ftle-csv", str(csv)])
    assert rc == 0
    assert "m_rho = 1.000000" in capsys.readouterr().out
    rep = json.loads(out.read_text())
    assert rep["m_rho"] == 1.0 and rep["tool_version"] == __version__
    assert rep["params"]["alpha"] == 0.0 and "workers" not in rep["params"]
    assert len(read_csv_rows(str(csv))) == 4
    assert read_csv_params(str(csv)) == rep["params"]


def test_all_escaped_exits_two(tmp_path):
    rc = main(["compute", "--alpha", "5", "--box-lo", "2", "--box-hi", "3", "--t-max", "50",
               "--grid-nx", "2", "--out", str(tmp_path / "r.json"),
               "--ftle-csv", str(tmp_path / "f.csv")])
    assert rc == 2


def test_verify_divergence(capsys, tmp_path):
    assert main(["verify-divergence", "--samples", "100", "--out", str(tmp_path / "d.json")]) == 0
    assert "max |div(rho V)|" in capsys.readouterr().out
    assert json.loads((tmp_path / "d.json").read_text())["max_abs_divergence"] <= 1e-8


def test_sweep(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--alphas", "0,0.1", "--tol", "0.5", *FAST, "--out", str(out)]) == 0
    rows = read_csv_rows(str(out))
    assert [r["alpha"] for r in rows] == ["0", "0.10000000000000001"]
    assert list(rows[0]) == ["alpha", "m_rho", "n_regular", "n_escaped"]


def test_converge(tmp_path):
    out = tmp_path / "c.json"
    assert main(["converge", "--t-max", "10", "--grid-nx", "2", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert [r["name"] for r in data["rows"]] == ["t_max", "dt", "grid"]


def test_trajectory_files(tmp_path):
    base = tmp_path / "traj.csv"
    assert main(["trajectory", "--t-max", "5", "--traj-csv", str(base)]) == 0
    for a in ("0", "0.1", "0.5"):
        path = tmp_path / f"traj_alpha{a}.csv"
        rows = read_csv_rows(str(path))
        assert list(rows[0]) == ["t", "x1", "y1", "x2", "y2"]
        assert [float(v) for v in list(rows[0].values())[1:]] == [0.5, 0.5, 0.7, 0.0]
        assert read_csv_params(str(path))["alpha"] == float(a)


def test_poincare(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["poincare", "--epsilons", "0.01,0.005", "--out", str(out)]) == 0
    rows = read_csv_rows(str(out))
    assert list(rows[0]) == ["epsilon", "map_I", "map_theta1", "oracle_I", "oracle_theta1",
                             "error"]
    ratio = float(rows[0]["error"]) / float(rows[1]["error"])
    assert 3.5 <= ratio <= 4.5


def test_diagnose(tmp_path):
    out = tmp_path / "d.json"
    assert main(["diagnose", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert {"wronskian", "resonance", "fourier", "nonpersistence"} <= set(d)
    assert d["wronskian"]["pass"] is True and d["wronskian"]["min"] == pytest.approx(1.0)
    assert set(d["resonance"]) >= {"min", "p"}
    assert d["fourier"]["coefficients"]["1"] == pytest.approx([0.5, 0.0], abs=1e-14)
    assert d["nonpersistence"]["verdict"] == "condition2"


def test_worker_count_leaves_outputs_identical(tmp_path):
    texts = []
    for w in ("1", "3"):
        main(["compute", *FAST, "--workers", w, "--out", str(tmp_path / f"r{w}.json"),
              "--ftle-csv", str(tmp_path / f"f{w}.csv")])
        texts.append(((tmp_path / f"r{w}.json").read_bytes(), (tmp_path / f"f{w}.csv").read_bytes()))
    assert texts[0] == texts[1]
