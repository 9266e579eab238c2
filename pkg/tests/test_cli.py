"""Command line contract: formats, exit codes, echo round-trips, sweeps."""

import json
import os

import numpy as np
import pytest

from sdecal.cli import main


def _run(args):
    return main(list(args))


def test_run_writes_csv_with_expected_header(tmp_path):
    out = tmp_path / "r.csv"
    code = _run(["run", "ou-mean", "--seed", "7", "--t-end", "2",
                 "--no-check", "--out", str(out)])
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "t,theta_0,grad_norm,J_hat"
    assert len(lines) > 2
    assert (tmp_path / "r.config.toml").exists()


def test_full_run_passes_acceptance(tmp_path):
    out = tmp_path / "full.csv"
    code = _run(["run", "ou-mean", "--seed", "7", "--out", str(out)])
    assert code == 0
    report = json.loads((tmp_path / "full.acceptance.json").read_text())
    assert report["passed"] is True
    assert report["experiment"] == "ou-mean"


def test_unknown_experiment_is_a_usage_error(capsys):
    assert _run(["run", "does-not-exist"]) == 2
    assert "unknown experiment" in capsys.readouterr().err


def test_bad_flag_value_is_a_usage_error():
    assert _run(["run", "ou-mean", "--seed", "not-a-number"]) == 2


def test_divergence_exits_3_and_keeps_the_partial_trace(tmp_path, capsys):
    out = tmp_path / "d.csv"
    code = _run(["run", "ou-mean", "--seed", "1", "--t-end", "2",
                 "--a", "1e9", "--b", "1e-3", "--out", str(out)])
    assert code == 3
    assert "diverged" in capsys.readouterr().err
    assert out.exists()
    assert (tmp_path / "d.config.toml").exists()


def test_config_echo_reproduces_the_run_bit_for_bit(tmp_path):
    out1 = tmp_path / "a.csv"
    assert _run(["run", "ou-mean", "--seed", "3", "--t-end", "5",
                 "--no-check", "--out", str(out1)]) == 0
    echo = tmp_path / "a.config.toml"
    out2 = tmp_path / "b.csv"
    assert _run(["run", str(echo), "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[run]\nexperiment = "ou-mean"\nseed = 3\nt_end = 2.0\n')
    out = tmp_path / "c.csv"
    assert _run(["run", str(cfg), "--seed", "9", "--no-check",
                 "--out", str(out)]) == 0
    echo = (tmp_path / "c.config.toml").read_text()
    assert "seed = 9" in echo
    assert "t_end = 2.0" in echo


def test_unknown_config_keys_are_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('[run]\nexperiment = "ou-mean"\nbogus = 1\n')
    assert _run(["run", str(cfg)]) == 2
    assert "unknown key" in capsys.readouterr().err

    cfg.write_text('[run]\nexperiment = "ou-mean"\n\n[mystery]\nx = 1\n')
    assert _run(["run", str(cfg)]) == 2
    assert "unknown config section" in capsys.readouterr().err


def test_type_errors_are_reported_before_any_compute(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text('[run]\nexperiment = "ou-mean"\nseed = "zero"\n')
    assert _run(["run", str(cfg)]) == 2
    assert "must be an integer" in capsys.readouterr().err


def test_model_params_are_checked_against_the_experiment(tmp_path, capsys):
    cfg = tmp_path / "m.toml"
    cfg.write_text('[run]\nexperiment = "ou-mean"\n\n[model]\nm = 4\n')
    assert _run(["run", str(cfg)]) == 2
    assert "not accepted" in capsys.readouterr().err


def test_model_params_resize_the_problem(tmp_path):
    cfg = tmp_path / "m2.toml"
    cfg.write_text(
        '[run]\nexperiment = "multi-ou-independent"\nt_end = 1.0\n'
        'check = false\n\n[model]\nm = 2\n'
    )
    out = tmp_path / "m2.csv"
    assert _run(["run", str(cfg), "--out", str(out)]) == 0
    header = out.read_text().split("\n", 1)[0]
    assert header == "t,theta_0,theta_1,theta_2,theta_3,grad_norm,J_hat"


def test_custom_objective_skips_acceptance(tmp_path):
    cfg = tmp_path / "o.toml"
    cfg.write_text(
        '[run]\nexperiment = "ou-mean"\nt_end = 2.0\n\n'
        '[objective]\nstats = [{ kind = "sum", target = 5.0 }]\n'
    )
    out = tmp_path / "o.csv"
    assert _run(["run", str(cfg), "--out", str(out)]) == 0
    assert not (tmp_path / "o.acceptance.json").exists()


def test_jsonl_output(tmp_path):
    out = tmp_path / "r.jsonl"
    assert _run(["run", "ou-mean", "--seed", "1", "--t-end", "2",
                 "--no-check", "--format", "jsonl", "--out", str(out)]) == 0
    lines = [json.loads(s) for s in out.read_text().strip().split("\n")]
    assert "summary" in lines[-1]


def test_numpy_backend_flag_is_echoed(tmp_path):
    out = tmp_path / "r.csv"
    assert _run(["run", "ou-mean", "--seed", "1", "--t-end", "1",
                 "--no-check", "--backend", "numpy", "--out", str(out)]) == 0
    assert 'backend = "numpy"' in (tmp_path / "r.config.toml").read_text()


def test_default_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("SDECAL_OUT_DIR", str(tmp_path / "results"))
    assert _run(["run", "ou-mean", "--seed", "2", "--t-end", "1",
                 "--no-check"]) == 0
    assert (tmp_path / "results" / "ou-mean_seed2.csv").exists()


def test_oracle_stationary_json(capsys):
    assert _run(["oracle", "ou-stationary", "--g", "2", "--h", "1",
                 "--sigma", "1"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["mean"] == [2.0]
    assert payload["cov"] == [[0.5]]


def test_oracle_matrix_arguments(capsys):
    assert _run(["oracle", "ou-stationary",
                 "--h", "[[2.0, 0.0], [0.0, 4.0]]",
                 "--g", "[2.0, 4.0]", "--sigma", "1"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["mean"] == [1.0, 1.0]
    assert payload["cov"][0][0] == pytest.approx(0.25)
    assert payload["cov"][1][1] == pytest.approx(0.125)


def test_oracle_autocov_minimizer(capsys):
    assert _run(["oracle", "autocov-minimizer", "--targets", "1,2,1.6",
                 "--tau", "0.1"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["theta"][0] == pytest.approx(5.108256237659905)


def test_oracle_bad_json_is_a_usage_error(capsys):
    assert _run(["oracle", "ou-stationary", "--h", "not json"]) == 2
    assert "JSON" in capsys.readouterr().err


def test_oracle_writes_to_file(tmp_path):
    out = tmp_path / "o.json"
    assert _run(["oracle", "ou-stationary", "--g", "2", "--h", "1",
                 "--sigma", "1", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["mean"] == [2.0]


def test_validate_reports_the_named_condition(capsys):
    assert _run(["validate", "--gamma", "0.4"]) == 0
    out = capsys.readouterr().out
    assert "square-integrable" in out
    assert _run(["validate", "--gamma", "1.2"]) == 0
    out = capsys.readouterr().out
    assert "step-integral-divergent" in out
    assert _run(["validate", "--gamma", "1.0"]) == 0
    assert "admissible" in capsys.readouterr().out


def test_validate_rejects_nonpositive_scale(capsys):
    assert _run(["validate", "--a", "-1", "--gamma", "1.0"]) == 2


def test_list_shows_the_registry(capsys):
    assert _run(["list"]) == 0
    out = capsys.readouterr().out
    assert "ou-mean" in out and "autocov" in out


def test_sweep_grid_produces_cells_and_an_index(tmp_path):
    out_dir = tmp_path / "grid"
    code = _run(["sweep", "ou-mean", "--grid", "seed=1..2",
                 "--grid", "a=0.5,1.0", "--t-end", "2", "--no-check",
                 "--threads", "2", "--out-dir", str(out_dir)])
    assert code == 0
    index = json.loads((out_dir / "ou-mean__index.json").read_text())
    assert len(index) == 4
    labels = [os.path.basename(cell["out"]) for cell in index]
    assert labels[0] == "ou-mean__seed=1__a=0.5.csv"
    for cell in index:
        assert os.path.exists(cell["out"])
        assert os.path.exists(cell["config"])


def test_sweep_single_and_many_workers_write_identical_rows(tmp_path):
    d1 = tmp_path / "w1"
    d4 = tmp_path / "w4"
    for threads, d in (("1", d1), ("4", d4)):
        assert _run(["sweep", "ou-mean", "--grid", "seed=1..3",
                     "--t-end", "2", "--no-check", "--threads", threads,
                     "--out-dir", str(d)]) == 0
    for k in (1, 2, 3):
        a = (d1 / f"ou-mean__seed={k}.csv").read_bytes()
        b = (d4 / f"ou-mean__seed={k}.csv").read_bytes()
        assert a == b


def test_sweep_rejects_unsweepable_parameters(capsys):
    assert _run(["sweep", "ou-mean", "--grid", "colour=red,blue"]) == 2
    assert "cannot sweep" in capsys.readouterr().err
    assert _run(["sweep", "ou-mean"]) == 2


def test_missing_subcommand_is_a_usage_error():
    assert _run([]) == 2
