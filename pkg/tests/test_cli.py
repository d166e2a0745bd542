import hashlib
import json
import os

import numpy as np
import pytest

from gelab.cli import main
from gelab.io import read_manifest, read_table_csv, write_matrix_blob

SMALL = "d = 30\nn = 40\np_grid = 10, 20\nn_trials = 2\nmc.fresh_samples = 2000\n"


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL)
    return str(path)


def _assert_no_orphans(out_dir):
    files = set(os.listdir(out_dir))
    manifests = [f for f in files if f.endswith(".manifest.json")]
    referenced = []
    for m in manifests:
        doc = read_manifest(os.path.join(out_dir, m))
        for name, digest in doc["outputs"].items():
            with open(os.path.join(out_dir, name), "rb") as fh:
                assert hashlib.sha256(fh.read()).hexdigest() == digest
            referenced.append(name)
    assert len(referenced) == len(set(referenced))
    assert files == set(manifests) | set(referenced)


def test_moments_output(capsys):
    assert main(["moments", "--activation", "tanh"]) == 0
    out = capsys.readouterr().out
    assert "mu0 = 0\n" in out
    assert main(["moments", "--activation", "linear"]) == 0
    out = capsys.readouterr().out
    assert "mu0 = 0\n" in out and "mu1 = 1\n" in out and "mu2 = 0\n" in out
    assert main(["moments", "--activation", "sine"]) == 0
    line = [l for l in capsys.readouterr().out.splitlines() if l.startswith("mu1")][0]
    assert float(line.split("=")[1]) == pytest.approx(np.exp(-0.5), abs=1e-15)


def test_moments_invalid_activation(capsys):
    assert main(["moments", "--activation", "relu"]) == 2
    assert main(["moments", "--order", "4"]) == 2


def test_sweep_replay_and_manifest(tmp_path, cfg_file):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["sweep", "--config", cfg_file, "--out-dir", a]) == 0
    man = read_manifest(os.path.join(a, "sweep.manifest.json"))
    assert man["incomplete"] is False and man["master_seed"] == 0 and len(man["seeds"]) == 4
    assert main(["sweep", "--config", os.path.join(a, "sweep.manifest.json"), "--out-dir", b]) == 0
    for name in ("sweep.csv", "sweep_summary.csv"):
        assert open(os.path.join(a, name), "rb").read() == open(os.path.join(b, name), "rb").read()
    rows = read_table_csv(os.path.join(a, "sweep.csv"))
    assert list(rows[0]) == ["p", "seed", "e_train_A", "e_train_B", "e_gen_A", "e_gen_B", "rho_A", "pi_A",
                             "rho_B", "pi_B", "converged_A", "converged_B"]
    _assert_no_orphans(a)


def test_seed_flag_changes_output(tmp_path, cfg_file):
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    main(["trial", "--config", cfg_file, "--out-dir", a])
    main(["trial", "--config", cfg_file, "--out-dir", b, "--seed", "3"])
    assert read_manifest(os.path.join(b, "trial.manifest.json"))["master_seed"] == 3
    assert read_table_csv(os.path.join(a, "trial.csv")) != read_table_csv(os.path.join(b, "trial.csv"))


def test_env_out_dir(tmp_path, cfg_file, monkeypatch):
    monkeypatch.setenv("GEL_OUT_DIR", str(tmp_path / "env"))
    assert main(["trial", "--config", cfg_file, "--p", "20"]) == 0
    assert os.path.exists(tmp_path / "env" / "trial.csv")
    _assert_no_orphans(tmp_path / "env")


def test_invalid_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("p_grid = 400, 100\n")
    assert main(["sweep", "--config", str(bad), "--out-dir", str(tmp_path / "o")]) == 2
    assert "p_grid" in capsys.readouterr().err


def test_partial_failure_marks_incomplete(tmp_path, cfg_file):
    with open(cfg_file, "a") as fh:
        fh.write("solver.max_iter = 1\n")
    out = str(tmp_path / "o")
    assert main(["sweep", "--config", cfg_file, "--out-dir", out]) == 0
    assert read_manifest(os.path.join(out, "sweep.manifest.json"))["incomplete"] is True


def test_derivatives_report(tmp_path, cfg_file, capsys):
    out = str(tmp_path / "o")
    assert main(["derivatives", "--config", cfg_file, "--out-dir", out, "--p", "20"]) == 0
    text = capsys.readouterr().out
    assert "rho:" in text and "[holds]" in text
    row = read_table_csv(os.path.join(out, "derivatives.csv"))[0]
    assert row["rho_forward"] <= row["rho_direct"] <= row["rho_backward"] and row["rho_sandwich"] is True


def test_diagnose_orthonormal_features(tmp_path, cfg_file):
    Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((30, 11)))
    write_matrix_blob(tmp_path / "F.gel", Q[:, 1:])
    write_matrix_blob(tmp_path / "xi.gel", Q[:, :1])
    out = str(tmp_path / "o")
    assert main(["diagnose", "--config", cfg_file, "--out-dir", out, "--features", str(tmp_path / "F.gel"),
                 "--teacher", str(tmp_path / "xi.gel"), "--skip-gaps"]) == 0
    rep = json.load(open(os.path.join(out, "diagnose.json")))["reports"][0]["admissibility"]
    assert rep["pass_a1"] and rep["pass_a2"] and rep["a1_margin"] < 1e-12


def test_diagnose_sampled(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    assert main(["diagnose", "--config", cfg_file, "--out-dir", out]) == 0
    reports = json.load(open(os.path.join(out, "diagnose.json")))["reports"]
    assert [r["p"] for r in reports] == [10, 20]
    assert {"covariance_gap", "clt_gap", "solution_sup_norm"} <= set(reports[0])
    _assert_no_orphans(out)


def test_audit_path_linear(tmp_path):
    cfg = tmp_path / "lin.cfg"
    cfg.write_text("d = 20\nn = 12\np_grid = 8\nactivation = linear\nmc.fresh_samples = 1000\n")
    out = str(tmp_path / "o")
    assert main(["audit-path", "--config", str(cfg), "--out-dir", out]) == 0
    man = read_manifest(os.path.join(out, "audit-path.manifest.json"))
    assert man["extra"]["max_step"] <= 1e-12
    rows = read_table_csv(os.path.join(out, "path.csv"))
    assert [r["k"] for r in rows] == list(range(13))
