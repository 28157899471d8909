import json

import numpy as np
import pytest

from monitored_fermions.cli import main
from monitored_fermions.runner import read_table


def _simulate(tmp_path, *extra, name="run"):
    out = tmp_path / name
    args = ["simulate", "--size", "8", "--gamma", "1.0", "--trajectories", "3",
            "--out", str(out), *extra]
    return main(args), out


def test_simulate_writes_tables(tmp_path):
    code, out = _simulate(tmp_path)
    assert code == 0
    meta, cols = read_table(out / "correlator.csv")
    assert meta["n_trajectories"] == "3" and meta["L"] == "8"
    assert cols["C_q"][0] == pytest.approx(0.0, abs=1e-10)
    meta, cols = read_table(out / "covariance.csv")
    assert cols["G_AB"][0] > 0
    meta, cols = read_table(out / "entropy.csv")
    assert cols["ell"].tolist() == [1, 2, 3, 4]


def test_rerun_without_resume_is_io_error(tmp_path):
    _simulate(tmp_path)
    code, _ = _simulate(tmp_path)
    assert code == 3


def test_resume_is_bitwise_identical(tmp_path):
    _, a = _simulate(tmp_path, name="a")
    # an interrupted run: one trajectory, then resume to three
    main(["simulate", "--size", "8", "--gamma", "1.0", "--trajectories", "1",
          "--out", str(tmp_path / "b")])
    _simulate(tmp_path, "--resume", name="b")
    assert (a / "correlator.csv").read_bytes() == (tmp_path / "b" / "correlator.csv").read_bytes()


def test_worker_count_does_not_change_results(tmp_path):
    _, a = _simulate(tmp_path, name="a")
    _, b = _simulate(tmp_path, "--workers", "2", name="b")
    assert (a / "entropy.csv").read_bytes() == (b / "entropy.csv").read_bytes()


def test_resume_with_different_physics_is_refused(tmp_path):
    _simulate(tmp_path)
    code = main(["simulate", "--size", "8", "--gamma", "2.0", "--trajectories", "3",
                 "--out", str(tmp_path / "run"), "--resume"])
    assert code == 3


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--bogus"])
    assert exc.value.code == 1
    assert main(["simulate", "--size", "10", "--out", str(tmp_path / "x")]) == 1  # L % 4
    assert main(["sweep", "--size", "8", "--out", str(tmp_path / "y")]) == 1


def test_print_config(capsys):
    assert main(["simulate", "--print-config"]) == 0
    assert "gamma = 1.0" in capsys.readouterr().out


def test_sweep_analyze_and_collapse(tmp_path, capsys):
    root = tmp_path / "sweep"
    code = main(["sweep", "--size", "4,8,12", "--gamma", "1.0,3.0", "--trajectories", "2",
                 "--out", str(root)])
    assert code == 0
    meta, cols = read_table(root / "covariance.csv")
    assert len(cols["L"]) == 6 and "template_digest" in meta
    out = tmp_path / "fit.json"
    assert main(["collapse", str(root / "covariance.csv"), "--init", "2.0,1.0",
                 "--no-window", "--out", str(out)]) == 0
    fit = json.loads(out.read_text())
    assert {"gamma_c", "nu", "chi2", "n_points", "excluded_points"} <= set(fit)
    runs = [str(p) for p in sorted(root.glob("L*_g*"))]
    assert main(["analyze", *runs, "--mode", "covariance", "--out",
                 str(tmp_path / "cov.csv")]) == 0
    assert main(["analyze", *runs[:2], "--mode", "momentum"]) == 3  # mixed digests
    assert main(["analyze", runs[0], "--mode", "momentum", "--out",
                 str(tmp_path / "m.csv")]) == 0


def test_theory_tables(tmp_path, capsys):
    assert main(["theory", "critical", "--dims", "1,2,3"]) == 0
    text = capsys.readouterr().out
    assert "always localized" in text
    assert main(["theory", "rg", "--gamma", "1.0", "--out", str(tmp_path / "rg.csv")]) == 0
    meta, cols = read_table(tmp_path / "rg.csv")
    assert np.allclose(cols["G"], cols["G_closed"], rtol=1e-10)
    assert main(["theory", "gaussian", "--gamma", "0.5", "--L", "8"]) == 0


def test_oracle_check(capsys):
    assert main(["oracle-check", "--size", "2", "--events", "20"]) == 0
    assert "PASS" in capsys.readouterr().out
