import hashlib
import json

import numpy as np
import pytest

from fsmean import formats as fm
from fsmean.cli import main, read_cv_grid
from fsmean.frenet import ThetaFunction, solve_frenet_path
from fsmean.so3 import exp_so3, hat


def run(*args):
    return main([str(a) for a in args])


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def metrics(path):
    header, rows = fm.read_rows(path)
    return {(r[0], r[1]): float(r[2]) for r in rows}


def test_simulate_writes_expected_rows(tmp_path):
    out = tmp_path / "d"
    assert run("simulate", "--scenario", "S1.2", "--n-curves", 25, "--n-points", 100, "--sigma-e", 0,
               "--seed", 7, "--out", out) == 0
    assert len((out / "curves.csv").read_text().splitlines()) == 1 + 25 * 100
    m = fm.read_manifest(out / "manifest.json")
    assert m["seed"] == 7 and m["scenario"] == "S1.2" and len(m["config_hash"]) == 64


def test_simulate_same_seed_same_bytes(tmp_path):
    for d in ("a", "b"):
        assert run("simulate", "--scenario", "S2.1", "--n-curves", 3, "--seed", 1, "--out", tmp_path / d) == 0
    for f in ("frames.json", "truth.csv", "manifest.json"):
        assert sha(tmp_path / "a" / f) == sha(tmp_path / "b" / f)


def test_simulate_errors(tmp_path, capsys):
    assert run("simulate", "--scenario", "S7", "--seed", 1, "--out", tmp_path) == 2
    err = capsys.readouterr().err
    assert "S1.1" in err and "D2" in err
    assert run("simulate", "--scenario", "S1.1", "--out", tmp_path) == 2
    assert run("simulate", "--scenario", "S1.1", "--seed", 1, "--n-points", 2, "--out", tmp_path) == 2


def write_constant_dataset(d, n=4):
    th = ThetaFunction.constant(3.0, -1.0)
    grid = np.linspace(0, 1, 100)
    paths = [solve_frenet_path(th, exp_so3(hat([0.1 * i, 0.2, 0.0])), grid) for i in range(n)]
    d.mkdir()
    fm.write_frames_json(d / "frames.json", paths)
    return d / "frames.json"


def test_estimate_constant_theta_from_frames(tmp_path):
    src = write_constant_dataset(tmp_path / "d")
    assert run("estimate", "--input", src, "--out", tmp_path / "e") == 0
    header, arr = fm.read_table(tmp_path / "e" / "theta.csv")
    assert header == ["s", "kappa", "tau"] and len(arr) == 200
    assert np.max(np.abs(arr[:, 1] - 3.0)) < 1e-6
    assert np.max(np.abs(arr[:, 2] + 1.0)) < 1e-6
    m = fm.read_manifest(tmp_path / "e" / "manifest.json")
    assert m["criterion"] < 1e-12 and m["hyperparams"]["h"] == 0.05
    assert (tmp_path / "e" / "mean_path.json").exists() and (tmp_path / "e" / "mean_curve.csv").exists()


def test_estimate_curve_input_and_bad_extension(tmp_path):
    run("simulate", "--scenario", "S1.2", "--n-curves", 3, "--seed", 2, "--out", tmp_path / "d")
    assert run("estimate", "--input", tmp_path / "d" / "curves.csv", "--method", "gs",
               "--out", tmp_path / "e") == 0
    assert len(fm.read_table(tmp_path / "e" / "theta.csv")[1]) == 200
    (tmp_path / "x.txt").write_text("")
    assert run("estimate", "--input", tmp_path / "x.txt", "--out", tmp_path / "e2") == 2
    assert run("estimate", "--input", tmp_path / "missing.csv", "--out", tmp_path / "e3") == 2


def test_estimate_failure_exit_3(tmp_path, capsys):
    th = ThetaFunction.constant(3.0, -1.0)
    d = tmp_path / "d"
    d.mkdir()
    fm.write_frames_json(d / "frames.json", [solve_frenet_path(th, np.eye(3), np.linspace(0, 1, 6))])
    assert run("estimate", "--input", d / "frames.json", "--out", tmp_path / "e") == 3
    assert "RankDeficient" in capsys.readouterr().err


def test_cv_grid_file_and_table(tmp_path):
    src = write_constant_dataset(tmp_path / "d", n=3)
    grid = tmp_path / "grid.txt"
    grid.write_text("# candidates\nh = 0.03, 0.08\nlambda = 1e-9,1e-7\n")
    assert len(read_cv_grid(grid)) == 4
    assert run("estimate", "--input", src, "--cv-grid", grid, "--cv-folds", 5, "--out", tmp_path / "e") == 0
    header, rows = fm.read_rows(tmp_path / "e" / "cv_table.csv")
    assert header == ["h", "lambda_kappa", "lambda_tau", "score"] and len(rows) == 4
    grid.write_text("h = abc\n")
    assert run("estimate", "--input", src, "--cv-grid", grid, "--out", tmp_path / "e2") == 2


def test_config_file_with_cli_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("scenario = S2.1\nn-curves = 2\nseed = 5\n")
    assert run("--config", cfg, "simulate", "--scenario", "S1.1", "--out", tmp_path / "d") == 0
    m = fm.read_manifest(tmp_path / "d" / "manifest.json")
    assert m["scenario"] == "S1.1" and m["config"]["n_curves"] == 2 and m["seed"] == 5
    cfg.write_text("nonsense_key = 1\n")
    assert run("--config", cfg, "simulate", "--scenario", "S1.1", "--seed", 1, "--out", tmp_path / "x") == 2
    cfg.write_text("no equals sign\n")
    assert run("--config", cfg, "simulate", "--scenario", "S1.1", "--seed", 1, "--out", tmp_path / "x") == 2


def test_eval_truth_equals_estimate_and_grid_mismatch(tmp_path):
    run("simulate", "--scenario", "S1.1", "--n-curves", 2, "--seed", 0, "--out", tmp_path / "d")
    e = tmp_path / "e"
    e.mkdir()
    (e / "theta.csv").write_bytes((tmp_path / "d" / "truth.csv").read_bytes())
    assert run("eval", "--estimate", e, "--truth", tmp_path / "d", "--out", tmp_path / "m.csv") == 0
    m = metrics(tmp_path / "m.csv")
    assert m[("frenet-serret", "kappa_l2sq")] == 0.0 and m[("frenet-serret", "tau_l2sq")] == 0.0
    fm.write_rows(e / "theta.csv", ["s", "kappa", "tau"], [(s, 1.0, 1.0) for s in np.linspace(0, 1, 50)])
    assert run("eval", "--estimate", e, "--truth", tmp_path / "d", "--out", tmp_path / "m2.csv") == 4
    assert run("eval", "--estimate", tmp_path / "nothing", "--truth", tmp_path / "d",
               "--out", tmp_path / "m3.csv") == 4


def test_phase_flag_reduces_error(tmp_path):
    run("simulate", "--scenario", "S2.1", "--n-curves", 9, "--seed", 0, "--out", tmp_path / "d")
    errs = {}
    for flag in ([], ["--phase"]):
        out = tmp_path / ("p" if flag else "n")
        assert run("estimate", "--input", tmp_path / "d", "--out", out, *flag) == 0
        assert run("eval", "--estimate", out, "--truth", tmp_path / "d", "--out", out / "m.csv") == 0
        errs[bool(flag)] = metrics(out / "m.csv")[("frenet-serret", "kappa_l2sq")]
    assert errs[True] < errs[False]


def test_baseline_fixed_point_and_export(tmp_path):
    run("simulate", "--scenario", "S1.2", "--n-curves", 1, "--seed", 3, "--out", tmp_path / "d")
    curves = fm.read_curves_csv(tmp_path / "d" / "curves.csv")
    fm.write_curves_csv(tmp_path / "d" / "curves.csv", curves * 3)
    assert run("baseline", "--input", tmp_path / "d", "--no-srvf", "--method", "gs", "--out", tmp_path / "b") == 0
    mean = fm.read_mean_curve(tmp_path / "b" / "arithmetic_mean_curve.csv")
    P = curves[0].points
    assert np.max(np.abs(mean.points - (P - P.mean(0)))) < 1e-12
    assert run("estimate", "--input", tmp_path / "d", "--method", "gs", "--out", tmp_path / "e") == 0
    assert run("export-plot", "--results", tmp_path / "e", tmp_path / "b", "--out", tmp_path / "p") == 0
    header, rows = fm.read_rows(tmp_path / "p" / "parameters.csv")
    assert header == ["source", "method", "s", "kappa", "tau"]
    fs = [r for r in rows if r[1] == "frenet-serret"]
    _, theta = fm.read_table(tmp_path / "e" / "theta.csv")
    assert np.array_equal(np.array([[float(x) for x in r[2:]] for r in fs]), theta)
    header, _ = fm.read_rows(tmp_path / "p" / "curves.csv")
    assert header == ["source", "method", "s", "x", "y", "z"]
    (tmp_path / "empty").mkdir()
    assert run("export-plot", "--results", tmp_path / "empty", "--out", tmp_path / "p2") == 4


def test_baseline_deterministic(tmp_path):
    run("simulate", "--scenario", "S1.2", "--n-curves", 3, "--seed", 4, "--out", tmp_path / "d")
    for o in ("b1", "b2"):
        assert run("baseline", "--input", tmp_path / "d", "--no-srvf", "--method", "gs", "--out", tmp_path / o) == 0
    for f in ("arithmetic_theta.csv", "individual_theta.csv", "individual_ext_theta.csv"):
        assert sha(tmp_path / "b1" / f) == sha(tmp_path / "b2" / f)


def test_spherical_estimate_and_eval(tmp_path):
    run("simulate", "--scenario", "S4", "--n-curves", 5, "--seed", 0, "--out", tmp_path / "d")
    assert run("estimate", "--input", tmp_path / "d", "--out", tmp_path / "e") == 0
    assert fm.read_rows(tmp_path / "e" / "theta.csv")[0] == ["s", "kg"]
    assert run("baseline", "--input", tmp_path / "d", "--no-srvf", "--out", tmp_path / "b") == 0
    assert run("eval", "--estimate", tmp_path / "e", "--truth", tmp_path / "d", "--baseline", tmp_path / "b",
               "--out", tmp_path / "m.csv") == 0
    m = metrics(tmp_path / "m.csv")
    assert m[("frenet-serret", "d_norm")] < 1e-5 and m[("arithmetic", "d_norm")] > 0.05


def test_run_table(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert run("run-table", "--scenario", "S1.1", "--reps", 2, "--n-curves", 3, "--out", out) == 0
    header, rows = fm.read_rows(out)
    assert header == ["scenario", "metric", "mean", "std", "reps"]
    assert {r[1] for r in rows} >= {"kappa_pop", "tau_pop", "kappa_ind"}
    assert run("run-table", "--scenario", "S0", "--reps", 1) == 2
