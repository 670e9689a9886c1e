import json

import numpy as np
import pandas as pd
import pytest

from main import EXIT_INVALID, EXIT_OK, bound_report, geometry_report, main, parse_case
from errors import ConfigError, ValidationError


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def read_json(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


# -------------------------------
# train / curvature
# -------------------------------

def test_train_writes_outputs_and_is_reproducible(tmp_path, small_train_config):
    config = write_config(tmp_path, "train.json", small_train_config)
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["train", "--config", config, "--out", str(out), "--quiet"]) == EXIT_OK
        for file in ("run.jsonl", "summary.json", "resolved_config.json", "model.joblib"):
            assert (out / file).exists()
        outputs.append((out / "run.jsonl").read_bytes())
    assert outputs[0] == outputs[1]
    assert len(outputs[0].splitlines()) == 3


def test_train_seed_override(tmp_path, small_train_config):
    config = write_config(tmp_path, "train.json", small_train_config)
    out = tmp_path / "run"
    assert main(["train", "--config", config, "--out", str(out), "--seed", "7", "--quiet"]) == EXIT_OK
    assert read_json(out / "resolved_config.json")["seed"] == 7


def test_invalid_config_exits_2(tmp_path, small_train_config, capsys):
    bad = dict(small_train_config, loss={"kind": "focal", "gamma": -1.0})
    config = write_config(tmp_path, "bad.json", bad)
    assert main(["train", "--config", config, "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_INVALID
    assert "loss.gamma" in capsys.readouterr().out


def test_missing_config_exits_2(tmp_path):
    assert main(["train", "--out", str(tmp_path), "--quiet"]) == EXIT_INVALID
    assert main(["train", "--config", str(tmp_path / "nope.json"), "--quiet"]) == EXIT_INVALID


def test_curvature_from_saved_model(tmp_path, small_train_config):
    config = write_config(tmp_path, "train.json", small_train_config)
    run = tmp_path / "run"
    assert main(["train", "--config", config, "--out", str(run), "--quiet"]) == EXIT_OK
    out = tmp_path / "curv"
    assert main(["curvature", "--model", str(run / "model.joblib"), "--out", str(out), "--quiet"]) == EXIT_OK
    report = read_json(out / "curvature.json")
    assert report["dim"] == 22
    assert report["laplacian"] == report["trace"]
    assert report["spectral_radius"] == pytest.approx(abs(report["lambda_max"]))
    assert report["det"] is not None


# -------------------------------
# sweep
# -------------------------------

def test_sweep_with_no_seeds_exits_2(tmp_path, small_train_config):
    config = write_config(tmp_path, "sweep.json",
                          {"template": small_train_config, "axis": "gamma", "values": [0, 1], "seeds": []})
    assert main(["sweep", "--config", config, "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_INVALID


def test_sweep_writes_tables(tmp_path, small_train_config):
    template = dict(small_train_config, epochs=2)
    config = write_config(tmp_path, "sweep.json",
                          {"template": template, "axis": "gamma", "values": [0, 2], "seeds": [0]})
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", config, "--out", str(out), "--quiet"]) == EXIT_OK
    table = pd.read_csv(out / "sweep.csv")
    assert table["value"].tolist() == [0, 2]
    assert len(pd.read_csv(out / "aggregate.csv")) == 2
    assert read_json(out / "resolved_config.json")["axis"] == "gamma"


# -------------------------------
# calibrate
# -------------------------------

def test_calibrate(tmp_path):
    preds = tmp_path / "preds.csv"
    pd.DataFrame({"p0": [0.9] * 10, "p1": [0.1] * 10, "label": [0] * 5 + [1] * 5}).to_csv(preds, index=False)
    out = tmp_path / "cal"
    assert main(["calibrate", str(preds), "--bins", "10", "--out", str(out), "--quiet"]) == EXIT_OK
    summary = read_json(out / "summary.json")
    assert summary["ece"] == pytest.approx(0.4)
    assert summary["n"] == 10
    assert len(pd.read_csv(out / "bins.csv")) == 10


def test_calibrate_bad_row_exits_2(tmp_path, capsys):
    preds = tmp_path / "preds.csv"
    pd.DataFrame({"p0": [0.5, 0.8], "p1": [0.5, 0.8], "label": [0, 1]}).to_csv(preds, index=False)
    assert main(["calibrate", str(preds), "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_INVALID
    assert "data row 2" in capsys.readouterr().out


# -------------------------------
# geometry
# -------------------------------

def test_euclidean_christoffel_is_zero(tmp_path):
    out = tmp_path / "geo"
    assert main(["geometry", "euclidean", "--d", "3", "--christoffel", "--out", str(out), "--quiet"]) == EXIT_OK
    report = read_json(out / "geometry.json")
    assert np.all(np.asarray(report["christoffel"]["coeffs"]) == 0.0)
    assert "riemann" not in report


def test_sphere_riemann_component(tmp_path):
    out = tmp_path / "geo"
    assert main(["geometry", "sphere", "--riemann", "--theta", "1.0", "--out", str(out), "--quiet"]) == EXIT_OK
    coeffs = np.asarray(read_json(out / "geometry.json")["riemann"]["coeffs"])
    assert coeffs[0, 0, 1, 1] == pytest.approx(np.sin(1.0) ** 2, abs=1e-3)


def test_nn_manifold_rank(tmp_path):
    out = tmp_path / "geo"
    assert main(["geometry", "nn-manifold", "--d", "2", "--out", str(out), "--quiet"]) == EXIT_OK
    report = read_json(out / "geometry.json")
    assert report["rank"] == 3 == report["expected_rank"]


def test_unknown_geometry_exits_2(tmp_path, capsys):
    assert main(["geometry", "torus", "--out", str(tmp_path), "--quiet"]) == EXIT_INVALID
    assert "known ids" in capsys.readouterr().out


def test_family_report_has_all_outputs():
    report = geometry_report("bernoulli", [0.5])
    np.testing.assert_allclose(report["fisher_closed_form"], [[4.0]])
    np.testing.assert_allclose(report["kl_hessian"], [[4.0]], rtol=1e-3)
    assert {"christoffel", "riemann", "volume"} <= set(report)
    assert report["volume"] == pytest.approx(2.0)


def test_too_many_coordinates():
    with pytest.raises(ValidationError):
        geometry_report("bernoulli", [0.2, 0.3])


# -------------------------------
# bound
# -------------------------------

def test_bound_zero_risk(tmp_path):
    config = write_config(tmp_path, "case.json", {"n": 1000, "epsilon": 0.05, "lam": 1.0, "kl": 5.0, "emp_risk": 0.0})
    out = tmp_path / "bound"
    assert main(["bound", "--config", config, "--grid-check", "--out", str(out), "--quiet"]) == EXIT_OK
    report = read_json(out / "bound.json")
    assert report["optimal_lambda"] == pytest.approx(1.0)
    assert report["bound"] == pytest.approx(report["bound_at_optimal"])
    assert report["grid_difference"] <= 1e-6


def test_bound_lambda_out_of_range(tmp_path):
    config = write_config(tmp_path, "case.json", {"n": 1000, "epsilon": 0.05, "lam": 2.5, "kl": 5.0, "emp_risk": 0.1})
    assert main(["bound", "--config", config, "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_INVALID


def test_parse_case_is_strict():
    with pytest.raises(ConfigError) as info:
        parse_case({"n": 10, "epsilon": 0.05, "lam": 1.0, "kl": 0.0})
    assert info.value.path == "emp_risk"
    with pytest.raises(ConfigError) as info:
        parse_case({"n": 10, "epsilon": 0.05, "lam": 1.0, "kl": 0.0, "emp_risk": 0.1, "delta": 0.1})
    assert info.value.path == "delta"
    with pytest.raises(ConfigError):
        parse_case({"n": 10.5, "epsilon": 0.05, "lam": 1.0, "kl": 0.0, "emp_risk": 0.1})


def test_bound_report_values():
    case = parse_case({"n": 1000, "epsilon": 0.05, "lam": 1.0, "kl": 5.0, "emp_risk": 0.1})
    report = bound_report(case)
    assert report["bound_at_optimal"] <= report["bound"]
    assert "grid_lambda" not in report


# -------------------------------
# report
# -------------------------------

def test_report_views_run(tmp_path, small_train_config, capsys):
    config = write_config(tmp_path, "train.json", small_train_config)
    run = tmp_path / "run"
    main(["train", "--config", config, "--out", str(run), "--quiet"])
    capsys.readouterr()
    assert main(["report", str(run / "run.jsonl")]) == EXIT_OK
    assert "val_ece" in capsys.readouterr().out
    assert main(["report", str(run / "summary.json"), "--simple"]) == EXIT_OK
    assert main(["report", str(tmp_path / "missing.jsonl")]) == EXIT_INVALID
