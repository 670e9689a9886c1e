"""
Desk-scale trend reproduction: MLP 2-16-16-2 on the gaussian mixture, medians over three seeds.

Each sweep trains dozens of runs; deselect with ``pytest -m "not slow"``.
"""
import os

import pandas as pd
import pytest

from trainer.config import load_sweep_config, parse_sweep_config, parse_train_config
from trainer.sweep import aggregate, run_sweep, trend_spearman
from trainer.train import train_run

pytestmark = pytest.mark.slow

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")

TEMPLATE = {
    "model": {"hidden": [16, 16], "activation": "tanh"},
    "optimizer": {"kind": "sgd", "lr": 0.05},
    "batch_size": 64,
    "epochs": 200,
    "eval_epochs": [200],
    "dataset": {"generator": "gaussian-mixture-2d", "n": 2000, "classes": 2, "noise": 1.0, "seed": 0},
    "curvature": {"probes": 100, "power_iters": 200, "tol": 1e-8},
}
SEEDS = [0, 1, 2]


def sweep_medians(axis, values, template=TEMPLATE) -> pd.DataFrame:
    sweep = parse_sweep_config({"template": template, "axis": axis, "values": values, "seeds": SEEDS})
    table = run_sweep(sweep)
    assert not table["diverged"].any()
    return table, aggregate(table)


def median_of(seed_rows, key):
    return float(pd.Series([row[key] for row in seed_rows]).median())


def test_gamma_sweep_config_has_fifteen_runs():
    sweep = load_sweep_config(os.path.join(CONFIG_DIR, "gamma_sweep.json"))
    assert len(sweep.values) * len(sweep.seeds) == 15


def test_lambda_max_falls_with_gamma():
    _, agg = sweep_medians("gamma", [0, 1, 2, 3, 5])
    lam = agg["median_lambda_max"].tolist()
    assert all(b <= a for a, b in zip(lam, lam[1:]))
    assert trend_spearman(agg, "median_lambda_max") <= -0.9


def test_trace_regularizer_lowers_trace():
    table, agg = sweep_medians("tau", [0.0, 1e-2])
    by_seed = table.pivot(index="seed", columns="value", values="trace")
    assert int((by_seed[1e-2] < by_seed[0.0]).sum()) >= 2
    eces = agg.set_index("value")["median_val_ece"]
    assert eces[1e-2] <= eces[0.0]


def _runs(optimizer, batch_size):
    raw = dict(TEMPLATE, optimizer=optimizer, batch_size=batch_size)
    config = parse_train_config(raw)
    return [train_run(config.with_seed(s)).final_row for s in SEEDS]


def test_full_batch_sam_lowers_lambda_max():
    sgd = _runs({"kind": "sgd", "lr": 0.05}, "full")
    sam = _runs({"kind": "sam", "lr": 0.05, "rho": 0.05, "mode": "full"}, "full")
    assert median_of(sam, "lambda_max") < median_of(sgd, "lambda_max")


def test_single_example_sam_lowers_trace():
    template = dict(TEMPLATE, epochs=20, eval_epochs=[20])
    raw_sgd = dict(template, optimizer={"kind": "sgd", "lr": 0.05}, batch_size=1)
    raw_sam = dict(template, optimizer={"kind": "sam", "lr": 0.05, "rho": 0.05, "mode": "single"})
    sgd = [train_run(parse_train_config(raw_sgd).with_seed(s)).final_row for s in SEEDS]
    sam = [train_run(parse_train_config(raw_sam).with_seed(s)).final_row for s in SEEDS]
    assert median_of(sam, "trace") < median_of(sgd, "trace")


def test_sweep_is_byte_identical(tmp_path):
    template = dict(TEMPLATE, epochs=10, eval_epochs=[10])
    sweep = parse_sweep_config({"template": template, "axis": "gamma", "values": [0, 2], "seeds": SEEDS})
    paths = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        run_sweep(sweep).to_csv(path, index=False, lineterminator="\n")
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()
