"""
Sweep driver: one train_run per (axis value, seed), dispatched through joblib and assembled in
(value, seed) order, plus per-value medians and Spearman trend checks.
"""
import logging
from dataclasses import replace
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import spearmanr

from errors import ValidationError
from models_losses.losses import LossSpec
from settings import get_threads
from trainer.config import SweepConfig, TrainConfig
from trainer.datasets import make_dataset
from trainer.train import train_run

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["axis", "value", "seed", "epoch", "train_loss", "val_loss", "val_acc", "val_ece", "grad_norm",
                 "trace", "trace_stderr", "lambda_max", "diverged"]
METRIC_COLUMNS = ["train_loss", "val_loss", "val_acc", "val_ece", "grad_norm", "trace", "trace_stderr", "lambda_max"]


def apply_axis(template: TrainConfig, axis: str, value: Any) -> TrainConfig:
    """Template with one hyperparameter replaced."""
    if axis == "gamma":
        return replace(template, loss=LossSpec(kind="focal", gamma=float(value)))
    if axis == "tau":
        probes = template.loss.probes if template.loss.kind == "trace_reg" else 1
        return replace(template, loss=LossSpec(kind="trace_reg", tau=float(value), probes=probes))
    if axis == "rho":
        return replace(template, optimizer=replace(template.optimizer, kind="sam", rho=float(value)))
    if axis == "batch":
        return replace(template, batch_size=None if value == "full" else int(value))
    raise ValidationError(f"unknown sweep axis {axis!r}")


def _run_one(config: TrainConfig, axis: str, value: Any, splits) -> Dict[str, Any]:
    record = train_run(config, splits)
    final = record.final_row
    row: Dict[str, Any] = {"axis": axis, "value": value, "seed": config.seed}
    if final is None:
        row.update({"epoch": record.summary["epochs_completed"], **{c: np.nan for c in METRIC_COLUMNS}})
    else:
        row.update({"epoch": final["epoch"], **{c: final[c] for c in METRIC_COLUMNS}})
    row["diverged"] = record.diverged
    return row


def run_sweep(sweep: SweepConfig, n_jobs: Optional[int] = None) -> pd.DataFrame:
    """One row per (value, seed) with the final evaluation row of that run."""
    if not sweep.values or not sweep.seeds:
        raise ValidationError("a sweep needs at least one axis value and one seed")
    n_jobs = n_jobs or get_threads()
    splits = make_dataset(sweep.template.dataset)
    jobs = [(apply_axis(sweep.template, sweep.axis, v).with_seed(s), v) for v in sweep.values for s in sweep.seeds]
    logger.info(f"📊 sweep over {sweep.axis}: {len(sweep.values)} values x {len(sweep.seeds)} seeds "
                f"= {len(jobs)} runs on {n_jobs} worker(s)")
    rows: List[Dict[str, Any]] = Parallel(n_jobs=n_jobs)(
        delayed(_run_one)(cfg, sweep.axis, value, splits) for cfg, value in jobs)
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def aggregate(table: pd.DataFrame) -> pd.DataFrame:
    """Per-value medians over non-diverged runs, with run and diverged counts."""
    out = []
    for value, group in table.groupby("value", sort=False):
        ok = group[~group["diverged"].astype(bool)]
        row = {"axis": group["axis"].iloc[0], "value": value, "runs": len(group),
               "diverged": int(group["diverged"].astype(bool).sum())}
        for col in METRIC_COLUMNS:
            row[f"median_{col}"] = float(ok[col].median()) if len(ok) else np.nan
        out.append(row)
    return pd.DataFrame(out)


def trend_spearman(agg: pd.DataFrame, column: str) -> float:
    """Spearman rank correlation between the axis value and a median column."""
    values = pd.to_numeric(agg["value"], errors="coerce")
    mask = values.notna() & agg[column].notna()
    if mask.sum() < 2:
        raise ValidationError("need at least two finite points for a rank correlation")
    return float(spearmanr(values[mask], agg.loc[mask, column])[0])


def write_table(table: pd.DataFrame, path: str):
    table.to_csv(path, index=False, lineterminator="\n")
