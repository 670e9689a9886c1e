"""
Training loop: one seeded run of an MLP under a TrainConfig, with evaluation rows at the eval
epochs and curvature of the validation objective measured through an HvpOracle.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import joblib
import numpy as np

from autodiff.functional import HvpOracle, gradient
from calibration.ece import ece
from curvature.report import curvature_report
from errors import NumericalError
from models_losses.losses import base_objective
from models_losses.mlp import LabeledBatch, MlpModel, init_params, param_norm, predict_proba
from numkit.rng import RngStream
from trainer.config import TrainConfig, parse_train_config
from trainer.datasets import DatasetSplits, make_dataset
from trainer.optimizers import StepResult, make_grad_fn, momentum_step, sam_step, sgd_step

logger = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e6

ROW_KEYS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "val_ece", "grad_norm",
            "trace", "trace_stderr", "lambda_max", "seed", "curvature_seed")

# child-stream keys of the run's root RngStream
INIT_STREAM, SHUFFLE_STREAM, PROBE_STREAM, CURVATURE_STREAM = 0, 1, 2, 3


@dataclass
class RunRecord:
    config: TrainConfig
    rows: List[Dict[str, Any]] = field(default_factory=list)
    diverged: bool = False
    params: Optional[np.ndarray] = None
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def final_row(self) -> Optional[Dict[str, Any]]:
        return self.rows[-1] if self.rows else None

    def to_jsonl(self) -> str:
        return "".join(json.dumps(row) + "\n" for row in self.rows)


def build_model(config: TrainConfig, input_dim: int = 2) -> MlpModel:
    return MlpModel.build(input_dim, config.model.hidden, config.dataset.classes, config.model.activation)


def effective_batch_size(config: TrainConfig) -> Optional[int]:
    """SAM modes override the configured batch: full -> whole train set, single -> 1."""
    if config.optimizer.kind == "sam":
        if config.optimizer.mode == "full":
            return None
        if config.optimizer.mode == "single":
            return 1
    return config.batch_size


def loss_value(config: TrainConfig, model: MlpModel, params: np.ndarray, batch: LabeledBatch) -> float:
    return float(base_objective(config.loss, model, params, batch))


def loss_gradient_norm(config: TrainConfig, model: MlpModel, params: np.ndarray, batch: LabeledBatch) -> float:
    """‖∇L‖ of the base objective over the whole batch."""
    return float(np.linalg.norm(gradient(lambda x: base_objective(config.loss, model, x, batch), params)))


def validation_oracle(config: TrainConfig, model: MlpModel, params: np.ndarray, batch: LabeledBatch) -> HvpOracle:
    return HvpOracle.from_function(lambda x: base_objective(config.loss, model, x, batch), params)


def evaluate(config: TrainConfig, model: MlpModel, params: np.ndarray, splits: DatasetSplits, epoch: int,
             root: RngStream) -> Dict[str, Any]:
    train, val = splits.train, splits.val
    train_probs = predict_proba(model, params, train.x)
    val_probs = predict_proba(model, params, val.x)
    val_report = ece(val_probs, val.y)

    curv_rng = root.child(CURVATURE_STREAM).child(epoch)
    report = curvature_report(validation_oracle(config, model, params, val), probes=config.curvature.probes,
                              rng=curv_rng, power_iters=config.curvature.power_iters, tol=config.curvature.tol,
                              dense_extras=False)
    row = {
        "epoch": epoch,
        "train_loss": loss_value(config, model, params, train),
        "train_acc": float(np.mean(np.argmax(train_probs, axis=1) == train.y)),
        "val_loss": loss_value(config, model, params, val),
        "val_acc": val_report.accuracy,
        "val_ece": val_report.ece,
        "grad_norm": loss_gradient_norm(config, model, params, train),
        "trace": report.trace,
        "trace_stderr": report.trace_stderr,
        "lambda_max": report.lambda_max,
        "seed": config.seed,
        "curvature_seed": curv_rng.seed,
    }
    return {key: row[key] for key in ROW_KEYS}


def _step(config: TrainConfig, model: MlpModel, theta: np.ndarray, velocity: np.ndarray, batch: LabeledBatch,
          probe_rng: RngStream) -> StepResult:
    grad_fn = make_grad_fn(model, config.loss, batch, probe_rng)
    opt = config.optimizer
    if opt.kind == "momentum":
        return momentum_step(grad_fn, theta, velocity, opt.lr, opt.beta)
    if opt.kind == "sam":
        return sam_step(grad_fn, theta, opt.lr, opt.rho)
    return sgd_step(grad_fn, theta, opt.lr)


def _split_metrics(model: MlpModel, params: np.ndarray, batch: LabeledBatch) -> Dict[str, float]:
    report = ece(predict_proba(model, params, batch.x), batch.y)
    return {"acc": report.accuracy, "ece": report.ece}


def train_run(config: TrainConfig, splits: Optional[DatasetSplits] = None) -> RunRecord:
    """Deterministic given (config, dataset seed); a diverged run keeps the rows recorded so far."""
    splits = splits or make_dataset(config.dataset)
    model = build_model(config, splits.train.x.shape[1])
    root = RngStream(config.seed)
    theta = init_params(model, root.child(INIT_STREAM))
    shuffle_rng = root.child(SHUFFLE_STREAM)
    probe_rng = root.child(PROBE_STREAM)
    velocity = np.zeros_like(theta)
    batch_size = effective_batch_size(config)
    eval_epochs = set(config.resolved_eval_epochs())
    n = len(splits.train)

    record = RunRecord(config=config)
    completed = 0
    logger.info(f"🚀 training {model.widths} loss={config.loss.kind} opt={config.optimizer.kind} "
                f"batch={'full' if batch_size is None else batch_size} epochs={config.epochs} seed={config.seed}")

    for epoch in range(1, config.epochs + 1):
        candidate, cand_velocity = theta, velocity
        try:
            if batch_size is None or batch_size >= n:
                result = _step(config, model, candidate, cand_velocity, splits.train, probe_rng)
                candidate, cand_velocity = result.params, result.velocity
            else:
                order = shuffle_rng.permutation(n)
                for start in range(0, n, batch_size):
                    batch = splits.train.subset(order[start:start + batch_size])
                    result = _step(config, model, candidate, cand_velocity, batch, probe_rng)
                    candidate, cand_velocity = result.params, result.velocity
        except NumericalError as e:
            logger.warning(f"⚠️ run diverged at epoch {epoch}: {e}")
            record.diverged = True
            break
        if not np.all(np.isfinite(candidate)) or param_norm(candidate) > DIVERGENCE_NORM:
            logger.warning(f"⚠️ run diverged at epoch {epoch}: ‖θ‖ = {param_norm(candidate):.3e}")
            record.diverged = True
            break

        theta = candidate
        if cand_velocity is not None:
            velocity = cand_velocity
        completed = epoch
        if epoch in eval_epochs:
            try:
                row = evaluate(config, model, theta, splits, epoch, root)
            except NumericalError as e:
                logger.warning(f"⚠️ evaluation failed at epoch {epoch}: {e}")
                record.diverged = True
                break
            record.rows.append(row)
            logger.debug(f"epoch {epoch}: val_loss={row['val_loss']:.4f} val_acc={row['val_acc']:.3f} "
                         f"trace={row['trace']:.4f} λ_max={row['lambda_max']:.4f}")

    record.params = theta
    record.summary = _summarize(record, model, theta, splits, completed)
    return record


def _summarize(record: RunRecord, model: MlpModel, theta: np.ndarray, splits: DatasetSplits,
               completed: int) -> Dict[str, Any]:
    test = _split_metrics(model, theta, splits.test)
    ood = _split_metrics(model, theta, splits.ood)
    final = record.final_row or {}
    return {
        "diverged": record.diverged,
        "epochs_completed": completed,
        "n_params": model.n_params,
        "train_acc": final.get("train_acc"),
        "val_loss": final.get("val_loss"),
        "val_acc": final.get("val_acc"),
        "val_ece": final.get("val_ece"),
        "trace": final.get("trace"),
        "lambda_max": final.get("lambda_max"),
        "test_acc": test["acc"],
        "test_ece": test["ece"],
        "ood_acc": ood["acc"],
        "ood_ece": ood["ece"],
    }


def save_model(record: RunRecord, path: str):
    model = build_model(record.config)
    joblib.dump({"params": record.params, "layout": model.layout_table(), "config": record.config.to_dict()}, path)


def load_model(path: str):
    """(model, params, config) from a model.joblib written by save_model."""
    data = joblib.load(path)
    config = parse_train_config(data["config"])
    return build_model(config), np.asarray(data["params"], dtype=np.float64), config
