"""
Run configurations parsed from JSON with a strict schema.

Unknown keys raise ConfigError naming their dotted path; missing keys take the defaults below.
``to_dict`` gives the fully resolved form written next to every output as resolved_config.json.
"""
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Sequence, Tuple

from errors import ConfigError
from models_losses.losses import DEFAULT_GAMMA_GRID, LOSS_KINDS, LossSpec

logger = logging.getLogger(__name__)

OPTIMIZER_KINDS = ("sgd", "momentum", "sam")
SAM_MODES = ("full", "mini", "single")
GENERATORS = ("gaussian-mixture-2d", "two-arcs-2d")
SWEEP_AXES = ("gamma", "tau", "rho", "batch")


# -------------------------------
# Schema helpers
# -------------------------------

def _section(raw: Any, path: str, allowed: Sequence[str]) -> Dict[str, Any]:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(path or "<root>", "expected a JSON object")
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")
    return raw


def _number(raw: Dict[str, Any], key: str, path: str, default: float, minimum: Optional[float] = None,
            strict: bool = False) -> float:
    value = raw.get(key, default)
    where = f"{path}.{key}" if path else key
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(where, f"expected a number, got {value!r}")
    if minimum is not None and (value <= minimum if strict else value < minimum):
        raise ConfigError(where, f"must be {'>' if strict else '>='} {minimum}, got {value}")
    return float(value)


def _integer(raw: Dict[str, Any], key: str, path: str, default: int, minimum: int = 0) -> int:
    value = raw.get(key, default)
    where = f"{path}.{key}" if path else key
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(where, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(where, f"must be >= {minimum}, got {value}")
    return value


def _choice(raw: Dict[str, Any], key: str, path: str, default: str, options: Sequence[str]) -> str:
    value = raw.get(key, default)
    if value not in options:
        raise ConfigError(f"{path}.{key}" if path else key, f"must be one of {list(options)}, got {value!r}")
    return value


# -------------------------------
# Sections
# -------------------------------

@dataclass(frozen=True)
class ModelSpec:
    hidden: Tuple[int, ...] = (16, 16)
    activation: str = "tanh"


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "sgd"
    lr: float = 0.05
    beta: float = 0.9
    rho: float = 0.05
    mode: str = "mini"


@dataclass(frozen=True)
class DatasetSpec:
    generator: str = "gaussian-mixture-2d"
    n: int = 2000
    classes: int = 2
    noise: float = 1.0
    seed: int = 0
    ood_noise_scale: float = 1.5


@dataclass(frozen=True)
class CurvatureSpec:
    probes: int = 1000
    power_iters: int = 200
    tol: float = 1e-10


@dataclass(frozen=True)
class TrainConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    loss: LossSpec = field(default_factory=LossSpec)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    batch_size: Optional[int] = 64  # None means full batch
    epochs: int = 200
    seed: int = 0
    eval_epochs: Tuple[int, ...] = ()
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    curvature: CurvatureSpec = field(default_factory=CurvatureSpec)

    def resolved_eval_epochs(self) -> Tuple[int, ...]:
        """Explicit eval epochs, or 25% / 50% / 100% of training."""
        if self.eval_epochs:
            return tuple(sorted(set(self.eval_epochs)))
        return tuple(sorted({max(1, round(0.25 * self.epochs)), max(1, round(0.5 * self.epochs)), self.epochs}))

    def to_dict(self) -> Dict[str, Any]:
        loss: Dict[str, Any] = {"kind": self.loss.kind}
        if self.loss.kind == "focal":
            loss["gamma"] = self.loss.gamma
        elif self.loss.kind == "trace_reg":
            loss.update(tau=self.loss.tau, probes=self.loss.probes)
        opt: Dict[str, Any] = {"kind": self.optimizer.kind, "lr": self.optimizer.lr}
        if self.optimizer.kind == "momentum":
            opt["beta"] = self.optimizer.beta
        elif self.optimizer.kind == "sam":
            opt.update(rho=self.optimizer.rho, mode=self.optimizer.mode)
        return {
            "model": {"hidden": list(self.model.hidden), "activation": self.model.activation},
            "loss": loss,
            "optimizer": opt,
            "batch_size": "full" if self.batch_size is None else self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "eval_epochs": list(self.resolved_eval_epochs()),
            "dataset": {"generator": self.dataset.generator, "n": self.dataset.n, "classes": self.dataset.classes,
                        "noise": self.dataset.noise, "seed": self.dataset.seed,
                        "ood_noise_scale": self.dataset.ood_noise_scale},
            "curvature": {"probes": self.curvature.probes, "power_iters": self.curvature.power_iters,
                          "tol": self.curvature.tol},
        }

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=seed)


TRAIN_KEYS = ("model", "loss", "optimizer", "batch_size", "epochs", "seed", "eval_epochs", "dataset", "curvature")


def _parse_model(raw) -> ModelSpec:
    raw = _section(raw, "model", ("hidden", "activation"))
    hidden = raw.get("hidden", list(ModelSpec.hidden))
    if not isinstance(hidden, list) or not all(isinstance(h, int) and not isinstance(h, bool) and h >= 1
                                               for h in hidden):
        raise ConfigError("model.hidden", f"expected a list of positive integers, got {hidden!r}")
    return ModelSpec(tuple(hidden), _choice(raw, "activation", "model", "tanh", ("tanh", "sigmoid")))


def _parse_loss(raw) -> LossSpec:
    raw = _section(raw, "loss", ("kind", "gamma", "tau", "probes"))
    kind = _choice(raw, "kind", "loss", "ce", LOSS_KINDS)
    allowed = {"ce": (), "focal": ("gamma",), "trace_reg": ("tau", "probes")}[kind]
    for key in raw:
        if key != "kind" and key not in allowed:
            raise ConfigError(f"loss.{key}", f"not a parameter of loss kind {kind!r}")
    return LossSpec(kind=kind,
                    gamma=_number(raw, "gamma", "loss", 0.0, minimum=0.0),
                    tau=_number(raw, "tau", "loss", 0.0, minimum=0.0),
                    probes=_integer(raw, "probes", "loss", 1, minimum=1))


def _parse_optimizer(raw) -> OptimizerSpec:
    raw = _section(raw, "optimizer", ("kind", "lr", "beta", "rho", "mode"))
    kind = _choice(raw, "kind", "optimizer", "sgd", OPTIMIZER_KINDS)
    allowed = {"sgd": ("lr",), "momentum": ("lr", "beta"), "sam": ("lr", "rho", "mode")}[kind]
    for key in raw:
        if key != "kind" and key not in allowed:
            raise ConfigError(f"optimizer.{key}", f"not a parameter of optimizer {kind!r}")
    return OptimizerSpec(kind=kind,
                         lr=_number(raw, "lr", "optimizer", 0.05, minimum=0.0, strict=True),
                         beta=_number(raw, "beta", "optimizer", 0.9, minimum=0.0),
                         rho=_number(raw, "rho", "optimizer", 0.05, minimum=0.0),
                         mode=_choice(raw, "mode", "optimizer", "mini", SAM_MODES))


def _parse_dataset(raw) -> DatasetSpec:
    raw = _section(raw, "dataset", ("generator", "n", "classes", "noise", "seed", "ood_noise_scale"))
    spec = DatasetSpec(generator=_choice(raw, "generator", "dataset", "gaussian-mixture-2d", GENERATORS),
                       n=_integer(raw, "n", "dataset", 2000, minimum=8),
                       classes=_integer(raw, "classes", "dataset", 2, minimum=2),
                       noise=_number(raw, "noise", "dataset", 1.0, minimum=0.0),
                       seed=_integer(raw, "seed", "dataset", 0),
                       ood_noise_scale=_number(raw, "ood_noise_scale", "dataset", 1.5, minimum=0.0, strict=True))
    if spec.generator == "two-arcs-2d" and spec.classes != 2:
        raise ConfigError("dataset.classes", "two-arcs-2d only has 2 classes")
    return spec


def _parse_curvature(raw) -> CurvatureSpec:
    raw = _section(raw, "curvature", ("probes", "power_iters", "tol"))
    return CurvatureSpec(probes=_integer(raw, "probes", "curvature", 1000, minimum=1),
                         power_iters=_integer(raw, "power_iters", "curvature", 200, minimum=1),
                         tol=_number(raw, "tol", "curvature", 1e-10, minimum=0.0, strict=True))


def _parse_batch(value) -> Optional[int]:
    if value == "full":
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError("batch_size", f"expected a positive integer or \"full\", got {value!r}")
    return value


def parse_train_config(raw: Dict[str, Any]) -> TrainConfig:
    raw = _section(raw, "", TRAIN_KEYS)
    loss = _parse_loss(raw.get("loss"))
    epochs = _integer(raw, "epochs", "", 200, minimum=1)
    eval_epochs = raw.get("eval_epochs", [])
    if not isinstance(eval_epochs, list) or not all(isinstance(e, int) and 1 <= e <= epochs for e in eval_epochs):
        raise ConfigError("eval_epochs", f"expected a list of epochs in [1, {epochs}]")
    return TrainConfig(model=_parse_model(raw.get("model")),
                       loss=loss,
                       optimizer=_parse_optimizer(raw.get("optimizer")),
                       batch_size=_parse_batch(raw.get("batch_size", 64)),
                       epochs=epochs,
                       seed=_integer(raw, "seed", "", 0),
                       eval_epochs=tuple(eval_epochs),
                       dataset=_parse_dataset(raw.get("dataset")),
                       curvature=_parse_curvature(raw.get("curvature")))


@dataclass(frozen=True)
class SweepConfig:
    template: TrainConfig
    axis: str
    values: Tuple[Any, ...]
    seeds: Tuple[int, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {"template": self.template.to_dict(), "axis": self.axis, "values": list(self.values),
                "seeds": list(self.seeds)}


def parse_sweep_config(raw: Dict[str, Any]) -> SweepConfig:
    raw = _section(raw, "", ("template", "axis", "values", "seeds"))
    template = parse_train_config(raw.get("template", {}))
    axis = _choice(raw, "axis", "", "gamma", SWEEP_AXES)
    values = raw.get("values", list(DEFAULT_GAMMA_GRID) if axis == "gamma" else None)
    if not isinstance(values, list) or not values:
        raise ConfigError("values", "expected a nonempty list")
    for i, v in enumerate(values):
        ok = v == "full" if axis == "batch" and isinstance(v, str) else (
            isinstance(v, (int, float)) and not isinstance(v, bool) and v >= (1 if axis == "batch" else 0))
        if not ok:
            raise ConfigError(f"values[{i}]", f"invalid {axis} value {v!r}")
    seeds = raw.get("seeds")
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "expected a nonempty list of integers")
    if not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds):
        raise ConfigError("seeds", "seeds must be non-negative integers")
    return SweepConfig(template, axis, tuple(values), tuple(seeds))


def load_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ConfigError("<file>", f"config not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError("<file>", f"invalid JSON in {path}: {e}") from e


def load_train_config(path: str) -> TrainConfig:
    return parse_train_config(load_json(path))


def load_sweep_config(path: str) -> SweepConfig:
    return parse_sweep_config(load_json(path))
