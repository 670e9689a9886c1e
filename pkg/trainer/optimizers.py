"""
Parameter updates over a gradient function θ ↦ (L(θ), ∇L(θ)).

Batch selection (full / mini / single example) belongs to the training loop; every step here
uses one batch for all of its gradient evaluations.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from autodiff.functional import value_and_gradient
from errors import NumericalError, ValidationError
from models_losses.losses import LossSpec, draw_probes, objective
from models_losses.mlp import LabeledBatch, MlpModel
from numkit.rng import RngStream

logger = logging.getLogger(__name__)

GradFn = Callable[[np.ndarray], Tuple[float, np.ndarray]]

DEFAULT_MOMENTUM = 0.9


@dataclass
class StepResult:
    params: np.ndarray
    loss: float
    grad_norm: float
    velocity: Optional[np.ndarray] = None


def make_grad_fn(model: MlpModel, spec: LossSpec, batch: LabeledBatch, rng: Optional[RngStream] = None) -> GradFn:
    """
    Objective on one batch. trace_reg probes are drawn from ``rng`` once, so every evaluation of
    the returned function (SAM ascent and descent alike) sees the same stochastic objective.
    """
    probes = None
    if spec.kind == "trace_reg" and spec.tau > 0 and rng is not None:
        probes = draw_probes(rng, spec.probes, model.n_params)
    return lambda theta: value_and_gradient(lambda x: objective(spec, model, x, batch, rng, probes), theta)


def _evaluate(grad_fn: GradFn, theta: np.ndarray) -> Tuple[float, np.ndarray]:
    loss, grad = grad_fn(theta)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite loss or gradient")
    return loss, grad


def _check_lr(lr: float):
    if lr < 0:
        raise ValidationError(f"learning rate must be >= 0, got {lr}")


def sgd_step(grad_fn: GradFn, theta: np.ndarray, lr: float) -> StepResult:
    """θ ← θ − η∇L."""
    _check_lr(lr)
    loss, grad = _evaluate(grad_fn, theta)
    return StepResult(theta - lr * grad, loss, float(np.linalg.norm(grad)))


def momentum_step(grad_fn: GradFn, theta: np.ndarray, velocity: np.ndarray, lr: float,
                  beta: float = DEFAULT_MOMENTUM) -> StepResult:
    """v ← βv + ∇L, θ ← θ − ηv."""
    _check_lr(lr)
    loss, grad = _evaluate(grad_fn, theta)
    velocity = beta * velocity + grad
    return StepResult(theta - lr * velocity, loss, float(np.linalg.norm(grad)), velocity)


def sam_step(grad_fn: GradFn, theta: np.ndarray, lr: float, rho: float) -> StepResult:
    """
    Ascend to θ + ε with ε = ρ∇L/‖∇L‖, then descend with the gradient taken there.
    A zero gradient skips the perturbation.
    """
    _check_lr(lr)
    if rho < 0:
        raise ValidationError(f"rho must be >= 0, got {rho}")
    loss, grad = _evaluate(grad_fn, theta)
    norm = float(np.linalg.norm(grad))
    if rho == 0 or norm == 0.0:
        return StepResult(theta - lr * grad, loss, norm)
    _, sharp_grad = _evaluate(grad_fn, theta + (rho / norm) * grad)
    return StepResult(theta - lr * sharp_grad, loss, norm)
