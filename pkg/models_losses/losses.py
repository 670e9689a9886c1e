"""
Objectives on class probabilities: cross-entropy, focal loss and its pieces, and the
Hutchinson trace-regularised cross-entropy.

Every function accepts either a probability array or a probability Node; with a Node the result is
differentiable. Probabilities are clamped into [1e-12, 1 - 1e-12] before ln and before (1 - p)^γ.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from autodiff import tape as ad
from autodiff.tape import Node
from errors import ValidationError
from models_losses.mlp import LabeledBatch, MlpModel, forward_probs
from numkit.rng import RngStream, rademacher

logger = logging.getLogger(__name__)

P_MIN = 1e-12
P_MAX = 1.0 - 1e-12

LOSS_KINDS = ("ce", "focal", "trace_reg")
DEFAULT_GAMMA_GRID = (0.0, 0.5, 1.0, 2.0, 3.0, 5.0)


@dataclass(frozen=True)
class LossSpec:
    """ce | focal{gamma} | trace_reg{tau, probes}"""
    kind: str = "ce"
    gamma: float = 0.0
    tau: float = 0.0
    probes: int = 1

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValidationError(f"unknown loss kind {self.kind!r}; choose from {LOSS_KINDS}")
        if self.gamma < 0:
            raise ValidationError(f"gamma must be >= 0, got {self.gamma}")
        if self.tau < 0:
            raise ValidationError(f"tau must be >= 0, got {self.tau}")
        if self.probes < 1:
            raise ValidationError(f"probes must be >= 1, got {self.probes}")
        if 0.0 < self.gamma < 0.5:
            logger.warning(f"⚠️ gamma={self.gamma} lies in (0, 0.5) where the focal gradient diverges as p -> 1")


def _raw(x) -> np.ndarray:
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def clamp_probs(probs, targets: Optional[np.ndarray] = None):
    if targets is not None:
        raw = _raw(probs)
        hits = int(np.sum((raw < P_MIN) & (np.asarray(targets) > 0)))
        if hits:
            logger.warning(f"⚠️ {hits} supported class probabilities below {P_MIN:g} were clamped before ln")
    return ad.clip(probs, P_MIN, P_MAX)


def _check_targets(probs, targets) -> np.ndarray:
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != _raw(probs).shape:
        raise ValidationError(f"targets shape {targets.shape} does not match probabilities {_raw(probs).shape}")
    return targets


def _finish(value):
    return value if isinstance(value, Node) else float(value)


def cross_entropy(probs, targets):
    """Mean over samples of -Σ_y q(y|x) ln p(y|x)."""
    targets = _check_targets(probs, targets)
    n = targets.shape[0]
    pc = clamp_probs(probs, targets)
    return _finish(ad.neg(ad.sum_(ad.mul(targets, ad.log(pc)))) / float(n))


def focal_loss(probs, targets, gamma: float):
    """Mean over samples of -Σ_y (1 - p)^γ q ln p; γ = 0 is cross-entropy exactly."""
    if gamma < 0:
        raise ValidationError(f"gamma must be >= 0, got {gamma}")
    if gamma == 0:
        return cross_entropy(probs, targets)
    targets = _check_targets(probs, targets)
    n = targets.shape[0]
    pc = clamp_probs(probs, targets)
    weight = ad.power(ad.sub(1.0, pc), gamma)
    return _finish(ad.neg(ad.sum_(ad.mul(ad.mul(weight, targets), ad.log(pc)))) / float(n))


def conditional_entropy(probs):
    """Mean over samples of -Σ_y p ln p, in [0, ln C]."""
    n = _raw(probs).shape[0]
    pc = clamp_probs(probs)
    return _finish(ad.neg(ad.sum_(ad.mul(pc, ad.log(pc)))) / float(n))


def focal_lower_bound_gap(probs, targets, gamma: float) -> float:
    """
    focal - (CE - γ·H). Non-negative for γ >= 1; for γ < 1 the value is only reported
    because the Bernoulli step behind the bound reverses there.
    """
    focal = float(_raw(focal_loss(probs, targets, gamma)))
    ce = float(_raw(cross_entropy(probs, targets)))
    h = float(_raw(conditional_entropy(probs)))
    gap = focal - (ce - gamma * h)
    if gamma >= 1 and gap < -1e-10:
        logger.warning(f"⚠️ focal lower bound violated: gap={gap:.3e} at gamma={gamma}")
    return gap


def _check_open_unit(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValidationError("p must lie strictly inside (0, 1)")
    return p


def focal_pointwise_gradient(p, gamma: float):
    """
    g(p, γ) = (1-p)^γ (γ p (1-p)^(γ-1) - (1-p)^γ ln p), the printed form of the focal gradient
    with respect to the logit-side probability. Left-hand limit at p -> 1 is 0 for γ = 0 or
    γ > 0.5, 0.5 for γ = 0.5 and +inf for 0 < γ < 0.5.
    """
    if gamma < 0:
        raise ValidationError(f"gamma must be >= 0, got {gamma}")
    p = _check_open_unit(p)
    q = 1.0 - p
    out = np.power(q, gamma) * (gamma * p * np.power(q, gamma - 1.0) - np.power(q, gamma) * np.log(p))
    return float(out) if out.ndim == 0 else out


def focal_plain_derivative(p, gamma: float):
    """d/dp [-(1-p)^γ ln p], kept beside the printed form for comparison."""
    if gamma < 0:
        raise ValidationError(f"gamma must be >= 0, got {gamma}")
    p = _check_open_unit(p)
    q = 1.0 - p
    out = gamma * np.power(q, gamma - 1.0) * np.log(p) - np.power(q, gamma) / p
    return float(out) if out.ndim == 0 else out


def focal_curvature_scale(p0, gamma: float):
    """(1 - p0)^γ, the factor focal loss puts on the quadratic Taylor term."""
    if gamma < 0:
        raise ValidationError(f"gamma must be >= 0, got {gamma}")
    p0 = np.asarray(p0, dtype=np.float64)
    if np.any(p0 < 0.0) or np.any(p0 > 1.0):
        raise ValidationError("p0 must lie in [0, 1]")
    out = np.power(1.0 - p0, gamma)
    return float(out) if out.ndim == 0 else out


# -------------------------------
# Trace regularisation
# -------------------------------

def draw_probes(rng: RngStream, count: int, dim: int) -> np.ndarray:
    """Rademacher probes from a freshly seeded sub-stream; the seed goes to the debug log."""
    seed = rng.next_seed()
    stream = RngStream(seed)
    logger.debug(f"trace probes: count={count} dim={dim} seed={seed}")
    return np.stack([rademacher(stream, dim) for _ in range(count)])


def hutchinson_penalty(loss: Node, x: Node, probes: np.ndarray) -> Node:
    """(1/M) Σ v_iᵀ H v_i for the Hessian of ``loss`` in ``x``, kept differentiable."""
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    (g,) = ad.grad(loss, [x], create_graph=True)
    total = None
    for v in probes:
        (hv,) = ad.grad(ad.dot(g, v), [x], create_graph=True)
        quad = ad.dot(hv, v)
        total = quad if total is None else ad.add(total, quad)
    return ad.div(total, float(len(probes)))


def trace_regularized_loss(model: MlpModel, params, batch: LabeledBatch, tau: float, probes: int = 1,
                           rng: Optional[RngStream] = None, probe_vectors: Optional[np.ndarray] = None):
    """
    CE + τ·(1/M) Σ v_iᵀ H v_i with H the parameter Hessian of CE on the batch.

    ``params`` as a Node gives a differentiable loss; as an array the value is evaluated on a
    private tape. τ = 0 returns cross-entropy exactly and draws no probes.
    """
    if tau < 0:
        raise ValidationError(f"tau must be >= 0, got {tau}")
    if probes < 1:
        raise ValidationError(f"probe count must be >= 1, got {probes}")
    if tau == 0:
        return cross_entropy(forward_probs(model, params, batch.x), batch.targets)

    if not isinstance(params, Node):
        tape = ad.Tape()
        x = tape.variable(params)
        return float(trace_regularized_loss(model, x, batch, tau, probes, rng, probe_vectors).value)

    if probe_vectors is None:
        if rng is None:
            raise ValidationError("trace regularisation needs an RngStream or explicit probe vectors")
        probe_vectors = draw_probes(rng, probes, params.shape[0])
    ce = cross_entropy(forward_probs(model, params, batch.x), batch.targets)
    penalty = hutchinson_penalty(ce, params, probe_vectors)
    return ad.add(ce, ad.mul(penalty, float(tau)))


def base_objective(spec: LossSpec, model: MlpModel, params, batch: LabeledBatch):
    """The data term without any trace penalty: focal γ for focal runs, CE otherwise."""
    probs = forward_probs(model, params, batch.x)
    if spec.kind == "focal":
        return focal_loss(probs, batch.targets, spec.gamma)
    return cross_entropy(probs, batch.targets)


def objective(spec: LossSpec, model: MlpModel, params, batch: LabeledBatch,
              rng: Optional[RngStream] = None, probe_vectors: Optional[np.ndarray] = None):
    """Training objective selected by the LossSpec."""
    if spec.kind == "trace_reg":
        return trace_regularized_loss(model, params, batch, spec.tau, spec.probes, rng, probe_vectors)
    return base_objective(spec, model, params, batch)
