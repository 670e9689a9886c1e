import logging

import numpy as np
import pytest

from autodiff import tape as ad
from autodiff.functional import fd_gradient, gradient, hvp
from errors import ValidationError
from models_losses.losses import (LossSpec, base_objective, clamp_probs, conditional_entropy, cross_entropy,
                                  focal_curvature_scale, focal_loss, focal_lower_bound_gap,
                                  focal_plain_derivative, focal_pointwise_gradient, hutchinson_penalty,
                                  objective, trace_regularized_loss)
from models_losses.mlp import LabeledBatch, MlpModel, forward_probs, init_params, one_hot, predict_proba, softmax
from numkit.rng import RngStream


# -------------------------------
# Model
# -------------------------------

def test_softmax_by_hand():
    probs = softmax(np.array([[0.0, np.log(3.0)]]))
    np.testing.assert_allclose(probs, [[0.25, 0.75]])


def test_zero_weights_give_uniform_rows(tiny_model, tiny_batch):
    probs = predict_proba(tiny_model, np.zeros(tiny_model.n_params), tiny_batch.x)
    np.testing.assert_allclose(probs, np.full((len(tiny_batch), 3), 1.0 / 3.0))


def test_layout_counts(tiny_model):
    assert tiny_model.n_params == (2 + 1) * 4 + (4 + 1) * 3
    assert tiny_model.layout[-1].stop == tiny_model.n_params


def test_width_mismatch_rejected(tiny_model):
    with pytest.raises(ValidationError, match="input width"):
        predict_proba(tiny_model, np.zeros(tiny_model.n_params), np.zeros((3, 5)))
    with pytest.raises(ValidationError, match="parameter vector"):
        predict_proba(tiny_model, np.zeros(3), np.zeros((3, 2)))


def test_model_validation():
    with pytest.raises(ValidationError):
        MlpModel.build(2, (4,), 1)
    with pytest.raises(ValidationError):
        MlpModel.build(2, (4,), 2, "relu")


def test_batch_validation():
    with pytest.raises(ValidationError):
        LabeledBatch(np.zeros((2, 2)), np.array([0, 3]), 2)
    with pytest.raises(ValidationError):
        LabeledBatch(np.zeros((2, 2)), np.array([0, 1]), 2, soft_targets=np.array([[0.5, 0.6], [1.0, 0.0]]))


# -------------------------------
# Losses
# -------------------------------

def test_cross_entropy_values():
    assert cross_entropy(np.array([[0.5, 0.5]]), np.array([[1.0, 0.0]])) == pytest.approx(np.log(2.0))
    assert cross_entropy(np.eye(3), np.eye(3)) == pytest.approx(0.0, abs=1e-11)


def test_focal_gamma_zero_is_cross_entropy():
    probs = np.array([[0.2, 0.8], [0.6, 0.4]])
    targets = one_hot(np.array([1, 0]), 2)
    assert focal_loss(probs, targets, 0.0) == cross_entropy(probs, targets)


def test_focal_closed_form():
    value = focal_loss(np.array([[0.1, 0.9]]), np.array([[0.0, 1.0]]), 2.0)
    assert value == pytest.approx(0.01 * -np.log(0.9), rel=1e-12)
    assert value == pytest.approx(1.05361e-3, rel=1e-5)


def test_focal_at_certain_prediction_is_tiny():
    assert focal_loss(np.array([[0.0, 1.0]]), np.array([[0.0, 1.0]]), 1.0) <= 1e-11


def test_focal_rejects_negative_gamma():
    with pytest.raises(ValidationError):
        focal_loss(np.array([[0.5, 0.5]]), np.array([[1.0, 0.0]]), -1.0)


def test_clamp_logs_supported_zero(caplog):
    with caplog.at_level(logging.WARNING):
        cross_entropy(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
    assert "clamped" in caplog.text


def test_soft_targets_flow_into_losses(tiny_model, tiny_params):
    gen = np.random.default_rng(21)
    x = gen.standard_normal((6, 2))
    q = gen.dirichlet(np.ones(3), size=6)
    batch = LabeledBatch(x, np.argmax(q, axis=1), 3, soft_targets=q)
    p = predict_proba(tiny_model, tiny_params, x)
    assert base_objective(LossSpec(), tiny_model, tiny_params, batch) == pytest.approx(
        -np.mean(np.sum(q * np.log(p), axis=1)), rel=1e-12)
    focal = base_objective(LossSpec(kind="focal", gamma=2.0), tiny_model, tiny_params, batch)
    assert focal == pytest.approx(-np.mean(np.sum((1.0 - p) ** 2 * q * np.log(p), axis=1)), rel=1e-12)


def test_conditional_entropy():
    assert conditional_entropy(np.full((2, 4), 0.25)) == pytest.approx(np.log(4.0))
    assert conditional_entropy(np.array([[0.25, 0.75]])) == pytest.approx(0.562335, abs=1e-6)
    assert conditional_entropy(np.eye(2)) == pytest.approx(0.0, abs=1e-9)


def test_lower_bound_gap_gamma_zero():
    gen = np.random.default_rng(11)
    probs = gen.dirichlet(np.ones(3), size=100)
    targets = one_hot(gen.integers(0, 3, size=100), 3)
    assert focal_lower_bound_gap(probs, targets, 0.0) == 0.0


@pytest.mark.parametrize("gamma", [1.0, 2.0, 5.0])
def test_lower_bound_gap_is_nonnegative(gamma):
    gen = np.random.default_rng(int(gamma * 10))
    for _ in range(200):
        n, c = int(gen.integers(1, 60)), int(gen.integers(2, 6))
        probs = gen.dirichlet(np.ones(c), size=n)
        targets = one_hot(gen.integers(0, c, size=n), c)
        assert focal_lower_bound_gap(probs, targets, gamma) >= -1e-12


def test_pointwise_gradient_limits():
    assert focal_pointwise_gradient(1.0 - 1e-8, 0.5) == pytest.approx(0.5, abs=1e-4)
    assert focal_pointwise_gradient(1.0 - 1e-6, 2.0) <= 1e-10
    assert focal_pointwise_gradient(1.0 - 1e-6, 0.0) == pytest.approx(-np.log(1.0 - 1e-6))
    near, nearer = focal_pointwise_gradient(1.0 - 1e-6, 0.25), focal_pointwise_gradient(1.0 - 1e-8, 0.25)
    assert nearer > near > 1.0
    with pytest.raises(ValidationError):
        focal_pointwise_gradient(1.0, 2.0)


def test_plain_derivative_matches_finite_difference():
    p, gamma, h = 0.7, 2.0, 1e-6
    loss = lambda t: -((1.0 - t) ** gamma) * np.log(t)
    assert focal_plain_derivative(p, gamma) == pytest.approx((loss(p + h) - loss(p - h)) / (2 * h), rel=1e-6)


def test_curvature_scale():
    assert focal_curvature_scale(0.9, 0.0) == 1.0
    assert focal_curvature_scale(0.9, 2.0) == pytest.approx(0.01)
    with pytest.raises(ValidationError):
        focal_curvature_scale(1.5, 1.0)


def test_loss_spec_validation(caplog):
    with pytest.raises(ValidationError):
        LossSpec(kind="hinge")
    with pytest.raises(ValidationError):
        LossSpec(kind="focal", gamma=-0.1)
    with caplog.at_level(logging.WARNING):
        LossSpec(kind="focal", gamma=0.25)
    assert "diverges" in caplog.text


def relative_error(a, b):
    return float(np.linalg.norm(a - b)) / max(float(np.linalg.norm(b)), 1e-2)


@pytest.mark.parametrize("gamma", [0.0, 0.5, 1.0, 2.0, 5.0])
def test_loss_gradient_matches_central_differences(tiny_model, tiny_batch, gamma):
    f = lambda x: focal_loss(forward_probs(tiny_model, x, tiny_batch.x), tiny_batch.targets, gamma)
    for seed in range(50):
        theta = init_params(tiny_model, RngStream(seed))
        assert relative_error(gradient(f, theta), fd_gradient(f, theta)) <= 1e-6


# -------------------------------
# Trace regularisation
# -------------------------------

def test_hutchinson_penalty_on_diagonal_quadratic():
    tape = ad.Tape()
    x = tape.variable(np.array([0.3, -1.0, 2.0]))
    d = np.array([1.0, 2.0, 3.0])
    loss = ad.mul(0.5, ad.sum_(ad.mul(d, ad.mul(x, x))))
    probes = RngStream(0).rademacher(3)[None, :] * np.ones((5, 1))
    probes[2] *= -1.0
    penalty = hutchinson_penalty(loss, x, probes)
    assert penalty.value == pytest.approx(6.0)


def test_trace_reg_tau_zero_is_cross_entropy(tiny_model, tiny_batch, tiny_params):
    ce = cross_entropy(predict_proba(tiny_model, tiny_params, tiny_batch.x), tiny_batch.targets)
    assert trace_regularized_loss(tiny_model, tiny_params, tiny_batch, 0.0) == ce


def test_trace_reg_penalty_matches_hvp(tiny_model, tiny_batch, tiny_params):
    probes = np.stack([RngStream(s).rademacher(tiny_model.n_params) for s in range(3)])
    tau = 0.5
    ce_fn = lambda x: cross_entropy(forward_probs(tiny_model, x, tiny_batch.x), tiny_batch.targets)
    expected_penalty = np.mean([v @ hvp(ce_fn, tiny_params, v) for v in probes])
    expected = float(ce_fn(tiny_params)) + tau * expected_penalty
    value = trace_regularized_loss(tiny_model, tiny_params, tiny_batch, tau, probe_vectors=probes)
    assert value == pytest.approx(expected, rel=1e-10)


def test_trace_reg_needs_rng_or_probes(tiny_model, tiny_batch, tiny_params):
    with pytest.raises(ValidationError):
        trace_regularized_loss(tiny_model, tiny_params, tiny_batch, 1.0)


def test_trace_reg_gradient_matches_central_differences(tiny_model, tiny_batch):
    spec = LossSpec(kind="trace_reg", tau=0.1, probes=2)
    probes = np.stack([RngStream(s).rademacher(tiny_model.n_params) for s in (9, 10)])
    f = lambda x: objective(spec, tiny_model, x, tiny_batch, probe_vectors=probes)
    for seed in range(5):
        theta = init_params(tiny_model, RngStream(seed))
        grad = gradient(f, theta)
        assert np.all(np.isfinite(grad))
        assert relative_error(grad, fd_gradient(f, theta)) <= 1e-4


def test_base_objective_ignores_penalty(tiny_model, tiny_batch, tiny_params):
    spec = LossSpec(kind="trace_reg", tau=5.0)
    ce = cross_entropy(predict_proba(tiny_model, tiny_params, tiny_batch.x), tiny_batch.targets)
    assert base_objective(spec, tiny_model, tiny_params, tiny_batch) == ce
