import logging

import numpy as np
import pytest

from errors import ValidationError
from geometry.families import Bernoulli, Gaussian, fisher_metric
from infobounds.gibbs import (GridDensity, ParamGrid, focal_regularizer_kl, gibbs_posterior, gibbs_prior_spec,
                              grid_kl, maxwell_boltzmann_density, phi_beta, phi_beta_unnormalized, solve_beta,
                              temperature_scan, uniform_grid_1d, uniform_grid_2d)
from infobounds.kl import kl_divergence, kl_quadratic_approx
from infobounds.pac_bayes import (PacBayesCase, gibbs_risk_term, grid_argmin_lambda, optimal_lambda,
                                  thiemann_bound)


@pytest.fixture
def two_level():
    """Four equal cells, loss 0 on the first two and 1 on the rest."""
    return ParamGrid(np.arange(4.0), np.full(4, 0.25)), np.array([0.0, 0.0, 1.0, 1.0])


# -------------------------------
# KL
# -------------------------------

def test_kl_values():
    assert kl_divergence(Gaussian(), [0.0, 1.0], [0.0, 1.0]) == 0.0
    assert kl_divergence(Gaussian(), [0.0, 1.0], [1.0, 1.0]) == pytest.approx(0.5)
    assert kl_divergence(Bernoulli(), [0.5], [0.75]) == pytest.approx(0.143841, abs=1e-6)


def test_kl_positive_for_distinct_parameters():
    gen = np.random.default_rng(2)
    for _ in range(200):
        p, q = gen.uniform(0.05, 0.95, 2)
        assert kl_divergence(Bernoulli(), [p], [q]) > 0.0
        a, b = gen.normal(size=2), gen.uniform(0.5, 2.0, 2)
        assert kl_divergence(Gaussian(), [a[0], b[0]], [a[1], b[1]]) > 0.0


def test_quadratic_approximation():
    fisher = fisher_metric(Gaussian(), [0.0, 1.0])
    assert kl_quadratic_approx(fisher, [0.0, 0.0]) == 0.0
    assert kl_quadratic_approx(fisher, [0.1, 0.0]) == pytest.approx(0.005, rel=1e-6)
    assert kl_divergence(Gaussian(), [0.0, 1.0], [0.1, 1.0]) == pytest.approx(0.005)


def test_sigma_shift_error_is_third_order():
    fisher = fisher_metric(Gaussian(), [0.0, 2.0])
    assert kl_quadratic_approx(fisher, [0.0, 0.1]) == pytest.approx(0.0025, rel=1e-6)
    ratios = []
    for step in (0.1, 0.05, 0.025):
        exact = kl_divergence(Gaussian(), [0.0, 2.0], [0.0, 2.0 + step])
        ratios.append(abs(exact - kl_quadratic_approx(fisher, [0.0, step])) / step ** 3)
    assert max(ratios) / min(ratios) < 1.5


# -------------------------------
# Maxwell-Boltzmann prior
# -------------------------------

def test_beta_zero_is_uniform(two_level):
    grid, losses = two_level
    np.testing.assert_allclose(maxwell_boltzmann_density(losses, grid, 0.0).density, np.ones(4))
    flat = maxwell_boltzmann_density(np.full(4, 3.0), grid, 7.0)
    np.testing.assert_allclose(flat.density, np.ones(4))


def test_large_beta_concentrates(two_level):
    grid, losses = two_level
    beta = 8.0
    density = maxwell_boltzmann_density(losses, grid, beta).density
    assert density[0] / density[2] == pytest.approx(np.exp(beta))


@pytest.mark.parametrize("beta", [-1.0, 0.0, 1.0, 5.0])
def test_density_integrates_to_one(beta):
    grid = uniform_grid_1d(-2.0, 2.0, 401)
    density = maxwell_boltzmann_density(grid.points[:, 0] ** 2, grid, beta)
    assert float(np.sum(density.density * grid.weights)) == pytest.approx(1.0, abs=1e-8)


def test_phi_values(two_level):
    grid, losses = two_level
    assert phi_beta(losses, grid, 0.0) == pytest.approx(0.5)
    assert phi_beta(losses, grid, np.log(3.0)) == pytest.approx(0.25)
    assert phi_beta(np.full(4, 2.5), grid, 3.0) == pytest.approx(2.5)


def test_phi_strictly_decreasing():
    grid = uniform_grid_1d(-1.0, 1.0, 201)
    losses = grid.points[:, 0] ** 2 + 0.3 * grid.points[:, 0]
    betas = np.arange(-2.0, 4.0, 0.5)
    phis = [phi_beta(losses, grid, b) for b in betas]
    assert all(later < earlier for earlier, later in zip(phis, phis[1:]))


def test_unnormalized_phi_differs_from_normalized(two_level):
    grid, losses = two_level
    beta = 1.0
    mass = float(np.sum(grid.weights * np.exp(-beta * losses)))
    assert phi_beta_unnormalized(losses, grid, beta) == pytest.approx(mass * mass * phi_beta(losses, grid, beta))


def test_solve_beta(two_level):
    grid, losses = two_level
    assert solve_beta(losses, grid, 0.25) == pytest.approx(np.log(3.0), abs=1e-8)
    assert solve_beta(losses, grid, 0.5) == 0.0
    with pytest.raises(ValidationError, match="not attainable"):
        solve_beta(losses, grid, -0.1)
    with pytest.raises(ValidationError):
        solve_beta(losses, grid, 1.5)


def test_gibbs_prior_spec(two_level):
    grid, losses = two_level
    spec = gibbs_prior_spec(losses, grid, 0.25)
    assert spec.beta == pytest.approx(np.log(3.0), abs=1e-8)
    assert spec.alpha * float(np.sum(grid.weights * np.exp(-spec.beta * losses))) == pytest.approx(1.0)


def test_losses_shape_checked(two_level):
    grid, _ = two_level
    with pytest.raises(ValidationError):
        phi_beta(np.zeros(3), grid, 1.0)
    with pytest.raises(ValidationError):
        phi_beta(np.array([0.0, np.inf, 1.0, 1.0]), grid, 1.0)


def test_grid_shapes():
    assert len(uniform_grid_1d(0.0, 1.0)) == 2001
    grid = uniform_grid_2d(-1.0, 1.0, 11)
    assert grid.points.shape == (121, 2)
    assert float(np.sum(grid.weights)) == pytest.approx(4.0)


def test_density_frame_columns(two_level):
    grid, losses = two_level
    frame = maxwell_boltzmann_density(losses, grid, 1.0).to_frame()
    assert list(frame.columns) == ["theta_0", "weight", "density"]


# -------------------------------
# Gibbs posterior and grid KL
# -------------------------------

def test_posterior_lambda_zero_is_prior(two_level):
    grid, losses = two_level
    prior = maxwell_boltzmann_density(losses, grid, 0.0)
    post = gibbs_posterior(prior, 0.0, 100, losses)
    np.testing.assert_array_equal(post.density, prior.density)


def test_posterior_two_level_ratio(two_level):
    grid, risks = two_level
    prior = maxwell_boltzmann_density(np.zeros(4), grid, 0.0)
    post = gibbs_posterior(prior, 0.5, 10, risks)
    assert post.density[0] / post.density[3] == pytest.approx(np.exp(0.5 * 10))


def test_posterior_kl_grows_with_lambda():
    grid = uniform_grid_1d(-1.0, 1.0, 201)
    risks = 0.5 * (grid.points[:, 0] ** 2)
    prior = maxwell_boltzmann_density(np.zeros(len(grid)), grid, 0.0)
    kls = [grid_kl(gibbs_posterior(prior, lam, 50, risks), prior) for lam in (0.0, 0.1, 0.5, 1.0, 1.5)]
    assert kls[0] == 0.0
    assert all(b >= a for a, b in zip(kls, kls[1:]))


def test_focal_regularizer_kl_zero_at_prior(two_level):
    grid, losses = two_level
    prior = maxwell_boltzmann_density(losses, grid, 2.0)
    assert focal_regularizer_kl(prior, 2.0, losses) == pytest.approx(0.0, abs=1e-15)


def test_grid_kl_rejects_unsupported_reference():
    grid = ParamGrid(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    p = GridDensity(grid, np.array([1.0, 1.0]))
    q = GridDensity(grid, np.array([2.0, 0.0]))
    with pytest.raises(ValidationError, match="KL undefined"):
        grid_kl(p, q)
    assert grid_kl(q, p) == pytest.approx(np.log(2.0))


def test_grid_density_must_integrate_to_one():
    grid = ParamGrid(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    with pytest.raises(ValidationError, match="integrates"):
        GridDensity(grid, np.array([1.0, 2.0]))


def test_temperature_scan_is_monotone():
    grid = uniform_grid_1d(-1.0, 1.0, 201)
    losses = grid.points[:, 0] ** 2
    scan = temperature_scan(losses, grid, [0.0, 1.0, 2.0, 4.0, 8.0])
    assert list(scan.columns) == ["beta", "phi", "kl_to_uniform"]
    assert scan["kl_to_uniform"].iloc[0] == pytest.approx(0.0, abs=1e-15)
    assert scan["kl_to_uniform"].is_monotonic_increasing
    assert scan["phi"].is_monotonic_decreasing


# -------------------------------
# PAC-Bayes-λ bound
# -------------------------------

def test_gibbs_risk_term():
    assert gibbs_risk_term(0.1, 1.0) == pytest.approx(0.2)


def test_bound_zero_case(caplog):
    with caplog.at_level(logging.WARNING):
        case = PacBayesCase(n=100, epsilon=20.0, lam=1.0, kl=0.0, emp_risk=0.0)
    assert "vacuous" in caplog.text
    assert thiemann_bound(case) == pytest.approx(0.0, abs=1e-15)


def test_bound_with_zero_kl_and_log_term_equals_risk_term():
    case = PacBayesCase(n=100, epsilon=20.0, lam=0.5, kl=0.0, emp_risk=0.3)
    assert thiemann_bound(case) == pytest.approx(gibbs_risk_term(0.3, 0.5))


def test_bound_increases_with_kl():
    bounds = [thiemann_bound(PacBayesCase(500, 0.05, 0.8, kl, 0.1)) for kl in (0.0, 1.0, 5.0, 20.0)]
    assert all(b > a for a, b in zip(bounds, bounds[1:]))


def test_case_validation():
    with pytest.raises(ValidationError):
        PacBayesCase(100, 0.05, 2.0, 1.0, 0.1)
    with pytest.raises(ValidationError):
        PacBayesCase(100, 0.05, 0.0, 1.0, 0.1)
    with pytest.raises(ValidationError):
        PacBayesCase(100, 0.0, 1.0, 1.0, 0.1)
    with pytest.raises(ValidationError):
        PacBayesCase(100, 0.05, 1.0, -1.0, 0.1)


def test_optimal_lambda():
    assert optimal_lambda(100, 1.0, 0.0, 0.05) == pytest.approx(1.0)
    lams = [optimal_lambda(n, 2.0, 0.1, 0.05) for n in (10 ** 2, 10 ** 4, 10 ** 6)]
    assert lams[0] > lams[1] > lams[2] > 0.0


def test_optimal_lambda_beats_grid():
    lam = optimal_lambda(1000, 5.0, 0.2, 0.05)
    grid_lam, grid_bound = grid_argmin_lambda(1000, 5.0, 0.2, 0.05)
    best = thiemann_bound(PacBayesCase(1000, 0.05, lam, 5.0, 0.2))
    assert best <= grid_bound + 1e-9
    assert lam == pytest.approx(grid_lam, abs=2e-4)
    assert grid_bound - best <= 1e-6


def test_optimal_lambda_rejects_nonpositive_denominator():
    with pytest.raises(ValidationError):
        optimal_lambda(1, 0.0, 0.1, 10.0)
