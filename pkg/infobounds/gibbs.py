"""
Densities on explicit parameter grids: the Maxwell-Boltzmann prior ∝ e^{-βL}, its expected loss
Φ(β) and the β solver, the Gibbs posterior, and grid KL divergences.

Normalisers are computed with log-sum-exp; β·L easily spans hundreds of nats.
"""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from errors import ValidationError

logger = logging.getLogger(__name__)

DEFAULT_GRID_1D = 2001
DEFAULT_GRID_2D = 201
BETA_BRACKET = (-50.0, 50.0)


@dataclass(frozen=True)
class ParamGrid:
    """Lattice points (n x k) with quadrature weights (n)."""
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, None]
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.shape != (points.shape[0],) or np.any(weights <= 0):
            raise ValidationError("grid weights must be positive, one per point")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.points.shape[0]


def _trapezoid(lo: float, hi: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    if n < 2 or not hi > lo:
        raise ValidationError(f"a grid needs n >= 2 and hi > lo, got n={n}, [{lo}, {hi}]")
    x = np.linspace(lo, hi, n)
    w = np.full(n, (hi - lo) / (n - 1))
    w[[0, -1]] *= 0.5
    return x, w


def uniform_grid_1d(lo: float, hi: float, n: int = DEFAULT_GRID_1D) -> ParamGrid:
    x, w = _trapezoid(lo, hi, n)
    return ParamGrid(x, w)


def uniform_grid_2d(lo: float, hi: float, n: int = DEFAULT_GRID_2D) -> ParamGrid:
    x, w = _trapezoid(lo, hi, n)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    return ParamGrid(np.column_stack([xx.ravel(), yy.ravel()]), np.outer(w, w).ravel())


@dataclass(frozen=True)
class GridDensity:
    grid: ParamGrid
    density: np.ndarray

    def __post_init__(self):
        density = np.asarray(self.density, dtype=np.float64)
        if density.shape != (len(self.grid),):
            raise ValidationError(f"density has shape {density.shape}, grid has {len(self.grid)} points")
        if np.any(density < 0) or not np.all(np.isfinite(density)):
            raise ValidationError("density values must be finite and non-negative")
        mass = float(np.sum(density * self.grid.weights))
        if abs(mass - 1.0) > 1e-8:
            raise ValidationError(f"density integrates to {mass:.12g}, not 1")
        object.__setattr__(self, "density", density)

    def expectation(self, values) -> float:
        return float(np.sum(self.grid.weights * self.density * np.asarray(values, dtype=np.float64)))

    def to_frame(self) -> pd.DataFrame:
        cols = {f"theta_{i}": self.grid.points[:, i] for i in range(self.grid.points.shape[1])}
        cols["weight"] = self.grid.weights
        cols["density"] = self.density
        return pd.DataFrame(cols)

    def to_csv(self, path: str):
        self.to_frame().to_csv(path, index=False, lineterminator="\n")


@dataclass(frozen=True)
class GibbsPriorSpec:
    beta: float
    alpha: float
    delta: float
    losses: np.ndarray


def _losses(losses, grid: ParamGrid) -> np.ndarray:
    losses = np.asarray(losses, dtype=np.float64).ravel()
    if losses.shape != (len(grid),):
        raise ValidationError(f"expected one loss value per grid point ({len(grid)}), got {losses.size}")
    if not np.all(np.isfinite(losses)):
        raise ValidationError("loss values must be finite")
    return losses


def _normalised(log_unnorm: np.ndarray, grid: ParamGrid) -> np.ndarray:
    log_z = logsumexp(log_unnorm, b=grid.weights)
    return np.exp(log_unnorm - log_z)


def maxwell_boltzmann_density(losses, grid: ParamGrid, beta: float) -> GridDensity:
    """p(θ) ∝ e^{−β L(θ)}, normalised on the grid."""
    losses = _losses(losses, grid)
    return GridDensity(grid, _normalised(-beta * losses, grid))


def phi_beta(losses, grid: ParamGrid, beta: float) -> float:
    """Φ(β) = E[L] under the normalised Maxwell-Boltzmann density; decreasing in β."""
    losses = _losses(losses, grid)
    return maxwell_boltzmann_density(losses, grid, beta).expectation(losses)


def phi_beta_unnormalized(losses, grid: ParamGrid, beta: float) -> float:
    """(∫ e^{−βL}) · (∫ L e^{−βL}), the displayed form without the normalising division."""
    losses = _losses(losses, grid)
    with np.errstate(over="ignore"):
        weights = grid.weights * np.exp(-beta * losses)
        return float(np.sum(weights) * np.sum(weights * losses))


def solve_beta(losses, grid: ParamGrid, delta: float, tol: float = 1e-12,
               bracket: Tuple[float, float] = BETA_BRACKET, max_iter: int = 200) -> float:
    """Bisection for Φ(β) = δ on the bracket; the first midpoint of the default bracket is β = 0."""
    losses = _losses(losses, grid)
    lo, hi = bracket
    phi_lo, phi_hi = phi_beta(losses, grid, lo), phi_beta(losses, grid, hi)
    if not phi_hi - tol <= delta <= phi_lo + tol:
        raise ValidationError(f"δ={delta} is not attainable; Φ ranges over [{phi_hi:.12g}, {phi_lo:.12g}] "
                              f"for β in [{lo}, {hi}]")

    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        value = phi_beta(losses, grid, mid)
        if abs(value - delta) <= tol:
            return mid
        # Φ decreases in β
        if value > delta:
            lo = mid
        else:
            hi = mid
    logger.warning(f"⚠️ solve_beta stopped after {max_iter} bisections at β={mid:.12g}")
    return mid


def gibbs_prior_spec(losses, grid: ParamGrid, delta: float) -> GibbsPriorSpec:
    """β solving Φ(β) = δ together with α = 1 / Σ e^{−βL}·weight."""
    losses = _losses(losses, grid)
    beta = solve_beta(losses, grid, delta)
    alpha = float(np.exp(-logsumexp(-beta * losses, b=grid.weights)))
    return GibbsPriorSpec(beta, alpha, delta, losses)


def gibbs_posterior(prior: GridDensity, lam: float, n: int, risks) -> GridDensity:
    """ς_λ ∝ π·e^{−λ n R̂}; λ = 0 returns the prior."""
    if lam < 0:
        raise ValidationError(f"λ must be >= 0, got {lam}")
    if lam == 0:
        return GridDensity(prior.grid, prior.density.copy())
    risks = _losses(risks, prior.grid)
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior.density)
    return GridDensity(prior.grid, _normalised(log_prior - lam * n * risks, prior.grid))


def grid_kl(p: GridDensity, q: GridDensity) -> float:
    """D_KL[p ‖ q] by grid quadrature over the cells where p > 0."""
    if len(p.grid) != len(q.grid):
        raise ValidationError("densities live on different grids")
    support = p.density > 0
    if np.any(q.density[support] == 0):
        raise ValidationError("KL undefined: reference density is zero where the other density is positive")
    ratio = np.log(p.density[support] / q.density[support])
    return max(0.0, float(np.sum(p.grid.weights[support] * p.density[support] * ratio)))


def focal_regularizer_kl(posterior: GridDensity, beta: float, losses) -> float:
    """D_KL[ς ‖ π_β] with π_β the Maxwell-Boltzmann prior on the posterior's grid."""
    prior = maxwell_boltzmann_density(losses, posterior.grid, beta)
    return grid_kl(posterior, prior)


def temperature_scan(losses, grid: ParamGrid, betas) -> pd.DataFrame:
    """Φ(β) and the KL to the β = 0 (uniform) density along a list of β values."""
    losses = _losses(losses, grid)
    uniform = maxwell_boltzmann_density(losses, grid, 0.0)
    rows = []
    for beta in betas:
        dens = maxwell_boltzmann_density(losses, grid, beta)
        rows.append({"beta": float(beta), "phi": dens.expectation(losses), "kl_to_uniform": grid_kl(dens, uniform)})
    return pd.DataFrame(rows)
