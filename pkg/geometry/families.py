"""
Parametric families with log-densities written in autodiff operations, their Fisher metric
and the finite-difference Hessian of the KL divergence.
"""
import logging
from abc import ABC, abstractmethod
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from autodiff import tape as ad
from autodiff.functional import exact_hessian
from errors import ValidationError
from numkit.linalg import sym_eigen
from numkit.rng import RngStream

logger = logging.getLogger(__name__)

GAUSSIAN_GRID_POINTS = 4001
GAUSSIAN_GRID_WIDTH = 12.0


class ParametricFamily(ABC):
    """p(x; ξ) with a quadrature rule over x."""

    name: str = "family"
    dim: int = 1

    def check(self, xi) -> np.ndarray:
        xi = np.array(xi, dtype=np.float64).ravel()
        if xi.shape != (self.dim,):
            raise ValidationError(f"{self.name} takes {self.dim} parameter(s), got {xi.shape}")
        return xi

    @abstractmethod
    def log_density(self, x: np.ndarray, xi):
        """ℓ(x; ξ) for every x; differentiable in ξ when ξ is a Node."""

    @abstractmethod
    def quadrature(self, xi) -> Tuple[np.ndarray, np.ndarray]:
        """(support points, weights) covering the density at ξ."""

    @abstractmethod
    def sample(self, xi, n: int, rng: RngStream) -> np.ndarray:
        pass

    def density(self, x: np.ndarray, xi) -> np.ndarray:
        return np.exp(np.asarray(self.log_density(x, self.check(xi))))

    def normalization_error(self, xi) -> float:
        x, w = self.quadrature(xi)
        return abs(float(np.sum(w * self.density(x, xi))) - 1.0)

    def fisher_closed_form(self, xi) -> Optional[np.ndarray]:
        return None

    def kl(self, xi1, xi2) -> float:
        """KL(p_ξ1 ‖ p_ξ2) by quadrature on the grid of ξ1."""
        xi1, xi2 = self.check(xi1), self.check(xi2)
        x, w = self.quadrature(xi1)
        log_p = np.asarray(self.log_density(x, xi1))
        log_q = np.asarray(self.log_density(x, xi2))
        return max(0.0, float(np.sum(w * np.exp(log_p) * (log_p - log_q))))


class Bernoulli(ParametricFamily):
    name = "bernoulli"
    dim = 1

    def check(self, xi) -> np.ndarray:
        xi = super().check(xi)
        if not 0.0 < xi[0] < 1.0:
            raise ValidationError(f"Bernoulli p must lie in (0, 1), got {xi[0]}")
        return xi

    def log_density(self, x, xi):
        x = np.asarray(x, dtype=np.float64)
        p = ad.take(xi, 0, 1)
        return ad.add(ad.mul(x, ad.log(p)), ad.mul(1.0 - x, ad.log(ad.sub(1.0, p))))

    def quadrature(self, xi):
        return np.array([0.0, 1.0]), np.ones(2)

    def sample(self, xi, n, rng):
        p = self.check(xi)[0]
        return (rng.uniform(0.0, 1.0, n) < p).astype(np.float64)

    def fisher_closed_form(self, xi):
        p = self.check(xi)[0]
        return np.array([[1.0 / (p * (1.0 - p))]])

    def kl(self, xi1, xi2):
        p, q = self.check(xi1)[0], self.check(xi2)[0]
        return float(p * np.log(p / q) + (1.0 - p) * np.log((1.0 - p) / (1.0 - q)))


class Gaussian(ParametricFamily):
    """N(μ, σ²) with ξ = (μ, σ)."""
    name = "gaussian"
    dim = 2

    def check(self, xi) -> np.ndarray:
        xi = super().check(xi)
        if xi[1] <= 0.0:
            raise ValidationError(f"Gaussian σ must be positive, got {xi[1]}")
        return xi

    def log_density(self, x, xi):
        x = np.asarray(x, dtype=np.float64)
        mu, sigma = ad.take(xi, 0, 1), ad.take(xi, 1, 2)
        z = ad.div(ad.sub(x, mu), sigma)
        return ad.sub(ad.sub(-0.5 * np.log(2.0 * np.pi), ad.log(sigma)), ad.mul(0.5, ad.mul(z, z)))

    def quadrature(self, xi):
        mu, sigma = self.check(xi)
        x = np.linspace(mu - GAUSSIAN_GRID_WIDTH * sigma, mu + GAUSSIAN_GRID_WIDTH * sigma, GAUSSIAN_GRID_POINTS)
        w = np.full(x.size, x[1] - x[0])
        w[[0, -1]] *= 0.5
        return x, w

    def sample(self, xi, n, rng):
        mu, sigma = self.check(xi)
        return mu + sigma * rng.normal(n)

    def fisher_closed_form(self, xi):
        sigma = self.check(xi)[1]
        return np.diag([1.0 / sigma ** 2, 2.0 / sigma ** 2])

    def kl(self, xi1, xi2):
        (m1, s1), (m2, s2) = self.check(xi1), self.check(xi2)
        return float(np.log(s2 / s1) + (s1 ** 2 + (m1 - m2) ** 2) / (2.0 * s2 ** 2) - 0.5)


class Categorical(ParametricFamily):
    """K classes with logits (0, ξ_1, ..., ξ_{K-1}); class 0 is the reference."""

    def __init__(self, classes: int = 3):
        if classes < 2:
            raise ValidationError(f"a categorical family needs at least 2 classes, got {classes}")
        self.classes = classes
        self.dim = classes - 1
        self.name = f"categorical-{classes}"

    def log_density(self, x, xi):
        x = np.asarray(x, dtype=np.int64)
        logits = ad.embed(xi, self.classes, 1)
        if isinstance(logits, ad.Node):
            shift = float(np.max(logits.value))
            log_z = ad.add(ad.log(ad.sum_(ad.exp(ad.sub(logits, shift)))), shift)
        else:
            log_z = logsumexp(logits)
        log_p = ad.sub(logits, log_z)
        picks = np.zeros((x.size, self.classes))
        picks[np.arange(x.size), x] = 1.0
        return ad.reshape(ad.matmul(picks, ad.reshape(log_p, (self.classes, 1))), (x.size,))

    def quadrature(self, xi):
        return np.arange(self.classes), np.ones(self.classes)

    def probs(self, xi) -> np.ndarray:
        return self.density(np.arange(self.classes), xi)

    def sample(self, xi, n, rng):
        return rng.choice(self.classes, n, p=self.probs(xi))

    def fisher_closed_form(self, xi):
        q = self.probs(xi)[1:]
        return np.diag(q) - np.outer(q, q)


FAMILIES: Dict[str, ParametricFamily] = {
    "bernoulli": Bernoulli(),
    "gaussian": Gaussian(),
    "categorical": Categorical(3),
}


def fisher_metric(family: ParametricFamily, xi, n_samples: Optional[int] = None,
                  rng: Optional[RngStream] = None) -> np.ndarray:
    """
    g_ij(ξ) = −E[∂²ℓ/∂ξ_i∂ξ_j], the expectation taken on the family's quadrature grid, or over
    ``n_samples`` Monte Carlo draws when given. An indefinite result is logged, not raised.
    """
    xi = family.check(xi)
    if n_samples is None:
        x, w = family.quadrature(xi)
        coef = w * family.density(x, xi)
    else:
        if n_samples < 1:
            raise ValidationError(f"n_samples must be >= 1, got {n_samples}")
        x = family.sample(xi, n_samples, rng or RngStream(0))
        coef = np.full(n_samples, 1.0 / n_samples)

    fisher = -exact_hessian(lambda z: ad.sum_(ad.mul(coef, family.log_density(x, z))), xi)
    eigenvalues, _ = sym_eigen(fisher, tol=1e-8)
    if eigenvalues[0] <= 0.0:
        logger.warning(f"⚠️ {family.name} Fisher estimate is not positive definite "
                       f"(min eigenvalue {eigenvalues[0]:.3e}); grid or sample too coarse")
    return fisher


def kl_hessian_fd(family: ParametricFamily, xi0, h: float = 1e-3) -> np.ndarray:
    """Hessian of ξ ↦ KL(ξ₀ ‖ ξ) at ξ = ξ₀ by central second differences."""
    xi0 = family.check(xi0)
    d = xi0.size
    eye = np.eye(d) * h
    out = np.zeros((d, d))
    for i in range(d):
        for j in range(i, d):
            kl = [family.kl(xi0, xi0 + si * eye[i] + sj * eye[j]) for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1))]
            out[i, j] = out[j, i] = (kl[0] - kl[1] - kl[2] + kl[3]) / (4.0 * h * h)
    return out
