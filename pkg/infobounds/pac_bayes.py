"""PAC-Bayes-λ (Thiemann) bound with its closed-form optimal λ."""
import logging
from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np

from errors import ValidationError

logger = logging.getLogger(__name__)

LAMBDA_GRID = np.linspace(0.01, 1.99, 19801)


@dataclass(frozen=True)
class PacBayesCase:
    n: int
    epsilon: float
    lam: float
    kl: float
    emp_risk: float

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"n must be >= 1, got {self.n}")
        if self.epsilon <= 0:
            raise ValidationError(f"confidence ε must be positive, got {self.epsilon}")
        if self.epsilon >= 1:
            logger.warning(f"⚠️ ε={self.epsilon} >= 1: the bound holds with vacuous confidence")
        if not 0.0 < self.lam < 2.0:
            raise ValidationError(f"λ must lie in (0, 2), got {self.lam}")
        if self.kl < 0:
            raise ValidationError(f"KL must be >= 0, got {self.kl}")
        if not 0.0 <= self.emp_risk <= 1.0:
            raise ValidationError(f"empirical risk must lie in [0, 1], got {self.emp_risk}")

    def to_dict(self) -> dict:
        return asdict(self)


def _complexity(n: int, kl: float, epsilon: float) -> float:
    return kl + float(np.log(2.0 * np.sqrt(n) / epsilon))


def gibbs_risk_term(emp_risk: float, lam: float) -> float:
    """J = E_ς[R̂] / (1 − λ/2)."""
    return emp_risk / (1.0 - lam / 2.0)


def thiemann_bound(case: PacBayesCase) -> float:
    """J + (KL + ln(2√n/ε)) / (n λ (1 − λ/2))."""
    half = 1.0 - case.lam / 2.0
    return gibbs_risk_term(case.emp_risk, case.lam) + _complexity(case.n, case.kl, case.epsilon) / (case.n * case.lam * half)


def optimal_lambda(n: int, kl: float, emp_risk: float, delta: float) -> float:
    """λ* = 2 / (√(2n E[R̂] / (KL + ln(2√n/δ)) + 1) + 1)."""
    denom = _complexity(n, kl, delta)
    if denom <= 0:
        raise ValidationError(f"KL + ln(2√n/δ) = {denom:.6g} must be positive for the optimal λ")
    return float(2.0 / (np.sqrt(2.0 * n * emp_risk / denom + 1.0) + 1.0))


def grid_argmin_lambda(n: int, kl: float, emp_risk: float, delta: float,
                       grid: np.ndarray = LAMBDA_GRID) -> Tuple[float, float]:
    """Dense-grid minimiser of the bound over λ: (λ, bound)."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0 or np.any(grid <= 0) or np.any(grid >= 2):
        raise ValidationError("λ grid must be nonempty and inside (0, 2)")
    PacBayesCase(n, delta, float(grid[0]), kl, emp_risk)
    half = 1.0 - grid / 2.0
    bounds = emp_risk / half + _complexity(n, kl, delta) / (n * grid * half)
    best = int(np.argmin(bounds))
    return float(grid[best]), float(bounds[best])
