"""
Matrix-free curvature estimators over an HvpOracle: Hutchinson trace and power iteration.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from autodiff.functional import HvpOracle
from errors import NumericalError, ValidationError
from numkit.rng import RngStream, rademacher

logger = logging.getLogger(__name__)

DEFAULT_REPORT_PROBES = 1000
DEFAULT_POWER_ITERS = 200
DEFAULT_POWER_TOL = 1e-10
POWER_START_SEED = 0

OracleLike = Union[HvpOracle, np.ndarray]


def as_oracle(h: OracleLike) -> HvpOracle:
    if isinstance(h, HvpOracle):
        return h
    return HvpOracle.from_matrix(h)


def hutchinson_trace(oracle: OracleLike, probes: int, rng: RngStream) -> Tuple[float, float]:
    """
    (1/M) Σ vᵢᵀ H vᵢ over Rademacher probes, with standard error std / √M
    (sample std with ddof=1; 0 for a single probe).
    """
    if probes < 1:
        raise ValidationError(f"probe count must be >= 1, got {probes}")
    oracle = as_oracle(oracle)
    quads = np.empty(probes)
    for i in range(probes):
        v = rademacher(rng, oracle.dim)
        try:
            hv = oracle(v)
        except NumericalError as e:
            raise NumericalError(f"probe {i}: {e}") from e
        quads[i] = float(v @ hv)
    estimate = float(np.mean(quads))
    stderr = float(np.std(quads, ddof=1) / np.sqrt(probes)) if probes > 1 else 0.0
    return estimate, stderr


@dataclass(frozen=True)
class PowerIterationResult:
    lambda_max: float
    residual: float
    iters: int
    converged: bool
    tie: bool = False

    @property
    def spectral_radius(self) -> float:
        return abs(self.lambda_max)


def power_iteration_lambda_max(oracle: OracleLike, iters: int = DEFAULT_POWER_ITERS,
                               tol: float = DEFAULT_POWER_TOL,
                               rng: Optional[RngStream] = None) -> PowerIterationResult:
    """
    Dominant eigenvalue by magnitude, returned with its sign.

    Stops when successive Rayleigh quotients differ by at most tol·max(1, |λ|). When λ_max and
    -λ_min tie the quotient never settles; the magnitude ‖Hu‖ is reported and the tie flagged.
    """
    if iters < 1:
        raise ValidationError(f"iters must be >= 1, got {iters}")
    oracle = as_oracle(oracle)
    rng = rng or RngStream(POWER_START_SEED)
    u = rng.normal(oracle.dim)
    u /= np.linalg.norm(u)

    lam, prev = 0.0, None
    converged = False
    it = 0
    for it in range(1, iters + 1):
        w = oracle(u)
        lam = float(u @ w)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            # u lies in the null space; H is zero along every direction we can reach
            converged = True
            break
        u = w / norm
        if prev is not None and abs(lam - prev) <= tol * max(1.0, abs(lam)):
            converged = True
            break
        prev = lam

    hu = oracle(u)
    lam = float(u @ hu)
    magnitude = float(np.linalg.norm(hu))
    # with a ±λ tie the iterate keeps a fixed mix of both eigenvectors, so ‖Hu‖ and |uᵀHu| disagree
    tie = abs(magnitude - abs(lam)) > 1e-6 * max(magnitude, 1.0)
    if tie:
        lam = magnitude if lam >= 0 else -magnitude
        logger.warning(f"⚠️ power iteration: λ_max and -λ_min tie at |λ|={magnitude:.6g}; reporting the magnitude")
    elif not converged:
        logger.warning(f"⚠️ power iteration did not converge in {iters} iterations (λ≈{lam:.6g})")
    residual = float(np.linalg.norm(hu - lam * u))
    return PowerIterationResult(lam, residual, it, converged, tie)
