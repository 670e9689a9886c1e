import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from autodiff.functional import MAX_DENSE_DIM
from curvature.contractions import gaussian_curvature, operator_norm, spectral_radius
from curvature.estimators import (DEFAULT_POWER_ITERS, DEFAULT_POWER_TOL, DEFAULT_REPORT_PROBES, OracleLike,
                                  as_oracle, hutchinson_trace, power_iteration_lambda_max)
from numkit.linalg import sym_eigen
from numkit.rng import RngStream

logger = logging.getLogger(__name__)

# Jacobi is quadratic per sweep in pure numpy; exact spectra only for small models
EXACT_EIGEN_MAX_DIM = 64

REPORT_KEYS = ("trace", "trace_stderr", "probes", "lambda_max", "residual", "iters",
               "opnorm_1", "opnorm_inf", "det", "dim")


@dataclass
class CurvatureReport:
    trace: float
    trace_stderr: float
    probes: int
    lambda_max: float
    residual: float
    iters: int
    dim: int
    converged: bool = True
    tie: bool = False
    opnorm_1: Optional[float] = None
    opnorm_inf: Optional[float] = None
    det: Optional[float] = None
    eigenvalues: Optional[np.ndarray] = None

    @property
    def spectral_radius(self) -> float:
        return abs(self.lambda_max)

    def to_dict(self) -> dict:
        return {key: getattr(self, key) for key in REPORT_KEYS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def curvature_report(oracle: OracleLike, probes: int = DEFAULT_REPORT_PROBES, rng: Optional[RngStream] = None,
                     power_iters: int = DEFAULT_POWER_ITERS, tol: float = DEFAULT_POWER_TOL,
                     dense_extras: bool = True) -> CurvatureReport:
    """Hutchinson trace and power-iteration λ_max, plus norms/det/spectrum when H can be materialised."""
    oracle = as_oracle(oracle)
    rng = rng or RngStream(0)
    trace, stderr = hutchinson_trace(oracle, probes, rng.child(0))
    power = power_iteration_lambda_max(oracle, power_iters, tol, rng.child(1))
    report = CurvatureReport(trace=trace, trace_stderr=stderr, probes=probes, lambda_max=power.lambda_max,
                             residual=power.residual, iters=power.iters, dim=oracle.dim,
                             converged=power.converged, tie=power.tie)

    if dense_extras and oracle.dim <= MAX_DENSE_DIM:
        h = oracle.dense()
        report.opnorm_1 = operator_norm(h, 1)
        report.opnorm_inf = operator_norm(h, "inf")
        report.det = gaussian_curvature(h)
        if oracle.dim <= EXACT_EIGEN_MAX_DIM:
            report.eigenvalues, _ = sym_eigen(h, tol=1e-8)
            exact = spectral_radius(report.eigenvalues)
            if abs(exact - report.spectral_radius) > max(power.residual, 1e-8 * max(exact, 1.0)):
                logger.warning(f"⚠️ power iteration |λ|={report.spectral_radius:.6g} differs from the exact "
                               f"spectral radius {exact:.6g} beyond its residual")
    return report
