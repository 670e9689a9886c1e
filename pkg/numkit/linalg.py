"""
Dense linear algebra on float64 numpy arrays.

A Matrix is a 2-D, finite, float64 ``np.ndarray`` (row-major). The eigensolver and the SVD are
Jacobi-rotation methods: slow beyond a few hundred rows, but deterministic and easy to verify.
"""
import logging
from typing import Tuple

import numpy as np

from errors import NumericalError, ValidationError

logger = logging.getLogger(__name__)

MAX_JACOBI_DIM = 512
DEFAULT_RANK_TOL = 1e-10


def as_matrix(data) -> np.ndarray:
    """Convert to a finite 2-D float64 array, rejecting anything else."""
    m = np.array(data, dtype=np.float64)
    if m.ndim != 2:
        raise ValidationError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericalError("matrix has non-finite entries")
    return m


def is_symmetric(m: np.ndarray, tol: float = 1e-10) -> bool:
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    return bool(np.max(np.abs(m - m.T), initial=0.0) <= tol * scale)


def sym_eigen(m, tol: float = 1e-10) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    Returns (eigenvalues ascending, eigenvectors as columns).
    """
    a = as_matrix(m)
    n, k = a.shape
    if n != k:
        raise ValidationError(f"sym_eigen needs a square matrix, got {a.shape}")
    if n > MAX_JACOBI_DIM:
        raise ValidationError(f"sym_eigen is limited to {MAX_JACOBI_DIM}x{MAX_JACOBI_DIM}, got {n}x{n}")
    asym = float(np.max(np.abs(a - a.T), initial=0.0))
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    if asym > tol * scale:
        raise ValidationError(f"matrix is not symmetric: max |M - M^T| = {asym:.3e} exceeds tol {tol:.1e}")

    a = 0.5 * (a + a.T)
    v = np.eye(n)
    frob = float(np.linalg.norm(a))
    if frob == 0.0:
        return np.zeros(n), v

    for sweep in range(100):
        off = float(np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0)))
        if off <= 1e-15 * frob:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    else:
        logger.warning(f"⚠️ Jacobi eigensolver hit the sweep cap on a {n}x{n} matrix")

    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order]


def det(m) -> float:
    """Determinant of a square matrix (LU based)."""
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"det needs a square matrix, got {a.shape}")
    if a.shape[0] == 0:
        return 1.0
    return float(np.linalg.det(a))


def singular_values(m) -> np.ndarray:
    """Singular values (descending) by one-sided Jacobi orthogonalisation of the columns."""
    a = as_matrix(m)
    if a.shape[0] < a.shape[1]:
        a = a.T
    u = a.copy()
    n = u.shape[1]
    eps = np.finfo(np.float64).eps

    for sweep in range(100):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = float(u[:, i] @ u[:, i])
                beta = float(u[:, j] @ u[:, j])
                gamma = float(u[:, i] @ u[:, j])
                if gamma == 0.0 or abs(gamma) <= eps * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta)) if zeta != 0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                ui, uj = u[:, i].copy(), u[:, j].copy()
                u[:, i] = c * ui - s * uj
                u[:, j] = s * ui + c * uj
        if not rotated:
            break

    return np.sort(np.linalg.norm(u, axis=0))[::-1]


def numeric_rank(m, tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above tol times the largest one."""
    sv = singular_values(m)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))
