"""Small dense linear-algebra helpers used across the package."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, NotPositiveDefiniteError

SYM_RTOL = 1e-8
PSD_RTOL = 1e-10


def as_matrix(M, name: str = "matrix", shape: tuple[int, int] | None = None) -> np.ndarray:
    """Return ``M`` as a 2-D float array, optionally enforcing a shape."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {M.shape}")
    if shape is not None and M.shape != tuple(shape):
        raise DimensionError(f"{name} must have shape {tuple(shape)}, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def symmetrize(M, name: str = "matrix", rtol: float = SYM_RTOL) -> np.ndarray:
    """Return (M + M^T)/2, rejecting inputs whose asymmetry exceeds ``rtol``."""
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got {M.shape}")
    scale = max(np.abs(M).max(), 1.0)
    asym = np.abs(M - M.T).max()
    if asym > rtol * scale:
        raise ValueError(f"{name} is not symmetric (max |M - M^T| = {asym:.3e})")
    return 0.5 * (M + M.T)


def is_pd(M) -> bool:
    try:
        np.linalg.cholesky(0.5 * (M + M.T))
    except np.linalg.LinAlgError:
        return False
    return True


def require_pd(M, name: str = "matrix") -> np.ndarray:
    M = symmetrize(M, name)
    if not is_pd(M):
        raise NotPositiveDefiniteError(
            f"{name} is not positive definite (min eig {np.linalg.eigvalsh(M).min():.3e})"
        )
    return M


def min_eig(M) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())


def require_psd(M, name: str = "matrix", rtol: float = PSD_RTOL) -> np.ndarray:
    M = symmetrize(M, name)
    lam = min_eig(M)
    tol = rtol * max(np.linalg.norm(M, 2), 1.0)
    if lam < -tol:
        raise NotPositiveDefiniteError(f"{name} is not positive semidefinite (min eig {lam:.3e})")
    return M


def logdet_pd(M, name: str = "matrix") -> float:
    """log det of a symmetric positive definite matrix via Cholesky."""
    try:
        C = np.linalg.cholesky(0.5 * (M + M.T))
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(f"logdet argument {name} is not positive definite") from None
    return 2.0 * float(np.sum(np.log(np.diag(C))))


def psd_sqrt(M) -> np.ndarray:
    """Symmetric square root of a PSD matrix."""
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def block_diag(*mats) -> np.ndarray:
    return sla.block_diag(*mats)
