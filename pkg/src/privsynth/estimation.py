"""Kalman gain and discrete Lyapunov solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _linalg as la
from .errors import ConvergenceError, NumericalError, StabilityError

STABILITY_MARGIN = 1e-10


def spectral_radius(M) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got shape {M.shape}")
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue computation failed: {exc}") from exc
    return float(np.abs(ev).max(initial=0.0))


def _require_stable(A, what="transition matrix"):
    rho = spectral_radius(A)
    if rho >= 1.0 - STABILITY_MARGIN:
        raise StabilityError(f"{what} is not Schur stable (spectral radius {rho:.12f})", rho)
    return rho


@dataclass(frozen=True, eq=False)
class LyapunovSolution:
    """Stationary covariance of ``zeta[k+1] = Acal zeta[k] + noise``.

    For the extended state ``[e; x~]`` the two diagonal blocks are exposed as
    ``Sigma_e`` (prediction error) and ``Sigma_xtilde`` (distorted state).
    """

    Sigma_zeta: np.ndarray
    residual: float

    @property
    def _half(self) -> int:
        n = self.Sigma_zeta.shape[0]
        if n % 2:
            raise ValueError("block views need an even-dimensional extended state")
        return n // 2

    @property
    def Sigma_xtilde(self) -> np.ndarray:
        h = self._half
        return self.Sigma_zeta[h:, h:]

    @property
    def Sigma_e(self) -> np.ndarray:
        h = self._half
        return self.Sigma_zeta[:h, :h]


def _residual(A, S, B) -> float:
    return float(np.linalg.norm(A @ S @ A.T - S + B, "fro"))


def _duplication(n: int) -> np.ndarray:
    """Duplication matrix D with vec(S) = D vech(S) (row-major vec, upper-triangle vech)."""
    iu = np.triu_indices(n)
    D = np.zeros((n * n, iu[0].size))
    for k, (i, j) in enumerate(zip(*iu)):
        D[i * n + j, k] = 1.0
        D[j * n + i, k] = 1.0
    return D


def solve_lyapunov_direct(Acal, Bcal) -> LyapunovSolution:
    """Solve ``Acal S Acal^T - S + Bcal = 0`` by a Kronecker linear solve.

    The unknown is restricted to its upper triangle, giving an
    ``n(n+1)/2``-dimensional square system.  Intended for small n (<= 32).
    """
    A = la.as_matrix(Acal, "Acal")
    n = A.shape[0]
    B = la.symmetrize(la.as_matrix(Bcal, "Bcal", (n, n)), "Bcal")
    _require_stable(A, "Acal")
    D = _duplication(n)
    # row-major vec: vec(A S A^T) = (A kron A) vec(S)
    T = np.eye(n * n) - np.kron(A, A)
    Dp = D.T / D.sum(axis=0)[:, None]  # left inverse of D
    lhs = Dp @ T @ D
    rhs = Dp @ B.ravel()
    try:
        s = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular Lyapunov system: {exc}") from exc
    S = (D @ s).reshape(n, n)
    S = 0.5 * (S + S.T)
    return LyapunovSolution(S, _residual(A, S, B))


def solve_lyapunov_iterative(Acal, Bcal, Sigma0=None, max_steps: int = 100_000, tol: float = 1e-12):
    """Iterate ``S <- Acal S Acal^T + Bcal`` to its fixed point.

    Stops when ``||S_next - S||_F < tol (1 + ||S||_F)``.

    Returns:
        (LyapunovSolution, steps_used)
    """
    A = la.as_matrix(Acal, "Acal")
    n = A.shape[0]
    B = la.symmetrize(la.as_matrix(Bcal, "Bcal", (n, n)), "Bcal")
    _require_stable(A, "Acal")
    S = np.zeros((n, n)) if Sigma0 is None else la.symmetrize(la.as_matrix(Sigma0, "Sigma0", (n, n)), "Sigma0")
    for step in range(1, max_steps + 1):
        S_next = A @ S @ A.T + B
        S_next = 0.5 * (S_next + S_next.T)
        if np.linalg.norm(S_next - S, "fro") < tol * (1.0 + np.linalg.norm(S, "fro")):
            return LyapunovSolution(S_next, _residual(A, S_next, B)), step
        S = S_next
    raise ConvergenceError(f"Lyapunov iteration did not converge in {max_steps} steps")


def steady_state_kalman_gain(A, Sigma_w, Sigma_h, max_steps: int = 100_000, tol: float = 1e-12):
    """Steady-state filter gain for full-state measurements (C = I).

    Iterates the filtering Riccati recursion::

        P_pred = A P A^T + Sigma_w
        L      = P_pred (P_pred + Sigma_h)^-1
        P      = (I - L) P_pred

    Returns:
        (L, Sigma_rho) where Sigma_rho is the converged filtered covariance P.
    """
    A = la.as_matrix(A, "A")
    n = A.shape[0]
    W = la.require_pd(la.as_matrix(Sigma_w, "Sigma_w", (n, n)), "Sigma_w")
    V = la.require_pd(la.as_matrix(Sigma_h, "Sigma_h", (n, n)), "Sigma_h")
    I = np.eye(n)
    P = np.zeros((n, n))
    for _ in range(max_steps):
        P_pred = A @ P @ A.T + W
        L = np.linalg.solve((P_pred + V).T, P_pred.T).T
        P_next = (I - L) @ P_pred
        P_next = 0.5 * (P_next + P_next.T)
        if np.linalg.norm(P_next - P, "fro") < tol * (1.0 + np.linalg.norm(P, "fro")):
            P = P_next
            P_pred = A @ P @ A.T + W
            L = np.linalg.solve((P_pred + V).T, P_pred.T).T
            return L, P
        P = P_next
    raise ConvergenceError(f"Riccati iteration did not converge in {max_steps} steps")


def riccati_map(P_pred, A, Sigma_w, Sigma_h) -> np.ndarray:
    """One prediction-form Riccati step; fixed points are steady-state P_pred."""
    L = np.linalg.solve((P_pred + Sigma_h).T, P_pred.T).T
    P = (np.eye(A.shape[0]) - L) @ P_pred
    return A @ P @ A.T + Sigma_w


def filter_error_covariance(A, L, Sigma_w, Sigma_h) -> np.ndarray:
    """Stationary filtered error covariance of gain ``L`` on the undistorted plant.

    ``rho[k] = (I - L)(A rho[k-1] + w[k-1]) - L h[k]``.
    """
    n = A.shape[0]
    IL = np.eye(n) - L
    F = IL @ A
    W = IL @ Sigma_w @ IL.T + L @ Sigma_h @ L.T
    return solve_lyapunov_direct(F, W).Sigma_zeta
