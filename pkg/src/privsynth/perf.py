"""Closed-form infinite-horizon LQR costs with and without the mechanism."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StabilityError
from .estimation import solve_lyapunov_direct, spectral_radius
from .model import PlantModel, PrivacyMechanism


@dataclass(frozen=True, eq=False)
class PerformanceReport:
    baseline_cost: float
    distorted_cost: float
    slack: float
    Sigma_x: np.ndarray
    Sigma_xtilde: np.ndarray

    @property
    def degradation(self) -> float:
        return self.distorted_cost - self.baseline_cost


def baseline_lqr_cost(plant: PlantModel) -> tuple[float, np.ndarray]:
    """Average cost of ``x' Q x + u' R u`` with ``u = K (x + h)``.

    Returns:
        (C_inf, Sigma_x)
    """
    A, B, K = plant.A, plant.B, plant.K
    BK = B @ K
    Sx = solve_lyapunov_direct(A + BK, BK @ plant.Sigma_h @ BK.T + plant.Sigma_w).Sigma_zeta
    KRK = K.T @ plant.R @ K
    cost = np.trace(plant.Q @ Sx) + np.trace(KRK @ (Sx + plant.Sigma_h))
    return float(cost), Sx


def distorted_lqr_cost(plant: PlantModel, mech: PrivacyMechanism) -> tuple[float, np.ndarray]:
    """Average LQR cost of the loop closed through the mechanism.

    ``u~ = K G x~ + K v~ + z`` with ``x~``, ``v~`` and ``z`` independent and
    zero mean, so the expected stage cost is
    ``tr((Q + G'K'RKG) Sx~) + tr(K'RK Vt) + tr(R Z)``.

    Returns:
        (C_tilde, Sigma_xtilde)
    """
    mech.check_against(plant)
    A, B, K, G = plant.A, plant.B, plant.K, mech.G
    F = A + B @ K @ G
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise StabilityError(f"candidate mechanism destabilizes the loop (spectral radius of A + BKG = {rho:.6f})", rho)
    Vt = mech.sigma_vtilde(plant.Sigma_h)
    BK = B @ K
    Sxt = solve_lyapunov_direct(F, BK @ Vt @ BK.T + B @ mech.Sigma_z @ B.T + plant.Sigma_w).Sigma_zeta
    KG = K @ G
    KRK = K.T @ plant.R @ K
    cost = np.trace((plant.Q + KG.T @ plant.R @ KG) @ Sxt) + np.trace(KRK @ Vt) + np.trace(plant.R @ mech.Sigma_z)
    return float(cost), Sxt


def constraint_slack(plant: PlantModel, mech: PrivacyMechanism, epsilon: float) -> float:
    """``epsilon - (C_tilde - C_inf)``; negative means the budget is exceeded."""
    return performance_report(plant, mech, epsilon).slack


def performance_report(plant: PlantModel, mech: PrivacyMechanism, epsilon: float) -> PerformanceReport:
    c0, Sx = baseline_lqr_cost(plant)
    c1, Sxt = distorted_lqr_cost(plant, mech)
    return PerformanceReport(c0, c1, float(epsilon - (c1 - c0)), Sx, Sxt)
