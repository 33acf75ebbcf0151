"""Information leakage between the distorted state and the adversary's estimate.

All quantities are in nats.  The rate splits into an uplink term (sensor
channel, plant -> station) and a downlink term (control channel, station ->
plant)::

    uplink   = 1/2 logdet(L G Se G^T L^T + L Vt L^T) - 1/2 logdet(L Vt L^T)
    downlink = 1/2 logdet(B K Vt K^T B^T + B Z B^T + W) - 1/2 logdet(B Z B^T + W)

with ``Se`` the one-step prediction error covariance, ``Vt`` the composite
uplink noise covariance and ``Z``, ``W`` the input and process noise
covariances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import logdet_pd, require_psd
from .errors import NotPositiveDefiniteError
from .estimation import solve_lyapunov_direct
from .model import AdversaryFilter, PlantModel, PrivacyMechanism, assemble_closed_loop, selectors


@dataclass(frozen=True)
class LeakageReport:
    rate_nats: float
    uplink_nats: float
    downlink_nats: float
    bound_nats: float | None = None

    @property
    def rate_bits(self) -> float:
        return self.rate_nats / np.log(2.0)


def _uplink(L, G, Sigma_e, Vt) -> float:
    LVL = L @ Vt @ L.T
    try:
        base = logdet_pd(LVL, "L Sigma_vtilde L^T")
    except NotPositiveDefiniteError:
        raise NotPositiveDefiniteError(
            "L Sigma_vtilde L^T is singular: the uplink information is infinite"
        ) from None
    LG = L @ G
    return 0.5 * (logdet_pd(LG @ Sigma_e @ LG.T + LVL, "uplink argument") - base)


def _downlink(plant: PlantModel, Vt, Sz) -> float:
    B, K = plant.B, plant.K
    floor = B @ Sz @ B.T + plant.Sigma_w
    BK = B @ K
    return 0.5 * (logdet_pd(BK @ Vt @ BK.T + floor, "downlink argument") - logdet_pd(floor, "B Sigma_z B^T + Sigma_w"))


def _terms(plant, mech, filt, Sigma_e):
    Vt = mech.sigma_vtilde(plant.Sigma_h)
    up = _uplink(filt.L, mech.G, Sigma_e, Vt)
    down = _downlink(plant, Vt, mech.Sigma_z)
    return up, down


def stationary_error_cov(plant: PlantModel, mech: PrivacyMechanism, filt: AdversaryFilter) -> np.ndarray:
    """Stationary one-step prediction error covariance from the exact Lyapunov solve."""
    cl = assemble_closed_loop(plant, mech, filt)
    return solve_lyapunov_direct(cl.Acal, cl.Bcal).Sigma_e


def mutual_info_rate(plant: PlantModel, mech: PrivacyMechanism, filt: AdversaryFilter, Sigma_e=None) -> LeakageReport:
    """Asymptotic mutual-information rate and its uplink/downlink split.

    ``Sigma_e`` defaults to the exact stationary prediction-error covariance.
    """
    if Sigma_e is None:
        Sigma_e = stationary_error_cov(plant, mech, filt)
    Sigma_e = require_psd(Sigma_e, "Sigma_e")
    up, down = _terms(plant, mech, filt, Sigma_e)
    return LeakageReport(up + down, up, down)


@dataclass(frozen=True)
class FiniteHorizonInfo:
    total_nats: float
    per_step_terms: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.per_step_terms)

    @property
    def normalized_rate(self) -> float:
        """Total divided by N + 1, the normalization used for the rate limit."""
        return self.total_nats / (self.horizon + 1)

    def __iter__(self):
        return iter((self.total_nats, self.per_step_terms))


def finite_horizon_mutual_info(plant: PlantModel, mech: PrivacyMechanism, filt: AdversaryFilter, N: int,
                               Sigma_zeta1=None) -> FiniteHorizonInfo:
    """Mutual information between the first N distorted states and estimates.

    The prediction-error covariance is propagated with the extended-state
    covariance recursion.  By default the recursion starts from
    ``blockdiag(Sigma_x1, Sigma_x1)``.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    cl = assemble_closed_loop(plant, mech, filt)
    n = plant.n_x
    if Sigma_zeta1 is None:
        S = np.zeros((2 * n, 2 * n))
        S[:n, :n] = plant.Sigma_x1
        S[n:, n:] = plant.Sigma_x1
    else:
        S = require_psd(Sigma_zeta1, "Sigma_zeta1")
    Vt = mech.sigma_vtilde(plant.Sigma_h)
    down = _downlink(plant, Vt, mech.Sigma_z)
    terms = np.empty(N)
    for k in range(N):
        terms[k] = _uplink(filt.L, mech.G, S[:n, :n], Vt) + down
        S = cl.Acal @ S @ cl.Acal.T + cl.Bcal
        S = 0.5 * (S + S.T)
    return FiniteHorizonInfo(float(terms.sum()), terms)


def leakage_upper_bound(plant: PlantModel, mech: PrivacyMechanism, filt: AdversaryFilter, Sigma) -> float:
    """Leakage rate evaluated with ``N_e Sigma N_e^T`` in place of the exact error covariance.

    For any ``Sigma`` dominating the exact extended covariance this upper
    bounds the true rate.
    """
    Sigma = require_psd(Sigma, "Sigma")
    if Sigma.shape != (2 * plant.n_x, 2 * plant.n_x):
        raise ValueError(f"Sigma must be {2 * plant.n_x}x{2 * plant.n_x}")
    _, Ne = selectors(plant.n_x)
    up, down = _terms(plant, mech, filt, Ne @ Sigma @ Ne.T)
    return up + down
