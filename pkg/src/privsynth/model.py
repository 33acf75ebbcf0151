"""System data types and closed-loop assembly.

Plant (full-state measurement, static output feedback)::

    x[k+1] = A x[k] + B u[k] + w[k]
    y[k]   = x[k] + h[k]
    u[k]   = K y[k]

Mechanism::

    y~[k] = G y[k] + v[k]
    u~[k] = u[k] + z[k]

Extended state ``zeta = [e(k|k-1); x~(k)]`` evolves as
``zeta[k+1] = Acal zeta[k] + noise`` with noise covariance ``Bcal``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import _linalg as la
from .errors import DimensionError, StabilityError
from .estimation import filter_error_covariance, spectral_radius


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def _stabilizable(A, B, tol=1e-9) -> bool:
    # PBH test on the eigenvalues outside the open unit disc
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) >= 1.0 - tol:
            M = np.hstack([A - lam * np.eye(n), B])
            if np.linalg.matrix_rank(M, tol=1e-9 * max(1.0, np.abs(M).max())) < n:
                return False
    return True


@dataclass(frozen=True, eq=False)
class PlantModel:
    """LTI plant, noise statistics, feedback gain and LQR weights."""

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    Sigma_w: np.ndarray
    Sigma_h: np.ndarray
    Sigma_x1: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        A = la.as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        B = la.as_matrix(self.B, "B")
        if B.shape[0] != n:
            raise DimensionError(f"B must have {n} rows, got {B.shape}")
        m = B.shape[1]
        K = la.as_matrix(self.K, "K", (m, n))
        fields = dict(A=A, B=B, K=K)
        for name, size in (("Sigma_w", n), ("Sigma_h", n), ("Sigma_x1", n), ("Q", n), ("R", m)):
            M = la.as_matrix(getattr(self, name), name, (size, size))
            fields[name] = la.require_pd(M, name)
        for name, val in fields.items():
            val = np.array(val, dtype=float)
            _freeze(val)
            object.__setattr__(self, name, val)
        if not _stabilizable(A, B):
            raise ValueError("(A, B) is not stabilizable")
        rho = spectral_radius(A + B @ K)
        if rho >= 1.0:
            raise StabilityError(f"A + B K is not Schur stable (spectral radius {rho:.6f})", rho)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_y(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class PrivacyMechanism:
    """Output transform ``G`` plus Gaussian noise covariances on both channels.

    ``Sigma_v`` and ``Sigma_z`` must be PSD; the synthesis path additionally
    guarantees ``Sigma_v`` is positive definite, while the zero-noise identity
    mechanism is allowed for evaluating the undistorted loop.
    """

    G: np.ndarray
    Sigma_v: np.ndarray
    Sigma_z: np.ndarray

    def __post_init__(self):
        G = la.as_matrix(self.G, "G")
        if G.shape[0] != G.shape[1]:
            raise DimensionError(f"G must be square, got {G.shape}")
        Sv = la.require_psd(la.as_matrix(self.Sigma_v, "Sigma_v", G.shape), "Sigma_v")
        Sz = la.require_psd(la.as_matrix(self.Sigma_z, "Sigma_z"), "Sigma_z")
        for name, val in (("G", G), ("Sigma_v", Sv), ("Sigma_z", Sz)):
            val = np.array(val, dtype=float)
            _freeze(val)
            object.__setattr__(self, name, val)

    @classmethod
    def identity(cls, n_y: int, n_u: int) -> "PrivacyMechanism":
        """No distortion: G = I, zero added noise."""
        return cls(np.eye(n_y), np.zeros((n_y, n_y)), np.zeros((n_u, n_u)))

    @classmethod
    def from_vtilde(cls, G, Sigma_vtilde, Sigma_z, Sigma_h) -> "PrivacyMechanism":
        """Recover ``Sigma_v = Sigma_vtilde - G Sigma_h G^T``."""
        G = la.as_matrix(G, "G")
        Sv = la.symmetrize(np.asarray(Sigma_vtilde, dtype=float) - G @ Sigma_h @ G.T, "Sigma_v", rtol=1e-6)
        return cls(G, Sv, la.symmetrize(Sigma_z, "Sigma_z", rtol=1e-6))

    def sigma_vtilde(self, Sigma_h) -> np.ndarray:
        """Composite uplink noise covariance ``G Sigma_h G^T + Sigma_v``."""
        V = self.G @ Sigma_h @ self.G.T + self.Sigma_v
        return 0.5 * (V + V.T)

    def check_against(self, plant: PlantModel) -> None:
        if self.G.shape != (plant.n_y, plant.n_y):
            raise DimensionError(f"G must be {plant.n_y}x{plant.n_y}, got {self.G.shape}")
        if self.Sigma_z.shape != (plant.n_u, plant.n_u):
            raise DimensionError(f"Sigma_z must be {plant.n_u}x{plant.n_u}, got {self.Sigma_z.shape}")


@dataclass(frozen=True, eq=False)
class AdversaryFilter:
    """Steady-state filter gain used by the eavesdropper.

    ``Sigma_rho`` is the filtered error covariance the filter would achieve on
    the undistorted plant; it is informational only.
    """

    L: np.ndarray
    Sigma_rho: np.ndarray | None = None

    def __post_init__(self):
        L = np.array(la.as_matrix(self.L, "L"), dtype=float)
        _freeze(L)
        object.__setattr__(self, "L", L)
        if self.Sigma_rho is not None:
            S = np.array(la.require_psd(self.Sigma_rho, "Sigma_rho"), dtype=float)
            _freeze(S)
            object.__setattr__(self, "Sigma_rho", S)

    def check_against(self, plant: PlantModel) -> None:
        if self.L.shape != (plant.n_x, plant.n_y):
            raise DimensionError(f"L must be {plant.n_x}x{plant.n_y}, got {self.L.shape}")
        rho = spectral_radius((np.eye(plant.n_x) - self.L) @ plant.A)
        if rho >= 1.0:
            raise StabilityError(f"(I - L) A is not Schur stable (spectral radius {rho:.6f})", rho)

    @classmethod
    def for_plant(cls, plant: PlantModel, L) -> "AdversaryFilter":
        """Attach ``L`` and compute the undistorted error covariance."""
        L = la.as_matrix(L, "L", (plant.n_x, plant.n_y))
        Srho = filter_error_covariance(plant.A, L, plant.Sigma_w, plant.Sigma_h)
        filt = cls(L, Srho)
        filt.check_against(plant)
        return filt


@dataclass(frozen=True, eq=False)
class ClosedLoopMatrices:
    Acal: np.ndarray
    Bcal: np.ndarray
    Acal0: np.ndarray
    Acal1: np.ndarray
    N_xtilde: np.ndarray
    N_e: np.ndarray

    def reconstruct(self, G) -> np.ndarray:
        """``Acal0 + Acal1 G [0 I]``; equals ``Acal`` for the mechanism's G."""
        return self.Acal0 + self.Acal1 @ G @ self.N_xtilde


def selectors(n_x: int) -> tuple[np.ndarray, np.ndarray]:
    """(N_xtilde, N_e) = ([0 I], [I 0])."""
    Z, I = np.zeros((n_x, n_x)), np.eye(n_x)
    return np.hstack([Z, I]), np.hstack([I, Z])


def g_split(plant: PlantModel, filt: AdversaryFilter) -> tuple[np.ndarray, np.ndarray]:
    """G-independent part ``Acal0`` and G column factor ``Acal1`` of the extended transition."""
    A, B, K, L = plant.A, plant.B, plant.K, filt.L
    n = plant.n_x
    I = np.eye(n)
    Acal0 = np.block([[A @ (I - L), A @ L], [np.zeros((n, n)), A]])
    Acal1 = np.vstack([-A @ L, B @ K])
    return Acal0, Acal1


def noise_gain(plant: PlantModel, filt: AdversaryFilter) -> np.ndarray:
    """``[[-A L, B, I], [B K, B, I]]`` multiplying ``[v~; z; w]``."""
    A, B, K, L = plant.A, plant.B, plant.K, filt.L
    I = np.eye(plant.n_x)
    return np.block([[-A @ L, B, I], [B @ K, B, I]])


def extended_noise_cov(plant: PlantModel, filt: AdversaryFilter, Sigma_vtilde, Sigma_z) -> np.ndarray:
    M = noise_gain(plant, filt)
    D = la.block_diag(Sigma_vtilde, Sigma_z, plant.Sigma_w)
    Bcal = M @ D @ M.T
    return 0.5 * (Bcal + Bcal.T)


def assemble_closed_loop(plant: PlantModel, mech: PrivacyMechanism, filt: AdversaryFilter) -> ClosedLoopMatrices:
    """Extended-state pair (Acal, Bcal) for plant + mechanism + adversary filter."""
    mech.check_against(plant)
    if filt.L.shape != (plant.n_x, plant.n_y):
        raise DimensionError(f"L must be {plant.n_x}x{plant.n_y}, got {filt.L.shape}")
    A, B, K, L, G = plant.A, plant.B, plant.K, filt.L, mech.G
    n = plant.n_x
    I = np.eye(n)
    Acal = np.block([[A @ (I - L), -A @ L @ (G - I)], [np.zeros((n, n)), A + B @ K @ G]])
    Bcal = extended_noise_cov(plant, filt, mech.sigma_vtilde(plant.Sigma_h), mech.Sigma_z)
    Acal0, Acal1 = g_split(plant, filt)
    Nx, Ne = selectors(n)
    return ClosedLoopMatrices(Acal, Bcal, Acal0, Acal1, Nx, Ne)


# ---------------------------------------------------------------------------
# bundled case study


def case_study_config() -> dict:
    """Raw bundled configuration for the stirred-reactor example."""
    with resources.files("privsynth.data").joinpath("case_study.json").open() as fh:
        return json.load(fh)


def load_case_study() -> tuple[PlantModel, AdversaryFilter]:
    """Four-state stirred reactor with heat exchanger, with its fixed K and L.

    The source gives no LQR weights; identity weights are used.
    """
    cfg = case_study_config()
    p = cfg["plant"]
    plant = PlantModel(
        A=p["A"], B=p["B"], K=p["K"],
        Sigma_w=p["Sigma_w"], Sigma_h=p["Sigma_h"], Sigma_x1=p["Sigma_x1"],
        Q=cfg["weights"]["Q"], R=cfg["weights"]["R"],
    )
    filt = AdversaryFilter.for_plant(plant, cfg["adversary"]["L"])
    return plant, filt
