"""Monte-Carlo simulation of the distorted loop and the eavesdropper's filter.

Each step ``k``::

    y~[k]   = G (x[k] + h[k]) + v[k]          (sent to the station)
    u[k]    = K y~[k]                          (computed by the station)
    u~[k]   = u[k] + z[k]                      (applied to the plant)
    x[k+1]  = A x[k] + B u~[k] + w[k]

The adversary runs the fixed-gain filter on the transmitted signals::

    xhat[k|k]   = xhat[k|k-1] + L (y~[k] - xhat[k|k-1])
    xhat[k+1|k] = A xhat[k|k] + B u[k]

It predicts with the control the station computed, before the downlink noise
is added, which is what the closed-form error dynamics assume.

Every noise source draws from its own generator spawned from one
``SeedSequence``, so traces are reproducible bit for bit and the sources are
independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _linalg as la
from .estimation import solve_lyapunov_direct, spectral_radius
from .errors import StabilityError
from .model import AdversaryFilter, PlantModel, PrivacyMechanism, assemble_closed_loop

STREAMS = ("x1", "w", "h", "v", "z")
DEFAULT_BURN_IN = 0.1


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    """Trajectories of one run; row ``k`` holds time step ``k + 1``."""

    states: np.ndarray
    estimates: np.ndarray
    predictions: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray
    seed: int

    def __post_init__(self):
        N = self.states.shape[0]
        for name in ("estimates", "predictions", "outputs", "inputs"):
            if getattr(self, name).shape[0] != N:
                raise ValueError(f"{name} has {getattr(self, name).shape[0]} rows, expected {N}")

    @property
    def horizon(self) -> int:
        return self.states.shape[0]

    @property
    def filtered_error(self) -> np.ndarray:
        """``x[k] - xhat[k|k]``."""
        return self.states - self.estimates

    @property
    def prediction_error(self) -> np.ndarray:
        """``x[k] - xhat[k|k-1]``."""
        return self.states - self.predictions


@dataclass(frozen=True)
class CostEstimate:
    mean: float
    stderr: float


def _factor(S) -> np.ndarray:
    """Square-root factor ``F`` with ``F F^T = S``; PSD (even zero) input allowed."""
    S = np.asarray(S, dtype=float)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return la.psd_sqrt(la.require_psd(S, "noise covariance"))


def _draw(rng, S, N) -> np.ndarray:
    F = _factor(S)
    return rng.standard_normal((N, F.shape[1])) @ F.T


def simulate(plant: PlantModel, mech: PrivacyMechanism, filt: AdversaryFilter, N: int, seed: int = 1,
             x1=None) -> SimulationTrace:
    """Simulate ``N`` steps of the loop with the mechanism in place.

    Args:
        plant: plant, gain and noise statistics.
        mech: privacy mechanism.
        filt: adversary's filter gain.
        N: number of steps (>= 1).
        seed: root seed; one child stream per noise source.
        x1: optional fixed initial state; otherwise drawn from ``Sigma_x1``.

    Returns:
        The trace, with the adversary's prediction starting at ``xhat[1|0] = 0``.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    N = int(N)
    mech.check_against(plant)
    filt.check_against(plant)
    cl = assemble_closed_loop(plant, mech, filt)
    rho = spectral_radius(cl.Acal)
    if rho >= 1.0:
        raise StabilityError(f"mechanism destabilizes the loop (spectral radius {rho:.6f})", rho)
    n, m = plant.n_x, plant.n_u
    rngs = dict(zip(STREAMS, (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(STREAMS)))))
    x = _draw(rngs["x1"], plant.Sigma_x1, 1)[0] if x1 is None else np.asarray(x1, dtype=float).copy()
    W = _draw(rngs["w"], plant.Sigma_w, N)
    H = _draw(rngs["h"], plant.Sigma_h, N)
    V = _draw(rngs["v"], mech.Sigma_v, N)
    Z = _draw(rngs["z"], mech.Sigma_z, N)

    A, B, K, G, L = plant.A, plant.B, plant.K, mech.G, filt.L
    states = np.empty((N, n))
    est = np.empty((N, n))
    pred = np.empty((N, n))
    outs = np.empty((N, n))
    ins = np.empty((N, m))
    xp = np.zeros(n)
    for k in range(N):
        yt = G @ (x + H[k]) + V[k]
        u = K @ yt
        ut = u + Z[k]
        xf = xp + L @ (yt - xp)
        states[k], est[k], pred[k], outs[k], ins[k] = x, xf, xp, yt, ut
        xp = A @ xf + B @ u
        x = A @ x + B @ ut + W[k]
    return SimulationTrace(states, est, pred, outs, ins, seed)


def _burn(N: int, burn_in) -> int:
    B = int(round(DEFAULT_BURN_IN * N)) if burn_in is None else int(burn_in)
    if not 0 <= B < N:
        raise ValueError(f"burn-in must satisfy 0 <= B < N (B={B}, N={N})")
    return B


def adversary_mse(trace: SimulationTrace, burn_in: int | None = None) -> float:
    """Mean of ``||x[k] - xhat[k|k]||^2`` after the burn-in (default 10% of N)."""
    B = _burn(trace.horizon, burn_in)
    err = trace.filtered_error[B:]
    return float(np.mean(np.sum(err * err, axis=1)))


def _batch_means(samples, n_batches: int) -> CostEstimate:
    samples = np.asarray(samples, dtype=float)
    mean = float(samples.mean())
    n_batches = min(n_batches, samples.size)
    if n_batches < 2:
        return CostEstimate(mean, float("nan"))
    size = samples.size // n_batches
    batches = samples[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return CostEstimate(mean, float(batches.std(ddof=1) / np.sqrt(n_batches)))


def empirical_lqr_cost(trace: SimulationTrace, Q, R, burn_in: int | None = None, n_batches: int = 20) -> CostEstimate:
    """Time average of ``x'Qx + u~'Ru~`` with a batch-means standard error."""
    B = _burn(trace.horizon, burn_in)
    x, u = trace.states[B:], trace.inputs[B:]
    stage = np.einsum("ki,ij,kj->k", x, np.asarray(Q), x) + np.einsum("ki,ij,kj->k", u, np.asarray(R), u)
    return _batch_means(stage, n_batches)


def stationary_filtered_error_cov(plant: PlantModel, mech: PrivacyMechanism, filt: AdversaryFilter) -> np.ndarray:
    """Closed-form covariance of ``x[k] - xhat[k|k]`` in steady state.

    ``x - xhat[k|k] = (I - L) e - L (G - I) x - L v~`` with ``e`` the
    prediction error and ``v~`` independent of ``[e; x]``.
    """
    cl = assemble_closed_loop(plant, mech, filt)
    S = solve_lyapunov_direct(cl.Acal, cl.Bcal).Sigma_zeta
    n = plant.n_x
    L, G = filt.L, mech.G
    T = np.hstack([np.eye(n) - L, -L @ (G - np.eye(n))])
    Vt = mech.sigma_vtilde(plant.Sigma_h)
    P = T @ S @ T.T + L @ Vt @ L.T
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class ReplicationSummary:
    seeds: tuple[int, ...]
    mse: tuple[float, ...]
    cost: tuple[CostEstimate, ...]

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.mse))


def replicate(plant: PlantModel, mech: PrivacyMechanism, filt: AdversaryFilter, N: int, seed: int = 1,
              replications: int = 10, burn_in: int | None = None) -> ReplicationSummary:
    """Independent runs with seeds ``seed, seed + 1, ...``."""
    if replications < 1:
        raise ValueError("replications must be at least 1")
    seeds = tuple(seed + i for i in range(replications))
    mse, cost = [], []
    for s in seeds:
        tr = simulate(plant, mech, filt, N, s)
        mse.append(adversary_mse(tr, burn_in))
        cost.append(empirical_lqr_cost(tr, plant.Q, plant.R, burn_in))
    return ReplicationSummary(seeds, tuple(mse), tuple(cost))


def write_trace(trace: SimulationTrace, path) -> None:
    """Columnar text export, one row per step."""
    n, m = trace.states.shape[1], trace.inputs.shape[1]
    cols = (["k"] + [f"x{i}" for i in range(n)] + [f"xhat{i}" for i in range(n)]
            + [f"xpred{i}" for i in range(n)] + [f"y{i}" for i in range(n)] + [f"u{i}" for i in range(m)])
    k = np.arange(1, trace.horizon + 1)[:, None]
    data = np.hstack([k, trace.states, trace.estimates, trace.predictions, trace.outputs, trace.inputs])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(cols), comments="")
