"""Mechanism synthesis: convex program assembly, alpha search and extraction.

Decision variables (names used in :class:`~privsynth.sdp.SdpProblem`):

``Pi1``
    2n x 2n, block upper triangular (lower-left block fixed to zero); its
    lower-right block ``Pi13`` is the congruence variable shared by all
    relaxed blocks.
``Pi21``
    n x n, equal to ``G Pi13``; ``G`` is recovered as ``Pi21 Pi13^-1``.
``Pi3``, ``Pi4``, ``Pi5``
    epigraph variables for the uplink, downlink and control-cost terms.
``Sigma``
    upper bound on the stationary extended covariance.
``Sigma_vtilde``, ``Sigma_z``
    composite uplink noise covariance and input noise covariance.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logit

from . import _linalg as la
from .errors import InfeasibleError, NumericalError, PrivsynthError, StabilityError
from .estimation import solve_lyapunov_direct, spectral_radius
from .infoflow import mutual_info_rate
from .model import (
    AdversaryFilter,
    PlantModel,
    PrivacyMechanism,
    assemble_closed_loop,
    extended_noise_cov,
    g_split,
    noise_gain,
    selectors,
)
from .perf import baseline_lqr_cost, performance_report
from .sdp import (
    Equality,
    LinearTerm,
    Lmi,
    LogDetTerm,
    SdpProblem,
    SdpSolution,
    SolverOptions,
    Variable,
    check_solution,
    find_feasible_point,
    solve,
)

log = logging.getLogger(__name__)

MODES = ("full_G", "identity_G")
BOUND_TOL = 1e-6
SLACK_TOL = 1e-6
DOMINANCE_TOL = 1e-7


def default_alpha_grid(n: int = 15, lo: float = 0.01, hi: float = 0.99) -> list[float]:
    """``n`` weights evenly spaced in logit between ``lo`` and ``hi``."""
    return [float(a) for a in expit(np.linspace(logit(lo), logit(hi), n))]


@dataclass(frozen=True)
class SynthesisConfig:
    epsilon: float
    alpha_grid: tuple[float, ...] = field(default_factory=lambda: tuple(default_alpha_grid()))
    mode: str = "full_G"
    solver: SolverOptions = field(default_factory=SolverOptions)
    # noise floor used by the analytic start point
    delta0: float = 1e-3
    # strict inequalities are imposed as >= strict_margin * scale * I
    strict_margin: float = 1e-9

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ValueError(f"epsilon must be a nonnegative number, got {self.epsilon}")
        if not self.alpha_grid:
            raise ValueError("alpha_grid must not be empty")
        if any(not 0.0 < a < 1.0 for a in self.alpha_grid):
            raise ValueError("alpha values must lie strictly inside (0, 1)")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.delta0 <= 0:
            raise ValueError("delta0 must be positive")
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))


@dataclass(eq=False)
class Candidate:
    """Outcome of one alpha value."""

    alpha: float
    status: str
    mechanism: PrivacyMechanism | None = None
    bound_nats: float = float("nan")
    exact_rate_nats: float = float("nan")
    uplink_nats: float = float("nan")
    downlink_nats: float = float("nan")
    constraint_slack: float = float("nan")
    distorted_cost: float = float("nan")
    objective: float = float("nan")
    newton_steps: int = 0
    min_constraint_eig: float = float("nan")
    flags: dict = field(default_factory=dict)
    error: str | None = None
    solver_sigma: np.ndarray | None = None  # extended covariance bound from the solver

    @property
    def feasible(self) -> bool:
        return self.mechanism is not None and all(self.flags.values())


@dataclass(eq=False)
class SynthesisResult:
    mechanism: PrivacyMechanism
    alpha_used: float
    bound_nats: float
    exact_rate_nats: float
    uplink_nats: float
    downlink_nats: float
    constraint_slack: float
    baseline_cost: float
    distorted_cost: float
    status: str
    flags: dict
    epsilon: float
    mode: str
    candidates: list[Candidate]
    solver_sigma: np.ndarray | None = None


# ---------------------------------------------------------------------------
# program assembly


def _strict(scale_matrix, cfg: SynthesisConfig) -> float:
    return cfg.strict_margin * max(float(np.linalg.norm(scale_matrix, 2)), 1e-300)


def build_program(plant: PlantModel, filt: AdversaryFilter | None, config: SynthesisConfig, alpha: float,
                  baseline_cost: float | None = None) -> SdpProblem:
    """Assemble the leakage-bound / LQR-budget program for one weight ``alpha``.

    The objective is ``alpha * (leakage bound) + (1 - alpha) * tr(Sigma)``.
    """
    if filt is None:
        raise ValueError("an adversary filter gain L is required")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    filt.check_against(plant)
    n, m = plant.n_x, plant.n_u
    A, B, K, L = plant.A, plant.B, plant.K, filt.L
    Sw, Sh, Q, R = plant.Sigma_w, plant.Sigma_h, plant.Q, plant.R
    I = np.eye(n)
    A0, A1 = g_split(plant, filt)
    Mv, Mz, Mw = np.split(noise_gain(plant, filt), [n, n + m], axis=1)
    Bw = Mw @ Sw @ Mw.T
    BK = B @ K
    KRK = K.T @ R @ K
    Rh = la.psd_sqrt(R)
    c_inf = baseline_lqr_cost(plant)[0] if baseline_cost is None else baseline_cost
    budget = c_inf + config.epsilon

    def pi13(v):
        return v["Pi1"][n:, n:]

    def bcal(v):
        return Mv @ v["Sigma_vtilde"] @ Mv.T + Mz @ v["Sigma_z"] @ Mz.T + Bw

    def lyapunov_block(v):
        S, P1 = v["Sigma"], v["Pi1"]
        X = A0 @ P1 + A1 @ np.hstack([np.zeros((n, n)), v["Pi21"]])
        return np.block([[S - bcal(v), X], [X.T, P1 + P1.T - S]])

    def uplink_block(v):
        X = L @ v["Pi21"]
        P = pi13(v)
        return np.block([[2 * I - v["Pi3"] - L @ v["Sigma_vtilde"] @ L.T, X],
                         [X.T, P + P.T - v["Sigma"][:n, :n]]])

    def downlink_block(v):
        return 2 * I - v["Pi4"] - (BK @ v["Sigma_vtilde"] @ BK.T + B @ v["Sigma_z"] @ B.T + Sw)

    def budget_block(v):
        used = (np.trace(Q @ v["Sigma"][n:, n:]) + np.trace(v["Pi5"])
                + np.trace(KRK @ v["Sigma_vtilde"]) + np.trace(R @ v["Sigma_z"]))
        return np.array([[budget - used]])

    def cost_block(v):
        X = Rh @ K @ v["Pi21"]
        P = pi13(v)
        return np.block([[v["Pi5"], X], [X.T, P + P.T - v["Sigma"][n:, n:]]])

    def vpos_block(v):
        P = pi13(v)
        return np.block([[v["Sigma_vtilde"], v["Pi21"]], [v["Pi21"].T, P + P.T - Sh]])

    variables = [
        Variable("Pi1", (2 * n, 2 * n), "block_upper", split=n),
        Variable("Pi21", (n, n), "full"),
        Variable("Pi3", (n, n)),
        Variable("Pi4", (n, n)),
        Variable("Pi5", (m, m)),
        Variable("Sigma", (2 * n, 2 * n)),
        Variable("Sigma_vtilde", (n, n)),
        Variable("Sigma_z", (m, m)),
    ]
    w = 0.5 * alpha
    logdets = [
        LogDetTerm("Pi3", lambda v: v["Pi3"], w),
        LogDetTerm("L_Sigma_vtilde_Lt", lambda v: L @ v["Sigma_vtilde"] @ L.T, w),
        LogDetTerm("Pi4", lambda v: v["Pi4"], w),
        LogDetTerm("B_Sigma_z_Bt_plus_Sigma_w", lambda v: B @ v["Sigma_z"] @ B.T + Sw, w),
    ]
    lmis = [
        Lmi("uplink_bound", uplink_block),
        Lmi("downlink_bound", downlink_block),
        Lmi("lyapunov_bound", lyapunov_block),
        Lmi("cost_budget", budget_block),
        Lmi("cost_bound", cost_block),
        Lmi("sigma_v_positive", vpos_block, _strict(Sh, config)),
        Lmi("sigma_z_positive", lambda v: v["Sigma_z"], _strict(Sw, config)),
        Lmi("sigma_positive", lambda v: v["Sigma"], _strict(Sw, config)),
    ]
    eqs = []
    if config.mode == "identity_G":
        eqs.append(Equality("G_identity", lambda v: v["Pi21"] - v["Pi1"][n:, n:]))
    prob = SdpProblem(
        variables,
        objective_linear=[LinearTerm("trace_Sigma", lambda v: np.trace(v["Sigma"]), 1.0 - alpha)],
        objective_logdet=logdets,
        lmi_constraints=lmis,
        equality_constraints=eqs,
    )
    prob.compile()
    return prob


def leakage_bound_value(plant: PlantModel, filt: AdversaryFilter, values) -> float:
    """Leakage part of the objective at a solution (the certified upper bound)."""
    L, B = filt.L, plant.B
    return -0.5 * (la.logdet_pd(values["Pi3"], "Pi3")
                   + la.logdet_pd(L @ values["Sigma_vtilde"] @ L.T, "L Sigma_vtilde L^T")
                   + la.logdet_pd(values["Pi4"], "Pi4")
                   + la.logdet_pd(B @ values["Sigma_z"] @ B.T + plant.Sigma_w, "B Sigma_z B^T + Sigma_w"))


# ---------------------------------------------------------------------------
# analytic start point


def _start_for_gain(plant, filt, config, g, c_inf):
    n = plant.n_x
    Sh, Sw = plant.Sigma_h, plant.Sigma_w
    d0 = config.delta0
    G = g * np.eye(n)
    I = np.eye(n)
    Sz = d0 * np.eye(plant.n_u)
    Acal0, Acal1 = g_split(plant, filt)
    Nx, _ = selectors(n)
    Acal = Acal0 + Acal1 @ G @ Nx
    rho = spectral_radius(Acal)
    if rho >= 1.0 - 1e-10:
        raise InfeasibleError(f"closed loop with G = {g} I is unstable (spectral radius {rho:.4f})",
                              constraint="lyapunov_bound")
    scale = max(1.0, float(np.linalg.norm(Sw, 2)))
    m_x = 1e-6 * scale
    m_e = 1e-6 * scale

    def covariance(Svt):
        Bcal = extended_noise_cov(plant, filt, Svt, Sz)
        base = solve_lyapunov_direct(Acal, Bcal + np.diag([0.0] * n + [m_x] * n)).Sigma_zeta
        # cover the Pi1 relaxation gap, which lives in the error block only
        S12, S22 = base[:n, n:], base[n:, n:]
        E11 = S12 @ np.linalg.solve(S22, S12.T)
        Ae = Acal[:n, :n]
        extra = np.zeros((2 * n, 2 * n))
        extra[:n, :n] = Ae @ E11 @ Ae.T + m_e * I
        return solve_lyapunov_direct(Acal, Bcal + np.diag([0.0] * n + [m_x] * n) + extra).Sigma_zeta

    Svt = G @ Sh @ G.T + d0 * I
    for _ in range(100):
        S = covariance(Svt)
        P = S[n:, n:]
        D = 2 * P - Sh
        if not la.is_pd(D):
            raise InfeasibleError("2 Pi13 - Sigma_h is not positive definite at the start point",
                                  constraint="sigma_v_positive")
        need = G @ P @ np.linalg.solve(D, P) @ G.T
        need = 0.5 * (need + need.T)
        if la.min_eig(Svt - need) >= 0.5 * d0:
            break
        Svt = need + d0 * I
    else:
        raise InfeasibleError("could not balance Sigma_vtilde against the positivity block",
                              constraint="sigma_v_positive")

    S11, S12, P = S[:n, :n], S[:n, n:], S[n:, n:]
    Pi1 = np.block([[S11, S12], [np.zeros((n, n)), P]])
    Pi21 = G @ P
    L = filt.L
    D3 = 2 * P - S11
    if not la.is_pd(D3):
        raise InfeasibleError("error covariance too large relative to state covariance for the uplink block",
                              constraint="uplink_bound")
    T3 = 2 * I - L @ Svt @ L.T - L @ Pi21 @ np.linalg.solve(D3, Pi21.T @ L.T)
    T3 = 0.5 * (T3 + T3.T)
    if not la.is_pd(T3):
        raise InfeasibleError("uplink epigraph block has no room (2I too small for the noise level)",
                              constraint="uplink_bound")
    BK = plant.B @ plant.K
    T4 = 2 * I - (BK @ Svt @ BK.T + plant.B @ Sz @ plant.B.T + Sw)
    T4 = 0.5 * (T4 + T4.T)
    if not la.is_pd(T4):
        raise InfeasibleError("downlink epigraph block has no room (2I too small for the noise level)",
                              constraint="downlink_bound")
    Rh = la.psd_sqrt(plant.R)
    X = Rh @ plant.K @ Pi21
    Pi5_min = X @ np.linalg.solve(P, X.T)
    Pi5_min = 0.5 * (Pi5_min + Pi5_min.T)
    KRK = plant.K.T @ plant.R @ plant.K
    room = (c_inf + config.epsilon - np.trace(plant.Q @ P) - np.trace(Pi5_min)
            - np.trace(KRK @ Svt) - np.trace(plant.R @ Sz))
    if room <= 0:
        raise InfeasibleError(f"LQR budget exceeded at the start point by {-room:.3e}", constraint="cost_budget")
    eta = room / (2 * plant.n_u)
    return {
        "Pi1": Pi1,
        "Pi21": Pi21,
        "Pi3": 0.5 * T3,
        "Pi4": 0.5 * T4,
        "Pi5": Pi5_min + eta * np.eye(plant.n_u),
        "Sigma": S,
        "Sigma_vtilde": Svt,
        "Sigma_z": Sz,
    }


def initial_point(plant: PlantModel, filt: AdversaryFilter, config: SynthesisConfig,
                  baseline_cost: float | None = None) -> dict[str, np.ndarray]:
    """Strictly feasible start point built from exact Lyapunov solutions.

    Uses ``G = I`` first.  In ``full_G`` mode a few shrunken transforms
    ``G = g I`` are tried if the identity start does not fit the budget.

    Raises:
        InfeasibleError: naming the block that could not be satisfied.
    """
    c_inf = baseline_lqr_cost(plant)[0] if baseline_cost is None else baseline_cost
    gains = (1.0,) if config.mode == "identity_G" else (1.0, 0.5, 0.25, 0.1, 0.0)
    first_error = None
    probe = build_program(plant, filt, config, 0.5, c_inf)
    for g in gains:
        try:
            start = _start_for_gain(plant, filt, config, g, c_inf)
        except InfeasibleError as exc:
            first_error = first_error or exc
            continue
        report = check_solution(probe, start, tol=0.0)
        worst = min(report.lmi_min_eigs, key=report.lmi_min_eigs.get)
        if report.lmi_min_eigs[worst] > 0 and min(report.logdet_min_eigs.values()) > 0:
            return start
        first_error = first_error or InfeasibleError(
            f"start point violates block {worst} (min eig {report.lmi_min_eigs[worst]:.3e})", constraint=worst)
    raise first_error


# ---------------------------------------------------------------------------
# extraction and evaluation


def extract_mechanism(solution: SdpSolution | dict, plant: PlantModel, min_sigma_v: float = 0.0) -> PrivacyMechanism:
    """Recover ``G = Pi21 Pi13^-1`` and ``Sigma_v = Sigma_vtilde - G Sigma_h G^T``.

    Raises:
        NumericalError: if ``Pi13`` is ill conditioned or the recovered
            ``Sigma_v`` is not safely positive definite.
    """
    values = solution.values if isinstance(solution, SdpSolution) else solution
    n = plant.n_x
    P13 = np.asarray(values["Pi1"], dtype=float)[n:, n:]
    cond = np.linalg.cond(P13)
    if not np.isfinite(cond) or cond >= 1e12:
        raise NumericalError(f"Pi13 is ill conditioned (condition number {cond:.3e})")
    G = np.linalg.solve(P13.T, np.asarray(values["Pi21"], dtype=float).T).T
    Sv = np.asarray(values["Sigma_vtilde"], dtype=float) - G @ plant.Sigma_h @ G.T
    Sv = 0.5 * (Sv + Sv.T)
    lam = la.min_eig(Sv)
    if lam <= min_sigma_v:
        raise NumericalError(f"extracted Sigma_v is not positive definite (min eig {lam:.3e})")
    Sz = np.asarray(values["Sigma_z"], dtype=float)
    return PrivacyMechanism(G, Sv, 0.5 * (Sz + Sz.T))


def _evaluate(plant, filt, config, alpha, sol, c_inf) -> Candidate:
    cand = Candidate(alpha, sol.status, objective=sol.objective, newton_steps=sol.newton_steps,
                     min_constraint_eig=sol.min_constraint_eig)
    if sol.status not in ("optimal", "max_iter"):
        cand.error = f"solver status {sol.status}"
        return cand
    try:
        mech = extract_mechanism(sol, plant, 0.5 * _strict(plant.Sigma_h, config))
        cl = assemble_closed_loop(plant, mech, filt)
        radius = spectral_radius(cl.Acal)
        if radius >= 1.0:
            raise StabilityError(f"extracted mechanism destabilizes the loop (radius {radius:.6f})", radius)
        lyap = solve_lyapunov_direct(cl.Acal, cl.Bcal)
        leak = mutual_info_rate(plant, mech, filt, lyap.Sigma_e)
        perf = performance_report(plant, mech, config.epsilon)
        bound = leakage_bound_value(plant, filt, sol.values)
    except PrivsynthError as exc:
        cand.error = str(exc)
        return cand
    gap = la.min_eig(sol.values["Sigma"] - lyap.Sigma_zeta)
    cand.mechanism = mech
    cand.solver_sigma = np.array(sol.values["Sigma"], dtype=float)
    cand.bound_nats = bound
    cand.exact_rate_nats = leak.rate_nats
    cand.uplink_nats = leak.uplink_nats
    cand.downlink_nats = leak.downlink_nats
    cand.constraint_slack = perf.slack
    cand.distorted_cost = perf.distorted_cost
    cand.flags = {
        "solver_optimal": sol.status == "optimal",
        "stable": radius < 1.0,
        "bound_dominates_rate": leak.rate_nats <= bound + BOUND_TOL,
        "sigma_dominates_lyapunov": gap >= -DOMINANCE_TOL,
        "slack_nonnegative": perf.slack >= -SLACK_TOL,
        "sigma_v_positive": la.min_eig(mech.Sigma_v) > 0,
    }
    return cand


def solve_for_alpha(plant, filt, config, alpha, start=None, baseline_cost=None) -> Candidate:
    """Build, solve, extract and evaluate one alpha."""
    c_inf = baseline_lqr_cost(plant)[0] if baseline_cost is None else baseline_cost
    prob = build_program(plant, filt, config, alpha, c_inf)
    try:
        sol = solve(prob, config.solver, start)
    except InfeasibleError as exc:
        return Candidate(alpha, "infeasible", error=str(exc))
    except NumericalError as exc:
        return Candidate(alpha, "numerical_failure", error=str(exc))
    return _evaluate(plant, filt, config, alpha, sol, c_inf)


def select_candidate(candidates: list[Candidate]) -> Candidate | None:
    """Feasible candidate with the smallest exact rate; ties go to larger slack, then smaller alpha."""
    feasible = [c for c in candidates if c.feasible]
    if not feasible:
        return None
    return min(feasible, key=lambda c: (c.exact_rate_nats, -c.constraint_slack, c.alpha))


def feasible_start(plant: PlantModel, filt: AdversaryFilter, config: SynthesisConfig,
                   baseline_cost: float | None = None) -> dict[str, np.ndarray]:
    """Analytic start point, falling back to a single phase-I solve.

    The feasible set does not depend on alpha, so one point serves the whole grid.

    Raises:
        InfeasibleError: carrying the constraint named by the analytic
            construction, with the phase-I binding block in the message.
    """
    c_inf = baseline_lqr_cost(plant)[0] if baseline_cost is None else baseline_cost
    try:
        return initial_point(plant, filt, config, c_inf)
    except InfeasibleError as exc:
        log.info("analytic start failed (%s); falling back to phase I", exc)
        start_error = exc
    prob = build_program(plant, filt, config, 0.5, c_inf)
    try:
        return find_feasible_point(prob, config.solver)
    except (InfeasibleError, NumericalError) as exc:
        raise InfeasibleError(f"epsilon={config.epsilon} ({config.mode}) is infeasible: {start_error}; "
                              f"phase I: {exc}", constraint=start_error.constraint) from exc


def synthesize(plant: PlantModel, filt: AdversaryFilter, config: SynthesisConfig) -> SynthesisResult:
    """Run the alpha search and keep the mechanism with the smallest exact leakage rate.

    Ties are broken by larger cost slack, then smaller alpha.

    Raises:
        InfeasibleError: if no alpha yields a valid mechanism.
    """
    c_inf = baseline_lqr_cost(plant)[0]
    start = feasible_start(plant, filt, config, c_inf)
    candidates = []
    for alpha in config.alpha_grid:
        cand = solve_for_alpha(plant, filt, config, alpha, start, c_inf)
        log.debug("alpha=%.4f status=%s rate=%s", alpha, cand.status, cand.exact_rate_nats)
        candidates.append(cand)
    best = select_candidate(candidates)
    if best is None:
        reasons = "; ".join(f"alpha={c.alpha:.4g}: {c.error or c.status}" for c in candidates)
        raise InfeasibleError(f"no feasible mechanism for epsilon={config.epsilon}: {reasons}")
    return SynthesisResult(
        mechanism=best.mechanism,
        alpha_used=best.alpha,
        bound_nats=best.bound_nats,
        exact_rate_nats=best.exact_rate_nats,
        uplink_nats=best.uplink_nats,
        downlink_nats=best.downlink_nats,
        constraint_slack=best.constraint_slack,
        baseline_cost=c_inf,
        distorted_cost=best.distorted_cost,
        status=best.status,
        flags=dict(best.flags),
        epsilon=config.epsilon,
        mode=config.mode,
        candidates=candidates,
        solver_sigma=best.solver_sigma,
    )


# ---------------------------------------------------------------------------
# epsilon sweep


@dataclass
class SweepPoint:
    epsilon: float
    mode: str
    exact_rate: float = float("nan")
    bound: float = float("nan")
    slack: float = float("nan")
    alpha: float = float("nan")
    ok: bool = False
    error: str | None = None
    result: SynthesisResult | None = None
    # filled on failed points: smallest feasible budget for this mode
    min_feasible_epsilon: float | None = None


def _sweep_point(plant, filt, cfg) -> SweepPoint:
    try:
        res = synthesize(plant, filt, cfg)
    except PrivsynthError as exc:
        log.warning("sweep point epsilon=%g mode=%s failed: %s", cfg.epsilon, cfg.mode, exc)
        return SweepPoint(cfg.epsilon, cfg.mode, error=str(exc))
    return SweepPoint(cfg.epsilon, cfg.mode, res.exact_rate_nats, res.bound_nats, res.constraint_slack,
                      res.alpha_used, True, None, res)


def sweep_epsilon(plant: PlantModel, filt: AdversaryFilter, eps_list, config: SynthesisConfig,
                  modes=MODES, bisect_failures: bool = True, bisect_tol: float = 1e-4,
                  workers: int = 1) -> list[SweepPoint]:
    """Synthesize for every (epsilon, mode); failures are recorded, not raised.

    Points are ordered by mode, then epsilon, whatever ``workers`` is.  When a
    point fails and a larger budget in the same mode succeeded, the smallest
    feasible budget is bisected and attached to the failed points.
    """
    eps_list = [float(e) for e in eps_list]
    if eps_list != sorted(eps_list):
        raise ValueError("eps_list must be sorted ascending")
    cfgs = [replace(config, epsilon=eps, mode=mode) for mode in modes for eps in eps_list]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(lambda c: _sweep_point(plant, filt, c), cfgs))
    else:
        points = [_sweep_point(plant, filt, c) for c in cfgs]
    for mode in modes:
        row = [p for p in points if p.mode == mode]
        ok = [p.epsilon for p in row if p.ok]
        if bisect_failures and ok and not all(p.ok for p in row):
            eps_min = min_feasible_epsilon(plant, filt, replace(config, mode=mode), min(ok), bisect_tol)
            log.info("mode %s: smallest feasible epsilon ~ %.6g", mode, eps_min)
            for p in row:
                if not p.ok:
                    p.min_feasible_epsilon = eps_min
    return points


def is_feasible(plant: PlantModel, filt: AdversaryFilter, config: SynthesisConfig) -> bool:
    """Whether the program admits a strictly feasible point for ``config.epsilon``."""
    try:
        feasible_start(plant, filt, config)
    except InfeasibleError:
        return False
    return True


def min_feasible_epsilon(plant: PlantModel, filt: AdversaryFilter, config: SynthesisConfig,
                         hi: float, tol: float = 1e-4) -> float:
    """Bisect the smallest budget for which the program is feasible (up to ``tol``)."""
    lo = 0.0
    if is_feasible(plant, filt, replace(config, epsilon=lo)):
        return lo
    if not is_feasible(plant, filt, replace(config, epsilon=hi)):
        raise InfeasibleError(f"program infeasible even at epsilon={hi}", constraint="cost_budget")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if is_feasible(plant, filt, replace(config, epsilon=mid)):
            hi = mid
        else:
            lo = mid
    return hi
