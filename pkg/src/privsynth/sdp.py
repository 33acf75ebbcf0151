"""Dense interior-point solver for MAXDET problems.

Problems have the form::

    minimize    c0 + sum_i w_i * lin_i(X) - sum_j v_j * logdet(G_j(X))
    subject to  F_k(X) >= margin_k * I      (k = 1..K)
                E_l(X) == 0

where ``X`` is a collection of named decision matrices and every ``lin_i``,
``G_j``, ``F_k`` and ``E_l`` is affine in the entries of ``X``.  Expressions
are ordinary Python callables taking a ``{name: ndarray}`` mapping; they are
compiled to coefficient form by probing, and a randomized affinity check
rejects anything that is not affine.

The algorithm is a feasible-start barrier (path-following) method with damped
Newton centering.  A phase-I slack problem is used when no strictly feasible
start point is supplied.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.linalg as sla

from .errors import InfeasibleError, NumericalError, PrivsynthError

log = logging.getLogger(__name__)

Values = Mapping[str, np.ndarray]
Expr = Callable[[Values], np.ndarray]

STRUCTURES = ("symmetric", "full", "block_upper")


class NonAffineError(PrivsynthError, ValueError):
    """An expression handed to the solver is not affine in the variables."""


@dataclass(frozen=True)
class Variable:
    """Decision-matrix descriptor.

    ``structure`` is one of ``symmetric``, ``full`` or ``block_upper``.  For
    ``block_upper`` the block ``X[split:, :split]`` is fixed to zero.
    """

    name: str
    shape: tuple[int, int]
    structure: str = "symmetric"
    split: int | None = None

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r} for {self.name}")
        r, c = self.shape
        if self.structure == "symmetric" and r != c:
            raise ValueError(f"symmetric variable {self.name} must be square")
        if self.structure == "block_upper":
            if r != c or self.split is None or not 0 < self.split < r:
                raise ValueError(f"block_upper variable {self.name} needs a square shape and 0 < split < n")

    def entries(self) -> list[tuple[int, int]]:
        """Free (row, col) entries in packing order."""
        r, c = self.shape
        if self.structure == "symmetric":
            return [(i, j) for i in range(r) for j in range(i, c)]
        if self.structure == "full":
            return [(i, j) for i in range(r) for j in range(c)]
        s = self.split
        return [(i, j) for i in range(r) for j in range(c) if not (i >= s and j < s)]

    @property
    def size(self) -> int:
        return len(self.entries())

    def structure_residual(self, M) -> float:
        """Largest violation of the declared structure by ``M``."""
        M = np.asarray(M, dtype=float)
        if M.shape != tuple(self.shape):
            return float("inf")
        if self.structure == "symmetric":
            return float(np.abs(M - M.T).max())
        if self.structure == "block_upper":
            return float(np.abs(M[self.split:, : self.split]).max())
        return 0.0


@dataclass
class LinearTerm:
    """Scalar affine functional entering the objective as ``weight * expr``."""

    name: str
    expr: Expr
    weight: float = 1.0


@dataclass
class LogDetTerm:
    """Objective term ``-weight * logdet(expr)``; the argument is kept positive definite."""

    name: str
    expr: Expr
    weight: float = 0.5


@dataclass
class Lmi:
    """Constraint ``expr(X) >= margin * I`` on a symmetric affine expression."""

    name: str
    expr: Expr
    margin: float = 0.0


@dataclass
class Equality:
    """Constraint ``expr(X) == 0`` (any shape)."""

    name: str
    expr: Expr


@dataclass
class SdpProblem:
    variables: list[Variable]
    objective_linear: list[LinearTerm] = field(default_factory=list)
    objective_logdet: list[LogDetTerm] = field(default_factory=list)
    lmi_constraints: list[Lmi] = field(default_factory=list)
    equality_constraints: list[Equality] = field(default_factory=list)
    constant: float = 0.0

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("duplicate variable names")
        for term in self.objective_logdet:
            if term.weight <= 0:
                raise ValueError(f"logdet term {term.name} needs a positive weight")
        self._compiled = None

    def compile(self) -> "_Compiled":
        """Probe every expression into coefficient form (cached)."""
        if self._compiled is None:
            self._compiled = _Compiled(self)
        return self._compiled

    def pack(self, values: Values) -> np.ndarray:
        return self.compile().pack(values)

    def unpack(self, x) -> dict[str, np.ndarray]:
        return self.compile().unpack(x)


@dataclass
class SolverOptions:
    gap_tol: float = 1e-8
    max_newton: int = 500
    mu: float = 20.0
    t0: float = 1.0
    newton_tol: float = 1e-9
    ls_alpha: float = 0.01
    ls_beta: float = 0.5
    phase1_margin: float = 1e-6


@dataclass
class SdpSolution:
    values: dict[str, np.ndarray]
    objective: float
    status: str
    duality_gap_estimate: float
    min_constraint_eig: float
    newton_steps: int = 0
    phase1_steps: int = 0


# ---------------------------------------------------------------------------
# compilation


class _Block:
    """One symmetric affine matrix function S(y) = F0 + sum_i y[idx_i] * F[i]."""

    __slots__ = ("name", "F0", "idx", "F", "n")

    def __init__(self, name, F0, F):
        self.name = name
        self.n = F0.shape[0]
        nz = np.flatnonzero(np.abs(F).reshape(F.shape[0], -1).max(axis=1) > 0.0)
        self.idx = nz
        self.F = np.ascontiguousarray(F[nz])
        self.F0 = F0

    def at(self, y):
        if self.idx.size == 0:
            return self.F0.copy()
        return self.F0 + np.tensordot(y[self.idx], self.F, axes=1)

    def restrict(self, x0, N):
        """Re-express the block over reduced coordinates x = x0 + N y."""
        m = N.shape[0]
        full = np.zeros((m,) + self.F0.shape)
        full[self.idx] = self.F
        F0 = self.F0 + np.tensordot(x0, full, axes=1)
        F = np.tensordot(N.T, full, axes=1)
        F[np.abs(F) < 1e-15 * max(1.0, np.abs(F).max(initial=0.0))] = 0.0
        return _Block(self.name, F0, F)


class _Compiled:
    def __init__(self, problem: SdpProblem):
        self.problem = problem
        self.variables = problem.variables
        self.offsets = {}
        off = 0
        for v in self.variables:
            self.offsets[v.name] = off
            off += v.size
        self.nvar = off
        self._entries = {v.name: v.entries() for v in self.variables}
        self._probe()

    # packing ---------------------------------------------------------------
    def unpack(self, x) -> dict[str, np.ndarray]:
        out = {}
        for v in self.variables:
            M = np.zeros(v.shape)
            off = self.offsets[v.name]
            ent = self._entries[v.name]
            if ent:
                rows, cols = zip(*ent)
                vals = x[off : off + len(ent)]
                M[rows, cols] = vals
                if v.structure == "symmetric":
                    M[cols, rows] = vals
            out[v.name] = M
        return out

    def pack(self, values: Values) -> np.ndarray:
        x = np.zeros(self.nvar)
        for v in self.variables:
            if v.name not in values:
                raise KeyError(f"missing value for variable {v.name}")
            M = np.asarray(values[v.name], dtype=float)
            res = v.structure_residual(M)
            if res > 1e-9 * max(1.0, np.abs(M).max(initial=0.0)):
                raise ValueError(f"value for {v.name} violates its {v.structure} structure ({res:.2e})")
            ent = self._entries[v.name]
            if ent:
                rows, cols = zip(*ent)
                off = self.offsets[v.name]
                x[off : off + len(ent)] = M[rows, cols]
        return x

    # probing ---------------------------------------------------------------
    def _evaluate_all(self, vals):
        p = self.problem
        lin = [float(np.asarray(t.expr(vals), dtype=float).reshape(())) for t in p.objective_linear]
        ld = [np.asarray(t.expr(vals), dtype=float) for t in p.objective_logdet]
        lmi = [np.asarray(t.expr(vals), dtype=float) for t in p.lmi_constraints]
        eq = [np.asarray(t.expr(vals), dtype=float).ravel() for t in p.equality_constraints]
        return lin, ld, lmi, eq

    def _probe(self):
        p = self.problem
        n = self.nvar
        base = self._evaluate_all(self.unpack(np.zeros(n)))
        for kind, mats, terms in (("logdet", base[1], p.objective_logdet), ("lmi", base[2], p.lmi_constraints)):
            for M, t in zip(mats, terms):
                if M.ndim != 2 or M.shape[0] != M.shape[1]:
                    raise ValueError(f"{kind} expression {t.name} must return a square matrix, got {M.shape}")
        coeffs = [[np.zeros(n) for _ in base[0]],
                  [np.zeros((n,) + M.shape) for M in base[1]],
                  [np.zeros((n,) + M.shape) for M in base[2]],
                  [np.zeros((n, e.size)) for e in base[3]]]
        e = np.zeros(n)
        for i in range(n):
            e[i] = 1.0
            probe = self._evaluate_all(self.unpack(e))
            e[i] = 0.0
            for g in range(4):
                for k, val in enumerate(probe[g]):
                    coeffs[g][k][i] = val - base[g][k]
        self._check_affine(base, coeffs)

        self.c0 = p.constant + sum(t.weight * b for t, b in zip(p.objective_linear, base[0]))
        self.c = np.zeros(n)
        for t, cf in zip(p.objective_linear, coeffs[0]):
            self.c += t.weight * cf
        self.logdet_blocks = []
        for t, M0, F in zip(p.objective_logdet, base[1], coeffs[1]):
            self._check_symmetric(t.name, M0, F)
            self.logdet_blocks.append(_Block(t.name, 0.5 * (M0 + M0.T), 0.5 * (F + F.transpose(0, 2, 1))))
        self.logdet_weights = np.array([t.weight for t in p.objective_logdet], dtype=float)
        self.lmi_blocks = []
        for t, M0, F in zip(p.lmi_constraints, base[2], coeffs[2]):
            self._check_symmetric(t.name, M0, F)
            F0 = 0.5 * (M0 + M0.T) - t.margin * np.eye(M0.shape[0])
            self.lmi_blocks.append(_Block(t.name, F0, 0.5 * (F + F.transpose(0, 2, 1))))
        if base[3]:
            self.A_eq = np.hstack(coeffs[3]).T
            self.b_eq = -np.concatenate(base[3])
        else:
            self.A_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0)

    def _check_symmetric(self, name, M0, F):
        scale = max(1.0, np.abs(M0).max(initial=0.0), np.abs(F).max(initial=0.0))
        asym = max(np.abs(M0 - M0.T).max(initial=0.0), np.abs(F - F.transpose(0, 2, 1)).max(initial=0.0))
        if asym > 1e-9 * scale:
            raise ValueError(f"expression {name} is not symmetric (asymmetry {asym:.2e})")

    def _check_affine(self, base, coeffs):
        # fixed seed keeps compilation deterministic
        rng = np.random.default_rng(20240611)
        p = self.problem
        names = [[t.name for t in p.objective_linear], [t.name for t in p.objective_logdet],
                 [t.name for t in p.lmi_constraints], [t.name for t in p.equality_constraints]]
        for _ in range(2):
            x = rng.standard_normal(self.nvar)
            got = self._evaluate_all(self.unpack(x))
            for g in range(4):
                for k, val in enumerate(got[g]):
                    cf = coeffs[g][k]
                    pred = base[g][k] + np.tensordot(x, cf, axes=1)
                    scale = 1.0 + np.abs(base[g][k]).max(initial=0.0) + np.abs(x) @ np.abs(cf).reshape(self.nvar, -1).max(axis=1)
                    err = np.abs(np.asarray(val) - pred).max(initial=0.0)
                    if err > 1e-8 * scale:
                        raise NonAffineError(f"expression {names[g][k]} is not affine in the decision variables "
                                             f"(deviation {err:.2e})")


# ---------------------------------------------------------------------------
# barrier machinery


class _Barrier:
    """Barrier function over reduced coordinates y (x = x0 + N y)."""

    def __init__(self, c, c0, logdet_blocks, weights, lmi_blocks):
        self.c = c
        self.c0 = c0
        self.ld = logdet_blocks
        self.w = weights
        self.lmi = lmi_blocks
        self.theta = float(sum(b.n for b in lmi_blocks))
        self.dim = c.size

    @staticmethod
    def _chol(S):
        try:
            return np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            return None

    def objective(self, y) -> float:
        """f0(y); +inf outside the logdet domain."""
        val = self.c0 + self.c @ y
        for b, w in zip(self.ld, self.w):
            C = self._chol(b.at(y))
            if C is None:
                return np.inf
            val -= w * 2.0 * np.log(np.diag(C)).sum()
        return float(val)

    def value(self, y, t) -> float:
        f0 = self.objective(y)
        if not np.isfinite(f0):
            return np.inf
        val = t * f0
        for b in self.lmi:
            C = self._chol(b.at(y))
            if C is None:
                return np.inf
            val -= 2.0 * np.log(np.diag(C)).sum()
        return float(val)

    def derivatives(self, y, t):
        g = t * self.c.copy()
        H = np.zeros((self.dim, self.dim))
        for blocks, scales in ((self.ld, t * self.w), (self.lmi, np.ones(len(self.lmi)))):
            for b, s in zip(blocks, scales):
                if b.idx.size == 0:
                    continue
                C = self._chol(b.at(y))
                if C is None:
                    raise NumericalError(f"block {b.name} left its domain")
                Ci = sla.solve_triangular(C, np.eye(b.n), lower=True)
                Y = Ci @ b.F @ Ci.T
                Yf = Y.reshape(Y.shape[0], -1)
                g[b.idx] -= s * np.einsum("kii->k", Y)
                H[np.ix_(b.idx, b.idx)] += s * (Yf @ Yf.T)
        return g, H

    def min_eigs(self, y) -> list[float]:
        return [float(np.linalg.eigvalsh(b.at(y)).min()) for b in self.lmi]


def _newton_direction(H, g):
    d = np.sqrt(np.maximum(np.diag(H), 1e-300))
    Hs = H / np.outer(d, d)
    gs = g / d
    try:
        cf = sla.cho_factor(Hs, lower=True, check_finite=False)
        step = -sla.cho_solve(cf, gs, check_finite=False)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(Hs)
        w = np.maximum(w, 1e-14 * max(w.max(), 1e-300))
        step = -(V @ ((V.T @ gs) / w))
    return step / d


def _center(bar: _Barrier, y, t, opts: SolverOptions, budget: int, stop=None):
    """Damped Newton minimization of the barrier at fixed t.

    Returns (y, steps, state) with state in {"centered", "stalled", "budget", "stopped"}.
    """
    steps = 0
    val = bar.value(y, t)
    while steps < budget:
        g, H = bar.derivatives(y, t)
        d = _newton_direction(H, g)
        slope = float(g @ d)
        lam2 = -slope
        if lam2 / 2.0 <= opts.newton_tol:
            return y, steps, "centered"
        s = 1.0
        accepted = False
        while s > 1e-14:
            yn = y + s * d
            vn = bar.value(yn, t)
            if vn <= val + opts.ls_alpha * s * slope:
                accepted = True
                break
            s *= opts.ls_beta
        if not accepted:
            # no representable decrease left; accept only if already nearly centered
            return y, steps, "centered" if lam2 < 1e-5 else "stalled"
        gain = val - vn
        y, val = yn, vn
        steps += 1
        if stop is not None and stop(y):
            return y, steps, "stopped"
        if lam2 < 1e-5 and gain <= 64 * np.finfo(float).eps * abs(val):
            # decrease is at rounding level
            return y, steps, "centered"
    return y, steps, "budget"


def _path_follow(bar: _Barrier, y, opts: SolverOptions, budget: int, stop=None):
    t = opts.t0
    steps = 0
    while True:
        y, k, state = _center(bar, y, t, opts, budget - steps, stop)
        steps += k
        if state == "stopped":
            return y, steps, "stopped", t
        if state == "stalled":
            return y, steps, "numerical_failure", t
        if state == "budget":
            return y, steps, "max_iter", t
        obj = bar.objective(y)
        if bar.theta / t <= opts.gap_tol * (1.0 + abs(obj)):
            return y, steps, "optimal", t
        t *= opts.mu


# ---------------------------------------------------------------------------
# public API


def _reduce(problem: SdpProblem):
    """Compile and eliminate equalities: x = x_p + N y."""
    comp = problem.compile()
    n = comp.nvar
    if comp.A_eq.shape[0]:
        x_p, *_ = np.linalg.lstsq(comp.A_eq, comp.b_eq, rcond=None)
        res = np.abs(comp.A_eq @ x_p - comp.b_eq).max()
        if res > 1e-9 * (1.0 + np.abs(comp.b_eq).max()):
            raise InfeasibleError("equality constraints are inconsistent", constraint="equalities")
        N = sla.null_space(comp.A_eq)
    else:
        x_p = np.zeros(n)
        N = np.eye(n)
    ld_blocks = [b.restrict(x_p, N) for b in comp.logdet_blocks]
    lmi_blocks = [b.restrict(x_p, N) for b in comp.lmi_blocks]
    bar = _Barrier(N.T @ comp.c, comp.c0 + comp.c @ x_p, ld_blocks, comp.logdet_weights, lmi_blocks)
    return comp, x_p, N, bar


def _start_vector(comp, x_p, N, start):
    if start is None:
        return np.zeros(N.shape[1])
    x_start = comp.pack(start)
    y = N.T @ (x_start - x_p)
    if np.abs(x_p + N @ y - x_start).max() > 1e-8 * (1.0 + np.abs(x_start).max()):
        log.info("start point violates equality constraints; projecting")
    return y


def find_feasible_point(problem: SdpProblem, options: SolverOptions | None = None,
                        start: Values | None = None) -> dict[str, np.ndarray]:
    """Strictly feasible values for ``problem`` (phase I only, objective ignored).

    Raises:
        InfeasibleError: naming the block that stays binding.
    """
    opts = options or SolverOptions()
    comp, x_p, N, bar = _reduce(problem)
    y = _start_vector(comp, x_p, N, start)
    if not np.isfinite(bar.value(y, 1.0)):
        y, _ = _phase_one(bar, y, opts)
    return comp.unpack(x_p + N @ y)


def solve(problem: SdpProblem, options: SolverOptions | None = None, start: Values | None = None) -> SdpSolution:
    """Solve a MAXDET problem.

    Args:
        problem: the program to solve.
        options: solver tolerances; defaults are used when omitted.
        start: optional strictly feasible starting values.  Without one (or if
            the supplied point is not strictly feasible) a phase-I slack
            problem is solved first.

    Returns:
        The solution with ``status`` one of ``optimal``, ``max_iter``,
        ``infeasible`` or ``numerical_failure``.
    """
    opts = options or SolverOptions()
    comp, x_p, N, bar = _reduce(problem)
    y = _start_vector(comp, x_p, N, start)

    phase1_steps = 0
    if not np.isfinite(bar.value(y, 1.0)):
        y, phase1_steps = _phase_one(bar, y, opts)

    y, steps, status, t = _path_follow(bar, y, opts, opts.max_newton - phase1_steps)
    x = x_p + N @ y
    eigs = bar.min_eigs(y)
    return SdpSolution(
        values=comp.unpack(x),
        objective=bar.objective(y),
        status=status,
        duality_gap_estimate=bar.theta / t,
        min_constraint_eig=min(eigs) if eigs else float("inf"),
        newton_steps=steps + phase1_steps,
        phase1_steps=phase1_steps,
    )


def _phase_one(bar: _Barrier, y, opts: SolverOptions):
    """Find a strictly feasible y by minimizing a shared slack s.

    Every LMI block and every logdet argument gets ``+ s I``; the search stops
    as soon as s drops below ``-phase1_margin``.
    """
    blocks = []
    for b in list(bar.lmi) + list(bar.ld):
        F = np.zeros((bar.dim + 1, b.n, b.n))
        F[b.idx] = b.F
        F[-1] = np.eye(b.n)
        blocks.append(_Block(b.name, b.F0, F))
    worst = max(-float(np.linalg.eigvalsh(b.at(y)).min()) for b in list(bar.lmi) + list(bar.ld))
    s0 = max(worst, 0.0) + 1.0
    c = np.zeros(bar.dim + 1)
    c[-1] = 1.0
    aux = _Barrier(c, 0.0, [], np.zeros(0), blocks)
    ys = np.append(y, s0)
    margin = opts.phase1_margin
    ys, steps, status, _ = _path_follow(aux, ys, opts, opts.max_newton, stop=lambda z: z[-1] < -margin)
    if status == "stopped" or ys[-1] < -margin:
        return ys[:-1], steps
    eigs = [float(np.linalg.eigvalsh(b.at(ys[:-1])).min()) for b in list(bar.lmi) + list(bar.ld)]
    names = [b.name for b in list(bar.lmi) + list(bar.ld)]
    worst_block = names[int(np.argmin(eigs))]
    if status == "optimal":
        raise InfeasibleError(f"problem is infeasible: smallest achievable slack {ys[-1]:.3e} "
                              f"(binding block {worst_block})", constraint=worst_block)
    raise NumericalError(f"phase I ended with status {status} at slack {ys[-1]:.3e} (block {worst_block})")


@dataclass
class CheckReport:
    """Constraint violations recomputed directly from the expressions."""

    lmi_min_eigs: dict[str, float]
    logdet_min_eigs: dict[str, float]
    equality_residuals: dict[str, float]
    structure_residuals: dict[str, float]
    worst_lmi_violation: float
    worst_equality_residual: float
    ok: bool


def check_solution(problem: SdpProblem, solution: SdpSolution | Values, tol: float = 1e-8) -> CheckReport:
    """Re-evaluate every constraint at the given values without the solver's compiled form.

    LMI minimum eigenvalues are reported relative to the block's margin, so a
    negative number is a violation.
    """
    values = solution.values if isinstance(solution, SdpSolution) else solution
    vals = {k: np.asarray(v, dtype=float) for k, v in values.items()}
    lmi = {}
    for c in problem.lmi_constraints:
        M = np.asarray(c.expr(vals), dtype=float)
        lmi[c.name] = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min()) - c.margin
    ld = {}
    for t in problem.objective_logdet:
        M = np.asarray(t.expr(vals), dtype=float)
        ld[t.name] = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())
    eq = {c.name: float(np.abs(np.asarray(c.expr(vals), dtype=float)).max(initial=0.0))
          for c in problem.equality_constraints}
    struct = {v.name: v.structure_residual(vals[v.name]) for v in problem.variables}
    worst_lmi = min([*lmi.values(), *ld.values()], default=float("inf"))
    worst_eq = max([*eq.values(), *struct.values()], default=0.0)
    ok = worst_lmi >= -tol and worst_eq <= tol and all(v > 0 for v in ld.values())
    return CheckReport(lmi, ld, eq, struct, -min(worst_lmi, 0.0) if np.isfinite(worst_lmi) else 0.0,
                       worst_eq, ok)


def dump_problem(problem: SdpProblem, path) -> None:
    """Write the compiled problem (coefficients per block) as JSON for external cross-checking."""
    comp = problem.compile()

    def block_json(b, kind, extra):
        coeffs = {str(int(i)): F.tolist() for i, F in zip(b.idx, b.F)}
        return {"name": b.name, "kind": kind, "size": b.n, "constant": b.F0.tolist(), "coefficients": coeffs, **extra}

    layout = []
    for v in comp.variables:
        layout.append({"name": v.name, "shape": list(v.shape), "structure": v.structure, "split": v.split,
                       "offset": comp.offsets[v.name], "entries": [list(e) for e in v.entries()]})
    doc = {
        "n_scalar_variables": comp.nvar,
        "variables": layout,
        "objective": {"constant": comp.c0, "linear": comp.c.tolist()},
        "logdet_terms": [block_json(b, "logdet", {"weight": float(w)})
                         for b, w in zip(comp.logdet_blocks, comp.logdet_weights)],
        # constants already include the margin shift
        "lmi_constraints": [block_json(b, "lmi", {"margin": c.margin})
                            for b, c in zip(comp.lmi_blocks, problem.lmi_constraints)],
        "equalities": {"A": comp.A_eq.tolist(), "b": comp.b_eq.tolist()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
