"""Run configuration: JSON schema checks, model construction and round-trip.

Layout (unknown keys are rejected at every level)::

    {
      "name": "...",                               optional
      "plant": {"A", "B", "K", "Sigma_w", "Sigma_h", "Sigma_x1"},
      "adversary": {"L": [[...]] | "compute"},
      "weights": {"Q", "R"},
      "reference": {"baseline_cost", "note"},      optional, informational
      "synthesis": {"epsilon", "epsilon_list", "modes", "alpha_grid",
                    "delta0", "strict_margin", "solver": {...}},
      "simulation": {"N", "seed", "replications", "burn_in"},
      "output": {"dir"}
    }

Matrices are row-major nested lists.  ``"compute"`` for the adversary gain
uses the steady-state filter gain of the plant.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, PrivsynthError
from .estimation import steady_state_kalman_gain
from .model import AdversaryFilter, PlantModel, case_study_config
from .sdp import SolverOptions
from .synthesis import MODES, SynthesisConfig, default_alpha_grid

Matrix = list[list[float]]


def _reject_unknown(d: dict, allowed, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _matrix(value, where: str) -> Matrix:
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ConfigError(f"{where} must be a nonempty list of rows")
    width = len(value[0])
    if width == 0 or any(len(r) != width for r in value):
        raise ConfigError(f"{where} rows must all have the same nonzero length")
    out = []
    for r in value:
        row = []
        for x in r:
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                raise ConfigError(f"{where} entries must be finite numbers")
            row.append(float(x))
        out.append(row)
    return out


def _number(value, where: str, lo=None, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{where} must be a finite number")
    if integer:
        if int(value) != value:
            raise ConfigError(f"{where} must be an integer")
        value = int(value)
    else:
        value = float(value)
    if lo is not None and value < lo:
        raise ConfigError(f"{where} must be >= {lo}")
    return value


def _shape(M: Matrix) -> tuple[int, int]:
    return len(M), len(M[0])


@dataclass
class PlantBlock:
    A: Matrix
    B: Matrix
    K: Matrix
    Sigma_w: Matrix
    Sigma_h: Matrix
    Sigma_x1: Matrix


@dataclass
class SynthesisBlock:
    epsilon: float | None = None
    epsilon_list: list[float] | None = None
    modes: list[str] = field(default_factory=lambda: list(MODES))
    alpha_grid: list[float] = field(default_factory=default_alpha_grid)
    delta0: float = 1e-3
    strict_margin: float = 1e-9
    solver: dict = field(default_factory=dict)


@dataclass
class SimulationBlock:
    N: int = 10_000
    seed: int = 1
    replications: int = 10
    burn_in: int | None = None


@dataclass
class RunConfig:
    plant: PlantBlock
    L: Matrix | str
    Q: Matrix
    R: Matrix
    synthesis: SynthesisBlock = field(default_factory=SynthesisBlock)
    simulation: SimulationBlock = field(default_factory=SimulationBlock)
    name: str | None = None
    reference: dict | None = None
    output_dir: str | None = None

    # -- parsing -----------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _reject_unknown(d, {"name", "plant", "adversary", "weights", "reference", "synthesis", "simulation", "output"},
                        "config")
        for key in ("plant", "adversary", "weights"):
            if key not in d:
                raise ConfigError(f"missing required block '{key}'")
        p = d["plant"]
        names = [f.name for f in fields(PlantBlock)]
        _reject_unknown(p, names, "plant")
        missing = [k for k in names if k not in p]
        if missing:
            raise ConfigError(f"plant is missing {', '.join(missing)}")
        plant = PlantBlock(**{k: _matrix(p[k], f"plant.{k}") for k in names})

        adv = d["adversary"]
        _reject_unknown(adv, {"L"}, "adversary")
        if "L" not in adv:
            raise ConfigError("adversary.L is required (a matrix or \"compute\")")
        L = adv["L"] if adv["L"] == "compute" else _matrix(adv["L"], "adversary.L")

        w = d["weights"]
        _reject_unknown(w, {"Q", "R"}, "weights")
        if "Q" not in w or "R" not in w:
            raise ConfigError("weights needs both Q and R")
        Q, R = _matrix(w["Q"], "weights.Q"), _matrix(w["R"], "weights.R")

        ref = d.get("reference")
        if ref is not None:
            _reject_unknown(ref, {"baseline_cost", "note"}, "reference")
            ref = dict(ref)

        name = d.get("name")
        if name is not None and not isinstance(name, str):
            raise ConfigError("name must be a string")

        out = d.get("output", {})
        _reject_unknown(out, {"dir"}, "output")
        out_dir = out.get("dir")
        if out_dir is not None and not isinstance(out_dir, str):
            raise ConfigError("output.dir must be a string")

        cfg = cls(plant, L, Q, R, _parse_synthesis(d.get("synthesis", {})), _parse_simulation(d.get("simulation", {})),
                  name, ref, out_dir)
        cfg._check_dimensions()
        return cfg

    def _check_dimensions(self):
        n, nb = _shape(self.plant.A)
        if n != nb:
            raise ConfigError(f"plant.A must be square, got {n}x{nb}")
        rows, m = _shape(self.plant.B)
        if rows != n:
            raise ConfigError(f"plant.B must have {n} rows")
        expect = {"plant.K": (self.plant.K, (m, n)), "plant.Sigma_w": (self.plant.Sigma_w, (n, n)),
                  "plant.Sigma_h": (self.plant.Sigma_h, (n, n)), "plant.Sigma_x1": (self.plant.Sigma_x1, (n, n)),
                  "weights.Q": (self.Q, (n, n)), "weights.R": (self.R, (m, m))}
        if self.L != "compute":
            expect["adversary.L"] = (self.L, (n, n))
        for where, (M, shape) in expect.items():
            if _shape(M) != shape:
                raise ConfigError(f"{where} must be {shape[0]}x{shape[1]}, got {_shape(M)[0]}x{_shape(M)[1]}")

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        d: dict = {}
        if self.name is not None:
            d["name"] = self.name
        d["plant"] = asdict(self.plant)
        d["adversary"] = {"L": self.L}
        d["weights"] = {"Q": self.Q, "R": self.R}
        if self.reference is not None:
            d["reference"] = dict(self.reference)
        syn = asdict(self.synthesis)
        d["synthesis"] = {k: v for k, v in syn.items() if v is not None}
        sim = asdict(self.simulation)
        d["simulation"] = {k: v for k, v in sim.items() if v is not None}
        if self.output_dir is not None:
            d["output"] = {"dir": self.output_dir}
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    # -- model construction -----------------------------------------------

    def build_plant(self) -> PlantModel:
        try:
            return PlantModel(A=self.plant.A, B=self.plant.B, K=self.plant.K, Sigma_w=self.plant.Sigma_w,
                              Sigma_h=self.plant.Sigma_h, Sigma_x1=self.plant.Sigma_x1, Q=self.Q, R=self.R)
        except (ValueError, PrivsynthError) as exc:
            raise ConfigError(f"invalid plant: {exc}") from exc

    def build_filter(self, plant: PlantModel) -> AdversaryFilter:
        try:
            if self.L == "compute":
                L, _ = steady_state_kalman_gain(plant.A, plant.Sigma_w, plant.Sigma_h)
            else:
                L = np.asarray(self.L)
            return AdversaryFilter.for_plant(plant, L)
        except (ValueError, PrivsynthError) as exc:
            raise ConfigError(f"invalid adversary gain: {exc}") from exc

    def synthesis_config(self, epsilon: float, mode: str) -> SynthesisConfig:
        s = self.synthesis
        try:
            return SynthesisConfig(epsilon=epsilon, alpha_grid=tuple(s.alpha_grid), mode=mode,
                                   solver=SolverOptions(**s.solver), delta0=s.delta0, strict_margin=s.strict_margin)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid synthesis settings: {exc}") from exc


def _parse_synthesis(s: dict) -> SynthesisBlock:
    allowed = {f.name for f in fields(SynthesisBlock)}
    _reject_unknown(s, allowed, "synthesis")
    blk = SynthesisBlock()
    if "epsilon" in s:
        blk.epsilon = _number(s["epsilon"], "synthesis.epsilon", lo=0.0)
    if "epsilon_list" in s:
        lst = s["epsilon_list"]
        if not isinstance(lst, list) or not lst:
            raise ConfigError("synthesis.epsilon_list must be a nonempty list")
        blk.epsilon_list = [_number(e, "synthesis.epsilon_list entry", lo=0.0) for e in lst]
        if blk.epsilon_list != sorted(blk.epsilon_list):
            raise ConfigError("synthesis.epsilon_list must be sorted ascending")
    if "modes" in s:
        modes = s["modes"]
        if not isinstance(modes, list) or not modes or any(m not in MODES for m in modes):
            raise ConfigError(f"synthesis.modes must be a nonempty list drawn from {list(MODES)}")
        blk.modes = list(modes)
    if "alpha_grid" in s:
        grid = s["alpha_grid"]
        if not isinstance(grid, list) or not grid:
            raise ConfigError("synthesis.alpha_grid must be a nonempty list")
        blk.alpha_grid = [_number(a, "synthesis.alpha_grid entry") for a in grid]
        if any(not 0.0 < a < 1.0 for a in blk.alpha_grid):
            raise ConfigError("synthesis.alpha_grid values must lie strictly inside (0, 1)")
    if "delta0" in s:
        blk.delta0 = _number(s["delta0"], "synthesis.delta0")
        if blk.delta0 <= 0:
            raise ConfigError("synthesis.delta0 must be positive")
    if "strict_margin" in s:
        blk.strict_margin = _number(s["strict_margin"], "synthesis.strict_margin", lo=0.0)
    if "solver" in s:
        opts = s["solver"]
        names = {f.name for f in fields(SolverOptions)}
        _reject_unknown(opts, names, "synthesis.solver")
        blk.solver = {k: _number(v, f"synthesis.solver.{k}", integer=(k == "max_newton")) for k, v in opts.items()}
    return blk


def _parse_simulation(s: dict) -> SimulationBlock:
    _reject_unknown(s, {f.name for f in fields(SimulationBlock)}, "simulation")
    blk = SimulationBlock()
    if "N" in s:
        blk.N = _number(s["N"], "simulation.N", lo=1, integer=True)
    if "seed" in s:
        blk.seed = _number(s["seed"], "simulation.seed", lo=0, integer=True)
    if "replications" in s:
        blk.replications = _number(s["replications"], "simulation.replications", lo=1, integer=True)
    if s.get("burn_in") is not None:
        blk.burn_in = _number(s["burn_in"], "simulation.burn_in", lo=0, integer=True)
        if blk.burn_in >= blk.N:
            raise ConfigError("simulation.burn_in must be smaller than simulation.N")
    return blk


def load_config(path: str | Path | None) -> RunConfig:
    """Parse a config file; ``None`` selects the bundled case study."""
    if path is None:
        return RunConfig.from_dict(case_study_config())
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(data)
