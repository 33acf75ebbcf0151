"""Command line entry point: ``privsynth {synth,sweep,simulate,eval}``.

Exit codes: 0 success, 2 configuration error, 3 infeasible, 4 numerical failure.
Set ``PRIVSYNTH_LOG`` to a logging level name (e.g. ``INFO``) for progress output.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    InfeasibleError,
    NotPositiveDefiniteError,
    NumericalError,
    PrivsynthError,
    StabilityError,
)
from .estimation import spectral_radius
from .infoflow import mutual_info_rate
from .model import PrivacyMechanism, assemble_closed_loop
from .perf import performance_report
from .sim import replicate, simulate, stationary_filtered_error_cov, write_trace
from .synthesis import sweep_epsilon, synthesize

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 2, 3, 4
MODE_FLAGS = {"full": ["full_G"], "identity": ["identity_G"], "both": ["full_G", "identity_G"]}
CSV_COLUMNS = ["epsilon", "mode", "exact_rate", "bound", "slack", "alpha", "status", "min_feasible_epsilon"]

log = logging.getLogger("privsynth")


def _fmt(x) -> str:
    """17 significant digits, locale independent; empty for missing values."""
    if x is None:
        return ""
    return format(float(x), ".17g")


def _mat(M) -> list:
    return np.asarray(M, dtype=float).tolist()


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n")


def mechanism_to_dict(mech: PrivacyMechanism) -> dict:
    return {"G": _mat(mech.G), "Sigma_v": _mat(mech.Sigma_v), "Sigma_z": _mat(mech.Sigma_z)}


def load_mechanism(path) -> PrivacyMechanism:
    """Read a mechanism file (or a synth report containing one)."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read mechanism file {path}: {exc}") from exc
    if isinstance(data, dict) and "mechanism" in data:
        data = data["mechanism"]
    if not isinstance(data, dict) or set(data) != {"G", "Sigma_v", "Sigma_z"}:
        raise ConfigError("mechanism file must hold exactly the keys G, Sigma_v, Sigma_z")
    try:
        return PrivacyMechanism(np.asarray(data["G"], dtype=float), np.asarray(data["Sigma_v"], dtype=float),
                                np.asarray(data["Sigma_z"], dtype=float))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid mechanism in {path}: {exc}") from exc


def _modes(args, cfg: RunConfig, default) -> list[str]:
    if args.mode is not None:
        return MODE_FLAGS[args.mode]
    return default if default is not None else list(cfg.synthesis.modes)


def _epsilon(args, cfg: RunConfig) -> float:
    eps = args.epsilon if args.epsilon is not None else cfg.synthesis.epsilon
    if eps is None:
        raise ConfigError("no epsilon given (use --epsilon or synthesis.epsilon)")
    if eps < 0:
        raise ConfigError("epsilon must be nonnegative")
    return float(eps)


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out or cfg.output_dir or ".")


def _setup(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.simulation.seed = args.seed
    plant = cfg.build_plant()
    filt = cfg.build_filter(plant)
    return cfg, plant, filt


# ---------------------------------------------------------------------------
# commands


def synth_report(result) -> dict:
    return {
        "epsilon": result.epsilon,
        "mode": result.mode,
        "mechanism": mechanism_to_dict(result.mechanism),
        "exact_rate_nats": result.exact_rate_nats,
        "exact_rate_bits": result.exact_rate_nats / np.log(2.0),
        "uplink_nats": result.uplink_nats,
        "downlink_nats": result.downlink_nats,
        "bound_nats": result.bound_nats,
        "constraint_slack": result.constraint_slack,
        "baseline_cost": result.baseline_cost,
        "distorted_cost": result.distorted_cost,
        "alpha": result.alpha_used,
        "solver_status": result.status,
        "flags": result.flags,
        "candidates": [
            {"alpha": c.alpha, "status": c.status, "exact_rate_nats": c.exact_rate_nats, "bound_nats": c.bound_nats,
             "constraint_slack": c.constraint_slack, "objective": c.objective, "newton_steps": c.newton_steps,
             "min_constraint_eig": c.min_constraint_eig, "error": c.error}
            for c in result.candidates
        ],
    }


def cmd_synth(args) -> int:
    cfg, plant, filt = _setup(args)
    eps = _epsilon(args, cfg)
    out = _out_dir(args, cfg)
    code = EXIT_OK
    for mode in _modes(args, cfg, ["full_G"]):
        try:
            res = synthesize(plant, filt, cfg.synthesis_config(eps, mode))
        except InfeasibleError as exc:
            where = f" (constraint: {exc.constraint})" if exc.constraint else ""
            print(f"{mode}: infeasible at epsilon={eps}{where}: {exc}", file=sys.stderr)
            code = max(code, EXIT_INFEASIBLE)
            continue
        report = synth_report(res)
        _write_json(out / f"synth_{mode}.json", report)
        _write_json(out / f"mechanism_{mode}.json", report["mechanism"])
        print(f"{mode}: epsilon={eps} rate={res.exact_rate_nats:.6g} nats "
              f"({report['exact_rate_bits']:.6g} bits) bound={res.bound_nats:.6g} "
              f"slack={res.constraint_slack:.3g} alpha={res.alpha_used:.4g}")
    return code


def cmd_sweep(args) -> int:
    cfg, plant, filt = _setup(args)
    if args.epsilon_list is not None:
        eps_list = args.epsilon_list
    elif cfg.synthesis.epsilon_list is not None:
        eps_list = cfg.synthesis.epsilon_list
    else:
        raise ConfigError("no epsilon list given (use --epsilon-list or synthesis.epsilon_list)")
    modes = _modes(args, cfg, None)
    base = cfg.synthesis_config(eps_list[0], modes[0])
    points = sweep_epsilon(plant, filt, eps_list, base, modes, workers=args.threads)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for p in points:
            status = "ok" if p.ok else "failed"
            w.writerow([_fmt(p.epsilon), p.mode, _fmt(p.exact_rate), _fmt(p.bound), _fmt(p.slack), _fmt(p.alpha),
                        status, _fmt(p.min_feasible_epsilon)])
    n_ok = sum(p.ok for p in points)
    print(f"sweep: {n_ok}/{len(points)} points feasible; wrote {out / 'sweep.csv'}")
    return EXIT_OK if n_ok else EXIT_INFEASIBLE


def cmd_simulate(args) -> int:
    cfg, plant, filt = _setup(args)
    mech = _user_mechanism(args, plant, filt)
    sim = cfg.simulation
    none = PrivacyMechanism.identity(plant.n_y, plant.n_u)
    with_m = replicate(plant, mech, filt, sim.N, sim.seed, sim.replications, sim.burn_in)
    without = replicate(plant, none, filt, sim.N, sim.seed, sim.replications, sim.burn_in)
    eps = cfg.synthesis.epsilon if args.epsilon is None else args.epsilon
    perf = performance_report(plant, mech, 0.0 if eps is None else eps)

    def summary(rep, closed_cost, closed_mse):
        return {
            "mse": list(rep.mse),
            "mean_mse": rep.mean_mse,
            "closed_form_mse": closed_mse,
            "cost": [{"mean": c.mean, "stderr": c.stderr} for c in rep.cost],
            "closed_form_cost": closed_cost,
        }

    metrics = {
        "N": sim.N,
        "seed": sim.seed,
        "replications": sim.replications,
        "burn_in": sim.burn_in,
        "with_mechanism": summary(with_m, perf.distorted_cost,
                                  float(np.trace(stationary_filtered_error_cov(plant, mech, filt)))),
        "without_mechanism": summary(without, perf.baseline_cost,
                                     float(np.trace(stationary_filtered_error_cov(plant, none, filt)))),
        "mse_ratio": with_m.mean_mse / without.mean_mse,
    }
    out = _out_dir(args, cfg)
    _write_json(out / "metrics.json", metrics)
    if args.trace:
        write_trace(simulate(plant, mech, filt, sim.N, sim.seed), out / "trace.csv")
    print(f"simulate: MSE with mechanism {with_m.mean_mse:.6g}, without {without.mean_mse:.6g}, "
          f"ratio {metrics['mse_ratio']:.4g}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg, plant, filt = _setup(args)
    mech = _user_mechanism(args, plant, filt)
    eps = _epsilon(args, cfg)
    leak = mutual_info_rate(plant, mech, filt)
    perf = performance_report(plant, mech, eps)
    cl = assemble_closed_loop(plant, mech, filt)
    rho_ext = spectral_radius(cl.Acal)
    rho_x = spectral_radius(plant.A + plant.B @ plant.K @ mech.G)
    report = {
        "epsilon": eps,
        "exact_rate_nats": leak.rate_nats,
        "exact_rate_bits": leak.rate_bits,
        "uplink_nats": leak.uplink_nats,
        "downlink_nats": leak.downlink_nats,
        "baseline_cost": perf.baseline_cost,
        "distorted_cost": perf.distorted_cost,
        "constraint_slack": perf.slack,
        "spectral_radius_extended": rho_ext,
        "spectral_radius_state": rho_x,
        "stability_margin": 1.0 - rho_ext,
    }
    _write_json(_out_dir(args, cfg) / "eval.json", report)
    print(f"eval: rate={leak.rate_nats:.6g} nats (uplink {leak.uplink_nats:.6g}, downlink {leak.downlink_nats:.6g}) "
          f"slack={perf.slack:.6g}")
    return EXIT_OK


def _user_mechanism(args, plant, filt) -> PrivacyMechanism:
    if args.mechanism is None:
        raise ConfigError("--mechanism is required")
    mech = load_mechanism(args.mechanism)
    try:
        mech.check_against(plant)
    except DimensionError as exc:
        raise ConfigError(f"mechanism does not match the plant: {exc}") from exc
    rho = spectral_radius(assemble_closed_loop(plant, mech, filt).Acal)
    if rho >= 1.0:
        raise StabilityError(f"mechanism rejected: closed loop is unstable (spectral radius {rho:.6f})", rho)
    return mech


# ---------------------------------------------------------------------------
# argument parsing


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty epsilon list")
    if vals != sorted(vals) or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("epsilon list must be nonnegative and ascending")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privsynth", description="Privacy mechanism synthesis for LQR loops.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON); defaults to the bundled case study")
    common.add_argument("--mode", choices=sorted(MODE_FLAGS), help="transform family to synthesize")
    common.add_argument("--epsilon", type=float, help="control performance budget")
    common.add_argument("--epsilon-list", type=_float_list, help="comma-separated ascending budgets (sweep)")
    common.add_argument("--out", help="output directory (default: config output.dir or .)")
    common.add_argument("--seed", type=int, help="simulation seed override")
    common.add_argument("--threads", type=int, default=1, help="parallel workers for sweeps")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="synthesize a mechanism for one budget")
    sub.add_parser("sweep", parents=[common], help="leakage vs budget curve")
    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo metrics for a mechanism")
    p.add_argument("--mechanism", help="mechanism JSON (from synth)")
    p.add_argument("--trace", action="store_true", help="also write trace.csv for the first replication")
    p = sub.add_parser("eval", parents=[common], help="closed-form evaluation of a mechanism")
    p.add_argument("--mechanism", help="mechanism JSON (from synth)")
    return parser


COMMANDS = {"synth": cmd_synth, "sweep": cmd_sweep, "simulate": cmd_simulate, "eval": cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    level = os.environ.get("PRIVSYNTH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except StabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (NumericalError, ConvergenceError, NotPositiveDefiniteError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except PrivsynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
