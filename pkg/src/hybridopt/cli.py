"""Command-line surface.

Subcommands: ``validate`` (coefficient hypothesis report), ``simulate``
(paths to CSV/JSON), ``estimate`` (Monte Carlo cost of a control),
``solve`` (value-grid artifact), ``verify`` (oracle battery).  Outputs are
deterministic given config + seed, carry the config hash, and are written
atomically.  Plot-ready CSV/JSON is the output contract; no plotting here.

Exit codes: 0 ok, 2 config/parse error, 3 hypothesis failure, 4 simulation
error, 5 capacity error, 6 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import config as cfg
from . import oracle_verify
from .control import candidate_set
from .cost import monte_carlo_cost
from .dpp_solver import GridSpec, solve
from .dynamics import simulate_paths, validate_model
from .errors import (
    CapacityError,
    ExprError,
    HybridOptError,
    ModelError,
    NumericalError,
    SimulationError,
    StepSizeError,
    UsageError,
    ValidationError,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_HYPOTHESIS = 3
EXIT_SIMULATION = 4
EXIT_CAPACITY = 5
EXIT_VERIFY = 6


def _default_workers() -> int:
    env = os.environ.get("HYBRIDOPT_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model config JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: HYBRIDOPT_WORKERS or CPU count)")
    p.add_argument("--out", default=None, help="output file path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check the declared coefficient hypotheses by sampling")
    _add_common(p)
    p.add_argument("--samples", type=int, default=1000)

    p = sub.add_parser("simulate", help="simulate controlled paths")
    _add_common(p)
    p.add_argument("--control", required=True, help="control spec JSON")
    p.add_argument("--paths", type=int, default=10)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--x0", default=None, help="comma-separated start state (default: model starts)")
    p.add_argument("--i0", type=int, default=None, help="start regime (default: model starts)")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--horizon", type=float, default=None, help="end time (default: model horizon)")

    p = sub.add_parser("estimate", help="Monte Carlo cost of a control")
    _add_common(p)
    p.add_argument("--control", required=True)
    p.add_argument("--paths", type=int, default=1000)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--x0", default=None)
    p.add_argument("--i0", type=int, default=None)
    p.add_argument("--antithetic", action="store_true")

    p = sub.add_parser("solve", help="backward-induction value grid")
    _add_common(p)
    p.add_argument("--grid-nt", type=int, default=10)
    p.add_argument("--grid-nx", default="21", help="comma-separated nodes per dimension")
    p.add_argument("--quad-order", type=int, default=5)
    p.add_argument("--mu-atoms", type=int, default=2)
    p.add_argument("--mu-levels", type=int, default=1)
    p.add_argument("--nu-atoms", type=int, default=2)
    p.add_argument("--nu-levels", type=int, default=1)

    p = sub.add_parser("verify", help="run the oracle verification battery")
    p.add_argument("--check", nargs="*", default=None, help="check names (default: the full battery)")
    p.add_argument("--tolerance-scale", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.add_argument("--list", action="store_true", help="list available checks and exit")
    return parser


def _parse_x0(raw, model):
    if raw is None:
        return model.default_start()[0]
    try:
        return np.array([float(v) for v in str(raw).split(",")], dtype=float)
    except ValueError as err:
        raise ValidationError(f"bad --x0 value {raw!r}: {err}") from err


def _measure_json_cache(pool):
    return [cfg.canonical_json(m.to_dict()) for m in pool]


def _paths_to_csv(batch, hash_line: str) -> str:
    out = io.StringIO()
    out.write(f"# config_hash={hash_line}\n")
    writer = csv.writer(out, lineterminator="\n")
    d = batch.states.shape[2]
    writer.writerow(["path", "t"] + [f"x{c + 1}" for c in range(d)] + ["regime", "mu", "nu"])
    mu_json = _measure_json_cache(batch.mu_pool)
    nu_json = _measure_json_cache(batch.nu_pool)
    n_steps = batch.states.shape[1] - 1
    for row, p in enumerate(batch.path_indices):
        for k in range(n_steps + 1):
            rec = [int(p), repr(float(batch.times[k]))]
            rec += [repr(float(v)) for v in batch.states[row, k]]
            rec.append(int(batch.regimes[row, k]))
            if k < n_steps:
                rec.append(mu_json[batch.mu_idx[row, k]])
                rec.append(nu_json[batch.nu_idx[row, k]])
            else:
                rec += ["", ""]
            writer.writerow(rec)
    return out.getvalue()


def _paths_to_json(batch, hash_line: str) -> dict:
    mu_dicts = [m.to_dict() for m in batch.mu_pool]
    nu_dicts = [m.to_dict() for m in batch.nu_pool]
    return {
        "config_hash": hash_line,
        "times": batch.times.tolist(),
        "mu_pool": mu_dicts,
        "nu_pool": nu_dicts,
        "paths": [
            {
                "path": int(p),
                "states": batch.states[row].tolist(),
                "regimes": batch.regimes[row].tolist(),
                "mu_index": batch.mu_idx[row].tolist(),
                "nu_index": batch.nu_idx[row].tolist(),
            }
            for row, p in enumerate(batch.path_indices)
        ],
    }


def cmd_validate(args) -> int:
    model, payload = cfg.load_model(args.model)
    report = validate_model(model, args.samples)
    doc = report.to_dict()
    doc["config_hash"] = cfg.config_hash(payload)
    text = json.dumps(doc, sort_keys=True, indent=1)
    if args.out:
        cfg.atomic_write_text(args.out, text + "\n")
    print(text)
    return EXIT_OK if report.passed else EXIT_HYPOTHESIS


def cmd_simulate(args) -> int:
    model, payload = cfg.load_model(args.model)
    control = cfg.load_control(args.control, model)
    x0 = _parse_x0(args.x0, model)
    i0 = args.i0 if args.i0 is not None else model.default_start()[1]
    t_end = args.horizon if args.horizon is not None else model.horizon
    workers = args.workers if args.workers is not None else _default_workers()
    batch = simulate_paths(
        model, control, args.t0, x0, i0, t_end, args.dt, args.seed, args.paths, workers
    )
    run_hash = cfg.config_hash(
        {"model": payload, "seed": args.seed, "dt": args.dt, "paths": args.paths}
    )
    out = args.out or "paths.csv"
    if str(out).endswith(".json"):
        cfg.atomic_write_json(out, _paths_to_json(batch, run_hash))
    else:
        cfg.atomic_write_text(out, _paths_to_csv(batch, run_hash))
    print(f"wrote {args.paths} paths to {out}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    model, payload = cfg.load_model(args.model)
    control = cfg.load_control(args.control, model)
    x0 = _parse_x0(args.x0, model)
    i0 = args.i0 if args.i0 is not None else model.default_start()[1]
    workers = args.workers if args.workers is not None else _default_workers()
    est = monte_carlo_cost(
        model, control, 0.0, x0, i0, model.horizon, args.dt, args.paths, args.seed,
        workers, args.antithetic,
    )
    doc = est.to_dict()
    doc["config_hash"] = cfg.config_hash({"model": payload, "seed": args.seed, "dt": args.dt})
    text = json.dumps(doc, sort_keys=True, indent=1)
    if args.out:
        cfg.atomic_write_text(args.out, text + "\n")
    print(text)
    return EXIT_OK


def cmd_solve(args) -> int:
    model, payload = cfg.load_model(args.model)
    nx = [int(v) for v in str(args.grid_nx).split(",")]
    grid = GridSpec(args.grid_nt, nx, args.quad_order)
    mu_c = candidate_set(model.action_set, args.mu_atoms, args.mu_levels)
    nu_c = candidate_set(model.action_set, args.nu_atoms, args.nu_levels)
    vg = solve(model, grid, mu_c, nu_c)

    starts = model.starts or [(tuple(model.default_start()[0].tolist()), model.default_start()[1])]
    start_values = []
    for x0, i0 in starts:
        value = vg.value_at(0.0, np.asarray(x0, dtype=float), i0)
        start_values.append({"x": list(x0), "i": i0, "value": value})
        print(f"V(0, {list(x0)}, {i0}) = {value!r}")

    doc = vg.to_dict()
    doc["config_hash"] = cfg.config_hash(
        {"model": payload, "grid": grid.to_dict(),
         "mu": [args.mu_atoms, args.mu_levels], "nu": [args.nu_atoms, args.nu_levels]}
    )
    doc["start_values"] = start_values
    out = args.out or "value_grid.json"
    cfg.atomic_write_json(out, doc)
    print(f"wrote value grid to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.list:
        for name in oracle_verify.BATTERY:
            print(name)
        return EXIT_OK
    names = args.check
    if names is not None and len(names) == 0:
        print("warning: empty check list, nothing verified", file=sys.stderr)
        if args.out:
            cfg.atomic_write_json(args.out, {"pass": True, "checks": []})
        return EXIT_OK
    reports = oracle_verify.run_battery(names, args.tolerance_scale)
    all_pass = all(r.passed for r in reports)
    for r in reports:
        flag = "PASS" if r.passed else "FAIL"
        print(f"[{flag}] {r.name}: margin={r.margin:.3g} tolerance={r.tolerance:.3g} ({r.elapsed:.2f}s)")
    if args.out:
        cfg.atomic_write_json(
            args.out,
            {"pass": all_pass, "tolerance_scale": args.tolerance_scale,
             "checks": [r.to_dict() for r in reports]},
        )
    return EXIT_OK if all_pass else EXIT_VERIFY


def write_demo_config(model_path, control_path) -> None:
    """Bundled demo instance: the controllable-switch-rate model and a
    constant control, used by the determinism check and the README example."""
    model = {
        "state_dim": 1,
        "regime_count": 2,
        "horizon": 1.0,
        "action_set": {"lower": [0.0], "upper": [1.0]},
        "truncation": {"lower": [-1.0], "upper": [1.0]},
        "clamp": True,
        "drift": [["0"], ["0"]],
        "diffusion": [[["0"]], [["0"]]],
        "rates": [[None, "0.4*nu_m(1,0)"], ["0", None]],
        "rate_bound": 0.4,
        "running_cost": "i",
        "terminal_cost": "0",
        "constants": {"lipschitz_drift_diffusion": 1.0, "lipschitz_rates": 1.0, "growth": 1.0},
        "cost_lower_bounds": {"f": 0.0, "g": 0.0},
        "starts": [{"x": [0.0], "i": 1}],
    }
    control = {
        "kind": "constant",
        "mu": {"atoms": [[0.5]], "weights": [1.0]},
        "nu": {"atoms": [[0.0]], "weights": [1.0]},
    }
    cfg.atomic_write_json(model_path, model)
    cfg.atomic_write_json(control_path, control)


_COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "solve": cmd_solve,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (json.JSONDecodeError, ExprError, ValidationError, UsageError, StepSizeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE
    except CapacityError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ModelError,) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (SimulationError, NumericalError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SIMULATION
    except HybridOptError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_PARSE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
