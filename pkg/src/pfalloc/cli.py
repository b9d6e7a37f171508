"""Command-line front end: solve rate matrices, verify allocations, run sweeps.

Exit codes are a stable contract: 0 success, 1 input or feasibility error,
2 convergence failure (a best-effort solution is still written), 3 verification
failed.  Output files are written atomically, so an error exit never leaves a
partial file behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import model, oracle, solver, wlansim

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONVERGENCE = 2
EXIT_VERIFY = 3


class _InputError(Exception):
    pass


def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise _InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise _InputError(f"{path} is not valid JSON: {exc}") from exc


def _load_matrix(path: str) -> model.RateMatrix:
    try:
        return model.RateMatrix.from_csv(path)
    except OSError as exc:
        raise _InputError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise _InputError(f"bad rate matrix in {path}: {exc}") from exc


def _load_allocation_array(path: str) -> np.ndarray:
    data = _load_json(path)
    if isinstance(data, dict):
        if "allocation" not in data:
            raise _InputError(f"{path} has no 'allocation' key")
        data = data["allocation"]
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2:
        raise _InputError(f"allocation in {path} must be a 2-D array")
    return arr


def _load_config(path: str | None) -> solver.SolverConfig:
    if path is None:
        return solver.SolverConfig()
    data = _load_json(path)
    if not isinstance(data, dict):
        raise _InputError(f"{path} must hold a JSON object of solver config fields")
    try:
        return solver.SolverConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise _InputError(f"bad solver config in {path}: {exc}") from exc


def _load_weights(path: str | None, num_users: int):
    if path is None:
        return None
    data = _load_json(path)
    arr = np.asarray(data, dtype=float)
    if arr.shape != (num_users,):
        raise _InputError(f"weights in {path} have shape {arr.shape}, expected ({num_users},)")
    try:
        return model.Weights(arr)
    except ValueError as exc:
        raise _InputError(f"bad weights in {path}: {exc}") from exc


def cmd_solve(args) -> int:
    B = _load_matrix(args.input)
    cfg = _load_config(args.config)
    w = _load_weights(args.weights, B.num_users)
    try:
        solution = solver.solve(B, algorithm=args.algorithm, w=w, cfg=cfg)
        code = EXIT_OK
    except model.ConvergenceError as exc:
        print(f"warning: {exc}; writing best-effort solution", file=sys.stderr)
        solution = exc.solution
        code = EXIT_CONVERGENCE
    except ValueError as exc:
        raise _InputError(str(exc)) from exc
    _atomic_write_text(args.out, json.dumps(solution.to_dict(), indent=2) + "\n")
    print(f"objective {solution.objective:.10f}  kkt_residual {solution.kkt_residual:.3g}  "
          f"iterations {solution.iterations}")
    return code


def cmd_verify(args) -> int:
    B = _load_matrix(args.matrix)
    P = _load_allocation_array(args.allocation)
    if P.shape != B.rates.shape:
        raise _InputError(f"allocation shape {P.shape} does not match matrix {B.rates.shape}")
    try:
        report = model.kkt_residual(B, P)
    except model.FeasibilityError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INPUT
    T = model.throughputs(B, P)
    E = model.equivalent_airtime(P, report.prices)
    print(f"kkt_residual {report.residual:.6g}")
    print("equivalent_airtime " + " ".join(f"{e:.6g}" for e in E))
    print(f"shared_channels {oracle.shared_channel_count(P)}")
    print(f"multi_channel_users {oracle.multi_channel_user_count(P)}")
    print(f"single_channel_users {oracle.single_channel_user_count(P)}")
    print("throughputs " + " ".join(f"{t:.6g}" for t in T))
    if report.satisfied_at(args.epsilon):
        print(f"KKT satisfied at epsilon {args.epsilon:g}")
        return EXIT_OK
    print(f"KKT NOT satisfied at epsilon {args.epsilon:g}", file=sys.stderr)
    return EXIT_VERIFY


def _parse_sweep(spec: str | None):
    if spec is None:
        return None
    axis, _, values = spec.partition("=")
    axis = axis.strip()
    if axis not in ("num_stas", "hotspot_load") or not values:
        raise _InputError("sweep must look like num_stas=8,16,32 or hotspot_load=0.25,0.5")
    try:
        if axis == "num_stas":
            parsed = [int(v) for v in values.split(",")]
        else:
            parsed = [float(v) for v in values.split(",")]
    except ValueError as exc:
        raise _InputError(f"bad sweep values: {exc}") from exc
    return axis, parsed


def cmd_simulate(args) -> int:
    data = _load_json(args.scenario)
    if not isinstance(data, dict):
        raise _InputError(f"{args.scenario} must hold a JSON scenario object")
    if args.seed is not None:
        data["master_seed"] = args.seed
    try:
        base = wlansim.Scenario.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise _InputError(f"bad scenario: {exc}") from exc
    schemes = tuple(s.strip() for s in args.schemes.split(",")) if args.schemes else wlansim.SCHEMES
    cfg = _load_config(args.config)
    sweep = _parse_sweep(args.sweep)

    variants = [base]
    if sweep is not None:
        axis, values = sweep
        try:
            if axis == "num_stas":
                variants = [wlansim.Scenario.from_dict({**base.to_dict(), "num_stas": v})
                            for v in values]
            else:
                variants = [wlansim.Scenario.from_dict(
                    {**base.to_dict(), "distribution": "hotspot", "hotspot_load": v})
                    for v in values]
        except ValueError as exc:
            raise _InputError(f"bad sweep value: {exc}") from exc

    records = []
    for sc in variants:
        try:
            records.extend(wlansim.run_experiment(sc, schemes=schemes, cfg=cfg,
                                                  workers=args.workers))
        except ValueError as exc:
            raise _InputError(str(exc)) from exc
    wlansim.write_metrics_csv(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pfalloc",
        description="Proportional-fair airtime allocation: solvers, verification, WLAN simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a rate-matrix CSV for PF airtimes")
    p_solve.add_argument("input", help="rate matrix CSV (users x channels, Mbit/s, no header)")
    p_solve.add_argument("--algorithm", default="auto",
                         help="general | 2user | 2channel | auto (default)")
    p_solve.add_argument("--weights", help="JSON array of per-user weights")
    p_solve.add_argument("--config", help="JSON object of solver config fields")
    p_solve.add_argument("--out", required=True, help="output solution JSON path")
    p_solve.set_defaults(fn=cmd_solve)

    p_verify = sub.add_parser("verify", help="check an allocation against a rate matrix")
    p_verify.add_argument("matrix", help="rate matrix CSV")
    p_verify.add_argument("allocation", help="allocation JSON (object with 'allocation' or bare array)")
    p_verify.add_argument("--epsilon", type=float, default=1e-6,
                          help="KKT residual acceptance threshold")
    p_verify.set_defaults(fn=cmd_verify)

    p_sim = sub.add_parser("simulate", help="run the WLAN association study")
    p_sim.add_argument("scenario", help="scenario JSON path")
    p_sim.add_argument("--out", required=True, help="results CSV path")
    p_sim.add_argument("--sweep", help="axis sweep, e.g. num_stas=8,16,32 or hotspot_load=0.25,0.5")
    p_sim.add_argument("--seed", type=int, help="override the scenario master_seed")
    p_sim.add_argument("--schemes", help="comma list from MT,SS-TF,SS-AF,PF (default: all)")
    p_sim.add_argument("--config", help="JSON object of solver config fields")
    p_sim.add_argument("--workers", type=int, default=1,
                       help="parallel replication workers (results identical at any count)")
    p_sim.set_defaults(fn=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (model.DimensionError, model.DomainError, model.FeasibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
