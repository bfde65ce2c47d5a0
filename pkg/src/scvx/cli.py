"""Command-line entry point: ``scvx solve | check | rate``.

Log verbosity is read from the ``SCVX_LOG`` environment variable (a logging
level name such as ``INFO`` or ``DEBUG``; default ``WARNING``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .conic import validate_program
from .engine import StopReason, build_subproblem
from .io import ensure_dir, errors_from_history, iterate_errors, read_history, write_history, write_rate, write_trajectory
from .ocp import check_jacobians
from .quadrotor import QuadrotorProblem, load_config, solve_benchmark
from .rate import estimate_rate

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_SOLVER_FAILURE = 3
EXIT_BAD_CONFIG = 4

log = logging.getLogger("scvx")


def _load(path):
    try:
        return load_config(path)
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None


def cmd_solve(args) -> int:
    cfg = _load(args.config)
    if cfg is None:
        return EXIT_BAD_CONFIG
    overrides = {}
    if args.max_iters is not None:
        overrides["max_iters"] = args.max_iters
    if args.tol is not None:
        overrides["eps_tol"] = args.tol
    try:
        params = cfg.params(**overrides)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    out = ensure_dir(args.out)
    br = solve_benchmark(cfg, params)
    rep = br.report
    t = rep.trajectory
    write_trajectory(out / "trajectory.csv", t.x, t.u, cfg.dt)
    write_history(out / "history.csv", rep)
    e = iterate_errors(rep)
    write_rate(out / "rate.csv", estimate_rate(e) if e.size >= 4 else e)
    print(f"{rep.reason.value}: {len(rep.accepted)} accepted of {len(rep.history)} iterations, "
          f"J = {rep.history[-1].J if rep.history else float('nan'):.10g}")
    if rep.kkt is not None:
        print(f"stationarity {rep.kkt.stationarity:.3e}, virtual control {rep.kkt.vc_norm:.3e}, "
              f"max penetration {br.max_penetration:.3e}")
    if rep.converged:
        return EXIT_OK
    if rep.reason is StopReason.SOLVER_FAILURE:
        return EXIT_SOLVER_FAILURE
    return EXIT_NOT_CONVERGED


def cmd_check(args) -> int:
    cfg = _load(args.config)
    if cfg is None:
        return EXIT_BAD_CONFIG
    prob = QuadrotorProblem(cfg)
    guess = prob.initial_guess()
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.points):
        t = guess.with_z(guess.z + rng.normal(scale=0.5, size=guess.z.size))
        worst = max(worst, check_jacobians(prob, t))
    findings = validate_program(build_subproblem(prob, guess, cfg.r0, cfg.params()).program)
    print(f"worst Jacobian relative error over {args.points} points: {worst:.3e}")
    for f in findings:
        print(f"subproblem: {f}")
    ok = worst <= args.jac_tol and not findings
    print("ok" if ok else "FAILED")
    return EXIT_OK if ok else 1


def cmd_rate(args) -> int:
    try:
        rows = read_history(args.history)
        est = estimate_rate(errors_from_history(rows))
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print("k,e_k,q_k")
    for k, e, q in zip(est.k, est.e, est.q):
        print(f"{k},{e:.17g},{q:.17g}")
    print(f"classification: {est.label}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scvx", description="Successive convexification for the quad-rotor benchmark.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the benchmark and write CSV tables")
    p.add_argument("--config", help="TOML config (defaults to the shipped benchmark)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float, help="stopping tolerance on the predicted reduction")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", help="finite-difference Jacobian check and subproblem validation")
    p.add_argument("--config")
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jac-tol", type=float, default=1e-5)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("rate", help="convergence-rate table from a history.csv")
    p.add_argument("--history", required=True)
    p.set_defaults(func=cmd_rate)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("SCVX_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
