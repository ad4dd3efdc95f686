"""Command-line entry point: ``optsense {sweep,assimilate,solve-one}``.

Exit status is 0 on success, 2 when any precision problem was infeasible and
1 on errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

import numpy as np

from optsense.errors import OptSenseError
from optsense.harness.assimilate import emit_cycles_csv, run_assimilation
from optsense.harness.config import load_config
from optsense.harness.experiment import run_sweep
from optsense.harness.io import emit_csv, read_matrices
from optsense.enkf import MomentSet
from optsense.models import selector
from optsense.precision import SolverStatus, assemble_lmi, solve_precision, verify_bound

log = logging.getLogger("optsense")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out = args.out or cfg.output_path or "sweep.csv"
    result = run_sweep(cfg)
    emit_csv(result, out)
    statuses = [str(s.status) for s in result.solutions]
    print(f"wrote {len(result.rows)} rows to {out}; "
          + ", ".join(f"{s}={statuses.count(s)}" for s in sorted(set(statuses))))
    return EXIT_INFEASIBLE if result.any_infeasible else EXIT_OK


def _cmd_assimilate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    rows = run_assimilation(cfg, args.steps)
    if args.out:
        emit_cycles_csv(rows, args.out)
    for r in rows:
        print(f"step {r.step:4d}  {r.status:16s} sum(lam)={r.objective:10.4f}  "
              f"active={r.active_sensors:3d}  rmse={r.rmse:.4f}")
    infeasible = any(r.status == str(SolverStatus.INFEASIBLE) for r in rows)
    return EXIT_INFEASIBLE if infeasible else EXIT_OK


def _cmd_solve_one(args) -> int:
    mats = read_matrices(args.moments)
    if len(mats) != 3:
        raise OptSenseError(f"{args.moments}: expected Sigma_xx, Sigma_xy, Sigma_yy; got {len(mats)} matrices")
    sxx, sxy, syy = mats
    (P_d,) = read_matrices(args.bound)
    n = P_d.shape[0]
    if sxx.shape[0] % n:
        raise OptSenseError("state dimension is not a multiple of the bound size")
    q = sxx.shape[0] // n
    moments = MomentSet(np.zeros(sxx.shape[0]), sxx, sxy, syy)
    sel = selector(q, n)
    prob = assemble_lmi(moments, P_d, sel, np.full(syy.shape[0], args.cap))
    sol = solve_precision(prob)
    ok, margin = verify_bound(moments, sol.lam, P_d, sel)
    print(f"status {sol.status}")
    print(f"objective {sol.objective:.9g}")
    print(f"margin {margin:.9g}")
    for i, v in enumerate(sol.lam, start=1):
        print(f"lambda {i} {v:.9g}")
    return EXIT_INFEASIBLE if sol.status is SolverStatus.INFEASIBLE else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="optsense", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="bound sweep on Lorenz-96, written as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("assimilate", help="filter cycles with precision selection")
    p.add_argument("--config", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_assimilate)

    p = sub.add_parser("solve-one", help="one precision problem from matrix files")
    p.add_argument("--moments", required=True)
    p.add_argument("--bound", required=True)
    p.add_argument("--cap", type=float, default=np.inf)
    p.set_defaults(func=_cmd_solve_one)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OptSenseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
