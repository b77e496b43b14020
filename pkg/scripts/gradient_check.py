"""Finite-difference check of the MPC value sensitivity for several step sizes.

    python scripts/gradient_check.py --count 20 --steps 1e-5 1e-6 1e-7

A relative error that shrinks with the step points at truncation error of the
difference quotient; one that is flat points at the analytic gradient.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from mpcmon.cli import parse_config
from mpcmon.errors import SolverError
from mpcmon.mpc import MpcController
from mpcmon.orchestrator import identify_initial_model

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from oracles import fd_gradient, random_instance  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--profile", default="ci")
    ap.add_argument("--count", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=float, nargs="+", default=[1e-5, 1e-6, 1e-7])
    args = ap.parse_args()
    st = parse_config(None, args.profile).settings
    model, _ = identify_initial_model(st, 1000)
    ctrl = MpcController(st.plant, st.mpc)
    rng = np.random.default_rng(args.seed)
    done = degenerate = 0
    while done < args.count:
        x, fc, theta = random_instance(rng, ctrl, model, st.disturbance)
        try:
            sol = ctrl.solve(x, fc, theta)
        except SolverError:
            continue
        reason = ctrl.degeneracy(sol)
        if reason:
            degenerate += 1
            continue
        errs = []
        for h in args.steps:
            fd = fd_gradient(ctrl, sol, h)
            errs.append(np.linalg.norm(sol.sensitivity - fd) / np.linalg.norm(fd))
        done += 1
        print(f"instance {done:2d}: " + "  ".join(f"h={h:.0e}: {e:.1e}" for h, e in zip(args.steps, errs)))
    print(f"{degenerate} degenerate instances skipped")


if __name__ == "__main__":
    main()
