"""TD-error and tuning-parameter summary of the adaption phases of a stored run.

    python scripts/td_analysis.py runs case1 [--seed 0] [--gamma 0.99]

The TD error is recomputed from the steps table as
``C_k + gamma * J_{k+1} - J_k`` (``J_{k+1}`` is the value after the update at
step k, so this is the on-line error up to one update). For every RL phase it
prints the mean and sign balance of the error plus the tuning components that
end on a bound of their box.
"""

import argparse

import numpy as np

from mpcmon.adaptor import tuning_bounds
from mpcmon.orchestrator import load_run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("run_dir")
    ap.add_argument("scenario")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--gamma", type=float, default=0.99)
    args = ap.parse_args()
    log = load_run(args.run_dir, args.scenario, args.seed)
    cost, J = log.column("cost"), log.column("J")
    delta = cost[:-1] + args.gamma * J[1:] - J[:-1]
    modes = log.column("mode")
    lo, hi = tuning_bounds(log.n_loads)
    phases, start = [], None
    for k, m in enumerate(modes):
        if m == "RL_ADAPT" and start is None:
            start = k
        if m != "RL_ADAPT" and start is not None:
            phases.append((start, k))
            start = None
    if start is not None:
        phases.append((start, len(modes)))
    spd = log.steps_per_day
    for a, b in phases:
        d = delta[a : min(b, len(delta))]
        d = d[np.isfinite(d)]
        theta = log.params[b - 1]
        at_lo = [n for n, v, l in zip(log.tuning_names, theta, lo) if v == l and l != 0]
        at_hi = [n for n, v, h in zip(log.tuning_names, theta, hi) if v == h]
        print(f"RL phase days {a / spd:.2f}-{b / spd:.2f}: mean delta {d.mean():.4g}, "
              f"positive {np.mean(d > 0):.2f}, |delta| {np.abs(d).mean():.4g}")
        print(f"    at lower bound: {at_lo or '-'}")
        print(f"    at upper bound: {at_hi or '-'}")


if __name__ == "__main__":
    main()
