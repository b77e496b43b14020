"""Baseline self-score and false-alarm counts on fresh seeds for one configuration.

    python scripts/calibrate_baseline.py --profile ci [--config cfg.toml] [--seeds 1 2 3] [--days 10]

Builds the initial model and the baseline dataset as the ``baseline`` command
does (in memory), then scores non-overlapping windows of fresh baseline
scenario runs and prints the violating-window count per seed.
"""

import argparse
import dataclasses
import tempfile

import numpy as np

from mpcmon.cli import cmd_baseline, load_baseline, parse_config
from mpcmon.monitor import t2_score, window_features
from mpcmon.mpc import ThetaParams, TuningParams
from mpcmon.orchestrator import run_closed_loop


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--profile", default="ci")
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--days", type=float, default=10.0)
    args = ap.parse_args()
    cfg = parse_config(args.config, args.profile)
    with tempfile.TemporaryDirectory() as out:
        summary = cmd_baseline(cfg, out)
        baseline, model = load_baseline(cfg, out)
    print(f"self-score {summary['self_acceptable_fraction']:.3f} over {summary['self_windows']} windows")
    st = cfg.settings
    theta0 = ThetaParams(model, TuningParams.zeros(st.plant.n_loads))
    W, alpha = st.loop.window, cfg.alpha
    for seed in args.seeds:
        log = run_closed_loop("baseline", args.days, theta0, None, st, seed=seed, adapt=False)
        sig = np.array([[r[c] for c in ("eff", "econ", "zeta", "load")] for r in log.steps])
        Z, _ = window_features(sig, W, range(0, len(sig) - W + 1, W))
        t2 = np.array([t2_score(z, baseline) for z in Z])
        bad = np.nonzero(t2 > alpha)[0]
        print(f"seed {seed}: {bad.size} of {t2.size} windows above alpha at {bad.tolist()}, max T2 {t2.max():.1f}")


if __name__ == "__main__":
    main()
