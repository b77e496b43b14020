"""Event narratives of the degradation scenarios over a grid of magnitudes or seeds.

    python scripts/scenario_sweep.py --profile ci --case case3 --scale 1.25,1.25,0.5 --scale 1.5,1.5,0.3
    python scripts/scenario_sweep.py --profile ci --case case1 --offset -0.5 --offset -1.0 --seeds 0 1

Each grid point reuses one baseline (generated once) and prints the window
verdict string (``.`` acceptable, ``X`` violating) and the events.
"""

import argparse
import dataclasses
import itertools
import tempfile

from mpcmon.cli import cmd_baseline, load_baseline, parse_config
from mpcmon.mpc import ThetaParams, TuningParams
from mpcmon.orchestrator import check_acceptance, emit_report, run_closed_loop


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--profile", default="ci")
    ap.add_argument("--case", required=True, choices=["case1", "case2", "case3"])
    ap.add_argument("--scale", action="append", default=[], help="comma-separated load scales (case2/case3)")
    ap.add_argument("--offset", action="append", type=float, default=[], help="actuation offset (case1)")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--days", type=float)
    args = ap.parse_args()
    cfg = parse_config(args.config, args.profile)
    with tempfile.TemporaryDirectory() as out:
        cmd_baseline(cfg, out)
        baseline, model = load_baseline(cfg, out)
    st = cfg.settings
    theta0 = ThetaParams(model, TuningParams.zeros(st.plant.n_loads))
    if args.case == "case1":
        grid = [{"case1_offset": v} for v in args.offset] or [{}]
    else:
        key = f"{args.case}_load_scale"
        grid = [{key: tuple(float(x) for x in s.split(","))} for s in args.scale] or [{}]
    days = args.days or cfg.run.days
    for shift, seed in itertools.product(grid, args.seeds):
        settings = dataclasses.replace(st, shifts=dataclasses.replace(st.shifts, **shift))
        log = run_closed_loop(args.case, days, theta0, baseline, settings, seed=seed)
        rep = emit_report(log)
        ok, _ = check_acceptance(rep)
        marks = "".join("." if w["acceptable"] else "X" for w in log.windows)
        events = [(round(e["day"], 1), e["kind"]) for e in log.events if e["kind"] != "sysid_start"]
        print(f"{shift or 'shipped'} seed={seed} {'PASS' if ok else 'FAIL'} {marks}")
        print(f"    {events}")


if __name__ == "__main__":
    main()
