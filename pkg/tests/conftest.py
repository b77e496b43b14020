"""Shared fixtures: CI-profile settings, an identified model and one set of scenario runs."""

from __future__ import annotations

import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor

import pytest

from mpcmon.cli import cmd_baseline, parse_config, run_scenario
from mpcmon.mpc import MpcController, ThetaParams, TuningParams
from mpcmon.orchestrator import identify_initial_model, load_run, run_files

# acceptance lines collected by test_acceptance.py, printed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def ci_config():
    return parse_config(None, "ci")


@pytest.fixture(scope="session")
def ci_settings(ci_config):
    return ci_config.settings


@pytest.fixture(scope="session")
def ci_model(ci_settings):
    model, _ = identify_initial_model(ci_settings, 1000)
    return model


@pytest.fixture(scope="session")
def ci_theta0(ci_model, ci_settings):
    return ThetaParams(ci_model, TuningParams.zeros(ci_settings.plant.n_loads))


@pytest.fixture(scope="session")
def ci_controller(ci_settings):
    return MpcController(ci_settings.plant, ci_settings.mpc)


def _job(args):
    cfg, scenario, out = args
    return run_scenario(cfg, scenario, out)


@pytest.fixture(scope="session")
def ci_suite(ci_config, tmp_path_factory):
    """Baseline generation plus the baseline (10 days) and three case runs of the shipped CI profile.

    Returns a dict with the output directory, the baseline summary, the run
    summaries and run logs per scenario and the suite wall time.
    """
    out = tmp_path_factory.mktemp("ci_suite")
    t0 = time.perf_counter()
    base = cmd_baseline(ci_config, str(out))
    short = dataclasses.replace(ci_config, run=dataclasses.replace(ci_config.run, days=10))
    jobs = [(short, "baseline", str(out))] + [(ci_config, c, str(out)) for c in ("case1", "case2", "case3")]
    with ProcessPoolExecutor(max_workers=4) as pool:
        summaries = list(pool.map(_job, jobs))
    wall = time.perf_counter() - t0
    by_name = {s["scenario"]: s for s in summaries}
    logs = {name: load_run(out, name, ci_config.run.seed) for name in by_name}
    files = {name: run_files(out, name, ci_config.run.seed) for name in by_name}
    return {"out": out, "baseline": base, "summaries": by_name, "logs": logs, "files": files, "wall": wall,
            "config": ci_config}
