import dataclasses
import json

import numpy as np
import pytest
import tomli
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcmon.cli import (MonitorOptions, build_config, cmd_baseline, cmd_run, config_to_dict, emit_config, main,
                        parse_config)
from mpcmon.errors import ConfigurationError
from mpcmon.monitor import BaselineDataset


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_empty_file_gives_full_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, ""))
    s = cfg.settings
    assert cfg.alpha == pytest.approx(15.507, abs=1e-3)
    assert s.mpc.horizon == 72 and s.plant.dt == 300.0 and s.loop.window == 144
    assert s.td.beta == 0.1 and s.loop.steps_per_day == 288 == s.disturbance.steps_per_day
    assert cfg.monitor.baseline_days == 35 and cfg.monitor.num_samples == 500


def test_ci_profile():
    s = parse_config(None, "ci").settings
    assert (s.mpc.horizon, s.loop.window, s.loop.persistence, s.loop.steps_per_day) == (12, 24, 3, 48)
    assert s.disturbance.steps_per_day == 48


def test_negative_beta_rejected_with_line(tmp_path):
    p = write(tmp_path, "[run]\nseed = 1\n\n[adaptor]\nbeta = -0.1\n")
    with pytest.raises(ConfigurationError, match=r"cfg.toml:5: adaptor.beta: beta must be > 0"):
        parse_config(p)


def test_unknown_key_suggestion(tmp_path):
    p = write(tmp_path, "[adaptor]\ngama = 0.9\n")
    with pytest.raises(ConfigurationError, match=r":2: adaptor.gama: unknown key \(did you mean 'gamma'\?\)"):
        parse_config(p)
    with pytest.raises(ConfigurationError, match="did you mean 'monitor'"):
        parse_config(write(tmp_path, "[monitr]\nwindow = 3\n"))


def test_syntax_and_missing_file(tmp_path):
    with pytest.raises(ConfigurationError, match="syntax error.*line 2"):
        parse_config(write(tmp_path, "[mpc]\nhorizon = = 3\n"))
    with pytest.raises(ConfigurationError, match="not found"):
        parse_config(tmp_path / "nope.toml")


def test_type_errors(tmp_path):
    with pytest.raises(ConfigurationError, match="mpc.horizon: expected an integer"):
        parse_config(write(tmp_path, "[mpc]\nhorizon = 2.5\n"))
    with pytest.raises(ConfigurationError, match="mpc.parameterized: expected true/false"):
        parse_config(write(tmp_path, "[mpc]\nparameterized = 1\n"))
    with pytest.raises(ConfigurationError, match="run.scenario"):
        parse_config(write(tmp_path, "[run]\nscenario = 'case9'\n"))
    with pytest.raises(ConfigurationError, match="nominal_loads"):
        parse_config(write(tmp_path, "[disturbance]\nnominal_loads = [1e5, 1e5]\n"))


def test_emit_parse_round_trip(tmp_path):
    for profile in ("full", "ci"):
        cfg = parse_config(None, profile)
        text = emit_config(cfg)
        back = parse_config(write(tmp_path, text), profile)
        assert config_to_dict(back) == config_to_dict(cfg)
        assert tomli.loads(text) == config_to_dict(cfg)


@settings(max_examples=40, deadline=None)
@given(beta=st.floats(1e-4, 1.0), gamma=st.floats(0.5, 1.0), horizon=st.integers(1, 100),
       window=st.integers(2, 300), persistence=st.integers(1, 10), offset=st.floats(-3.0, 3.0),
       alpha=st.one_of(st.none(), st.floats(0.1, 100.0)), scale=st.lists(st.floats(0.1, 3.0), min_size=3, max_size=3),
       loss=st.one_of(st.floats(0.0, 500.0), st.lists(st.floats(0.0, 500.0), min_size=3, max_size=3)),
       profile=st.sampled_from(["full", "ci"]))
def test_round_trip_property(beta, gamma, horizon, window, persistence, offset, alpha, scale, loss, profile):
    data = {"adaptor": {"beta": beta, "gamma": gamma}, "mpc": {"horizon": horizon},
            "monitor": {"window": window, "persistence": persistence},
            "scenarios": {"case1_offset": offset, "case3_load_scale": scale}, "plant": {"supply_heat_loss": loss}}
    if alpha is not None:
        data["monitor"]["alpha"] = alpha
    cfg = build_config(data, profile)
    back = build_config(tomli.loads(emit_config(cfg)), profile)
    assert config_to_dict(back) == config_to_dict(cfg)
    assert back.settings.td.beta == beta and back.settings.loop.alpha == alpha


def test_update_set_mask_round_trip():
    mask = [True] * 36 + [False] * 30
    cfg = build_config({"adaptor": {"update_set": mask}})
    assert cfg.settings.td.update_set.dtype == bool
    back = build_config(tomli.loads(emit_config(cfg)))
    assert config_to_dict(back)["adaptor"]["update_set"] == mask


def test_run_without_baseline_is_instructive(tmp_path, capsys):
    cfg = parse_config(None, "ci")
    with pytest.raises(ConfigurationError, match="run the 'baseline' command"):
        cmd_run(cfg, "case1", str(tmp_path))
    assert main(["run", "--profile", "ci", "--scenario", "case1", "--out", str(tmp_path)]) == 2
    assert "baseline" in capsys.readouterr().err


def small(tmp_path, days=2.0):
    text = f"[monitor]\nbaseline_days = 3\nnum_samples = 100\n\n[run]\ndays = {days}\nworkers = 1\n"
    return write(tmp_path, text, "small.toml")


def test_baseline_deterministic(tmp_path):
    cfg = parse_config(small(tmp_path), "ci")
    a = cmd_baseline(cfg, str(tmp_path / "a"))
    b = cmd_baseline(cfg, str(tmp_path / "b"))
    for name in ("baseline.csv", "baseline.meta.json", "model.json"):
        assert (tmp_path / "a" / "baseline" / name).read_bytes() == (tmp_path / "b" / "baseline" / name).read_bytes()
    assert a["samples"] == 100
    other = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, seed=5))
    cmd_baseline(other, str(tmp_path / "c"))
    assert (tmp_path / "c" / "baseline" / "baseline.csv").read_bytes() != (tmp_path / "a" / "baseline" / "baseline.csv").read_bytes()


def test_main_baseline_run_report(tmp_path, capsys):
    cfg = str(small(tmp_path))
    out = str(tmp_path / "out")
    assert main(["baseline", "--profile", "ci", "--config", cfg, "--out", out]) in (0, 1)
    assert "self-score" in capsys.readouterr().out
    assert main(["run", "--profile", "ci", "--config", cfg, "--out", out, "--scenario", "baseline"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("baseline  PASS")
    assert main(["report", out]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report[0]["scenario"] == "baseline" and report[0]["narrative"] == []
    assert main(["config", "--profile", "ci"]) == 0
    assert "horizon = 12" in capsys.readouterr().out


def test_shipped_baseline_files(ci_suite):
    bdir = ci_suite["out"] / "baseline"
    rows = (bdir / "baseline.csv").read_text().splitlines()
    assert len(rows) == 1 + 500 and all(len(r.split(",")) == 8 for r in rows)
    base = BaselineDataset.load(bdir / "baseline.csv")
    assert base.n_samples == 500 and np.all(np.isfinite(base.inv))
    assert ci_suite["baseline"]["self_acceptable_fraction"] >= 0.9
    reparsed = parse_config(bdir / "config.toml", "ci")
    assert config_to_dict(reparsed) == config_to_dict(ci_suite["config"])


def test_run_outputs_parse(ci_suite):
    for files in ci_suite["files"].values():
        for key in ("steps", "windows", "events", "params"):
            assert files[key].is_file()
        json.loads(files["summary"].read_text())


def test_cli_acceptance_matches_events(ci_suite):
    s = ci_suite["summaries"]
    assert "sysid" in s["case3"]["narrative"]
    assert "rl_trigger" in s["case1"]["narrative"]
    assert "rl_trigger" not in s["baseline"]["narrative"]


def test_monitor_options_validation():
    with pytest.raises(ConfigurationError):
        MonitorOptions(num_samples=10)
