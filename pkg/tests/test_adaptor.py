import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcmon.adaptor import (GradientScaler, TdStep, TdUpdateConfig, project, run_adaption_phase, stage_cost,
                            td_update, tuning_bounds)
from mpcmon.errors import ConfigurationError
from mpcmon.mpc import ThetaParams, TuningParams
from mpcmon.plant import CP_WATER, Disturbance, PlantOutput, PlantParams
from mpcmon.predictor import PredictionModel

N_MODEL = 36


def theta_from(vec):
    return ThetaParams.from_vector(vec, 3)


def interior_theta(rng):
    lo, hi = tuning_bounds(3)
    tun = lo + (hi - lo) * rng.uniform(0.25, 0.75, lo.size)
    return theta_from(np.concatenate([rng.standard_normal(N_MODEL), tun]))


def test_stage_cost_by_hand():
    p = PlantParams(actuation_offset=-1.0)
    out = PlantOutput(40.0, 12.0, np.array([71.0, 72.0, 69.0]), np.full(3, 45.0), np.array([4.0, 4.0, 4.0]))
    d = Disturbance(np.full(3, 3e5), 2e-8, 40.0, 70.0)
    econ = 300.0 * 2e-8 * CP_WATER * 12.0 * (80.0 - 1.0 - 40.0)
    assert stage_cost(out, 80.0, d, p) == pytest.approx(econ + 1.0, rel=1e-12)


def test_td_error_definition():
    s = TdStep.make(2.0, 10.0, 9.0, np.ones(3), 0.9)
    assert s.td_error == pytest.approx(2.0 + 0.9 * 9.0 - 10.0)


def test_td_update_is_literal_step():
    rng = np.random.default_rng(0)
    th = interior_theta(rng)
    lo, hi = tuning_bounds(3)
    # small enough relative to each box to stay interior
    g = 1e-2 * rng.standard_normal(th.size) * np.concatenate([np.ones(N_MODEL), hi - lo])
    cfg = TdUpdateConfig(beta=0.1, update_set="all")
    step = TdStep.make(1.0, 5.0, 4.5, g, 0.99)
    new = td_update(th, step, cfg)
    np.testing.assert_array_equal(new.to_vector(), th.to_vector() - 0.1 * step.td_error * g)


def test_update_set_masks():
    rng = np.random.default_rng(1)
    th = interior_theta(rng)
    g = 1e-3 * rng.standard_normal(th.size)
    step = TdStep.make(1.0, 5.0, 4.5, g, 0.99)
    tun = td_update(th, step, TdUpdateConfig(update_set="tuning"))
    np.testing.assert_array_equal(tun.model.to_vector(), th.model.to_vector())
    mod = td_update(th, step, TdUpdateConfig(update_set="model"))
    np.testing.assert_array_equal(mod.tuning.to_vector(), th.tuning.to_vector())
    only_dt = np.zeros(30, dtype=bool)
    only_dt[-1] = True
    one = td_update(th, step, TdUpdateConfig(tuning_mask=only_dt))
    changed = np.nonzero(one.to_vector() != th.to_vector())[0]
    assert changed.tolist() == [th.size - 1]
    with pytest.raises(ConfigurationError):
        TdUpdateConfig(update_set=np.ones(5, dtype=bool)).mask(th)


def test_projection_onto_box():
    th = ThetaParams(PredictionModel.identity(3), TuningParams.zeros(3))
    g = np.zeros(th.size)
    g[-1] = 1.0  # temperature back-off
    g[-3] = 1.0  # terminal temperature
    step = TdStep.make(-1e3, 0.0, 0.0, g, 1.0)  # delta = -1000, pushes both up
    new = td_update(th, step, TdUpdateConfig(beta=1.0))
    assert new.tuning.temp_backoff == 5.0 and new.tuning.terminal_temp == 85.0


def test_non_finite_step_is_skipped():
    th = ThetaParams(PredictionModel.identity(3), TuningParams.zeros(3))
    g = np.full(th.size, np.nan)
    assert td_update(th, TdStep.make(1.0, 0.0, 0.0, g, 1.0), TdUpdateConfig()) is th
    with pytest.raises(ConfigurationError):
        td_update(th, TdStep.make(1.0, 0.0, 0.0, np.zeros(3), 1.0), TdUpdateConfig())


@pytest.mark.parametrize("kw", [dict(beta=0.0), dict(gamma=0.0), dict(gamma=1.5), dict(update_set="some"),
                                dict(updates_per_step=0), dict(lower=np.ones(30), upper=np.zeros(30))])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        TdUpdateConfig(**kw)


def test_gradient_scaler():
    sc = GradientScaler(2, clip=(1e-3, 1e3))
    np.testing.assert_allclose(sc(np.array([3.0, 4.0])), [1.0, 1.0])
    # running rms after (3,4), (1,0): sqrt(5), sqrt(8)
    np.testing.assert_allclose(sc(np.array([1.0, 0.0])), [1.0 / np.sqrt(5.0), 0.0])
    sc = GradientScaler(1, clip=(1.0, 2.0))
    np.testing.assert_allclose(sc(np.array([1e-6])), [1e-6])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), beta=st.floats(1e-4, 1.0), delta=st.floats(-10, 10))
def test_update_stays_in_box(seed, beta, delta):
    rng = np.random.default_rng(seed)
    th = interior_theta(rng)
    g = rng.standard_normal(th.size) * 10
    new = td_update(th, TdStep(0.0, 0.0, 0.0, g, delta), TdUpdateConfig(beta=beta))
    lo, hi = tuning_bounds(3)
    t = new.tuning.to_vector()
    assert np.all(t >= lo) and np.all(t <= hi)
    np.testing.assert_array_equal(project(t, lo, hi), t)


class FakeLoop:
    """Scalar loop where J = theta . g and the stage cost is fixed."""

    def __init__(self, theta, g):
        self.theta, self.g, self.steps = theta, g, 0

    def solve(self, theta, previous=False):
        class Sol:
            success = True

        s = Sol()
        s.optimal_value = float(theta.to_vector() @ self.g)
        s.sensitivity = self.g
        return s

    def advance(self, sol):
        self.steps += 1
        return 1.0


def test_run_adaption_phase_protocol():
    th = ThetaParams(PredictionModel.identity(3), TuningParams.zeros(3))
    g = np.zeros(th.size)
    g[-1] = 1.0
    loop = FakeLoop(th, g)
    cfg = TdUpdateConfig(beta=0.01, normalize=False, gamma=1.0)
    rep = run_adaption_phase(loop, 5, cfg)
    assert loop.steps == 5 and len(rep.td_errors) == 5
    # delta = C + J' - J = 1 with J' = J, so dT decreases and is held at its lower bound 0
    assert all(d == pytest.approx(1.0) for d in rep.td_errors)
    assert loop.theta.tuning.temp_backoff == 0.0
    with pytest.raises(ConfigurationError):
        run_adaption_phase(loop, 0, cfg)
    assert rep.mean_abs_td() == pytest.approx(1.0)


def test_interior_update_is_gradient_descent_on_delta_sign():
    th = ThetaParams(PredictionModel.identity(3), dataclasses.replace(TuningParams.zeros(3), temp_backoff=1.0))
    g = np.zeros(th.size)
    g[-1] = 2.0
    new = td_update(th, TdStep(0.0, 0.0, 0.0, g, 0.5), TdUpdateConfig(beta=0.1))
    assert new.tuning.temp_backoff == pytest.approx(1.0 - 0.1 * 0.5 * 2.0)
