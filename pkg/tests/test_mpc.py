import dataclasses

import numpy as np
import pytest

from mpcmon.errors import ConfigurationError, InvalidInputError
from mpcmon.mpc import (MpcConfig, MpcController, ThetaParams, TuningParams, n_outputs, n_tuning_vector,
                        shift_warm_start, solve_mpc)
from mpcmon.plant import PlantState, generate_disturbance_profile

from oracles import fd_gradient, random_instance


@pytest.fixture(scope="module")
def instance(ci_controller, ci_model, ci_settings):
    rng = np.random.default_rng(42)
    return random_instance(rng, ci_controller, ci_model, ci_settings.disturbance)


def test_dimensions():
    assert n_outputs(3) == 11
    assert n_tuning_vector(3) == 13
    t = TuningParams.zeros(3)
    assert t.size == 30 == len(TuningParams.names(3))
    assert t.is_zero()


def test_tuning_validation():
    with pytest.raises(ConfigurationError):
        TuningParams(np.zeros(13), -np.ones(13))
    with pytest.raises(ConfigurationError):
        TuningParams(np.zeros(13), np.zeros(12))
    with pytest.raises(ConfigurationError):
        TuningParams(np.zeros(13), np.zeros(13), flow_backoff=-0.1)
    with pytest.raises(ConfigurationError):
        TuningParams.from_vector(np.zeros(29))


def test_theta_vector_round_trip(ci_theta0):
    v = ci_theta0.to_vector()
    back = ThetaParams.from_vector(v, 3)
    np.testing.assert_array_equal(back.to_vector(), v)
    assert len(ci_theta0.names()) == ci_theta0.size == 36 + 30


def test_config_validation():
    with pytest.raises(ConfigurationError):
        MpcConfig(horizon=0)
    with pytest.raises(ConfigurationError):
        MpcConfig(input_bounds=(85.0, 65.0))
    with pytest.raises(ConfigurationError):
        MpcConfig(supply_margin=-1.0)


def test_solution_respects_bounds(ci_controller, instance):
    x, fc, theta = instance
    sol = ci_controller.solve(x, fc, theta)
    lo, hi = ci_controller.cfg.input_bounds
    assert lo <= sol.applied_input <= hi
    assert sol.states.shape == (13, 4) and sol.outputs.shape == (13, 11)
    np.testing.assert_array_equal(sol.states[0], x.as_vector())
    assert sol.kkt_residual <= 1e-6
    assert sol.sensitivity.shape == (ci_controller.n_theta,)


def test_warm_start_reaches_same_point(ci_controller, instance):
    x, fc, theta = instance
    cold = ci_controller.solve(x, fc, theta)
    warm = ci_controller.solve(x, fc, theta, cold.warm)
    assert warm.optimal_value == pytest.approx(cold.optimal_value, rel=1e-9)
    assert warm.iterations <= cold.iterations


def test_value_and_sensitivity_consistent(ci_controller, instance):
    x, fc, theta = instance
    sol = ci_controller.solve(x, fc, theta)
    J, g = ci_controller.value_and_sensitivity(sol, check=False)
    assert J == pytest.approx(sol.optimal_value, rel=1e-12)
    np.testing.assert_allclose(g, sol.sensitivity)


def test_gradient_single_instance(ci_controller, ci_model, ci_settings):
    rng = np.random.default_rng(7)
    for _ in range(50):
        x, fc, theta = random_instance(rng, ci_controller, ci_model, ci_settings.disturbance)
        sol = ci_controller.solve(x, fc, theta)
        if not ci_controller.degeneracy(sol):
            break
    fd = fd_gradient(ci_controller, sol)
    assert np.linalg.norm(sol.sensitivity - fd) <= 1e-4 * np.linalg.norm(fd)


def test_model_gradient_matches_dynamics_multipliers(ci_controller, instance):
    # dJ/db_i = -sum_k lambda_{k,i} since b enters every dynamics residual with a minus sign
    x, fc, theta = instance
    sol = ci_controller.solve(x, fc, theta)
    n_x, N = ci_controller.n_x, ci_controller.cfg.horizon
    lam = sol.lam_g[: n_x * N].reshape(N, n_x)
    off = theta.model.size - n_x
    np.testing.assert_allclose(sol.sensitivity[off : off + n_x], -lam.sum(axis=0), rtol=1e-9, atol=1e-12)


def test_shift_warm_start(ci_controller, instance):
    x, fc, theta = instance
    sol = ci_controller.solve(x, fc, theta)
    ws = shift_warm_start(sol)
    assert ws.w.shape == sol.w.shape and ws.lam_g.shape == sol.lam_g.shape
    N = sol.horizon
    np.testing.assert_array_equal(ws.w[: N], sol.w[1 : N + 1])
    assert ws.w[N] == sol.w[N]
    np.testing.assert_array_equal(shift_warm_start(sol, 0).w, sol.w)
    with pytest.raises(ConfigurationError):
        shift_warm_start(sol.warm)


def test_pack_parameters_errors(ci_controller, instance):
    x, fc, theta = instance
    with pytest.raises(ConfigurationError):
        ci_controller.pack_parameters(x, fc.slice(0, 5), theta)
    with pytest.raises(ConfigurationError):
        ci_controller.pack_parameters(PlantState([70.0] * 2, 40.0), fc, theta)
    bad = fc.as_matrix().copy()
    bad[0, 0] = np.nan
    with pytest.raises(InvalidInputError):
        ci_controller.pack_parameters(x, bad, theta)


def test_functional_entry_point(ci_settings, instance, ci_controller):
    x, fc, theta = instance
    a = solve_mpc(x, fc, theta, plant=ci_settings.plant, cfg=ci_settings.mpc)
    b = ci_controller.solve(x, fc, theta)
    assert a.optimal_value == pytest.approx(b.optimal_value, rel=1e-9)


def test_backoff_tightens_supply_bound(ci_settings, ci_model):
    # a larger temperature back-off can only raise the planned supply temperatures
    ctrl = MpcController(ci_settings.plant, ci_settings.mpc)
    prof = generate_disturbance_profile(0, "baseline", 60, ci_settings.disturbance)
    x = PlantState([72.0] * 3, 44.0)
    lo = ctrl.solve(x, prof.slice(0, 13), ThetaParams(ci_model, TuningParams.zeros(3)))
    tun = dataclasses.replace(TuningParams.zeros(3), temp_backoff=2.0)
    hi = ctrl.solve(x, prof.slice(0, 13), ThetaParams(ci_model, tun))
    assert hi.states[1:, :3].min() >= lo.states[1:, :3].min() - 1e-9
    assert hi.optimal_value >= lo.optimal_value - 1e-9
