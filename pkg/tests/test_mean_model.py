import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from domain.errors import InvalidConfig
from domain.losses import make_loss
from domain.models import BiasRegime, LossKind, MeanModelConfig, MeanModelState, StopReason, StopRule
from domain.numerics import std_normal_cdf
from domain.smoothed_relu import smoothed_relu
from use_cases.mean_model_service import first_threshold_eta, gf_mm_gamma, small_bias_constant


def config(d, eta, A0=1.0, b0=0.0):
    return MeanModelConfig(d=d, eta=eta, loss=make_loss(LossKind.SYM_LOGISTIC), A0=A0, b0=b0)


def test_config_requires_symmetrized_logistic():
    with pytest.raises(InvalidConfig):
        MeanModelConfig(d=10, eta=0.1, loss=make_loss(LossKind.SQRT), A0=1.0)
    with pytest.raises(InvalidConfig):
        config(0, 0.1)


def test_threshold_is_eight_pi_over_d_squared():
    cfg = config(200, 2.5e-4)
    assert_allclose(cfg.threshold, 8.0 * math.pi / 40000.0, rtol=1e-15)
    assert_allclose(cfg.eta_ratio, 2.5e-4 / cfg.threshold, rtol=1e-15)


def test_zero_amplitude_is_a_fixed_point(mean_model):
    state = MeanModelState(0.0, -0.3)
    assert mean_model.mm_step(state, config(50, 0.01)) == state
    traj = mean_model.mm_run(config(50, 0.01, A0=0.0))
    assert traj.stop_reason is StopReason.CONVERGED
    assert traj.b_inf == 0.0


def test_one_step_from_zero_bias(mean_model):
    cfg = config(200, 2.5e-4, A0=1.0)
    nxt = mean_model.mm_step(cfg.initial_state, cfg)
    g = 1.0 / math.sqrt(2.0 * math.pi)
    lp = 0.5 * math.tanh(0.5 * g)
    assert_allclose(nxt.A, 1.0 - 2.0 * 40000.0 * 2.5e-4 * lp * g, rtol=1e-14)
    assert_allclose(nxt.b, -2.5e-4 * lp * 0.5, rtol=1e-14)


def test_bias_never_increases(mean_model):
    traj = mean_model.mm_run(config(100, 10.0 * math.pi / 100**2))
    assert np.all(np.diff(traj.bs) <= 0.0)


def test_sign_of_A0_mirrors_the_trajectory(mean_model):
    eta = 10.0 * math.pi / 100**2
    pos = mean_model.fixed_steps(config(100, eta, A0=0.8), 300)
    neg = mean_model.fixed_steps(config(100, eta, A0=-0.8), 300)
    np.testing.assert_array_equal(pos.bs, neg.bs)
    np.testing.assert_array_equal(pos.As, -neg.As)


def test_fixed_steps_runs_exactly_the_requested_iterations(mean_model):
    traj = mean_model.fixed_steps(config(100, 1e-3), 25)
    assert traj.iterations == 25
    assert len(traj) == 26


@pytest.mark.parametrize("d", [100, 200])
def test_edge_of_stability_bias_bound(mean_model, d):
    eta = 10.0 * math.pi / d**2
    traj = mean_model.mm_run(config(d, eta))
    assert traj.converged
    assert traj.b_inf <= -0.087
    assert traj.b_inf <= mean_model.threshold_bias_bound(eta, d) + 1e-9


def test_edge_of_stability_settles_below_two_over_eta(mean_model):
    d = 100
    eta = 10.0 * math.pi / d**2
    traj = mean_model.mm_run(config(d, eta))
    assert mean_model.mm_minimizer_sharpness(traj.b_inf, d) <= 2.0 / eta * (1.0 + 1e-6)
    assert traj.crossing_iter is not None


@pytest.mark.parametrize("delta,A0", [(4.0, 1.0), (2.0, 0.5), (6.0, -1.0)])
def test_gradient_flow_bias_bound(mean_model, delta, A0):
    d = 200
    eta = (8.0 - delta) * math.pi / d**2
    gamma = gf_mm_gamma(delta, A0)
    assert eta <= gamma / abs(A0)
    b_inf = mean_model.mm_run(config(d, eta, A0=A0)).b_inf
    assert -(eta / gamma) * abs(A0) <= b_inf <= 0.0


def test_gf_gamma_rejects_out_of_range_delta():
    with pytest.raises(InvalidConfig):
        gf_mm_gamma(8.0, 1.0)
    with pytest.raises(InvalidConfig):
        gf_mm_gamma(1.0, 0.0)


def test_minimizer_sharpness_at_zero_bias(mean_model):
    assert_allclose(mean_model.mm_minimizer_sharpness(0.0, 200), 40000.0 / (4.0 * math.pi), rtol=1e-14)


def test_flow_conserves_the_invariant(mean_model):
    d = 10
    path = mean_model.mean_model_flow(1.0, 0.0, d, t_end=1.0, dt=1e-3)
    cfg = config(d, 1e-3)
    values = [mean_model.mm_conserved(MeanModelState(A, b), cfg) for A, b in path[::50]]
    assert_allclose(values, 0.5, rtol=1e-6)


def test_flow_limit_matches_conserved_quantity_root(mean_model):
    d = 10
    path = mean_model.mean_model_flow(1.0, 0.0, d, t_end=5.0, dt=1e-3)
    assert abs(path[-1, 0]) < 1e-6
    assert_allclose(path[-1, 1], mean_model.gf_limit_bias(1.0, d), atol=1e-6)
    assert mean_model.gf_limit_bias(0.0, d) == 0.0


def test_run_records_conserved_quantity_on_request(mean_model):
    traj = mean_model.mm_run(config(100, 1e-3), with_conserved=True)
    assert traj.conserved is not None
    assert len(traj.conserved) == len(traj)
    assert_allclose(traj.conserved[0], 0.5, rtol=1e-12)


def test_nonzero_initial_bias_is_accepted_with_warning(mean_model, caplog):
    with caplog.at_level("WARNING"):
        mean_model.fixed_steps(config(50, 1e-3, b0=-0.1), 3)
    assert any("b0" in r.getMessage() for r in caplog.records)


def test_stall_rule_stops_a_frozen_bias(mean_model):
    stop = StopRule(tol_x=1e-300, stall_window=50)
    traj = mean_model.mm_run(config(100, 1e-3), stop)
    assert traj.stop_reason is StopReason.STALLED


def test_classify_bias(mean_model):
    d = 200
    threshold = 8.0 * math.pi / d**2
    K = small_bias_constant(1.0, 0.5 * threshold, d)
    assert mean_model.classify_bias(-1e-4, 0.5 * threshold, d, K) is BiasRegime.SMALL_BIAS
    eta = 1.25 * threshold
    assert mean_model.classify_bias(-0.5, eta, d, K) is BiasRegime.THRESHOLD_NEURON
    assert mean_model.classify_bias(-0.5, 0.5 * threshold, d, K) is BiasRegime.UNCOVERED


@pytest.mark.parametrize("ratio,delta", [(0.5, 4.0), (0.9, 0.8)])
def test_small_bias_constant_follows_eta(ratio, delta):
    d = 200
    eta = ratio * 8.0 * math.pi / d**2
    expected = eta * d**2 / gf_mm_gamma(delta, 1.0)
    assert_allclose(small_bias_constant(1.0, eta, d), expected, rtol=1e-12)
    assert_allclose(small_bias_constant(-2.0, eta, d), 2.0 * eta * d**2 / gf_mm_gamma(delta, -2.0), rtol=1e-12)


def test_small_bias_constant_outside_the_gradient_flow_range():
    d = 200
    eta = 1.5 * 8.0 * math.pi / d**2
    assert_allclose(small_bias_constant(1.0, eta, d), 7.0 * math.pi / (1.0 / 200.0), rtol=1e-14)
    assert small_bias_constant(0.0, eta, d) == 0.0


def test_classify_bias_uses_the_constant_of_each_eta(mean_model):
    d = 200
    threshold = 8.0 * math.pi / d**2
    assert mean_model.classify_bias(-0.05, 0.5 * threshold, d) is BiasRegime.UNCOVERED
    assert mean_model.classify_bias(-0.05, 0.9 * threshold, d) is BiasRegime.SMALL_BIAS
    assert mean_model.classify_bias(-0.05, 0.9 * threshold, d, A0=100.0) is BiasRegime.SMALL_BIAS
    assert mean_model.classify_bias(-0.05, 0.9 * threshold, d, K=1.0) is BiasRegime.UNCOVERED


def test_phase_transition_sweep_brackets_the_threshold(mean_model):
    d = 100
    threshold = 8.0 * math.pi / d**2
    ratios = [0.5, 0.7, 0.9, 1.3, 1.6]
    result = mean_model.phase_transition_sweep(d, 1.0, [r * threshold for r in ratios])
    assert [row["eta"] for row in result.rows] == [r * threshold for r in ratios]
    for row in result.rows:
        if row["eta_over_threshold"] < 1.0:
            assert row["regime"] == BiasRegime.SMALL_BIAS.value
            assert_allclose(row["K"], small_bias_constant(1.0, row["eta"], d), rtol=1e-14)
        else:
            assert row["regime"] == BiasRegime.THRESHOLD_NEURON.value
    assert result.summary["transition_eta"] == 1.3 * threshold
    assert result.summary["K"] is None


def test_phase_transition_sweep_detects_the_threshold_on_a_fine_grid(mean_model):
    d = 100
    threshold = 8.0 * math.pi / d**2
    etas = [r * threshold for r in (0.9, 0.94, 0.98, 1.02, 1.06, 1.1)]
    result = mean_model.phase_transition_sweep(d, 1.0, etas)
    assert 1.0 < result.summary["transition_over_threshold"] <= 1.1
    assert first_threshold_eta(result.rows) == result.summary["transition_eta"]


def test_first_threshold_eta_ignores_row_order():
    rows = [
        {"eta": 3.0, "regime": "threshold-neuron"},
        {"eta": 1.0, "regime": "small-bias"},
        {"eta": 2.0, "regime": "threshold-neuron"},
    ]
    assert first_threshold_eta(rows) == 2.0
    assert first_threshold_eta(rows[1:2]) is None


def test_phase_transition_sweep_rejects_empty_grid(mean_model):
    with pytest.raises(InvalidConfig):
        mean_model.phase_transition_sweep(100, 1.0, [])


def test_smoothed_relu_enters_the_step_through_g_and_phi(mean_model):
    cfg = config(30, 1e-3, A0=2.0, b0=-0.4)
    state = cfg.initial_state
    nxt = mean_model.mm_step(state, cfg)
    g = smoothed_relu(-0.4)
    lp = 0.5 * math.tanh(0.5 * 2.0 * g)
    assert_allclose(nxt.b, -0.4 - 1e-3 * lp * 2.0 * std_normal_cdf(-0.4), rtol=1e-14)


@pytest.mark.parametrize("d", [100, 200])
def test_amplitude_alternates_sign_at_the_edge_of_stability(mean_model, d):
    traj = mean_model.mm_run(config(d, 10.0 * math.pi / d**2))
    assert traj.longest_sign_alternation() >= 10


def test_amplitude_keeps_its_sign_below_the_threshold(mean_model):
    d = 100
    traj = mean_model.mm_run(config(d, 0.25 * 8.0 * math.pi / d**2))
    assert traj.longest_sign_alternation() == 0


def test_gradient_descent_tracks_the_flow_to_first_order(mean_model):
    d, t_end = 10, 0.5
    flow = mean_model.mean_model_flow(1.0, 0.0, d, t_end=t_end, dt=1e-4)[-1]

    def endpoint(eta):
        traj = mean_model.fixed_steps(config(d, eta), int(round(t_end / eta)))
        return np.array([traj.As[-1], traj.bs[-1]])

    coarse, mid, fine = endpoint(1e-3), endpoint(5e-4), endpoint(2.5e-4)
    err_coarse, err_mid = abs(coarse[0] - flow[0]), abs(mid[0] - flow[0])
    assert 1.8 < err_coarse / err_mid < 2.2
    # a extrapolação de Richardson cancela o termo O(η) e deixa O(η²)
    rich_coarse = abs(2.0 * mid[0] - coarse[0] - flow[0])
    rich_mid = abs(2.0 * fine[0] - mid[0] - flow[0])
    assert rich_coarse < 0.1 * err_coarse
    assert 3.0 < rich_coarse / rich_mid < 5.0
    assert_allclose(2.0 * fine[1] - mid[1], flow[1], atol=1e-6)


def test_flow_uses_the_symmetrized_logistic_derivative(mean_model):
    d = 20
    path = mean_model.mean_model_flow(2.0, -0.3, d, t_end=1e-4, dt=1e-4)
    g = smoothed_relu(-0.3)
    lp = 0.5 * math.tanh(0.5 * 2.0 * g)
    slope_A = (path[1, 0] - path[0, 0]) / 1e-4
    assert_allclose(slope_A, -2.0 * d**2 * lp * g, rtol=1e-2)
