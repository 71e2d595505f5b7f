import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from domain.errors import (
    HitAxisExactly,
    InvalidConfig,
    MaxItersExceeded,
    NoRoot,
    NotConverged,
    NotDifferentiable,
    OnInvariantLine,
)
from domain.losses import derivative_fn, make_loss, parse_loss
from domain.models import LossKind, PhaseTag, Regime, State2D, StopReason, StopRule
from domain.numerics import RngStream, sym_eig_max


@pytest.fixture
def eos_run(single_neuron, sqrt_loss):
    start = single_neuron.init_from_delta(0.1, 1.0, Regime.EDGE_OF_STABILITY)
    return single_neuron.run(start.x, start.y, sqrt_loss, 0.1, StopRule(drift_tol=1e-14))


def test_gd_step_uses_pre_step_values(single_neuron, sqrt_loss):
    nxt = single_neuron.gd_step(State2D(1.0, 2.0), sqrt_loss, 0.1)
    g = 2.0 / math.sqrt(5.0)
    assert_allclose(nxt.x, 1.0 - 0.1 * g * 2.0, rtol=1e-15)
    assert_allclose(nxt.y, 2.0 - 0.1 * g * 1.0, rtol=1e-15)


def test_gd_step_rejects_nonpositive_step(single_neuron, sqrt_loss):
    with pytest.raises(InvalidConfig):
        single_neuron.gd_step(State2D(1.0, 2.0), sqrt_loss, 0.0)


def test_hessian_on_the_axis_is_rank_one(single_neuron, any_loss):
    H = single_neuron.hessian(State2D(0.0, 3.0), any_loss)
    assert_allclose(H, [[9.0 * any_loss.second_deriv_at_zero, 0.0], [0.0, 0.0]], atol=1e-14)


def test_hessian_matches_finite_difference_of_gradient(single_neuron, sqrt_loss):
    dl = derivative_fn(sqrt_loss)

    def grad(x, y):
        g = dl(x * y)
        return np.array([g * y, g * x])

    x, y, h = 0.7, 1.3, 1e-6
    fd = np.column_stack([
        (grad(x + h, y) - grad(x - h, y)) / (2.0 * h),
        (grad(x, y + h) - grad(x, y - h)) / (2.0 * h),
    ])
    assert_allclose(single_neuron.hessian(State2D(x, y), sqrt_loss), fd, atol=1e-8)


def test_hessian_at_huber_kink_is_undefined(single_neuron):
    with pytest.raises(NotDifferentiable):
        single_neuron.hessian(State2D(0.5, 2.0), make_loss(LossKind.HUBER))


def test_classify_regime(single_neuron):
    assert single_neuron.classify_regime(1.0, 2.0, 0.5) is Regime.GRADIENT_FLOW
    assert single_neuron.classify_regime(1.0, 2.0, 1.0) is Regime.EDGE_OF_STABILITY
    # y0² − x0² = 2/η exatamente
    assert single_neuron.classify_regime(1.5, 2.5, 0.5) is Regime.EDGE_OF_STABILITY


@pytest.mark.parametrize("x0", [1.0, -1.0])
def test_invariant_lines_are_rejected(single_neuron, x0):
    with pytest.raises(OnInvariantLine):
        single_neuron.classify_regime(x0, 1.0, 0.1)


def test_classify_regime_requires_y_above_x(single_neuron):
    with pytest.raises(InvalidConfig):
        single_neuron.classify_regime(2.0, 1.0, 0.1)


@pytest.mark.parametrize("regime,sign", [(Regime.GRADIENT_FLOW, -1.0), (Regime.EDGE_OF_STABILITY, 1.0)])
def test_init_from_delta_sets_the_conserved_quantity(single_neuron, regime, sign):
    eta, delta = 0.01, 1.0
    start = single_neuron.init_from_delta(eta, delta, regime)
    assert_allclose(single_neuron.gf_conserved(start), (2.0 + sign * delta) / eta, rtol=1e-12)
    assert single_neuron.classify_regime(start.x, start.y, eta) is regime


def test_init_from_delta_validates_inputs(single_neuron):
    with pytest.raises(InvalidConfig):
        single_neuron.init_from_delta(0.1, 2.5, Regime.GRADIENT_FLOW)
    with pytest.raises(InvalidConfig):
        single_neuron.init_from_delta(0.1, 1.0, Regime.EDGE_OF_STABILITY, tilde=(1.0, 2.0))


def test_start_on_the_axis_is_already_converged(single_neuron, sqrt_loss):
    traj = single_neuron.run(0.0, 4.0, sqrt_loss, 0.1)
    assert traj.iterations == 0
    assert len(traj) == 1
    assert traj.stop_reason is StopReason.CONVERGED
    assert single_neuron.limiting_sharpness(traj) == 16.0


def test_gradient_flow_regime_keeps_sharpness_in_bracket(single_neuron, sqrt_loss):
    eta, delta = 0.01, 1.0
    start = single_neuron.init_from_delta(eta, delta, Regime.GRADIENT_FLOW)
    traj = single_neuron.run(start.x, start.y, sqrt_loss, eta)
    assert traj.converged
    sharp = single_neuron.limiting_sharpness(traj)
    slack = max(5.0 * (2.0 - delta), 5.0 * eta / min(delta, 2.0 - delta))
    assert abs(sharp - (2.0 - delta) / eta) <= slack
    assert traj.phase_tags[0] is PhaseTag.GRADIENT_FLOW_LIKE
    assert traj.phase_tags[-1] is PhaseTag.CONVERGING
    assert PhaseTag.BOUNCING not in traj.phase_tags


def test_edge_of_stability_run_settles_below_threshold(single_neuron, eos_run):
    eta = eos_run.eta
    sharp = single_neuron.limiting_sharpness(eos_run)
    assert 2.0 / eta - 2.0 < sharp <= 2.0 / eta + 1e-9
    assert eos_run.crossing_iter is not None
    assert eos_run.landing_iter is not None
    assert eos_run.crossing_iter >= eos_run.landing_iter


def test_edge_of_stability_phases_appear_in_order(eos_run):
    tags = list(eos_run.phase_tags)
    assert tags[0] is PhaseTag.GRADIENT_FLOW_LIKE
    assert PhaseTag.BOUNCING in tags
    assert tags[-1] is PhaseTag.CONVERGING
    order = {PhaseTag.GRADIENT_FLOW_LIKE: 0, PhaseTag.BOUNCING: 1, PhaseTag.CONVERGING: 2}
    ranks = [order[t] for t in tags]
    assert ranks == sorted(ranks)


def test_iterates_never_increase_y(eos_run):
    assert np.all(np.diff(eos_run.ys) <= 0.0)


def test_thinned_record_keeps_events_and_bounce_count(single_neuron, sqrt_loss, eos_run):
    start = single_neuron.init_from_delta(0.1, 1.0, Regime.EDGE_OF_STABILITY)
    thin = single_neuron.run(start.x, start.y, sqrt_loss, 0.1, StopRule(drift_tol=1e-14, record_every=7))
    assert len(thin) < len(eos_run)
    assert thin.iterations == eos_run.iterations
    assert thin.crossing_iter == eos_run.crossing_iter
    assert thin.landing_iter == eos_run.landing_iter
    assert thin.final_state == eos_run.final_state
    assert single_neuron.bouncing_iterations(thin) == single_neuron.bouncing_iterations(eos_run)
    assert single_neuron.bouncing_iterations(eos_run) > 0


def test_bounce_count_band_must_match_tracked_band(single_neuron, sqrt_loss):
    start = single_neuron.init_from_delta(0.1, 1.0, Regime.EDGE_OF_STABILITY)
    thin = single_neuron.run(start.x, start.y, sqrt_loss, 0.1, StopRule(drift_tol=1e-14, record_every=5))
    with pytest.raises(InvalidConfig):
        single_neuron.bouncing_iterations(thin, 2.0, 4.0)
    with pytest.raises(InvalidConfig):
        single_neuron.bouncing_iterations(thin, 3.0, 2.0)


def test_until_crossing_stops_at_the_threshold(single_neuron, sqrt_loss):
    start = single_neuron.init_from_delta(0.1, 1.0, Regime.EDGE_OF_STABILITY)
    traj = single_neuron.run(start.x, start.y, sqrt_loss, 0.1, StopRule(until_crossing=True))
    assert traj.stop_reason is StopReason.CROSSED
    assert traj.crossing_iter == traj.iterations
    assert traj.eta * traj.ys[-1] ** 2 < 2.0


def test_drift_stop_agrees_with_full_convergence(single_neuron, sqrt_loss, eos_run):
    start = single_neuron.init_from_delta(0.1, 1.0, Regime.EDGE_OF_STABILITY)
    full = single_neuron.run(start.x, start.y, sqrt_loss, 0.1)
    assert full.stop_reason is StopReason.CONVERGED
    assert eos_run.stop_reason is StopReason.DRIFT
    assert eos_run.iterations <= full.iterations
    assert_allclose(single_neuron.limiting_sharpness(eos_run), single_neuron.limiting_sharpness(full), rtol=1e-9)


def test_max_iters_is_reported_and_optionally_raised(single_neuron, sqrt_loss):
    start = single_neuron.init_from_delta(0.1, 1.0, Regime.EDGE_OF_STABILITY)
    traj = single_neuron.run(start.x, start.y, sqrt_loss, 0.1, StopRule(max_iters=5))
    assert traj.max_iters_exceeded
    assert traj.iterations == 5
    with pytest.raises(NotConverged):
        single_neuron.limiting_sharpness(traj)
    with pytest.raises(MaxItersExceeded) as info:
        single_neuron.run(start.x, start.y, sqrt_loss, 0.1, StopRule(max_iters=5, raise_on_max_iters=True))
    assert info.value.trajectory.iterations == 5


def test_hitting_the_axis_above_threshold_is_an_error(single_neuron):
    with pytest.raises(HitAxisExactly) as info:
        single_neuron.run(1.0, 4.0, make_loss(LossKind.HUBER), 0.25)
    assert info.value.iteration == 1
    assert len(info.value.trajectory) == 2
    assert info.value.trajectory.stop_reason is StopReason.HIT_AXIS
    assert not info.value.trajectory.max_iters_exceeded


def test_perturbed_start_is_deterministic(single_neuron):
    a, rng = single_neuron.perturbed_start(1.0, 1e-6, RngStream(0))
    b, _ = single_neuron.perturbed_start(1.0, 1e-6, RngStream(0))
    assert a == b
    assert a != 1.0 and abs(a - 1.0) < 1e-4
    assert rng.counter == 2


def test_quasi_static_envelope_for_sqrt_loss(single_neuron, sqrt_loss):
    eta, y = 0.1, 5.0
    x = single_neuron.quasi_static_envelope(sqrt_loss, eta, y)
    # η·y²/√(1 + s²) = 2  ⇒  s = √((η·y²/2)² − 1)
    assert_allclose(x, math.sqrt((eta * y * y / 2.0) ** 2 - 1.0) / y, atol=1e-12)


def test_quasi_static_envelope_needs_level_above_two(single_neuron, sqrt_loss):
    with pytest.raises(NoRoot):
        single_neuron.quasi_static_envelope(sqrt_loss, 0.1, 4.0)


def test_quasi_static_trace_is_nan_below_threshold(single_neuron, eos_run):
    trace = single_neuron.quasi_static_trace(eos_run)
    above = eos_run.eta * eos_run.ys**2 > 2.0
    assert np.all(np.isnan(trace[~above]))
    assert np.all(trace[above] > 0.0)


def test_gradient_flow_conserves_y2_minus_x2(single_neuron, sqrt_loss):
    path = single_neuron.gradient_flow(3.0, 4.0, sqrt_loss, t_end=1.0, dt=1e-3)
    D = path[:, 1] ** 2 - path[:, 0] ** 2
    assert_allclose(D, 7.0, rtol=1e-8)


def test_step_size_family_never_exceeds_two_over_eta(single_neuron, sqrt_loss):
    rows = single_neuron.step_size_family(sqrt_loss, 0.3, 2.3, two_over_eta=(9.0, 7.0, 5.0))
    assert [row["regime"] for row in rows] == ["gradient-flow", "gradient-flow", "edge-of-stability"]
    for row in rows:
        assert row["limiting_sharpness"] <= row["two_over_eta"] + 1e-9


def test_limiting_sharpness_matches_eigenvalue_helper(single_neuron, eos_run):
    final = eos_run.final_state
    H = single_neuron.hessian(State2D(0.0, final.y), eos_run.loss)
    assert single_neuron.limiting_sharpness(eos_run) == sym_eig_max(H)


def test_higher_order_losses_run_to_convergence(single_neuron):
    loss = parse_loss("higher-order:3")
    start = single_neuron.init_from_delta(0.05, 1.0, Regime.EDGE_OF_STABILITY)
    traj = single_neuron.run(start.x, start.y, loss, 0.05, StopRule(drift_tol=1e-14, record_every=100))
    assert traj.converged
    assert single_neuron.limiting_sharpness(traj) <= 2.0 / 0.05 + 1e-9


def first_sign_change(xs):
    flips = np.flatnonzero(xs[1:] * xs[:-1] < 0.0)
    return int(flips[0]) + 1 if len(flips) else None


@pytest.mark.parametrize("name", ["sqrt", "huber"])
def test_bouncing_starts_at_the_first_sign_change(single_neuron, name):
    start = single_neuron.init_from_delta(0.1, 1.0, Regime.EDGE_OF_STABILITY)
    traj = single_neuron.run(start.x, start.y, parse_loss(name), 0.1, StopRule(max_iters=400))
    tags = list(traj.phase_tags)
    flip = first_sign_change(traj.xs)
    assert flip is not None
    assert tags.index(PhaseTag.BOUNCING) == flip
    assert all(tag is PhaseTag.GRADIENT_FLOW_LIKE for tag in tags[:flip])


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_invariant_lines_are_kept_at_every_step(single_neuron, any_loss, sign):
    traj = single_neuron.run(3.0 * sign, 3.0, any_loss, 0.1, StopRule(max_iters=2000))
    assert len(traj) > 1
    np.testing.assert_array_equal(traj.xs, sign * traj.ys)


@pytest.mark.parametrize("name", ["sqrt", "huber", "rsym-logistic", "higher-order:3"])
def test_negated_start_mirrors_the_trajectory(single_neuron, name):
    loss = parse_loss(name)
    start = single_neuron.init_from_delta(0.1, 1.0, Regime.EDGE_OF_STABILITY)
    stop = StopRule(max_iters=300, drift_tol=1e-14)
    pos = single_neuron.run(start.x, start.y, loss, 0.1, stop)
    neg = single_neuron.run(-start.x, start.y, loss, 0.1, stop)
    np.testing.assert_array_equal(neg.xs, -pos.xs)
    np.testing.assert_array_equal(neg.ys, pos.ys)
    assert list(neg.phase_tags) == list(pos.phase_tags)
    assert neg.crossing_iter == pos.crossing_iter


@pytest.mark.parametrize("regime", [Regime.GRADIENT_FLOW, Regime.EDGE_OF_STABILITY])
@pytest.mark.parametrize("name", ["sqrt", "rsym-logistic", "higher-order:3"])
def test_y_stays_above_abs_x(single_neuron, regime, name):
    start = single_neuron.init_from_delta(0.05, 1.0, regime)
    traj = single_neuron.run(start.x, start.y, parse_loss(name), 0.05, StopRule(max_iters=5000, drift_tol=1e-14))
    assert np.all(traj.ys[1:] > np.abs(traj.xs[1:]))


@pytest.mark.parametrize("name,eta", [
    ("sqrt", 0.1), ("sqrt", 0.01), ("rsym-logistic", 0.05), ("higher-order:3", 0.05),
])
def test_initial_gap_at_the_crossing(single_neuron, name, eta):
    start = single_neuron.init_from_delta(eta, 1.0, Regime.EDGE_OF_STABILITY)
    traj = single_neuron.run(start.x, start.y, parse_loss(name), eta, StopRule(until_crossing=True))
    crossing = traj.crossing_iter
    assert crossing is not None and crossing >= 1
    assert eta * traj.ys[crossing - 1] ** 2 >= 2.0 > eta * traj.ys[crossing] ** 2
    s = traj.xs[crossing - 1] * traj.ys[crossing - 1]
    assert traj.ys[crossing] ** 2 >= 2.0 / eta - 2.0 * eta * s**2 - 1e-12 / eta


def test_bouncing_iterates_follow_the_quasi_static_envelope(single_neuron, eos_run):
    eta = eos_run.eta
    envelope = single_neuron.quasi_static_trace(eos_run)
    level_gap = eta * eos_run.ys**2 - 2.0
    first = list(eos_run.phase_tags).index(PhaseTag.BOUNCING)
    # δ_t bem acima de η^{β/(β−1)} = η² para a perda sqrt
    idx = [t for t in range(first + 20, len(eos_run))
           if eos_run.phase_tags[t] is PhaseTag.BOUNCING and level_gap[t] >= 10.0 * eta**2]
    assert len(idx) >= 5
    ratio = np.abs(eos_run.xs[idx]) / envelope[idx]
    assert np.all((ratio >= 0.5) & (ratio <= 2.0))


@pytest.mark.parametrize("name", ["sqrt", "huber", "higher-order:3/2"])
def test_tail_after_the_last_bounce_is_monotone(single_neuron, name):
    loss = parse_loss(name)
    start = single_neuron.init_from_delta(0.1, 1.0, Regime.EDGE_OF_STABILITY)
    traj = single_neuron.run(start.x, start.y, loss, 0.1, StopRule(drift_tol=1e-14))
    level = 0.1 * traj.ys**2
    inside = np.flatnonzero((level < 2.0) & (np.abs(traj.xs * traj.ys) < loss.c_lower))
    assert len(inside) > 0
    tail = slice(int(inside[0]), None)
    assert np.all(np.diff(np.abs(traj.xs[tail])) <= 0.0)
    assert np.all(np.diff(traj.ys[tail]) <= 0.0)


def test_conserved_quantity_identity_over_many_steps(single_neuron, any_loss):
    n = 100_000
    u, _ = RngStream(5).uniforms(2 * n)
    eta = 0.1
    dl = derivative_fn(any_loss)
    ys = 0.5 + 20.0 * u[0::2]
    xs = (2.0 * u[1::2] - 1.0) * 0.5 * ys
    got = np.empty(n)
    expected = np.empty(n)
    for k in range(n):
        state = State2D(float(xs[k]), float(ys[k]))
        nxt = single_neuron.gd_step(state, any_loss, eta)
        g = dl(state.x * state.y)
        got[k] = single_neuron.gf_conserved(nxt)
        expected[k] = (1.0 - eta**2 * g**2) * single_neuron.gf_conserved(state)
    assert_allclose(got, expected, rtol=1e-14)


def test_conserved_quantity_identity_along_a_run(eos_run):
    dl = derivative_fn(eos_run.loss)
    eta = eos_run.eta
    D = eos_run.ys**2 - eos_run.xs**2
    factor = np.array([1.0 - eta**2 * dl(s) ** 2 for s in eos_run.xs[:-1] * eos_run.ys[:-1]])
    assert_allclose(D[1:], factor * D[:-1], rtol=1e-13)
