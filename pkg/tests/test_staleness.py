"""Delay semantics: stash buffer, warm-up ramp, modes, stage profiles."""

import numpy as np
import pytest

from delaylab.staleness import (
    StalenessConfig,
    advance,
    delayed_gradient,
    init_stash,
    layer_stage_map,
    param_delays,
    stage_delay_profile,
)


def quad_eval(params, batch):
    # f(w) = 1/2 ||w||^2 per matrix; gradient is the parameter itself
    loss = sum(0.5 * float(np.sum(p * p)) for p in params)
    return loss, tuple(p.copy() for p in params)


def test_config_validation():
    with pytest.raises(ValueError):
        StalenessConfig(tau=-1)
    with pytest.raises(ValueError):
        StalenessConfig(per_stage=(1, -2))
    with pytest.raises(ValueError):
        StalenessConfig(mode="clairvoyant")
    assert StalenessConfig(tau=3).max_delay == 3
    assert StalenessConfig(per_stage=(3, 1, 0)).max_delay == 3


def test_stage_delay_profile():
    assert stage_delay_profile(1) == (0,)
    assert stage_delay_profile(4) == (3, 2, 1, 0)
    with pytest.raises(ValueError):
        stage_delay_profile(0)


def test_layer_stage_map():
    # layer i (1-based) -> stage ceil(i P / L), contiguous, last on last
    assert layer_stage_map(4, 2) == (0, 0, 1, 1)
    assert layer_stage_map(3, 2) == (0, 1, 1)
    assert layer_stage_map(2, 4) == (1, 3)
    assert layer_stage_map(5, 1) == (0, 0, 0, 0, 0)


def test_param_delays_uniform_and_staged():
    assert param_delays(StalenessConfig(tau=2), 3) == (2, 2, 2)
    cfg = StalenessConfig(per_stage=stage_delay_profile(2))  # (1, 0)
    assert param_delays(cfg, 4) == (1, 1, 0, 0)


def test_stash_capacity_is_exactly_max_delay_plus_one():
    stash = init_stash((np.zeros((1, 1)),), 2)
    for t in range(10):
        assert len(stash) == min(t + 1, 3)
        stash = advance(stash, (np.full((1, 1), float(t)),))
    assert len(stash) == 3


def test_stash_snapshot_warm_up_ramp():
    stash = init_stash((np.array([[0.0]]),), 3)
    for t in range(1, 6):
        stash = advance(stash, (np.array([[float(t)]]),))
        snap, served = stash.snapshot(3)
        # value stored at the served age
        assert float(snap[0][0, 0]) == max(t - 3, 0)
        assert served == min(t, 3)


def test_stash_snapshot_rejects_negative_delay():
    stash = init_stash((np.zeros((1, 1)),), 1)
    with pytest.raises(ValueError):
        stash.snapshot(-1)


def test_delayed_gradient_tau_zero_pass_through():
    params = (np.array([[1.0, 2.0]]),)
    stash = init_stash(params, 0)
    cfg = StalenessConfig(tau=0)
    grads, served, used = delayed_gradient(quad_eval, stash, None, cfg)
    assert np.array_equal(grads[0], params[0])
    assert served == (0,)
    assert np.array_equal(used[0], params[0])


def test_delayed_gradient_serves_old_snapshot():
    cfg = StalenessConfig(tau=2)
    stash = init_stash((np.array([[0.0]]),), 2)
    for t in range(1, 4):
        stash = advance(stash, (np.array([[float(t)]]),))
    grads, served, _ = delayed_gradient(quad_eval, stash, None, cfg)
    # current value 3, snapshot from 2 steps ago holds 1
    assert float(grads[0][0, 0]) == 1.0
    assert served == (2,)


def test_delayed_gradient_mixed_ages():
    # two matrices with different delays assemble one evaluation
    p0, p1 = np.array([[0.0]]), np.array([[100.0]])
    stash = init_stash((p0, p1), 2)
    for t in range(1, 4):
        stash = advance(stash, (np.array([[float(t)]]), np.array([[100.0 + t]])))
    cfg = StalenessConfig(per_stage=(2, 0))
    _, served, used = delayed_gradient(quad_eval, stash, None, cfg, delays=(2, 0))
    assert served == (2, 0)
    assert float(used[0][0, 0]) == 1.0  # two steps old
    assert float(used[1][0, 0]) == 103.0  # fresh


def test_delayed_gradient_wrong_delay_count():
    stash = init_stash((np.zeros((1, 1)),), 1)
    with pytest.raises(ValueError):
        delayed_gradient(quad_eval, stash, None, StalenessConfig(tau=1), delays=(1, 1))


def test_prediction_mode_extrapolates_served_snapshot():
    calls = []

    def predictor(p, i, served):
        calls.append((i, served))
        return p + 10.0

    cfg = StalenessConfig(tau=1, mode="prediction")
    stash = init_stash((np.array([[5.0]]),), 1)
    stash = advance(stash, (np.array([[6.0]]),))
    grads, served, used = delayed_gradient(quad_eval, stash, None, cfg, predictor=predictor)
    assert served == (1,)
    assert float(used[0][0, 0]) == 15.0  # stale 5.0 plus the extrapolation
    assert calls == [(0, 1)]


def test_prediction_mode_tau_zero_never_calls_predictor():
    def predictor(p, i, served):  # pragma: no cover - must not run
        raise AssertionError("predictor called at zero delay")

    cfg = StalenessConfig(tau=0, mode="prediction")
    stash = init_stash((np.array([[5.0]]),), 0)
    grads, served, used = delayed_gradient(quad_eval, stash, None, cfg, predictor=predictor)
    assert served == (0,)
    assert float(used[0][0, 0]) == 5.0
