#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
策略网络测试脚本
包括参数结构、前向传播性质、n步回报，以及A3C梯度的有限差分校验
"""

import os
import sys
from collections import OrderedDict

import numpy as np
import pytest

# 添加项目路径
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from navigation.errors import ContractError, NumericError
from navigation.gridscene import SCENE_TYPES
from navigation.policynet import (FrameHistory, NetworkParams, StateInputs, Trajectory, TrajectoryStep,
                                  a3c_loss, a3c_loss_and_grads, compute_advantages, compute_returns, forward,
                                  forward_state, greedy_action, init_params, parameter_shapes, sample_action)


F, E, S_F = 6, 8, 45
EPSILON = 1e-5


def random_state(rng, semantic, scene_type):
    return StateInputs(
        history=rng.normal(size=(4, F)),
        target=rng.normal(size=F),
        scene_type=scene_type,
        history_sem=rng.uniform(size=(4, S_F)) if semantic else None,
        target_sem=rng.uniform(size=S_F) if semantic else None,
    )


def random_trajectory(rng, semantic, length, terminal, scene_type):
    steps = []
    for t in range(length):
        last = t == length - 1
        reward = 9.99 if (terminal and last) else -0.01
        steps.append(TrajectoryStep(random_state(rng, semantic, scene_type), int(rng.integers(4)),
                                    reward, terminal and last))
    bootstrap = 0.0 if terminal else float(rng.normal())
    return Trajectory(steps, bootstrap)


def activation_pattern(params, traj):
    signs = []
    for step in traj.steps:
        cache = forward_state(params, step.state).cache
        for key in ('z_h', 'z_t', 'zs_h', 'zs_t', 'z_j', 'z_s1'):
            if key in cache:
                signs.append(cache[key] > 0)
    return np.concatenate(signs)


def test_parameter_shapes():
    print("测试参数结构...")
    sn = parameter_shapes('sn', 2048, 512)
    assert sn['W1'] == (8192, 512)
    assert sn['W2'] == (1024, 512)
    assert 'W1s' not in sn
    ssn = parameter_shapes('ssn', 2048, 512, 345)
    assert ssn['W1s'] == (1380, 512)
    assert ssn['W2'] == (2048, 512)
    for scene_type in SCENE_TYPES:
        assert ssn[f'{scene_type}/W_s1'] == (512, 512)
        assert ssn[f'{scene_type}/W_s2'] == (512, 5)
    with pytest.raises(ContractError):
        parameter_shapes('cnn', 8, 8)
    with pytest.raises(ContractError):
        parameter_shapes('ssn', 8, 8, 0)
    print("参数结构测试通过！\n")


def test_init_params():
    a = init_params('ssn', F, E, S_F, seed=3)
    b = init_params('ssn', F, E, S_F, seed=3)
    c = init_params('ssn', F, E, S_F, seed=4)
    assert a.same_as(b)
    assert not a.same_as(c)
    assert a.heads == SCENE_TYPES
    for name, value in a.tensors.items():
        if value.ndim == 1:
            assert np.all(value == 0.0)
        else:
            bound = np.sqrt(6.0 / sum(value.shape))
            assert np.all(np.abs(value) <= bound)

    tensors = OrderedDict(a.tensors)
    tensors['W1'] = np.zeros((3, 3))
    with pytest.raises(ContractError):
        NetworkParams('ssn', F, E, S_F, tensors)


def test_zero_weights_give_uniform_policy():
    print("测试零权重输出均匀策略...")
    params = init_params('sn', F, E).zeros_like()
    rng = np.random.default_rng(0)
    output = forward(params, rng.normal(size=(4, F)), rng.normal(size=F), scene_type='kitchen')
    np.testing.assert_allclose(output.policy, [0.25] * 4, atol=1e-15)
    assert output.value == 0.0
    print("零权重测试通过！\n")


def test_forward_properties():
    rng = np.random.default_rng(1)
    params = init_params('ssn', F, E, S_F, seed=1)
    for _ in range(50):
        state = random_state(rng, True, SCENE_TYPES[int(rng.integers(4))])
        output = forward_state(params, state)
        assert abs(output.policy.sum() - 1.0) < 1e-9
        assert np.all(output.policy > 0.0)
        again = forward_state(params, state)
        np.testing.assert_array_equal(output.policy, again.policy)
        assert output.value == again.value


def test_copied_heads_give_identical_outputs():
    rng = np.random.default_rng(2)
    params = init_params('sn', F, E, seed=2)
    for name in ('W_s1', 'b_s1', 'W_s2', 'b_s2'):
        params.tensors[f'bedroom/{name}'] = params.tensors[f'kitchen/{name}'].copy()
    history, target = rng.normal(size=(4, F)), rng.normal(size=F)
    a = forward(params, history, target, scene_type='kitchen')
    b = forward(params, history, target, scene_type='bedroom')
    np.testing.assert_array_equal(a.policy, b.policy)
    assert a.value == b.value
    c = forward(params, history, target, scene_type='bathroom')
    assert not np.array_equal(a.policy, c.policy)


def test_forward_rejects_mismatched_inputs():
    rng = np.random.default_rng(3)
    sn = init_params('sn', F, E)
    ssn = init_params('ssn', F, E, S_F)
    history, target = rng.normal(size=(4, F)), rng.normal(size=F)
    with pytest.raises(ContractError):
        forward(ssn, history, target, scene_type='kitchen')
    with pytest.raises(ContractError):
        forward(sn, history, target, rng.uniform(size=(4, S_F)), rng.uniform(size=S_F), scene_type='kitchen')
    with pytest.raises(ContractError):
        forward(sn, history, target, scene_type='garage')
    with pytest.raises(ContractError):
        forward(sn, rng.normal(size=(3, F)), target, scene_type='kitchen')


def test_compute_returns():
    print("测试n步回报...")
    returns = compute_returns([-0.01, -0.01, 9.99], 0.99, 0.0)
    assert returns[0] == pytest.approx(9.771299, abs=1e-9)
    assert returns[1] == pytest.approx(9.8801, abs=1e-9)
    np.testing.assert_array_equal(compute_returns([1.0, 2.0, 3.0], 0.0, 5.0), [1.0, 2.0, 3.0])
    assert compute_returns([-0.01], 0.5, 2.0)[0] == pytest.approx(0.99)
    with pytest.raises(ContractError):
        compute_returns([1.0], 1.5)
    print("n步回报测试通过！\n")


def test_terminal_trajectory_ignores_bootstrap():
    rng = np.random.default_rng(4)
    params = init_params('sn', F, E, seed=4)
    traj = random_trajectory(rng, False, 3, True, 'kitchen')
    returns, _ = compute_advantages(params, traj, 0.99)
    traj.bootstrap_value = 123.0
    again, _ = compute_advantages(params, traj, 0.99)
    np.testing.assert_array_equal(returns, again)


def check_gradients(params, traj, gamma=0.99, beta=0.01, value_coef=0.5):
    """中心差分校验全部参数的梯度，返回 (比较个数, 因ReLU转折跳过的个数)"""
    _, advantages = compute_advantages(params, traj, gamma)
    _, grads = a3c_loss_and_grads(params, traj, gamma, beta, value_coef, advantages=advantages)
    checked = skipped = 0
    for name, tensor in params.tensors.items():
        for index in np.ndindex(tensor.shape):
            original = tensor[index]
            tensor[index] = original + EPSILON
            plus = a3c_loss(params, traj, gamma, beta, value_coef, advantages)
            pattern_plus = activation_pattern(params, traj)
            tensor[index] = original - EPSILON
            minus = a3c_loss(params, traj, gamma, beta, value_coef, advantages)
            pattern_minus = activation_pattern(params, traj)
            tensor[index] = original
            if not np.array_equal(pattern_plus, pattern_minus):
                skipped += 1
                continue
            numeric = (plus - minus) / (2 * EPSILON)
            analytic = grads.tensors[name][index]
            # 梯度很小的分量按绝对误差比较
            scale = max(abs(analytic) + abs(numeric), 1e-4)
            assert abs(analytic - numeric) / scale < 1e-3, (name, index, analytic, numeric)
            checked += 1
    return checked, skipped


def test_a3c_gradients_match_finite_differences():
    """SN 与 SSN 各10条随机轨迹，覆盖4个策略头、终止与截断两种情况"""
    print("测试A3C梯度的有限差分校验...")
    rng = np.random.default_rng(2024)
    total_checked = total_skipped = 0
    for variant in ('sn', 'ssn'):
        for trial in range(10):
            params = init_params(variant, F, E, S_F if variant == 'ssn' else 0, seed=trial)
            for name in params.names():
                if params.tensors[name].ndim == 1:
                    params.tensors[name] = rng.normal(scale=0.1, size=params.tensors[name].shape)
            traj = random_trajectory(rng, variant == 'ssn', int(rng.integers(1, 4)), trial % 2 == 0,
                                     SCENE_TYPES[trial % 4])
            checked, skipped = check_gradients(params, traj)
            total_checked += checked
            total_skipped += skipped
    print(f"比较 {total_checked} 个梯度分量，跳过 {total_skipped} 个")
    assert total_skipped <= 0.02 * (total_checked + total_skipped)
    print("A3C梯度有限差分校验通过！\n")


def test_unused_heads_get_zero_gradient():
    rng = np.random.default_rng(5)
    params = init_params('ssn', F, E, S_F, seed=5)
    traj = random_trajectory(rng, True, 3, False, 'livingroom')
    _, grads = a3c_loss_and_grads(params, traj)
    for scene_type in ('bathroom', 'bedroom', 'kitchen'):
        for name in ('W_s1', 'b_s1', 'W_s2', 'b_s2'):
            assert np.all(grads.tensors[f'{scene_type}/{name}'] == 0.0)
    assert np.any(grads.tensors['livingroom/W_s2'] != 0.0)


def test_entropy_gradient_vanishes_at_uniform_policy():
    rng = np.random.default_rng(6)
    params = init_params('sn', F, E, seed=6)
    for scene_type in SCENE_TYPES:
        params.tensors[f'{scene_type}/W_s2'][:, :4] = 0.0
    traj = random_trajectory(rng, False, 3, True, 'bedroom')
    output = forward_state(params, traj.steps[0].state)
    np.testing.assert_allclose(output.policy, [0.25] * 4, atol=1e-15)
    _, grads = a3c_loss_and_grads(params, traj, beta=0.5, value_coef=0.0, advantages=np.zeros(3))
    assert grads.global_norm() < 1e-12


def test_non_finite_loss_raises():
    rng = np.random.default_rng(7)
    params = init_params('sn', F, E, seed=7)
    params.tensors['kitchen/b_s2'][4] = np.inf
    traj = random_trajectory(rng, False, 2, True, 'kitchen')
    with pytest.raises(NumericError):
        a3c_loss_and_grads(params, traj)


def test_action_selection_and_history():
    rng = np.random.default_rng(8)
    params = init_params('sn', F, E, seed=8)
    output = forward_state(params, random_state(rng, False, 'kitchen'))
    assert greedy_action(output) == int(np.argmax(output.policy))
    counts = np.bincount([sample_action(output, rng) for _ in range(4000)], minlength=4) / 4000
    np.testing.assert_allclose(counts, output.policy, atol=0.05)

    history = FrameHistory()
    first = np.full(F, 1.0)
    history.reset(first)
    assert history.features().shape == (4, F)
    assert np.all(history.features() == 1.0)
    assert history.semantics() is None
    history.push(np.full(F, 2.0))
    np.testing.assert_array_equal(history.features()[:, 0], [1.0, 1.0, 1.0, 2.0])


if __name__ == "__main__":
    print("=" * 50)
    print("策略网络测试")
    print("=" * 50)
    test_parameter_shapes()
    test_init_params()
    test_zero_weights_give_uniform_policy()
    test_forward_properties()
    test_copied_heads_give_identical_outputs()
    test_forward_rejects_mismatched_inputs()
    test_compute_returns()
    test_terminal_trajectory_ignores_bootstrap()
    test_a3c_gradients_match_finite_differences()
    test_unused_heads_get_zero_gradient()
    test_entropy_gradient_vanishes_at_uniform_policy()
    test_non_finite_loss_raises()
    test_action_selection_and_history()
    print("所有测试通过！")
