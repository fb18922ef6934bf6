#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
网格场景模块测试脚本
"""

import json
import math
import os
import sys

import numpy as np
import pytest

# 添加项目路径
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from navigation.errors import ContractError, TargetSelectionError
from navigation.featurizer import ViewConfig, visible_objects
from navigation.gridscene import (EAST, MOVE_BACKWARD, MOVE_FORWARD, NORTH, OBJECT_VOCABULARY, ROTATE_LEFT,
                                  ROTATE_RIGHT, SCENE_TYPES, SOUTH, WEST, ObjectInstance, Pose, SceneSpec,
                                  check_scene_invariants, distance_field, generate_inventory, generate_scene,
                                  next_pose, oracle_action, select_targets, shortest_path_length, step,
                                  valid_poses)


def make_room(width=6, height=6, walls=(), cells=((5, 5), (4, 5), (5, 4), (0, 5), (3, 1)), seed=0):
    objects = tuple(
        ObjectInstance('sink', ('white',), cell, (('near', (i + 1) % len(cells)),))
        for i, cell in enumerate(cells)
    )
    return SceneSpec('room', 'bathroom', width, height, frozenset(walls), objects, seed)


def test_generate_scene_deterministic():
    """相同参数生成的场景完全一致"""
    print("测试场景生成的确定性...")
    a = generate_scene(7, 'kitchen', 8, 8)
    b = generate_scene(7, 'kitchen', 8, 8)
    assert a == b
    assert a.id == 'kitchen-7'
    c = generate_scene(8, 'kitchen', 8, 8)
    assert c != a
    print("场景生成确定性测试通过！\n")


def test_generated_scenes_satisfy_invariants():
    print("测试场景不变量...")
    scenes = generate_inventory(count_per_type=3, width=8, height=8, seed=1)
    assert len(scenes) == 12
    assert [s.id for s in scenes[:3]] == ['bathroom_00', 'bathroom_01', 'bathroom_02']
    for scene in scenes:
        assert check_scene_invariants(scene) == []
        assert len(scene.objects) >= 5
        for obj in scene.objects:
            assert obj.object_class in OBJECT_VOCABULARY[scene.scene_type]
            assert obj.attributes
            assert scene.is_free(obj.cell)
    print(f"共检查 {len(scenes)} 个场景")
    print("场景不变量测试通过！\n")


def test_scene_statistics_differ_by_type():
    scenes = generate_inventory(count_per_type=5, width=8, height=8)
    bathroom = {o.object_class for s in scenes if s.scene_type == 'bathroom' for o in s.objects}
    living = {o.object_class for s in scenes if s.scene_type == 'livingroom' for o in s.objects}
    assert 'sofa' not in bathroom
    assert 'toilet' not in living


def test_generate_scene_rejects_bad_arguments():
    with pytest.raises(ContractError):
        generate_scene(0, 'bathroom', 5, 8)
    with pytest.raises(ContractError):
        generate_scene(0, 'garage', 8, 8)


def test_scene_dict_round_trip():
    print("测试场景文件结构的往返转换...")
    scene = generate_scene(3, 'bedroom', 9, 7)
    data = json.loads(json.dumps(scene.to_dict()))
    assert sorted(data.keys()) == sorted(['id', 'scene_type', 'width', 'height', 'walls', 'objects', 'seed'])
    assert SceneSpec.from_dict(data) == scene

    data['extra'] = 1
    with pytest.raises(ContractError):
        SceneSpec.from_dict(data)
    del data['extra']
    del data['walls']
    with pytest.raises(ContractError):
        SceneSpec.from_dict(data)
    print("场景文件往返转换测试通过！\n")


def test_from_dict_rejects_disconnected_layout():
    scene = make_room(walls=[(2, y) for y in range(6)])
    with pytest.raises(ContractError):
        SceneSpec.from_dict(scene.to_dict())


def test_step_blocked_by_wall():
    print("测试单步动作...")
    scene = make_room(walls=[(2, 1)])
    target = Pose(0, 0, NORTH)
    result = step(scene, Pose(1, 1, EAST), target, MOVE_FORWARD, 0)
    assert result.next_pose == Pose(1, 1, EAST)
    assert result.reward == pytest.approx(-0.01)
    assert not result.done and not result.success
    assert result.steps_taken == 1

    assert next_pose(scene, Pose(1, 1, NORTH), ROTATE_LEFT) == Pose(1, 1, WEST)
    assert next_pose(scene, Pose(1, 1, WEST), ROTATE_RIGHT) == Pose(1, 1, NORTH)
    assert next_pose(scene, Pose(1, 1, NORTH), MOVE_BACKWARD) == Pose(1, 2, NORTH)
    # 越界
    assert next_pose(scene, Pose(0, 0, NORTH), MOVE_FORWARD) == Pose(0, 0, NORTH)
    print("单步动作测试通过！\n")


def test_actions_are_reversible():
    print("测试动作可逆...")
    inverse = {MOVE_FORWARD: MOVE_BACKWARD, MOVE_BACKWARD: MOVE_FORWARD,
               ROTATE_LEFT: ROTATE_RIGHT, ROTATE_RIGHT: ROTATE_LEFT}
    checked = 0
    for seed in range(3):
        for scene_type in SCENE_TYPES:
            for size in (6, 8):
                scene = generate_scene(seed, scene_type, size, size)
                for pose in valid_poses(scene):
                    for action, back in inverse.items():
                        moved = next_pose(scene, pose, action)
                        if moved != pose:
                            assert next_pose(scene, moved, back) == pose, (scene.id, pose, action)
                            checked += 1
    assert checked > 0
    print(f"可逆性检查 {checked} 次转移通过！\n")


def test_step_reaching_target_and_cap():
    scene = make_room()
    result = step(scene, Pose(0, 0, EAST), Pose(1, 0, EAST), MOVE_FORWARD, 4)
    assert result.success and result.done
    assert abs(result.reward - 9.99) < 1e-12
    assert result.steps_taken == 5

    result = step(scene, Pose(0, 0, EAST), Pose(3, 3, EAST), ROTATE_LEFT, 9, cap=10)
    assert result.done and not result.success

    # 朝向不一致时只有关闭朝向匹配才算到达
    result = step(scene, Pose(0, 0, EAST), Pose(1, 0, SOUTH), MOVE_FORWARD, 0)
    assert not result.success
    result = step(scene, Pose(0, 0, EAST), Pose(1, 0, SOUTH), MOVE_FORWARD, 0, match_heading=False)
    assert result.success


def test_step_rejects_invalid_input():
    scene = make_room(walls=[(2, 1)])
    target = Pose(0, 0, NORTH)
    with pytest.raises(ContractError):
        step(scene, Pose(1, 1, EAST), target, 4, 0)
    with pytest.raises(ContractError):
        step(scene, Pose(1, 1, EAST), target, True, 0)
    with pytest.raises(ContractError):
        step(scene, Pose(1, 1, EAST), target, MOVE_FORWARD, 1000)
    with pytest.raises(ContractError):
        step(scene, Pose(2, 1, EAST), target, MOVE_FORWARD, 0)


def test_episode_return_algebra():
    """随机回合的回报恰好等于 10 - 0.01·L（成功）或 -0.01·L（失败）"""
    print("测试回合奖励代数关系...")
    scene = make_room()
    poses = valid_poses(scene)
    rng = np.random.default_rng(42)
    successes = 0
    for _ in range(1000):
        target = poses[int(rng.integers(len(poses)))]
        pose = poses[int(rng.integers(len(poses)))]
        while pose == target:
            pose = poses[int(rng.integers(len(poses)))]
        rewards = []
        steps = 0
        while True:
            result = step(scene, pose, target, int(rng.integers(4)), steps, cap=60)
            rewards.append(result.reward)
            pose, steps = result.next_pose, result.steps_taken
            if result.done:
                break
        expected = 10.0 - 0.01 * steps if result.success else -0.01 * steps
        assert abs(math.fsum(rewards) - expected) < 1e-12
        successes += result.success
    assert 0 < successes < 1000
    print(f"1000 个回合中成功 {successes} 个")
    print("回合奖励代数关系测试通过！\n")


def test_select_targets_random_and_exclude():
    scene = generate_scene(0, 'kitchen', 8, 8)
    targets = select_targets(scene, 'random', 5, seed=3)
    assert len({t.pose for t in targets}) == 5
    assert all(t.mode == 'random' for t in targets)
    assert targets == select_targets(scene, 'random', 5, seed=3)

    fresh = select_targets(scene, 'random', 5, seed=3, exclude=[t.pose for t in targets])
    assert not {t.pose for t in fresh} & {t.pose for t in targets}


def test_select_targets_object_oriented():
    print("测试物体导向目标选择...")
    scene = generate_scene(2, 'livingroom', 8, 8)
    targets = select_targets(scene, 'object_oriented', 5, seed=0)
    assert len({t.pose for t in targets}) == 5
    for target in targets:
        assert visible_objects(scene, target.pose)

    crowded = make_room(cells=((0, 2),) * 5)
    with pytest.raises(TargetSelectionError) as info:
        select_targets(crowded, 'object_oriented', 5, seed=0, view=ViewConfig(view_range=1.0))
    assert 'object_oriented' in str(info.value)
    assert len(select_targets(crowded, 'object_oriented', 3, seed=0, view=ViewConfig(view_range=1.0))) == 3
    print("物体导向目标选择测试通过！\n")


def test_select_targets_top_semantic():
    scene = make_room()
    score = {pose: float(i % 7) for i, pose in enumerate(valid_poses(scene))}
    targets = select_targets(scene, 'top_semantic', 4, seed=0, semantics_oracle=lambda s, p: score[p])
    scores = [score[t.pose] for t in targets]
    assert scores == sorted(scores, reverse=True)
    assert scores[0] == max(score.values())
    with pytest.raises(ContractError):
        select_targets(scene, 'top_semantic', 4, seed=0)
    with pytest.raises(ContractError):
        select_targets(scene, 'nearest', 4, seed=0)


def test_shortest_path_length():
    print("测试BFS最短路...")
    scene = make_room()
    assert shortest_path_length(scene, Pose(0, 0, EAST), Pose(0, 0, EAST)) == 0
    assert shortest_path_length(scene, Pose(0, 0, EAST), Pose(2, 0, EAST)) == 2
    assert shortest_path_length(scene, Pose(0, 0, EAST), Pose(0, 0, WEST)) == 2
    assert shortest_path_length(scene, Pose(0, 0, NORTH), Pose(1, 0, SOUTH), match_heading=False) == 2
    # 后退一步即可
    assert shortest_path_length(scene, Pose(0, 1, NORTH), Pose(0, 2, NORTH)) == 1
    print("BFS最短路测试通过！\n")


def test_distance_field_matches_bfs_and_oracle():
    scene = generate_scene(5, 'bedroom', 8, 8)
    poses = valid_poses(scene)
    rng = np.random.default_rng(0)
    goal = poses[int(rng.integers(len(poses)))]
    field = distance_field(scene, goal)
    assert len(field) == len(poses)
    for i in rng.choice(len(poses), size=20, replace=False):
        pose = poses[int(i)]
        assert field[pose] == shortest_path_length(scene, pose, goal)

    pose = poses[0] if poses[0] != goal else poses[1]
    steps = 0
    while pose != goal:
        pose = next_pose(scene, pose, oracle_action(scene, pose, field))
        steps += 1
    assert steps == field[poses[0] if poses[0] != goal else poses[1]]


def test_all_scene_types_generate():
    for scene_type in SCENE_TYPES:
        scene = generate_scene(11, scene_type, 6, 6)
        assert scene.scene_type == scene_type
        assert check_scene_invariants(scene) == []


if __name__ == "__main__":
    print("=" * 50)
    print("网格场景模块测试")
    print("=" * 50)
    test_generate_scene_deterministic()
    test_generated_scenes_satisfy_invariants()
    test_scene_statistics_differ_by_type()
    test_generate_scene_rejects_bad_arguments()
    test_scene_dict_round_trip()
    test_from_dict_rejects_disconnected_layout()
    test_step_blocked_by_wall()
    test_actions_are_reversible()
    test_step_reaching_target_and_cap()
    test_step_rejects_invalid_input()
    test_episode_return_algebra()
    test_select_targets_random_and_exclude()
    test_select_targets_object_oriented()
    test_select_targets_top_semantic()
    test_shortest_path_length()
    test_distance_field_matches_bfs_and_oracle()
    test_all_scene_types_generate()
    print("所有测试通过！")
