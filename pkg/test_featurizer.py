#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
特征提取模块测试脚本
"""

import os
import sys

import numpy as np
import pytest

# 添加项目路径
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from navigation.featurizer import (MAX_FEATURE_NORM, MIN_FEATURE_NORM, SceneObservations, ViewConfig, annotate,
                                   format_annotation_line, visible_objects, visual_features)
from navigation.gridscene import EAST, ObjectInstance, Pose, SceneSpec, generate_scene, is_valid_pose


CELLS = ((3, 1), (5, 5), (4, 5), (5, 4), (0, 5))
CLASSES = ('sink', 'toilet', 'mirror', 'towel', 'bathtub')


def make_room(walls=()):
    objects = tuple(
        ObjectInstance(CLASSES[i], ('white',), cell, (('near', (i + 1) % len(CELLS)),))
        for i, cell in enumerate(CELLS)
    )
    return SceneSpec('room', 'bathroom', 6, 6, frozenset(walls), objects, 0)


def test_visible_object_geometry():
    print("测试可见性与包围框...")
    scene = make_room()
    sightings = visible_objects(scene, Pose(1, 1, EAST))
    sink = [s for s in sightings if s.index == 0]
    assert len(sink) == 1
    assert sink[0].distance == pytest.approx(2.0)
    assert sink[0].confidence == pytest.approx(0.72)
    assert sink[0].box == pytest.approx((0.3, 0.4, 0.7, 0.9))
    for s in sightings:
        assert 0.05 <= s.confidence <= 1.0
        x0, y0, x1, y1 = s.box
        assert 0.0 <= x0 <= x1 <= 1.0 and 0.0 <= y0 <= y1 <= 1.0
    print("可见性与包围框测试通过！\n")


def test_wall_blocks_line_of_sight():
    scene = make_room(walls=[(2, 1)])
    assert 0 not in [s.index for s in visible_objects(scene, Pose(1, 1, EAST))]


def test_objects_behind_are_invisible():
    scene = make_room()
    assert 0 not in [s.index for s in visible_objects(scene, Pose(4, 1, EAST))]


def test_confidence_decreases_with_distance():
    scene = make_room()
    near = [s for s in visible_objects(scene, Pose(2, 1, EAST)) if s.index == 0][0]
    far = [s for s in visible_objects(scene, Pose(0, 1, EAST)) if s.index == 0][0]
    assert near.confidence > far.confidence

    narrow = ViewConfig(view_range=2.0)
    assert [s.index for s in visible_objects(scene, Pose(0, 1, EAST), narrow)] == []


def test_caption_templates():
    print("测试描述模板...")
    scene = make_room()
    pose = Pose(1, 1, EAST)
    annotations = annotate(scene, pose)
    assert annotations[0].tokens == ('a', 'white', 'sink')
    assert annotations[0].area == pytest.approx(0.4 * 0.5)

    # 从 (1,5) 朝东可以看到 (4,5) 和 (5,5)
    by_class = {a.tokens: a for a in annotate(scene, Pose(1, 5, EAST))}
    assert ('a', 'white', 'mirror', 'in', 'the', 'bathroom') in by_class
    assert ('a', 'white', 'toilet') in by_class

    line = format_annotation_line(scene, pose, annotations)
    fields = line.split('\t')
    assert fields[:4] == ['room', '1', '1', 'East']
    assert fields[4] == '0.7200:0.3000,0.4000,0.7000,0.9000:a white sink'
    print("描述模板测试通过！\n")


def test_visual_features_contract():
    print("测试视觉特征...")
    scene = generate_scene(4, 'kitchen', 8, 8)
    observations = SceneObservations(scene, feature_seed=3, F=32)
    assert len(observations.poses) == len(observations.features)
    for pose in observations.poses:
        assert is_valid_pose(scene, pose)
        values = observations.features[pose]
        assert values.shape == (32,)
        assert np.all(np.isfinite(values))
        assert MIN_FEATURE_NORM - 1e-9 <= np.linalg.norm(values) <= MAX_FEATURE_NORM + 1e-9
        np.testing.assert_array_equal(values, visual_features(scene, pose, 3, 32))
    with pytest.raises(ValueError):
        observations.features[observations.poses[0]][0] = 1.0

    other = visual_features(scene, observations.poses[0], 4, 32)
    assert not np.array_equal(other, observations.features[observations.poses[0]])
    print("视觉特征测试通过！\n")


def test_adjacent_poses_have_correlated_features():
    """同朝向相邻格子的特征相似度高于相距5格的位姿"""
    scene = generate_scene(9, 'livingroom', 10, 10)
    observations = SceneObservations(scene, F=128)

    def cosine(a, b):
        return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

    near, far = [], []
    for pose in observations.poses:
        right = Pose(pose.x + 1, pose.y, pose.heading)
        distant = Pose(pose.x + 5, pose.y, pose.heading)
        if right in observations.features:
            near.append(cosine(observations.features[pose], observations.features[right]))
        if distant in observations.features:
            far.append(cosine(observations.features[pose], observations.features[distant]))
    print(f"相邻平均相似度 {np.mean(near):.3f}，远处平均相似度 {np.mean(far):.3f}")
    assert np.mean(near) > np.mean(far) + 0.1


def test_confidence_sum_oracle():
    scene = make_room()
    observations = SceneObservations(scene, F=16)
    pose = Pose(1, 1, EAST)
    expected = sum(sorted((a.confidence for a in annotate(scene, pose)), reverse=True)[:5])
    assert observations.semantic_oracle(scene, pose) == pytest.approx(expected)
    assert all(observations.confidence_sum(p) >= 0.0 for p in observations.poses)


if __name__ == "__main__":
    print("=" * 50)
    print("特征提取模块测试")
    print("=" * 50)
    test_visible_object_geometry()
    test_wall_blocks_line_of_sight()
    test_objects_behind_are_invisible()
    test_confidence_decreases_with_distance()
    test_caption_templates()
    test_visual_features_contract()
    test_adjacent_poses_have_correlated_features()
    test_confidence_sum_oracle()
    print("所有测试通过！")
