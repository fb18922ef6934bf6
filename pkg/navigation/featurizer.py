# -*- coding: utf-8 -*-
"""
特征提取模块
为每个位姿生成确定性的视觉特征向量和区域描述标注，替代冻结的图像特征网络与密集描述模型
"""

import math
import zlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from .gridscene import HEADING_DELTAS, HEADING_NAMES, ObjectInstance, Pose, SceneSpec, valid_poses


DEFAULT_FEATURE_DIM = 128
MAX_CAPTION_TOKENS = 12
# 特征向量二范数的允许区间
MIN_FEATURE_NORM = 0.5
MAX_FEATURE_NORM = 50.0
SMOOTH_AMPLITUDE = 4.0
SIGNATURE_SCALE = 1.5
MAX_SPATIAL_FREQUENCY = 0.6


@dataclass(frozen=True)
class ViewConfig:
    """视野参数：视场角(度)、可见距离(格)、置信度随距离的衰减斜率和下限"""
    fov_degrees: float = 90.0
    view_range: float = 5.0
    confidence_slope: float = 0.7
    min_confidence: float = 0.05


DEFAULT_VIEW = ViewConfig()


@dataclass(frozen=True)
class SightedObject:
    """视野内的物体：物体编号、实例、归一化包围框、置信度、距离"""
    index: int
    obj: ObjectInstance
    box: Tuple[float, float, float, float]
    confidence: float
    distance: float


@dataclass(frozen=True)
class Annotation:
    """一条区域描述：包围框 [x_min, y_min, x_max, y_max]、置信度、描述词序列"""
    box: Tuple[float, float, float, float]
    confidence: float
    tokens: Tuple[str, ...]

    @property
    def area(self) -> float:
        return (self.box[2] - self.box[0]) * (self.box[3] - self.box[1])


def _line_of_sight(scene: SceneSpec, start: Tuple[int, int], end: Tuple[int, int]) -> bool:
    """沿两格中心连线采样，途经格子（不含起终点）不能是墙"""
    dx = end[0] - start[0]
    dy = end[1] - start[1]
    samples = int(math.ceil(math.hypot(dx, dy) * 4))
    for i in range(1, samples):
        t = i / samples
        cell = (int(math.floor(start[0] + t * dx + 0.5)), int(math.floor(start[1] + t * dy + 0.5)))
        if cell == start or cell == end:
            continue
        if cell in scene.walls:
            return False
    return True


def visible_objects(scene: SceneSpec, pose: Pose, view: Optional[ViewConfig] = None) -> List[SightedObject]:
    """
    计算当前位姿视野内的物体

    参数:
    scene: 场景
    pose: 智能体位姿
    view: 视野参数，缺省为 90° 视场、5 格距离

    返回:
    sightings: 按物体编号排序的 SightedObject 列表，可为空
    """
    view = view or DEFAULT_VIEW
    half_fov = math.radians(view.fov_degrees) / 2.0
    tan_half = math.tan(half_fov)
    fx, fy = HEADING_DELTAS[pose.heading]
    # 右手方向：朝向顺时针旋转90°
    rx, ry = HEADING_DELTAS[(pose.heading + 1) % 4]

    sightings = []
    for index, obj in enumerate(scene.objects):
        ox = obj.cell[0] - pose.x
        oy = obj.cell[1] - pose.y
        forward = ox * fx + oy * fy
        lateral = ox * rx + oy * ry
        if forward < 1:
            continue
        if math.atan2(abs(lateral), forward) > half_fov + 1e-9:
            continue
        distance = math.hypot(forward, lateral)
        if distance > view.view_range + 1e-9:
            continue
        if not _line_of_sight(scene, pose.cell, obj.cell):
            continue

        # 横向偏移投影到归一化图像坐标，距离越近物体越大、越靠下
        u = 0.5 + 0.5 * lateral / (forward * tan_half) if tan_half > 0 else 0.5
        u = min(1.0, max(0.0, u))
        width = min(0.9, 0.8 / distance)
        v = 0.5 + 0.3 / distance
        height = min(0.9, 1.0 / distance)
        box = (
            max(0.0, u - width / 2), max(0.0, v - height / 2),
            min(1.0, u + width / 2), min(1.0, v + height / 2),
        )
        confidence = 1.0 - distance / view.view_range * view.confidence_slope
        confidence = min(1.0, max(view.min_confidence, confidence))
        sightings.append(SightedObject(index, obj, box, confidence, distance))
    return sightings


def _caption_tokens(scene: SceneSpec, index: int) -> Tuple[str, ...]:
    """按 (场景种子, 物体编号) 确定性地选择描述模板"""
    obj = scene.objects[index]
    attribute = obj.attributes[0]
    template = (scene.seed * 31 + index * 7) % 4

    if template == 1 and obj.relations:
        relation, other = obj.relations[0]
        tokens = ('the', obj.object_class, relation, 'the', scene.objects[other].object_class)
    elif template == 2:
        tokens = ('a', attribute, obj.object_class, 'in', 'the', scene.scene_type)
    elif template == 3 and len(obj.attributes) > 1:
        tokens = (obj.attributes[1], attribute, obj.object_class)
    else:
        tokens = ('a', attribute, obj.object_class)
    return tokens[:MAX_CAPTION_TOKENS]


def annotate(scene: SceneSpec, pose: Pose, view: Optional[ViewConfig] = None) -> List[Annotation]:
    """每个可见物体生成一条区域描述，包围框和置信度取自可见性计算"""
    return [
        Annotation(sighting.box, sighting.confidence, _caption_tokens(scene, sighting.index))
        for sighting in visible_objects(scene, pose, view)
    ]


@lru_cache(maxsize=16)
def _projection_basis(feature_seed: int, F: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """低频随机投影的空间频率和各朝向的相位"""
    rng = np.random.default_rng([int(feature_seed), int(F), 2048])
    wx = rng.uniform(-MAX_SPATIAL_FREQUENCY, MAX_SPATIAL_FREQUENCY, size=F)
    wy = rng.uniform(-MAX_SPATIAL_FREQUENCY, MAX_SPATIAL_FREQUENCY, size=F)
    heading_phase = rng.uniform(0.0, 2.0 * np.pi, size=(4, F))
    return wx, wy, heading_phase


@lru_cache(maxsize=256)
def _class_signature(object_class: str, feature_seed: int, F: int) -> np.ndarray:
    rng = np.random.default_rng([int(feature_seed), int(F), zlib.crc32(object_class.encode('utf-8'))])
    signature = rng.standard_normal(F)
    return signature / np.linalg.norm(signature)


def visual_features(scene: SceneSpec, pose: Pose, feature_seed: int = 0,
                    F: int = DEFAULT_FEATURE_DIM, view: Optional[ViewConfig] = None) -> np.ndarray:
    """
    生成位姿的视觉特征向量

    参数:
    scene: 场景
    pose: 位姿
    feature_seed: 特征种子
    F: 特征维度（默认128，2048为原始规模）

    返回:
    values: 长度为F的向量 = 空间平滑分量 + 可见物体类别签名（按置信度缩放）
    """
    wx, wy, heading_phase = _projection_basis(feature_seed, F)
    scene_rng = np.random.default_rng([int(feature_seed), zlib.crc32(scene.id.encode('utf-8'))])
    scene_phase = scene_rng.uniform(0.0, 2.0 * np.pi, size=F)

    smooth = np.cos(wx * pose.x + wy * pose.y + heading_phase[pose.heading] + scene_phase)
    values = SMOOTH_AMPLITUDE / math.sqrt(F) * smooth
    for sighting in visible_objects(scene, pose, view):
        values = values + SIGNATURE_SCALE * sighting.confidence * \
            _class_signature(sighting.obj.object_class, feature_seed, F)

    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        values = np.full(F, MIN_FEATURE_NORM / math.sqrt(F))
    elif norm < MIN_FEATURE_NORM or norm > MAX_FEATURE_NORM:
        values = values * (min(MAX_FEATURE_NORM, max(MIN_FEATURE_NORM, norm)) / norm)
    return values


def format_annotation_line(scene: SceneSpec, pose: Pose, annotations: List[Annotation]) -> str:
    """标注导出行：场景编号、x、y、朝向，之后每条标注为 conf:x_min,y_min,x_max,y_max:词序列"""
    fields = [scene.id, str(pose.x), str(pose.y), HEADING_NAMES[pose.heading]]
    for ann in annotations:
        box = ','.join(f"{v:.4f}" for v in ann.box)
        fields.append(f"{ann.confidence:.4f}:{box}:{' '.join(ann.tokens)}")
    return '\t'.join(fields)


class SceneObservations:
    """
    场景观测缓存
    预先计算场景全部位姿的视觉特征和区域描述，生成后只读，可在线程间共享
    """

    def __init__(self, scene: SceneSpec, feature_seed: int = 0, F: int = DEFAULT_FEATURE_DIM,
                 view: Optional[ViewConfig] = None):
        self.scene = scene
        self.feature_seed = feature_seed
        self.F = F
        self.view = view or DEFAULT_VIEW
        self.poses = valid_poses(scene)
        self.features: Dict[Pose, np.ndarray] = {}
        self.annotations: Dict[Pose, List[Annotation]] = {}
        for pose in self.poses:
            feature = visual_features(scene, pose, feature_seed, F, self.view)
            feature.flags.writeable = False
            self.features[pose] = feature
            self.annotations[pose] = annotate(scene, pose, self.view)

    def confidence_sum(self, pose: Pose, top: int = 5) -> float:
        """位姿画面中置信度最高的top条标注的置信度之和"""
        confidences = sorted((a.confidence for a in self.annotations[pose]), reverse=True)
        return float(sum(confidences[:top]))

    def semantic_oracle(self, scene: SceneSpec, pose: Pose) -> float:
        """供 top_semantic 目标选择使用的评分函数"""
        return self.confidence_sum(pose)
