# -*- coding: utf-8 -*-
"""
网格场景模块
实现离散导航环境：场景生成、位姿与动作、奖励计算、回合终止、目标选择和BFS最短路
"""

import zlib
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from .errors import ContractError, TargetSelectionError


SCENE_TYPES = ('bathroom', 'bedroom', 'kitchen', 'livingroom')

NORTH, EAST, SOUTH, WEST = 0, 1, 2, 3
HEADING_NAMES = ('North', 'East', 'South', 'West')
# 朝向对应的格子位移 (dx, dy)，y轴向下为正
HEADING_DELTAS = ((0, -1), (1, 0), (0, 1), (-1, 0))

MOVE_FORWARD, MOVE_BACKWARD, ROTATE_LEFT, ROTATE_RIGHT = 0, 1, 2, 3
ACTION_NAMES = ('MoveForward', 'MoveBackward', 'RotateLeft', 'RotateRight')
NUM_ACTIONS = 4

STEP_REWARD = -0.01
COMPLETION_REWARD = 10.0
DEFAULT_EPISODE_CAP = 1000
MIN_SCENE_SIZE = 6
MIN_OBJECTS = 5
MAX_EXTRA_OBJECTS = 3

TARGET_MODES = ('random', 'object_oriented', 'top_semantic')

# 各场景类型的物体类别词表，排在前面的类别出现概率更高
OBJECT_VOCABULARY = {
    'bathroom': ('sink', 'toilet', 'bathtub', 'mirror', 'towel', 'shower', 'cabinet'),
    'bedroom': ('bed', 'pillow', 'wardrobe', 'nightstand', 'lamp', 'desk', 'curtain'),
    'kitchen': ('stove', 'fridge', 'sink', 'microwave', 'kettle', 'table', 'cabinet'),
    'livingroom': ('sofa', 'television', 'armchair', 'bookshelf', 'plant', 'lamp', 'rug'),
}
CLASS_WEIGHTS = np.array([3.0, 3.0, 2.0, 2.0, 1.0, 1.0, 1.0])
ATTRIBUTE_VOCABULARY = ('white', 'black', 'wooden', 'metal', 'red', 'blue',
                        'green', 'grey', 'small', 'large')
RELATION_VOCABULARY = ('near', 'beside', 'facing')


@dataclass(frozen=True, order=True)
class Pose:
    """智能体位姿：格子列x、格子行y、朝向heading(0-3)"""
    x: int
    y: int
    heading: int

    @property
    def cell(self) -> Tuple[int, int]:
        return (self.x, self.y)

    def __str__(self):
        return f"({self.x},{self.y},{HEADING_NAMES[self.heading]})"


@dataclass(frozen=True)
class ObjectInstance:
    """场景中的物体实例"""
    object_class: str
    attributes: Tuple[str, ...]
    cell: Tuple[int, int]
    relations: Tuple[Tuple[str, int], ...] = ()


@dataclass(frozen=True)
class SceneSpec:
    """生成的房间场景，生成后不可变，可在多个训练线程间共享"""
    id: str
    scene_type: str
    width: int
    height: int
    walls: FrozenSet[Tuple[int, int]]
    objects: Tuple[ObjectInstance, ...]
    seed: int

    def in_bounds(self, cell: Tuple[int, int]) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, cell: Tuple[int, int]) -> bool:
        return self.in_bounds(cell) and cell not in self.walls

    def free_cells(self) -> List[Tuple[int, int]]:
        return [(x, y) for x in range(self.width) for y in range(self.height)
                if (x, y) not in self.walls]

    def to_dict(self) -> Dict[str, Any]:
        """转换为场景文件的JSON结构"""
        return {
            'id': self.id,
            'scene_type': self.scene_type,
            'width': self.width,
            'height': self.height,
            'walls': [[x, y] for x, y in sorted(self.walls)],
            'objects': [
                {
                    'class': obj.object_class,
                    'attributes': list(obj.attributes),
                    'cell': [obj.cell[0], obj.cell[1]],
                    'relations': [[rel, other] for rel, other in obj.relations],
                }
                for obj in self.objects
            ],
            'seed': self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SceneSpec':
        """
        从场景文件的JSON结构解析场景

        参数:
        data: to_dict() 产生的字典

        返回:
        scene: SceneSpec，不满足场景不变量时抛出 ContractError
        """
        required_keys = ['id', 'scene_type', 'width', 'height', 'walls', 'objects', 'seed']
        for key in required_keys:
            if key not in data:
                raise ContractError(f"缺少必要字段: {key}")
        unknown = set(data) - set(required_keys)
        if unknown:
            raise ContractError(f"未知字段: {', '.join(sorted(unknown))}")

        objects = []
        for item in data['objects']:
            objects.append(ObjectInstance(
                object_class=str(item['class']),
                attributes=tuple(str(a) for a in item['attributes']),
                cell=(int(item['cell'][0]), int(item['cell'][1])),
                relations=tuple((str(rel), int(other)) for rel, other in item.get('relations', [])),
            ))

        scene = cls(
            id=str(data['id']),
            scene_type=str(data['scene_type']),
            width=int(data['width']),
            height=int(data['height']),
            walls=frozenset((int(x), int(y)) for x, y in data['walls']),
            objects=tuple(objects),
            seed=int(data['seed']),
        )
        problems = check_scene_invariants(scene)
        if problems:
            raise ContractError(f"场景 {scene.id} 不合法: {'; '.join(problems)}")
        return scene


@dataclass(frozen=True)
class Target:
    """导航目标：目标位姿与选择方式"""
    pose: Pose
    mode: str


@dataclass(frozen=True)
class StepResult:
    """单步执行结果"""
    next_pose: Pose
    reward: float
    done: bool
    steps_taken: int
    success: bool


def _connected(free_cells: Iterable[Tuple[int, int]]) -> bool:
    """洪水填充检查可通行格子是否连通"""
    free = set(free_cells)
    if not free:
        return False
    start = min(free)
    seen = {start}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for dx, dy in HEADING_DELTAS:
            nb = (x + dx, y + dy)
            if nb in free and nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return len(seen) == len(free)


def check_scene_invariants(scene: SceneSpec) -> List[str]:
    """
    检查场景不变量

    返回:
    problems: 问题描述列表，为空表示场景合法
    """
    problems = []
    if scene.scene_type not in SCENE_TYPES:
        problems.append(f"未知场景类型 {scene.scene_type}")
    if scene.width < MIN_SCENE_SIZE or scene.height < MIN_SCENE_SIZE:
        problems.append(f"尺寸 {scene.width}x{scene.height} 小于最小值 {MIN_SCENE_SIZE}")
    for cell in scene.walls:
        if not scene.in_bounds(cell):
            problems.append(f"墙体 {cell} 越界")
    if not _connected(scene.free_cells()):
        problems.append("可通行区域不连通")
    if len(scene.objects) < MIN_OBJECTS:
        problems.append(f"物体数量 {len(scene.objects)} 少于 {MIN_OBJECTS}")
    for i, obj in enumerate(scene.objects):
        if not scene.is_free(obj.cell):
            problems.append(f"物体{i}位于墙体或越界格子 {obj.cell}")
        if not obj.attributes:
            problems.append(f"物体{i}缺少属性")
        for _, other in obj.relations:
            if not 0 <= other < len(scene.objects):
                problems.append(f"物体{i}的关系指向不存在的物体 {other}")
    return problems


def _sample_walls(rng: np.random.Generator, width: int, height: int) -> FrozenSet[Tuple[int, int]]:
    """随机生成隔墙段和立柱"""
    walls = set()
    segment_count = int(rng.integers(1, 3 + (width * height) // 40))
    for _ in range(segment_count):
        horizontal = bool(rng.integers(0, 2))
        length = int(rng.integers(2, max(3, min(width, height) // 2 + 1)))
        x0 = int(rng.integers(0, width))
        y0 = int(rng.integers(0, height))
        for k in range(length):
            cell = (x0 + k, y0) if horizontal else (x0, y0 + k)
            if 0 <= cell[0] < width and 0 <= cell[1] < height:
                walls.add(cell)

    pillar_count = int(rng.integers(0, (width * height) // 20 + 1))
    for _ in range(pillar_count):
        walls.add((int(rng.integers(0, width)), int(rng.integers(0, height))))
    return frozenset(walls)


def _place_objects(rng: np.random.Generator, scene_type: str,
                   free: List[Tuple[int, int]]) -> Tuple[ObjectInstance, ...]:
    """在可通行格子上放置物体并生成属性和关系"""
    vocabulary = OBJECT_VOCABULARY[scene_type]
    weights = CLASS_WEIGHTS / CLASS_WEIGHTS.sum()
    count = min(len(free), int(rng.integers(MIN_OBJECTS, MIN_OBJECTS + MAX_EXTRA_OBJECTS + 1)))
    cell_indices = rng.choice(len(free), size=count, replace=False)

    placed = []
    for idx in cell_indices:
        object_class = vocabulary[int(rng.choice(len(vocabulary), p=weights))]
        attr_count = int(rng.integers(1, 3))
        attr_indices = rng.choice(len(ATTRIBUTE_VOCABULARY), size=attr_count, replace=False)
        attributes = tuple(ATTRIBUTE_VOCABULARY[int(a)] for a in attr_indices)
        placed.append((object_class, attributes, free[int(idx)]))

    objects = []
    for i, (object_class, attributes, cell) in enumerate(placed):
        # 关系指向曼哈顿距离最近的另一个物体
        nearest = min(
            (j for j in range(len(placed)) if j != i),
            key=lambda j: (abs(placed[j][2][0] - cell[0]) + abs(placed[j][2][1] - cell[1]), j),
        )
        relation = RELATION_VOCABULARY[int(rng.integers(0, len(RELATION_VOCABULARY)))]
        objects.append(ObjectInstance(object_class, attributes, cell, ((relation, nearest),)))
    return tuple(objects)


def generate_scene(seed: int, scene_type: str, width: int, height: int,
                   scene_id: Optional[str] = None, max_attempts: int = 200) -> SceneSpec:
    """
    生成一个房间场景

    参数:
    seed: 生成种子
    scene_type: 场景类型 (bathroom/bedroom/kitchen/livingroom)
    width, height: 网格尺寸，均不小于6
    scene_id: 场景编号，缺省时由类型和种子构成

    返回:
    scene: 满足全部不变量的 SceneSpec；相同参数重复生成结果完全一致
    """
    if scene_type not in SCENE_TYPES:
        raise ContractError(f"未知场景类型: {scene_type}，可选 {', '.join(SCENE_TYPES)}")
    if width < MIN_SCENE_SIZE or height < MIN_SCENE_SIZE:
        raise ContractError(f"场景尺寸 {width}x{height} 过小，宽和高均不能小于{MIN_SCENE_SIZE}")

    rng = np.random.default_rng([int(seed), SCENE_TYPES.index(scene_type), int(width), int(height)])
    if scene_id is None:
        scene_id = f"{scene_type}-{seed}"

    for _ in range(max_attempts):
        walls = _sample_walls(rng, width, height)
        free = [(x, y) for x in range(width) for y in range(height) if (x, y) not in walls]
        if len(free) < MIN_OBJECTS or not _connected(free):
            continue
        objects = _place_objects(rng, scene_type, free)
        return SceneSpec(
            id=scene_id,
            scene_type=scene_type,
            width=int(width),
            height=int(height),
            walls=walls,
            objects=objects,
            seed=int(seed),
        )

    raise ContractError(f"场景 {scene_id} 在 {max_attempts} 次尝试内未能生成连通布局")


def generate_inventory(count_per_type: int = 5, width: int = 8, height: int = 8,
                       seed: int = 0) -> List[SceneSpec]:
    """按场景类型批量生成场景，编号形如 bathroom_00"""
    if count_per_type < 1:
        raise ContractError("每种场景类型至少生成1个场景")
    scenes = []
    for scene_type in SCENE_TYPES:
        for i in range(count_per_type):
            scenes.append(generate_scene(seed * 1000 + i, scene_type, width, height,
                                         scene_id=f"{scene_type}_{i:02d}"))
    return scenes


@lru_cache(maxsize=256)
def valid_poses(scene: SceneSpec) -> Tuple[Pose, ...]:
    """场景中全部合法位姿，按 (x, y, heading) 排序"""
    return tuple(Pose(x, y, h) for x, y in sorted(scene.free_cells()) for h in range(4))


def is_valid_pose(scene: SceneSpec, pose: Pose) -> bool:
    return 0 <= pose.heading < 4 and scene.is_free(pose.cell)


def next_pose(scene: SceneSpec, pose: Pose, action: int) -> Pose:
    """按动作计算下一位姿，撞墙或越界时位置不变"""
    if action == MOVE_FORWARD or action == MOVE_BACKWARD:
        dx, dy = HEADING_DELTAS[pose.heading]
        if action == MOVE_BACKWARD:
            dx, dy = -dx, -dy
        cell = (pose.x + dx, pose.y + dy)
        if scene.is_free(cell):
            return Pose(cell[0], cell[1], pose.heading)
        return pose
    if action == ROTATE_LEFT:
        return Pose(pose.x, pose.y, (pose.heading - 1) % 4)
    if action == ROTATE_RIGHT:
        return Pose(pose.x, pose.y, (pose.heading + 1) % 4)
    raise ContractError(f"非法动作编号: {action}")


def reached(pose: Pose, target: Pose, match_heading: bool = True) -> bool:
    if match_heading:
        return pose == target
    return pose.cell == target.cell


def step(scene: SceneSpec, pose: Pose, target: Pose, action: int, steps_taken: int,
         cap: int = DEFAULT_EPISODE_CAP, match_heading: bool = True) -> StepResult:
    """
    执行一步动作

    参数:
    scene: 场景
    pose: 当前位姿
    target: 回合目标位姿
    action: 动作编号 0-3 (前进/后退/左转/右转)
    steps_taken: 本回合已执行步数
    cap: 回合步数上限
    match_heading: 是否要求朝向也一致

    返回:
    StepResult: 每步奖励 -0.01，到达目标再加 10，到达或达到上限时 done=True
    """
    if isinstance(action, bool) or not isinstance(action, (int, np.integer)) \
            or not 0 <= int(action) < NUM_ACTIONS:
        raise ContractError(f"非法动作编号: {action}，应为 0-{NUM_ACTIONS - 1}")
    if steps_taken >= cap:
        raise ContractError(f"已执行步数 {steps_taken} 不小于回合上限 {cap}")
    if not is_valid_pose(scene, pose):
        raise ContractError(f"位姿 {pose} 在场景 {scene.id} 中不合法")

    new_pose = next_pose(scene, pose, int(action))
    steps = steps_taken + 1
    success = reached(new_pose, target, match_heading)
    reward = STEP_REWARD + COMPLETION_REWARD if success else STEP_REWARD
    done = success or steps >= cap
    return StepResult(new_pose, reward, done, steps, success)


def select_targets(scene: SceneSpec, mode: str, k: int, seed: int,
                   semantics_oracle: Optional[Callable[[SceneSpec, Pose], float]] = None,
                   exclude: Iterable[Pose] = (), view=None) -> List[Target]:
    """
    在场景中选取k个导航目标

    参数:
    scene: 场景
    mode: random(均匀随机) / object_oriented(画面中可见物体) / top_semantic(标注置信度之和最高)
    k: 目标数量
    seed: 随机种子
    semantics_oracle: top_semantic 模式使用的评分函数 (scene, pose) -> 分数
    exclude: 不参与选择的位姿（例如已用于训练的目标）
    view: 可见性参数，缺省使用 featurizer 的默认视野

    返回:
    targets: Target 列表
    """
    if mode not in TARGET_MODES:
        raise ContractError(f"未知目标模式: {mode}，可选 {', '.join(TARGET_MODES)}")
    if k < 1:
        raise ContractError("目标数量k必须大于0")

    excluded = set(exclude)
    candidates = [p for p in valid_poses(scene) if p not in excluded]
    rng = np.random.default_rng([int(seed), zlib.crc32(scene.id.encode('utf-8'))])

    if mode == 'random':
        _require_candidates(mode, len(candidates), k, scene)
        picks = rng.choice(len(candidates), size=k, replace=False)
        return [Target(candidates[int(i)], mode) for i in picks]

    if mode == 'object_oriented':
        from .featurizer import visible_objects

        sightings = {}
        for pose in candidates:
            seen = {s.index for s in visible_objects(scene, pose, view)}
            if seen:
                sightings[pose] = seen
        qualifying = [p for p in candidates if p in sightings]
        _require_candidates(mode, len(qualifying), k, scene)

        # 优先选择其可见物体也出现在其他候选画面中的位姿
        popularity = {}
        for seen in sightings.values():
            for index in seen:
                popularity[index] = popularity.get(index, 0) + 1
        scores = np.array([max(popularity[i] for i in sightings[p]) for p in qualifying], dtype=float)
        picks = rng.choice(len(qualifying), size=k, replace=False, p=scores / scores.sum())
        return [Target(qualifying[int(i)], mode) for i in picks]

    if semantics_oracle is None:
        raise ContractError("top_semantic 模式需要提供语义评分函数 semantics_oracle")
    _require_candidates(mode, len(candidates), k, scene)
    scores = [float(semantics_oracle(scene, pose)) for pose in candidates]
    order = sorted(range(len(candidates)), key=lambda i: (-scores[i], i))
    return [Target(candidates[i], mode) for i in order[:k]]


def _require_candidates(mode: str, available: int, k: int, scene: SceneSpec):
    if available < k:
        raise TargetSelectionError(
            f"目标模式 {mode}: 场景 {scene.id} 仅有 {available} 个候选位姿，少于所需的 {k} 个"
        )


def shortest_path_length(scene: SceneSpec, start: Pose, goal: Pose,
                         match_heading: bool = True) -> int:
    """
    位姿图上的最短动作数（含转向），从起点做广度优先搜索

    返回:
    length: 最少动作数，起点即目标时为0
    """
    for pose in (start, goal):
        if not is_valid_pose(scene, pose):
            raise ContractError(f"位姿 {pose} 在场景 {scene.id} 中不合法")
    if reached(start, goal, match_heading):
        return 0

    came_from = {start: None}
    queue = deque([(start, 0)])
    while queue:
        pose, dist = queue.popleft()
        for action in range(NUM_ACTIONS):
            nb = next_pose(scene, pose, action)
            if nb in came_from:
                continue
            if reached(nb, goal, match_heading):
                return dist + 1
            came_from[nb] = pose
            queue.append((nb, dist + 1))
    raise ContractError(f"场景 {scene.id} 中 {start} 无法到达 {goal}")


def distance_field(scene: SceneSpec, goal: Pose, match_heading: bool = True) -> Dict[Pose, int]:
    """
    所有位姿到目标的最短动作数
    位姿图是可逆的（前进/后退、左转/右转互为逆动作），因此从目标反向搜索即可
    """
    if not is_valid_pose(scene, goal):
        raise ContractError(f"目标位姿 {goal} 在场景 {scene.id} 中不合法")
    if match_heading:
        sources = [goal]
    else:
        sources = [Pose(goal.x, goal.y, h) for h in range(4)]

    dist = {pose: 0 for pose in sources}
    queue = deque(sources)
    while queue:
        pose = queue.popleft()
        for action in range(NUM_ACTIONS):
            nb = next_pose(scene, pose, action)
            if nb not in dist:
                dist[nb] = dist[pose] + 1
                queue.append(nb)
    return dist


def oracle_action(scene: SceneSpec, pose: Pose, field: Dict[Pose, int]) -> int:
    """沿最短路径前进的第一个动作"""
    current = field[pose]
    for action in range(NUM_ACTIONS):
        if field[next_pose(scene, pose, action)] == current - 1:
            return action
    return MOVE_FORWARD
