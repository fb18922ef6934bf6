# -*- coding: utf-8 -*-
"""
评估模块
贪心策略/随机策略/最短路策略的回合评估，T1（已见场景的新目标）与 T2（未见场景）对比实验，
单目标收敛实验和目标选择方式对比
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .a3c import SceneContext, TrainConfig, create_store, train
from .errors import ConfigError, ContractError
from .featurizer import SceneObservations
from .gridscene import (SCENE_TYPES, Pose, SceneSpec, Target, distance_field, generate_inventory,
                        is_valid_pose, oracle_action, reached, select_targets, step)
from .policynet import (FrameHistory, NetworkParams, StateInputs, forward_state, greedy_action,
                        sample_action)
from .semantics import AutoencoderConfig, SentenceEncoder, build_corpus, semantic_width, train_autoencoder


POLICIES = ('greedy', 'sample', 'random', 'oracle')
REPORT_COLUMNS = ['scene_type', 'model', 'el', 'success_pct']

# 行名 -> (网络类型, 训练目标模式)，目标模式为 None 时使用训练参数中的 target_mode
MODEL_ROWS = {
    'sn': ('sn', None),
    'ssn': ('ssn', None),
    'ssn_s': ('ssn', 'top_semantic'),
}
MODEL_LABELS = {'random': 'Random', 'sn': 'SN', 'ssn': 'SSN', 'ssn_s': 'SSN_S'}
REGIME_EVAL_EVERY = 2_000


@dataclass(frozen=True)
class EpisodeResult:
    scene_id: str
    scene_type: str
    target_idx: int
    start: Pose
    length: int
    success: bool


@dataclass
class EvalReport:
    """
    评估报告
    summary: 场景类型 -> {'el': 平均回合长度, 'success_pct': 成功率(%), 'episodes': 回合数}
    per_target: 每个 (场景, 目标) 的统计
    """
    summary: Dict[str, Dict[str, float]]
    per_target: List[Dict[str, Any]]
    episodes: List[EpisodeResult]
    config: Dict[str, Any]

    def mean_success(self) -> float:
        """全部回合的成功率(%)"""
        total = sum(row['episodes'] for row in self.summary.values())
        hits = sum(row['success_pct'] * row['episodes'] / 100.0 for row in self.summary.values())
        return 100.0 * hits / total if total else 0.0

    def mean_length(self) -> float:
        return float(np.mean([e.length for e in self.episodes])) if self.episodes else 0.0

    def to_frame(self, model: str) -> pd.DataFrame:
        rows = [{'scene_type': scene_type, 'model': model, 'el': row['el'], 'success_pct': row['success_pct']}
                for scene_type, row in self.summary.items()]
        return pd.DataFrame(rows, columns=REPORT_COLUMNS)


class _Rollout:
    """单个 (场景, 目标) 的评估执行器"""

    def __init__(self, context: SceneContext, target: Target, target_idx: int, scene_idx: int,
                 params: Optional[NetworkParams], policy: str, cap: int, seed: int, match_heading: bool):
        self.context = context
        self.target = target
        self.target_idx = target_idx
        self.scene_idx = scene_idx
        self.params = params
        self.policy = policy
        self.cap = cap
        self.seed = seed
        self.match_heading = match_heading
        self.field = distance_field(context.scene, target.pose, match_heading) if policy == 'oracle' else None

    def run_episode(self, episode: int) -> EpisodeResult:
        rng = np.random.default_rng([int(self.seed), self.scene_idx, self.target_idx, episode])
        ctx = self.context
        scene = ctx.scene
        pose = ctx.random_start(self.target.pose, rng, self.match_heading)
        start = pose
        history = FrameHistory()
        history.reset(ctx.feature(pose), ctx.semantic(pose))
        target_feature = ctx.feature(self.target.pose)
        target_semantic = ctx.semantic(self.target.pose)

        steps = 0
        while True:
            if self.policy == 'random':
                action = int(rng.integers(0, 4))
            elif self.policy == 'oracle':
                action = oracle_action(scene, pose, self.field)
            else:
                state = StateInputs(history.features(), target_feature, scene.scene_type,
                                    history.semantics(), target_semantic)
                output = forward_state(self.params, state)
                action = greedy_action(output) if self.policy == 'greedy' else sample_action(output, rng)
            result = step(scene, pose, self.target.pose, action, steps, self.cap, self.match_heading)
            pose = result.next_pose
            steps = result.steps_taken
            history.push(ctx.feature(pose), ctx.semantic(pose))
            if result.done:
                return EpisodeResult(scene.id, scene.scene_type, self.target_idx, start, steps, result.success)

    def run(self, episodes: int) -> List[EpisodeResult]:
        return [self.run_episode(e) for e in range(episodes)]


def evaluate(params: Optional[NetworkParams], scenes: Sequence[SceneSpec], targets: Dict[str, List[Target]],
             episodes_per_target: int = 100, cap: int = 1000, encoder: Optional[SentenceEncoder] = None,
             policy: str = 'greedy', seed: int = 0, feature_seed: int = 0, match_heading: bool = True,
             workers: int = 1, contexts: Optional[Dict[str, SceneContext]] = None) -> EvalReport:
    """
    评估策略

    参数:
    params: 网络参数（greedy 策略必需，random/oracle 可为 None）
    scenes: 评估场景
    targets: 场景编号 -> 目标列表
    episodes_per_target: 每个目标的回合数
    cap: 回合步数上限，超出视为失败，回合长度记为 cap
    encoder: SSN 所需的句子编码器
    policy: greedy(取概率最大动作) / sample(按策略概率采样) / random(均匀随机) / oracle(BFS最短路)
    seed: 评估种子，第e个回合使用 [seed, 场景序号, 目标序号, e]
    workers: 并发评估的线程数，结果与线程数无关

    返回:
    EvalReport
    """
    if policy not in POLICIES:
        raise ContractError(f"未知评估策略: {policy}，可选 {', '.join(POLICIES)}")
    if episodes_per_target < 1 or cap < 1:
        raise ContractError("每个目标的回合数和步数上限都必须不小于1")

    F = 1
    if policy in ('greedy', 'sample'):
        if params is None:
            raise ContractError(f"{policy} 评估需要网络参数")
        F = params.F
        if params.is_semantic:
            if encoder is None:
                raise ConfigError("SSN 网络评估需要句子编码器")
            if semantic_width(encoder.sentence_dim) != params.S_f:
                raise ConfigError(f"语义维度不匹配: 网络 S_f={params.S_f}，"
                                  f"编码器 D_s={encoder.sentence_dim} 对应 {semantic_width(encoder.sentence_dim)}")
        else:
            encoder = None
    else:
        encoder = None

    rollouts = []
    for scene_idx, scene in enumerate(scenes):
        scene_targets = targets.get(scene.id, [])
        if not scene_targets:
            continue
        for target in scene_targets:
            if not is_valid_pose(scene, target.pose):
                raise ContractError(f"目标 {target.pose} 在场景 {scene.id} 中不合法")
        if contexts is not None and scene.id in contexts and policy in ('greedy', 'sample'):
            context = contexts[scene.id]
        else:
            context = SceneContext(scene, feature_seed, F, encoder)
        for target_idx, target in enumerate(scene_targets):
            rollouts.append(_Rollout(context, target, target_idx, scene_idx, params, policy, cap, seed,
                                     match_heading))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(lambda r: r.run(episodes_per_target), rollouts))
    else:
        batches = [r.run(episodes_per_target) for r in rollouts]

    episodes = [e for batch in batches for e in batch]
    summary: Dict[str, Dict[str, float]] = {}
    for scene_type in SCENE_TYPES:
        chosen = [e for e in episodes if e.scene_type == scene_type]
        if chosen:
            summary[scene_type] = _aggregate(chosen)

    per_target = []
    for batch in batches:
        if batch:
            row = {'scene_id': batch[0].scene_id, 'scene_type': batch[0].scene_type,
                   'target_idx': batch[0].target_idx}
            row.update(_aggregate(batch))
            per_target.append(row)

    config = {'policy': policy, 'episodes_per_target': episodes_per_target, 'cap': cap, 'seed': seed,
              'feature_seed': feature_seed, 'match_heading': match_heading}
    return EvalReport(summary, per_target, episodes, config)


def _aggregate(episodes: Sequence[EpisodeResult]) -> Dict[str, float]:
    total = len(episodes)
    hits = sum(1 for e in episodes if e.success)
    return {
        'el': float(sum(e.length for e in episodes)) / total,
        'success_pct': 100.0 * hits / total,
        'episodes': total,
    }


@dataclass
class ExperimentConfig:
    """T1/T2 实验参数（桌面规模）"""
    scenes_per_type: int = 5
    width: int = 16
    height: int = 16
    scene_seed: int = 0
    targets_per_scene: int = 5
    eval_targets: int = 5
    eval_target_mode: str = 'object_oriented'
    episodes_per_target: int = 100
    cap: int = 1000
    t1_frames: int = 500_000
    t2_frames: int = 1_000_000
    seed: int = 0
    eval_seed: int = 1234
    eval_workers: int = 4
    train: TrainConfig = field(default_factory=TrainConfig)
    autoencoder: AutoencoderConfig = field(default_factory=AutoencoderConfig)

    def validate(self):
        self.train.validate()
        if self.scenes_per_type < 1:
            raise ConfigError("scenes_per_type 必须不小于1")
        if self.targets_per_scene < 1 or self.eval_targets < 1:
            raise ConfigError("训练目标数和评估目标数都必须不小于1")
        if self.episodes_per_target < 1 or self.cap < 1:
            raise ConfigError("episodes_per_target 和 cap 都必须不小于1")


class ComparisonTable:
    """模型对比表：行为模型，列为场景类型的 E.L. 与成功率"""

    def __init__(self, task: str, scene_types: Sequence[str] = SCENE_TYPES):
        self.task = task
        self.scene_types = tuple(scene_types)
        self.rows: List[Tuple[str, EvalReport]] = []
        self.held_out: List[str] = []

    def add(self, model: str, report: EvalReport):
        self.rows.append((model, report))

    def models(self) -> List[str]:
        return [model for model, _ in self.rows]

    def report(self, model: str) -> EvalReport:
        for name, report in self.rows:
            if name == model:
                return report
        raise KeyError(model)

    def mean_success(self, model: str) -> float:
        return self.report(model).mean_success()

    def to_frame(self) -> pd.DataFrame:
        frames = [report.to_frame(model) for model, report in self.rows]
        if not frames:
            return pd.DataFrame(columns=REPORT_COLUMNS)
        return pd.concat(frames, ignore_index=True)

    def render_text(self) -> str:
        """对齐的纯文本表格：每种场景类型占 E.L. 和 % 两列"""
        label_width = max([len('Model')] + [len(m) for m in self.models()])
        cell = 9
        header_1 = ' ' * label_width + ' |' + '|'.join(f"{t:^{2 * cell + 1}}" for t in self.scene_types) + '|'
        header_2 = f"{'Model':<{label_width}} |" + '|'.join(
            f"{'E.L.':>{cell}} {'%':>{cell}}" for _ in self.scene_types) + '|'
        rule = '-' * len(header_2)
        lines = [f"Task {self.task.upper()}", rule, header_1, header_2, rule]
        for model, report in self.rows:
            cells = []
            for scene_type in self.scene_types:
                row = report.summary.get(scene_type)
                if row is None:
                    cells.append(f"{'-':>{cell}} {'-':>{cell}}")
                else:
                    cells.append(f"{round(row['el']):>{cell}d} {row['success_pct']:>{cell}.1f}")
            lines.append(f"{model:<{label_width}} |" + '|'.join(cells) + '|')
        lines.append(rule)
        if self.held_out:
            lines.append("held-out: " + ', '.join(self.held_out))
        return '\n'.join(lines) + '\n'


def _row_settings(row: str, config: ExperimentConfig,
                  overrides: Dict[str, Dict[str, Any]]) -> Tuple[TrainConfig, str]:
    row_overrides = dict(overrides.get(row, {}))
    eval_policy = row_overrides.pop('eval_policy', 'greedy')
    if eval_policy not in ('greedy', 'sample'):
        raise ConfigError(f"行 {row} 的 eval_policy={eval_policy} 应为 greedy/sample")
    if row in MODEL_ROWS:
        variant, mode = MODEL_ROWS[row]
        row_overrides.setdefault('variant', variant)
        if mode is not None:
            row_overrides.setdefault('target_mode', mode)
    elif 'variant' not in row_overrides:
        raise ConfigError(f"行 {row} 不是已知模型，必须在覆盖参数中给出 variant")
    return config.train.replace(**row_overrides), eval_policy


def split_held_out(scenes: Sequence[SceneSpec]) -> Tuple[List[SceneSpec], List[SceneSpec]]:
    """每种场景类型的最后一个场景留出，返回 (其余场景, 留出场景)"""
    held = []
    for scene_type in SCENE_TYPES:
        of_type = [s for s in scenes if s.scene_type == scene_type]
        if of_type:
            held.append(of_type[-1])
    held_ids = {s.id for s in held}
    return [s for s in scenes if s.id not in held_ids], held


def training_targets(scenes: Sequence[SceneSpec], mode: str, k: int, seed: int,
                     cache: Optional[Dict[str, SceneObservations]] = None) -> Dict[str, List[Target]]:
    """为每个场景选取k个训练目标，top_semantic 模式按标注置信度之和排序"""
    cache = {} if cache is None else cache
    targets = {}
    for scene in scenes:
        oracle = None
        if mode == 'top_semantic':
            observations = cache.get(scene.id)
            if observations is None:
                observations = SceneObservations(scene)
                cache[scene.id] = observations
            oracle = observations.semantic_oracle
        targets[scene.id] = select_targets(scene, mode, k, seed, semantics_oracle=oracle)
    return targets


def _run_rows(task: str, config: ExperimentConfig, rows: Sequence[str], train_scenes: List[SceneSpec],
              eval_scenes: List[SceneSpec], eval_targets_fn, frames: int,
              overrides: Dict[str, Dict[str, Any]], verbose: bool) -> ComparisonTable:
    table = ComparisonTable(task)
    observation_cache: Dict[str, SceneObservations] = {}
    encoder = None
    train_targets_by_mode: Dict[str, Dict[str, List[Target]]] = {}
    trained: List[Tuple[str, TrainConfig, Optional[NetworkParams], str]] = []

    for row in rows:
        if row == 'random':
            trained.append((row, config.train, None, 'random'))
            continue
        train_config, eval_policy = _row_settings(row, config, overrides)
        train_config = train_config.replace(total_frames=frames)
        mode = train_config.target_mode
        if mode not in train_targets_by_mode:
            train_targets_by_mode[mode] = training_targets(
                train_scenes, mode, config.targets_per_scene, config.seed, observation_cache)
        if train_config.variant == 'ssn' and encoder is None:
            corpus = build_corpus(train_scenes)
            ae = config.autoencoder
            encoder = train_autoencoder(corpus, ae.sentence_dim, ae.epochs, ae.lr, ae.seed, ae.hidden)
            if verbose:
                stats = corpus.stats()
                print(f"✓ 语料库: {stats['sentences']} 条语句，词表 {stats['vocabulary']} 个词")
        if verbose:
            print(f"训练 {MODEL_LABELS.get(row, row)} ({train_config.variant}, {mode} 目标)...")
        params, _ = train(train_config, train_scenes, train_targets_by_mode[mode],
                          encoder=encoder if train_config.variant == 'ssn' else None, verbose=verbose)
        trained.append((row, train_config, params, eval_policy))

    excluded: Dict[str, set] = {}
    for targets in train_targets_by_mode.values():
        for scene_id, scene_targets in targets.items():
            excluded.setdefault(scene_id, set()).update(t.pose for t in scene_targets)
    eval_targets = eval_targets_fn(excluded)

    for row, train_config, params, policy in trained:
        report = evaluate(params, eval_scenes, eval_targets, config.episodes_per_target, config.cap,
                          encoder=encoder, policy=policy, seed=config.eval_seed,
                          feature_seed=train_config.feature_seed, match_heading=train_config.match_heading,
                          workers=config.eval_workers)
        table.add(MODEL_LABELS.get(row, row), report)
        if verbose:
            print(f"✓ {MODEL_LABELS.get(row, row)}: 成功率 {report.mean_success():.1f}%")
    return table


def run_t1(config: Optional[ExperimentConfig] = None, rows: Sequence[str] = ('random', 'sn', 'ssn', 'ssn_s'),
           frames_budget: Optional[int] = None, overrides: Optional[Dict[str, Dict[str, Any]]] = None,
           verbose: bool = False) -> ComparisonTable:
    """
    T1：已见场景中的新目标
    所有场景参与训练，每种场景类型取最后一个场景，在其中选取与训练目标不重合的新目标进行评估

    参数:
    config: 实验参数
    rows: 对比的模型行，random/sn/ssn/ssn_s 或在 overrides 中定义了 variant 的自定义行
    frames_budget: 每个模型的训练帧数，缺省为 config.t1_frames
    overrides: 行名 -> TrainConfig 覆盖参数（例如 {'sn_lr0': {'variant': 'sn', 'lr': 0.0}}），
               另可给出 eval_policy=greedy/sample 指定该行的评估动作选择方式
    """
    config = config or ExperimentConfig()
    config.validate()
    scenes = generate_inventory(config.scenes_per_type, config.width, config.height, config.scene_seed)
    held = split_held_out(scenes)[1]

    def fresh_targets(excluded):
        return {scene.id: select_targets(scene, config.eval_target_mode, config.eval_targets, config.eval_seed,
                                         exclude=excluded.get(scene.id, ()))
                for scene in held}

    table = _run_rows('t1', config, rows, scenes, held, fresh_targets,
                      frames_budget or config.t1_frames, overrides or {}, verbose)
    table.held_out = [scene.id for scene in held]
    return table


def run_t2(config: Optional[ExperimentConfig] = None, rows: Sequence[str] = ('random', 'sn', 'ssn', 'ssn_s'),
           frames_budget: Optional[int] = None, overrides: Optional[Dict[str, Dict[str, Any]]] = None,
           verbose: bool = False) -> ComparisonTable:
    """
    T2：未见场景
    每种场景类型留出最后一个场景不参与训练（包括语料库），在留出场景上评估
    """
    config = config or ExperimentConfig()
    config.validate()
    if config.scenes_per_type < 2:
        raise ConfigError("T2 每种场景类型至少需要2个场景（1个留出评估）")
    scenes = generate_inventory(config.scenes_per_type, config.width, config.height, config.scene_seed)
    train_scenes, held = split_held_out(scenes)
    held_ids = {s.id for s in held}

    def held_targets(_excluded):
        return {scene.id: select_targets(scene, config.eval_target_mode, config.eval_targets, config.eval_seed)
                for scene in held}

    if verbose:
        print(f"留出场景: {', '.join(sorted(held_ids))}")
    table = _run_rows('t2', config, rows, train_scenes, held, held_targets,
                      frames_budget or config.t2_frames, overrides or {}, verbose)
    table.held_out = [scene.id for scene in held]
    return table


@dataclass
class ConvergenceResult:
    """单目标收敛曲线：每个检查点的累计帧数、成功率(%)、平均回合长度"""
    frames: List[int]
    success_pct: List[float]
    mean_length: List[float]
    shortest_mean: float
    frames_to_threshold: Optional[int]
    params: Optional[NetworkParams] = None


def run_convergence(scene: SceneSpec, target: Target, config: TrainConfig, eval_every: int = 20_000,
                    episodes: int = 100, cap: int = 1000, threshold: float = 90.0,
                    stop_at_threshold: bool = True, eval_seed: int = 1234,
                    verbose: bool = False) -> ConvergenceResult:
    """
    单场景单目标训练，每 eval_every 帧做一次贪心评估

    返回:
    ConvergenceResult，frames_to_threshold 为首次成功率不低于 threshold 的帧数，未达到时为 None
    """
    if config.variant != 'sn':
        raise ConfigError("收敛实验只支持 SN 网络")
    if eval_every < config.t_max:
        raise ConfigError(f"eval_every={eval_every} 不能小于 t_max={config.t_max}")
    config.validate()

    store = create_store(config)
    targets = {scene.id: [target]}
    field_ = distance_field(scene, target.pose, config.match_heading)
    context = SceneContext(scene, config.feature_seed, config.feature_dim)
    starts = [p for p in context.poses if not reached(p, target.pose, config.match_heading)]
    shortest_mean = float(np.mean([field_[p] for p in starts]))

    result = ConvergenceResult([], [], [], shortest_mean, None)
    chunk = 0
    while store.frames < config.total_frames:
        budget = min(config.total_frames, store.frames + eval_every)
        chunk_config = config.replace(total_frames=budget, seed=config.seed + 100_003 * chunk)
        train(chunk_config, [scene], targets, store=store)
        chunk += 1
        params = store.snapshot()
        report = evaluate(params, [scene], targets, episodes, cap, seed=eval_seed,
                          feature_seed=config.feature_seed, match_heading=config.match_heading,
                          contexts={scene.id: context})
        success = report.mean_success()
        result.frames.append(store.frames)
        result.success_pct.append(success)
        result.mean_length.append(report.mean_length())
        result.params = params
        if verbose:
            print(f"  帧数 {store.frames}: 成功率 {success:.1f}%，平均回合长度 {report.mean_length():.1f}")
        if success >= threshold and result.frames_to_threshold is None:
            result.frames_to_threshold = store.frames
            if stop_at_threshold:
                break
    return result


@dataclass
class RegimeComparison:
    """两种训练目标选择方式达到成功率阈值所需帧数（未达到记为 inf）"""
    seeds: List[int]
    object_oriented: List[float]
    random: List[float]
    eval_every: int = REGIME_EVAL_EVERY

    @property
    def object_median(self) -> float:
        return float(np.median(self.object_oriented))

    @property
    def random_median(self) -> float:
        return float(np.median(self.random))

    @property
    def object_faster(self) -> bool:
        """物体导向目标的帧数中位数是否严格小于随机目标"""
        return self.object_median < self.random_median

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'seed': self.seeds, 'object_oriented': self.object_oriented,
                             'random': self.random})

    def summary_frame(self) -> pd.DataFrame:
        """每种目标选择方式一行：帧数中位数、达到阈值的种子数、评估间隔"""
        rows = []
        for mode, values in (('object_oriented', self.object_oriented), ('random', self.random)):
            rows.append({'mode': mode, 'median_frames': float(np.median(values)),
                         'reached': sum(1 for v in values if not math.isinf(v)), 'seeds': len(values),
                         'eval_every': self.eval_every})
        return pd.DataFrame(rows)


def compare_target_regimes(scene: SceneSpec, config: TrainConfig, seeds: Sequence[int] = (0, 1, 2, 3, 4),
                           eval_every: int = REGIME_EVAL_EVERY, episodes: int = 100, cap: int = 1000,
                           threshold: float = 90.0, verbose: bool = False) -> RegimeComparison:
    """
    对每个种子分别用物体导向目标和随机目标训练，比较收敛所需帧数

    参数:
    scene: 训练场景
    config: 训练参数，total_frames 为每次训练的帧预算
    seeds: 种子列表，每个种子训练两次
    eval_every: 评估间隔（帧），决定帧数的分辨率

    返回:
    RegimeComparison
    """
    comparison = RegimeComparison(list(seeds), [], [], eval_every)
    for seed in seeds:
        for mode, bucket in (('object_oriented', comparison.object_oriented), ('random', comparison.random)):
            target = select_targets(scene, mode, 1, seed)[0]
            run = run_convergence(scene, target, config.replace(seed=seed, target_mode=mode), eval_every,
                                  episodes, cap, threshold, eval_seed=seed)
            frames = run.frames_to_threshold
            bucket.append(math.inf if frames is None else float(frames))
            if verbose:
                shown = '未达到' if frames is None else str(frames)
                print(f"  种子 {seed} {mode}: {shown}")
    return comparison


def experiment_summary(config: ExperimentConfig) -> Dict[str, Any]:
    """实验参数的扁平字典，用于写入报告"""
    values = asdict(config)
    flat = {k: v for k, v in values.items() if not isinstance(v, dict)}
    flat.update({f"train.{k}": v for k, v in values['train'].items()})
    flat.update({f"autoencoder.{k}": v for k, v in values['autoencoder'].items()})
    return flat
