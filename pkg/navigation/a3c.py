# -*- coding: utf-8 -*-
"""
A3C异步训练模块
多个训练线程共享一组网络参数与 RMSProp 累积量，各自在分配到的 (场景, 目标) 上采样轨迹并异步更新
"""

import math
import os
import threading
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import ConfigError, ContractError, NumericError, TrainingError
from .featurizer import DEFAULT_FEATURE_DIM, SceneObservations
from .gridscene import DEFAULT_EPISODE_CAP, TARGET_MODES, Pose, SceneSpec, Target, reached, step, valid_poses
from .policynet import (DEFAULT_EMBED_DIM, VARIANTS, FrameHistory, NetworkParams, StateInputs, Trajectory,
                        TrajectoryStep, a3c_loss_and_grads, forward_state, init_params, sample_action)
from .semantics import DEFAULT_SENTENCE_DIM, SemanticTable, SentenceEncoder, semantic_width


REWARD_LOG_COLUMNS = ['frames', 'scene_id', 'target_idx', 'episode_return', 'episode_len', 'success']
FLUSH_EVERY = 100


@dataclass
class TrainConfig:
    """训练参数，缺省值为桌面规模"""
    workers: int = 4
    total_frames: int = 500_000
    t_max: int = 5
    gamma: float = 0.99
    beta: float = 0.01
    value_coef: float = 0.5
    lr: float = 7e-4
    rmsprop_decay: float = 0.99
    rmsprop_eps: float = 1e-8
    variant: str = 'sn'
    target_mode: str = 'object_oriented'
    seed: int = 0
    episode_cap: int = DEFAULT_EPISODE_CAP
    feature_dim: int = DEFAULT_FEATURE_DIM
    embed_dim: int = DEFAULT_EMBED_DIM
    sentence_dim: int = DEFAULT_SENTENCE_DIM
    feature_seed: int = 0
    max_grad_norm: float = 40.0
    match_heading: bool = True
    report_every: int = 1000

    def validate(self):
        """检查参数取值，不合法时抛出 ConfigError 并列出全部问题"""
        problems = []
        if self.workers < 1:
            problems.append(f"workers={self.workers} 必须不小于1")
        if self.t_max < 1:
            problems.append(f"t_max={self.t_max} 必须不小于1")
        if self.total_frames < self.t_max:
            problems.append(f"total_frames={self.total_frames} 不能小于 t_max={self.t_max}")
        if not 0.0 <= self.gamma <= 1.0:
            problems.append(f"gamma={self.gamma} 必须在 [0, 1] 范围内")
        for name in ('beta', 'value_coef', 'lr', 'max_grad_norm'):
            if getattr(self, name) < 0:
                problems.append(f"{name}={getattr(self, name)} 不能为负数")
        if not 0.0 <= self.rmsprop_decay < 1.0:
            problems.append(f"rmsprop_decay={self.rmsprop_decay} 必须在 [0, 1) 范围内")
        if self.rmsprop_eps <= 0:
            problems.append(f"rmsprop_eps={self.rmsprop_eps} 必须为正数")
        if self.variant not in VARIANTS:
            problems.append(f"variant={self.variant} 应为 {'/'.join(VARIANTS)}")
        if self.target_mode not in TARGET_MODES:
            problems.append(f"target_mode={self.target_mode} 应为 {'/'.join(TARGET_MODES)}")
        if self.episode_cap < 1:
            problems.append(f"episode_cap={self.episode_cap} 必须不小于1")
        for name in ('feature_dim', 'embed_dim', 'sentence_dim'):
            if getattr(self, name) < 1:
                problems.append(f"{name}={getattr(self, name)} 必须为正整数")
        if problems:
            raise ConfigError("训练参数错误: " + "; ".join(problems))

    def replace(self, **overrides) -> 'TrainConfig':
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"未知训练参数: {', '.join(sorted(unknown))}")
        values = asdict(self)
        values.update(overrides)
        return TrainConfig(**values)


class SharedStore:
    """
    共享参数存储
    参数、RMSProp 累积量和帧计数都由同一把锁保护：快照总是来自同一次更新之后，更新对其他线程整体可见
    """

    def __init__(self, params: NetworkParams):
        self.params = params
        self.accumulators = params.zeros_like()
        self.frames = 0
        self.generation = 0
        self.episode_returns: Dict[Tuple[str, int], List[float]] = {}
        self._lock = threading.Lock()

    def snapshot(self) -> NetworkParams:
        with self._lock:
            return self.params.copy()

    def add_frames(self, count: int) -> int:
        if count < 0:
            raise ContractError("帧计数只能增加")
        with self._lock:
            self.frames += count
            return self.frames

    def record_return(self, scene_id: str, target_idx: int, episode_return: float):
        with self._lock:
            self.episode_returns.setdefault((scene_id, target_idx), []).append(episode_return)


def create_store(config: TrainConfig, semantic_dim: int = 0) -> SharedStore:
    """按训练参数初始化网络并包装为共享存储"""
    params = init_params(config.variant, config.feature_dim, config.embed_dim, semantic_dim, config.seed)
    return SharedStore(params)


def apply_update(store: SharedStore, grads: NetworkParams, lr: float, decay: float = 0.99, eps: float = 1e-8):
    """
    共享 RMSProp 更新

    参数:
    store: 共享存储
    grads: 与参数同结构的梯度
    lr: 学习率，为0时参数保持不变（累积量照常更新）
    decay: 累积量衰减系数
    eps: 分母稳定项

    acc ← decay·acc + (1−decay)·g²;  p ← p − lr·g/(sqrt(acc)+eps)
    """
    if not grads.all_finite():
        raise NumericError("梯度包含非有限值，拒绝更新")

    with store._lock:
        new_acc = {}
        new_params = {}
        for name, g in grads.tensors.items():
            acc = decay * store.accumulators.tensors[name] + (1.0 - decay) * g * g
            new_acc[name] = acc
            if lr != 0.0:
                new_params[name] = store.params.tensors[name] - lr * g / (np.sqrt(acc) + eps)
        for name, value in new_params.items():
            if not np.all(np.isfinite(value)):
                raise NumericError(f"参数 {name} 更新后出现非有限值 (lr={lr})")

        for name, acc in new_acc.items():
            store.accumulators.tensors[name] = acc
        for name, value in new_params.items():
            store.params.tensors[name] = value
        store.generation += 1


def clip_gradients(grads: NetworkParams, max_norm: float) -> float:
    """按全局二范数裁剪梯度，返回裁剪前的范数；max_norm 为0时不裁剪"""
    norm = grads.global_norm()
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for name in grads.tensors:
            grads.tensors[name] = grads.tensors[name] * scale
    return norm


@dataclass(frozen=True)
class RewardRecord:
    """一个已结束回合的记录；训练结束时未完成的回合以 success=False 记录"""
    frames: int
    scene_id: str
    target_idx: int
    episode_return: float
    episode_len: int
    success: bool


class RewardLog:
    """线程安全的奖励日志，给定路径时每100个回合追加写入一次CSV"""

    def __init__(self, path: Optional[str] = None, flush_every: int = FLUSH_EVERY):
        self.path = path
        self.flush_every = flush_every
        self.records: List[RewardRecord] = []
        self._pending: List[RewardRecord] = []
        self._header_written = False
        self._lock = threading.Lock()
        if path is not None:
            directory = os.path.dirname(os.path.abspath(path))
            os.makedirs(directory, exist_ok=True)
            if os.path.exists(path):
                os.remove(path)

    def __len__(self):
        return len(self.records)

    def append(self, record: RewardRecord):
        with self._lock:
            self.records.append(record)
            self._pending.append(record)
            if self.path is not None and len(self._pending) >= self.flush_every:
                self._flush_locked()

    def flush(self):
        with self._lock:
            self._flush_locked()

    def _flush_locked(self):
        if self.path is None:
            return
        if not self._pending and self._header_written:
            return
        frame = _records_frame(self._pending)
        frame.to_csv(self.path, mode='a', header=not self._header_written, index=False)
        self._header_written = True
        self._pending = []

    def to_frame(self) -> pd.DataFrame:
        with self._lock:
            return _records_frame(self.records)

    def total_length(self) -> int:
        return sum(r.episode_len for r in self.records)


def _records_frame(records: Sequence[RewardRecord]) -> pd.DataFrame:
    rows = [{
        'frames': r.frames,
        'scene_id': r.scene_id,
        'target_idx': r.target_idx,
        'episode_return': r.episode_return,
        'episode_len': r.episode_len,
        'success': int(r.success),
    } for r in records]
    return pd.DataFrame(rows, columns=REWARD_LOG_COLUMNS)


class SceneContext:
    """单个场景的只读观测：视觉特征、可选的语义向量和全部合法位姿"""

    def __init__(self, scene: SceneSpec, feature_seed: int, F: int, encoder: Optional[SentenceEncoder] = None):
        self.scene = scene
        self.observations = SceneObservations(scene, feature_seed, F)
        self.semantics = SemanticTable(self.observations, encoder) if encoder is not None else None
        self.poses = valid_poses(scene)

    def feature(self, pose: Pose) -> np.ndarray:
        return self.observations.features[pose]

    def semantic(self, pose: Pose) -> Optional[np.ndarray]:
        return None if self.semantics is None else self.semantics.vectors[pose]

    def random_start(self, target: Pose, rng: np.random.Generator, match_heading: bool = True) -> Pose:
        """均匀随机选取一个不等于目标的起始位姿"""
        candidates = [p for p in self.poses if not reached(p, target, match_heading)]
        if not candidates:
            raise ContractError(f"场景 {self.scene.id} 没有目标以外的起始位姿")
        return candidates[int(rng.integers(0, len(candidates)))]


def build_contexts(scenes: Sequence[SceneSpec], feature_seed: int, F: int,
                   encoder: Optional[SentenceEncoder] = None) -> Dict[str, SceneContext]:
    return {scene.id: SceneContext(scene, feature_seed, F, encoder) for scene in scenes}


class _Episode:
    """训练线程中正在进行的回合"""

    def __init__(self, context: SceneContext, target: Target, target_idx: int, start: Pose):
        self.context = context
        self.target = target
        self.target_idx = target_idx
        self.pose = start
        self.steps = 0
        self.rewards: List[float] = []
        self.history = FrameHistory()
        self.history.reset(context.feature(start), context.semantic(start))

    def state(self) -> StateInputs:
        ctx = self.context
        return StateInputs(
            history=self.history.features(),
            target=ctx.feature(self.target.pose),
            scene_type=ctx.scene.scene_type,
            history_sem=self.history.semantics(),
            target_sem=ctx.semantic(self.target.pose),
        )

    def advance(self, pose: Pose, reward: float):
        self.pose = pose
        self.steps += 1
        self.rewards.append(reward)
        self.history.push(self.context.feature(pose), self.context.semantic(pose))

    def episode_return(self) -> float:
        return math.fsum(self.rewards)


class _Trainer:
    """训练线程共用的状态：配置、共享存储、场景观测、(场景, 目标) 列表和日志"""

    def __init__(self, config: TrainConfig, store: SharedStore, contexts: Dict[str, SceneContext],
                 pairs: List[Tuple[str, int, Target]], log: RewardLog, verbose: bool):
        self.config = config
        self.store = store
        self.contexts = contexts
        self.pairs = pairs
        self.log = log
        self.verbose = verbose
        self.stop_event = threading.Event()
        self.failures: List[Tuple[int, BaseException]] = []
        self._episodes_done = 0
        self._count_lock = threading.Lock()

    def _start_episode(self, worker_id: int, n: int, rng: np.random.Generator) -> _Episode:
        # 第n个回合使用 (w + n·workers) mod P 号 (场景, 目标)
        scene_id, target_idx, target = self.pairs[(worker_id + n * self.config.workers) % len(self.pairs)]
        context = self.contexts[scene_id]
        start = context.random_start(target.pose, rng, self.config.match_heading)
        return _Episode(context, target, target_idx, start)

    def _finish_episode(self, episode: _Episode, frames: int, success: bool):
        scene_id = episode.context.scene.id
        episode_return = episode.episode_return()
        self.log.append(RewardRecord(frames, scene_id, episode.target_idx, episode_return,
                                     episode.steps, success))
        self.store.record_return(scene_id, episode.target_idx, episode_return)
        with self._count_lock:
            self._episodes_done += 1
            done = self._episodes_done
        if self.verbose and self.config.report_every > 0 and done % self.config.report_every == 0:
            print(f"  已完成 {done} 个回合，帧数 {frames}")

    def run_worker(self, worker_id: int):
        try:
            self._worker_loop(worker_id)
        except BaseException as exc:
            self.failures.append((worker_id, exc))
            self.stop_event.set()

    def _worker_loop(self, worker_id: int):
        config = self.config
        rng = np.random.default_rng([int(config.seed), worker_id])
        episode_count = 0
        episode = self._start_episode(worker_id, episode_count, rng)

        while not self.stop_event.is_set() and self.store.frames < config.total_frames:
            params = self.store.snapshot()
            steps: List[TrajectoryStep] = []
            finished = None
            while len(steps) < config.t_max:
                state = episode.state()
                action = sample_action(forward_state(params, state), rng)
                result = step(episode.context.scene, episode.pose, episode.target.pose, action,
                              episode.steps, config.episode_cap, config.match_heading)
                steps.append(TrajectoryStep(state, action, result.reward, result.done))
                episode.advance(result.next_pose, result.reward)
                if result.done:
                    finished = result
                    break

            bootstrap = 0.0
            if finished is None:
                bootstrap = forward_state(params, episode.state()).value
            trajectory = Trajectory(steps, bootstrap)
            _, grads = a3c_loss_and_grads(params, trajectory, config.gamma, config.beta, config.value_coef)
            clip_gradients(grads, config.max_grad_norm)
            apply_update(self.store, grads, config.lr, config.rmsprop_decay, config.rmsprop_eps)
            frames = self.store.add_frames(len(steps))

            if finished is not None:
                self._finish_episode(episode, frames, finished.success)
                episode_count += 1
                episode = self._start_episode(worker_id, episode_count, rng)

        if episode.steps > 0:
            self._finish_episode(episode, self.store.frames, False)


def train(config: TrainConfig, scenes: Sequence[SceneSpec], targets: Dict[str, List[Target]],
          encoder: Optional[SentenceEncoder] = None, store: Optional[SharedStore] = None,
          log_path: Optional[str] = None, verbose: bool = False) -> Tuple[NetworkParams, RewardLog]:
    """
    多线程A3C训练

    参数:
    config: 训练参数
    scenes: 训练场景
    targets: 场景编号 -> 该场景的训练目标列表（每个场景至少1个）
    encoder: 句子编码器，SSN 必须提供
    store: 已有的共享存储，给定时从中继续训练直到帧数达到 total_frames
    log_path: 奖励日志CSV路径
    verbose: 是否打印进度

    返回:
    (params, log): 最终参数副本与奖励日志
    """
    config.validate()
    if not scenes:
        raise ContractError("训练至少需要一个场景")
    if config.variant == 'ssn' and encoder is None:
        raise ConfigError("SSN 训练需要句子编码器")
    if config.variant == 'sn':
        encoder = None

    pairs = []
    for scene in scenes:
        scene_targets = targets.get(scene.id, [])
        if not scene_targets:
            raise ContractError(f"场景 {scene.id} 没有训练目标")
        for index, target in enumerate(scene_targets):
            pairs.append((scene.id, index, target))

    semantic_dim = semantic_width(encoder.sentence_dim) if encoder is not None else 0
    if store is None:
        store = create_store(config, semantic_dim)
    else:
        params = store.params
        if (params.variant != config.variant or params.F != config.feature_dim or params.E != config.embed_dim
                or params.S_f != semantic_dim):
            raise ConfigError(
                f"共享存储维度与训练配置不一致: 存储 {params.variant} F={params.F} E={params.E} S_f={params.S_f}，"
                f"配置 {config.variant} F={config.feature_dim} E={config.embed_dim} S_f={semantic_dim}"
            )

    if verbose:
        print(f"准备 {len(scenes)} 个场景的观测缓存...")
    contexts = build_contexts(scenes, config.feature_seed, config.feature_dim, encoder)
    log = RewardLog(log_path)
    trainer = _Trainer(config, store, contexts, pairs, log, verbose)

    if verbose:
        print(f"开始训练: {config.variant.upper()}，{config.workers} 个线程，"
              f"{len(pairs)} 个(场景, 目标)，帧预算 {config.total_frames}")

    threads = [threading.Thread(target=trainer.run_worker, args=(w,), name=f"a3c-worker-{w}")
               for w in range(config.workers)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    log.flush()

    if trainer.failures:
        worker_id, exc = sorted(trainer.failures, key=lambda item: item[0])[0]
        raise TrainingError(f"训练线程 {worker_id} 失败: {type(exc).__name__}: {exc}", worker_id) from exc

    if verbose:
        print(f"✓ 训练完成: 帧数 {store.frames}，回合数 {len(log)}")
    return store.snapshot(), log
