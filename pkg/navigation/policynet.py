# -*- coding: utf-8 -*-
"""
策略网络模块
孪生网络 SN 与语义孪生网络 SSN：全连接层前向/反向传播、按场景类型共享的策略头、A3C 损失与梯度
"""

import math
from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ContractError, NumericError
from .gridscene import NUM_ACTIONS, SCENE_TYPES


VARIANTS = ('sn', 'ssn')
HISTORY_LENGTH = 4
OUTPUT_SIZE = NUM_ACTIONS + 1
DEFAULT_EMBED_DIM = 64
HEAD_TENSORS = ('W_s1', 'b_s1', 'W_s2', 'b_s2')


def parameter_shapes(variant: str, F: int, E: int, S_f: int = 0) -> 'OrderedDict[str, Tuple[int, ...]]':
    """
    各参数矩阵的形状，顺序即检查点中的固定存储顺序

    参数:
    variant: 'sn' 或 'ssn'
    F: 单帧视觉特征维度
    E: 嵌入维度
    S_f: 单帧语义向量维度（仅SSN）
    """
    if variant not in VARIANTS:
        raise ContractError(f"未知网络类型: {variant}，可选 {', '.join(VARIANTS)}")
    if F <= 0 or E <= 0 or (variant == 'ssn' and S_f <= 0):
        raise ContractError(f"网络维度必须为正数: F={F}, E={E}, S_f={S_f}")

    shapes = OrderedDict()
    shapes['W1'] = (HISTORY_LENGTH * F, E)
    shapes['b1'] = (E,)
    if variant == 'ssn':
        shapes['W1s'] = (HISTORY_LENGTH * S_f, E)
        shapes['b1s'] = (E,)
        shapes['W2'] = (4 * E, E)
    else:
        shapes['W2'] = (2 * E, E)
    shapes['b2'] = (E,)
    for scene_type in SCENE_TYPES:
        shapes[f'{scene_type}/W_s1'] = (E, E)
        shapes[f'{scene_type}/b_s1'] = (E,)
        shapes[f'{scene_type}/W_s2'] = (E, OUTPUT_SIZE)
        shapes[f'{scene_type}/b_s2'] = (OUTPUT_SIZE,)
    return shapes


class NetworkParams:
    """网络参数集合：共享层 W1/b1/W2/b2、SSN 的语义投影 W1s/b1s，以及每种场景类型一个策略头"""

    def __init__(self, variant: str, F: int, E: int, S_f: int, tensors: 'OrderedDict[str, np.ndarray]'):
        expected = parameter_shapes(variant, F, E, S_f)
        if list(tensors.keys()) != list(expected.keys()):
            raise ContractError(f"参数名称与 {variant} 网络结构不一致")
        for name, shape in expected.items():
            if tuple(tensors[name].shape) != shape:
                raise ContractError(f"参数 {name} 形状 {tensors[name].shape} 与期望 {shape} 不一致")
        self.variant = variant
        self.F = F
        self.E = E
        self.S_f = S_f if variant == 'ssn' else 0
        self.tensors = tensors

    @property
    def is_semantic(self) -> bool:
        return self.variant == 'ssn'

    @property
    def heads(self) -> Tuple[str, ...]:
        return tuple(t for t in SCENE_TYPES if f'{t}/W_s1' in self.tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> List[str]:
        return list(self.tensors.keys())

    def copy(self) -> 'NetworkParams':
        return NetworkParams(self.variant, self.F, self.E, self.S_f,
                             OrderedDict((k, v.copy()) for k, v in self.tensors.items()))

    def zeros_like(self) -> 'NetworkParams':
        return NetworkParams(self.variant, self.F, self.E, self.S_f,
                             OrderedDict((k, np.zeros_like(v)) for k, v in self.tensors.items()))

    def same_as(self, other: 'NetworkParams') -> bool:
        """逐位比较两组参数"""
        if self.variant != other.variant or self.names() != other.names():
            return False
        return all(np.array_equal(self.tensors[k], other.tensors[k]) for k in self.tensors)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.tensors.values())

    def global_norm(self) -> float:
        return math.sqrt(sum(float(np.sum(v * v)) for v in self.tensors.values()))


def init_params(variant: str, F: int, E: int = DEFAULT_EMBED_DIM, S_f: int = 0, seed: int = 0) -> NetworkParams:
    """
    初始化网络参数
    权重服从 uniform(-a, a)，a = sqrt(6/(fan_in+fan_out))，偏置为0；相同种子结果一致
    """
    shapes = parameter_shapes(variant, F, E, S_f)
    rng = np.random.default_rng(int(seed))
    tensors = OrderedDict()
    for name, shape in shapes.items():
        if len(shape) == 2:
            a = math.sqrt(6.0 / (shape[0] + shape[1]))
            tensors[name] = rng.uniform(-a, a, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    return NetworkParams(variant, F, E, S_f, tensors)


@dataclass(frozen=True)
class StateInputs:
    """单个状态的网络输入：4帧历史特征、目标特征、场景类型，SSN 另有历史语义与目标语义"""
    history: np.ndarray
    target: np.ndarray
    scene_type: str
    history_sem: Optional[np.ndarray] = None
    target_sem: Optional[np.ndarray] = None


@dataclass
class ForwardOutput:
    """前向结果：4个动作概率、状态价值、反向传播所需的中间量"""
    policy: np.ndarray
    value: float
    cache: Dict[str, object]


@dataclass(frozen=True)
class TrajectoryStep:
    state: StateInputs
    action: int
    reward: float
    done: bool


@dataclass
class Trajectory:
    """一段不超过 t_max 步的轨迹及截断处的自举价值"""
    steps: List[TrajectoryStep]
    bootstrap_value: float = 0.0

    @property
    def terminal(self) -> bool:
        return bool(self.steps) and self.steps[-1].done


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _flatten(values, expected: int, label: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64).reshape(-1)
    if array.size != expected:
        raise ContractError(f"{label} 形状不匹配: 长度 {array.size}，期望 {expected}")
    return array


def forward(params: NetworkParams, history_feats, target_feat, history_sem=None, target_sem=None,
            scene_type: Optional[str] = None) -> ForwardOutput:
    """
    前向传播

    参数:
    params: 网络参数
    history_feats: 4帧历史视觉特征 (4, F)
    target_feat: 目标帧视觉特征 (F,)，平铺4次后与历史共用 W1
    history_sem: 4帧历史语义 (4, S_f)，仅SSN
    target_sem: 目标帧语义 (S_f,)，仅SSN，平铺4次后与历史共用 W1s
    scene_type: 场景类型，决定使用哪个策略头

    返回:
    ForwardOutput: softmax 策略、价值、缓存
    """
    if params.is_semantic and (history_sem is None or target_sem is None):
        raise ContractError("SSN 网络需要历史语义与目标语义输入")
    if not params.is_semantic and (history_sem is not None or target_sem is not None):
        raise ContractError("SN 网络不接受语义输入")
    if scene_type not in params.heads:
        raise ContractError(f"没有场景类型 {scene_type} 对应的策略头")

    P = params.tensors
    F = params.F
    cache: Dict[str, object] = {'scene_type': scene_type}

    x_hist = _flatten(history_feats, HISTORY_LENGTH * F, "历史视觉特征")
    x_targ = np.tile(_flatten(target_feat, F, "目标视觉特征"), HISTORY_LENGTH)
    z_h = x_hist @ P['W1'] + P['b1']
    z_t = x_targ @ P['W1'] + P['b1']
    parts = [_relu(z_h), _relu(z_t)]
    cache.update(x_hist=x_hist, x_targ=x_targ, z_h=z_h, z_t=z_t)

    if params.is_semantic:
        S_f = params.S_f
        xs_hist = _flatten(history_sem, HISTORY_LENGTH * S_f, "历史语义")
        xs_targ = np.tile(_flatten(target_sem, S_f, "目标语义"), HISTORY_LENGTH)
        zs_h = xs_hist @ P['W1s'] + P['b1s']
        zs_t = xs_targ @ P['W1s'] + P['b1s']
        parts += [_relu(zs_h), _relu(zs_t)]
        cache.update(xs_hist=xs_hist, xs_targ=xs_targ, zs_h=zs_h, zs_t=zs_t)

    c = np.concatenate(parts)
    z_j = c @ P['W2'] + P['b2']
    joint = _relu(z_j)
    z_s1 = joint @ P[f'{scene_type}/W_s1'] + P[f'{scene_type}/b_s1']
    a = _relu(z_s1)
    out = a @ P[f'{scene_type}/W_s2'] + P[f'{scene_type}/b_s2']

    logits = out[:NUM_ACTIONS]
    shifted = logits - logits.max()
    log_policy = shifted - math.log(float(np.exp(shifted).sum()))
    policy = np.exp(log_policy)
    cache.update(c=c, z_j=z_j, joint=joint, z_s1=z_s1, a=a, log_policy=log_policy)
    return ForwardOutput(policy=policy, value=float(out[NUM_ACTIONS]), cache=cache)


def forward_state(params: NetworkParams, state: StateInputs) -> ForwardOutput:
    return forward(params, state.history, state.target, state.history_sem, state.target_sem, state.scene_type)


def _backward(params: NetworkParams, cache: Dict[str, object], dlogits: np.ndarray, dvalue: float,
              grads: NetworkParams):
    """将输出层梯度沿缓存的激活反向传播，累加到 grads"""
    P = params.tensors
    G = grads.tensors
    E = params.E
    head = f"{cache['scene_type']}/"

    dout = np.append(dlogits, dvalue)
    G[head + 'W_s2'] += np.outer(cache['a'], dout)
    G[head + 'b_s2'] += dout
    dz_s1 = (P[head + 'W_s2'] @ dout) * (cache['z_s1'] > 0)
    G[head + 'W_s1'] += np.outer(cache['joint'], dz_s1)
    G[head + 'b_s1'] += dz_s1
    dz_j = (P[head + 'W_s1'] @ dz_s1) * (cache['z_j'] > 0)
    G['W2'] += np.outer(cache['c'], dz_j)
    G['b2'] += dz_j
    dc = P['W2'] @ dz_j

    dz_h = dc[:E] * (cache['z_h'] > 0)
    dz_t = dc[E:2 * E] * (cache['z_t'] > 0)
    G['W1'] += np.outer(cache['x_hist'], dz_h) + np.outer(cache['x_targ'], dz_t)
    G['b1'] += dz_h + dz_t
    if params.is_semantic:
        dzs_h = dc[2 * E:3 * E] * (cache['zs_h'] > 0)
        dzs_t = dc[3 * E:4 * E] * (cache['zs_t'] > 0)
        G['W1s'] += np.outer(cache['xs_hist'], dzs_h) + np.outer(cache['xs_targ'], dzs_t)
        G['b1s'] += dzs_h + dzs_t


def compute_returns(rewards, gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    """n步回报 R_t = r_t + γ·R_{t+1}，以 bootstrap 为末端初值"""
    if not 0.0 <= gamma <= 1.0:
        raise ContractError(f"折扣因子 gamma={gamma} 必须在 [0, 1] 范围内")
    returns = np.zeros(len(rewards))
    R = float(bootstrap)
    for t in range(len(rewards) - 1, -1, -1):
        R = rewards[t] + gamma * R
        returns[t] = R
    return returns


def compute_advantages(params: NetworkParams, traj: Trajectory, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    """返回 (n步回报, 优势 A_t = R_t - V(s_t))"""
    if not traj.steps:
        raise ContractError("轨迹不能为空")
    values = np.array([forward_state(params, s.state).value for s in traj.steps])
    bootstrap = 0.0 if traj.terminal else traj.bootstrap_value
    returns = compute_returns([s.reward for s in traj.steps], gamma, bootstrap)
    return returns, returns - values


def _objective(params: NetworkParams, traj: Trajectory, gamma: float, beta: float, value_coef: float,
               advantages: Optional[np.ndarray], with_grads: bool) -> Tuple[float, Optional[NetworkParams]]:
    if not traj.steps:
        raise ContractError("轨迹不能为空")
    outputs = [forward_state(params, s.state) for s in traj.steps]
    bootstrap = 0.0 if traj.terminal else traj.bootstrap_value
    returns = compute_returns([s.reward for s in traj.steps], gamma, bootstrap)
    values = np.array([o.value for o in outputs])
    if advantages is None:
        advantages = returns - values

    grads = params.zeros_like() if with_grads else None
    loss = 0.0
    for t, (step, output) in enumerate(zip(traj.steps, outputs)):
        log_policy = output.cache['log_policy']
        policy = output.policy
        entropy = -float(np.sum(policy * log_policy))
        advantage = float(advantages[t])
        residual = returns[t] - values[t]
        loss += -log_policy[step.action] * advantage + value_coef * residual ** 2 - beta * entropy

        if with_grads:
            dlogits = advantage * policy
            dlogits[step.action] -= advantage
            dlogits += beta * policy * (log_policy + entropy)
            _backward(params, output.cache, dlogits, -2.0 * value_coef * residual, grads)

    if not math.isfinite(loss):
        raise NumericError(f"A3C 损失为非有限值: {loss}")
    return float(loss), grads


def a3c_loss(params: NetworkParams, traj: Trajectory, gamma: float = 0.99, beta: float = 0.01,
             value_coef: float = 0.5, advantages: Optional[np.ndarray] = None) -> float:
    """只计算损失，advantages 给定时按常数处理（用于有限差分校验）"""
    return _objective(params, traj, gamma, beta, value_coef, advantages, with_grads=False)[0]


def a3c_loss_and_grads(params: NetworkParams, traj: Trajectory, gamma: float = 0.99, beta: float = 0.01,
                       value_coef: float = 0.5,
                       advantages: Optional[np.ndarray] = None) -> Tuple[float, NetworkParams]:
    """
    A3C 损失及梯度

    损失 = Σ_t [ -log π(a_t|s_t)·A_t + value_coef·(R_t - V(s_t))² - beta·H(π(·|s_t)) ]
    其中 A_t 视为常数；轨迹未涉及的场景类型策略头梯度严格为0

    返回:
    (loss, grads): grads 与参数同结构
    """
    loss, grads = _objective(params, traj, gamma, beta, value_coef, advantages, with_grads=True)
    if not grads.all_finite():
        raise NumericError("A3C 梯度出现非有限值")
    return loss, grads


def greedy_action(output: ForwardOutput) -> int:
    return int(np.argmax(output.policy))


def sample_action(output: ForwardOutput, rng: np.random.Generator) -> int:
    return int(rng.choice(NUM_ACTIONS, p=output.policy))


class FrameHistory:
    """
    最近4帧的视觉特征（及语义）缓冲
    回合开始时用初始帧复制4份填满
    """

    def __init__(self, length: int = HISTORY_LENGTH):
        self.length = length
        self._features = deque(maxlen=length)
        self._semantics = deque(maxlen=length)

    def reset(self, feature: np.ndarray, semantics: Optional[np.ndarray] = None):
        self._features.clear()
        self._semantics.clear()
        for _ in range(self.length):
            self._features.append(feature)
            self._semantics.append(semantics)

    def push(self, feature: np.ndarray, semantics: Optional[np.ndarray] = None):
        self._features.append(feature)
        self._semantics.append(semantics)

    def features(self) -> np.ndarray:
        return np.stack(self._features)

    def semantics(self) -> Optional[np.ndarray]:
        if any(s is None for s in self._semantics):
            return None
        return np.stack(self._semantics)
