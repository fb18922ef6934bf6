# -*- coding: utf-8 -*-
"""
语义模块
构建描述语句语料库，训练词袋自编码器，并拼装每帧的语义向量（前5条标注 × (句向量+包围框+置信度)）
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, NumericError
from .featurizer import Annotation, SceneObservations, ViewConfig, annotate
from .gridscene import Pose, SceneSpec, valid_poses


TOP_ANNOTATIONS = 5
BOX_SIZE = 4
DEFAULT_SENTENCE_DIM = 64
DEFAULT_HIDDEN = 128


def slot_width(sentence_dim: int) -> int:
    """单条标注的语义宽度：句向量 + 4个框坐标 + 1个置信度"""
    return sentence_dim + BOX_SIZE + 1


def semantic_width(sentence_dim: int) -> int:
    """整帧语义向量宽度，sentence_dim=64 时为 345"""
    return TOP_ANNOTATIONS * slot_width(sentence_dim)


@dataclass(frozen=True)
class Corpus:
    """语料库：去重后的句子（词序列）与排序后的词表"""
    sentences: Tuple[Tuple[str, ...], ...]
    vocabulary: Tuple[str, ...]

    def stats(self) -> Dict[str, float]:
        lengths = [len(s) for s in self.sentences]
        return {
            'sentences': len(self.sentences),
            'vocabulary': len(self.vocabulary),
            'mean_tokens': float(np.mean(lengths)) if lengths else 0.0,
        }


@dataclass(frozen=True)
class AutoencoderConfig:
    """自编码器训练参数"""
    sentence_dim: int = DEFAULT_SENTENCE_DIM
    hidden: int = DEFAULT_HIDDEN
    epochs: int = 200
    lr: float = 0.05
    seed: int = 0


def top_annotations(annotations: Sequence[Annotation], k: int = TOP_ANNOTATIONS) -> List[Annotation]:
    """按置信度降序取前k条；置信度相同时框面积大者优先，再按输入顺序"""
    ranked = sorted(enumerate(annotations), key=lambda item: (-item[1].confidence, -item[1].area, item[0]))
    return [ann for _, ann in ranked[:k]]


def build_corpus(scenes: Sequence[SceneSpec], view: Optional[ViewConfig] = None) -> Corpus:
    """
    汇总所有场景所有位姿的前5条标注语句，去重后构成语料库

    参数:
    scenes: 场景列表（非空）

    返回:
    corpus: Corpus，句子和词表均已排序
    """
    if not scenes:
        raise ContractError("构建语料库至少需要一个场景")

    sentences = set()
    for scene in scenes:
        for pose in valid_poses(scene):
            for ann in top_annotations(annotate(scene, pose, view)):
                sentences.add(tuple(ann.tokens))

    if not sentences:
        raise ContractError("语料库为空：所有场景的所有位姿均没有可见物体标注")

    vocabulary = sorted({token for sentence in sentences for token in sentence})
    return Corpus(tuple(sorted(sentences)), tuple(vocabulary))


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


class SentenceEncoder:
    """
    词袋自编码器
    编码: 词频向量(V) -> tanh 隐层(H) -> tanh 句向量(D)
    解码: 句向量(D) -> tanh 隐层(H) -> 词表 softmax(V)
    """

    WEIGHT_ORDER = ('We1', 'be1', 'We2', 'be2', 'Wd1', 'bd1', 'Wd2', 'bd2')

    def __init__(self, vocabulary: Sequence[str], weights: Dict[str, np.ndarray]):
        self.vocabulary = tuple(vocabulary)
        self.index = {token: i for i, token in enumerate(self.vocabulary)}
        self.weights = {name: np.asarray(weights[name], dtype=np.float64) for name in self.WEIGHT_ORDER}
        self.loss_history: List[float] = []

    @classmethod
    def initialize(cls, vocabulary: Sequence[str], sentence_dim: int,
                   hidden: int = DEFAULT_HIDDEN, seed: int = 0) -> 'SentenceEncoder':
        V = len(vocabulary)
        rng = np.random.default_rng([int(seed), V, int(sentence_dim), int(hidden)])
        weights = {
            'We1': _xavier(rng, V, hidden), 'be1': np.zeros(hidden),
            'We2': _xavier(rng, hidden, sentence_dim), 'be2': np.zeros(sentence_dim),
            'Wd1': _xavier(rng, sentence_dim, hidden), 'bd1': np.zeros(hidden),
            'Wd2': _xavier(rng, hidden, V), 'bd2': np.zeros(V),
        }
        return cls(vocabulary, weights)

    @property
    def sentence_dim(self) -> int:
        return self.weights['We2'].shape[1]

    @property
    def hidden(self) -> int:
        return self.weights['We1'].shape[1]

    def counts(self, tokens: Iterable[str]) -> np.ndarray:
        """词频向量，词表外的词被忽略"""
        x = np.zeros(len(self.vocabulary))
        for token in tokens:
            i = self.index.get(token)
            if i is not None:
                x[i] += 1.0
        return x

    def encode_counts(self, X: np.ndarray) -> np.ndarray:
        w = self.weights
        h1 = np.tanh(X @ w['We1'] + w['be1'])
        return np.tanh(h1 @ w['We2'] + w['be2'])

    def loss_and_grads(self, X: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        """
        重构交叉熵及梯度

        参数:
        X: (N, V) 词频矩阵

        返回:
        loss: 平均交叉熵（目标为归一化词频分布）
        grads: 与权重同名的梯度字典
        """
        w = self.weights
        N = X.shape[0]
        totals = X.sum(axis=1, keepdims=True)
        target = X / np.maximum(totals, 1.0)

        h1 = np.tanh(X @ w['We1'] + w['be1'])
        z = np.tanh(h1 @ w['We2'] + w['be2'])
        h2 = np.tanh(z @ w['Wd1'] + w['bd1'])
        logits = h2 @ w['Wd2'] + w['bd2']
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss = float(-(target * log_probs).sum() / N)

        probs = np.exp(log_probs)
        dlogits = (probs * target.sum(axis=1, keepdims=True) - target) / N
        grads = {'Wd2': h2.T @ dlogits, 'bd2': dlogits.sum(axis=0)}
        dh2 = (dlogits @ w['Wd2'].T) * (1.0 - h2 ** 2)
        grads['Wd1'] = z.T @ dh2
        grads['bd1'] = dh2.sum(axis=0)
        dz = (dh2 @ w['Wd1'].T) * (1.0 - z ** 2)
        grads['We2'] = h1.T @ dz
        grads['be2'] = dz.sum(axis=0)
        dh1 = (dz @ w['We2'].T) * (1.0 - h1 ** 2)
        grads['We1'] = X.T @ dh1
        grads['be1'] = dh1.sum(axis=0)
        return loss, grads


def train_autoencoder(corpus: Corpus, D_s: int = DEFAULT_SENTENCE_DIM, epochs: int = 200,
                      lr: float = 0.05, seed: int = 0, hidden: int = DEFAULT_HIDDEN) -> SentenceEncoder:
    """
    全批量梯度下降训练词袋自编码器

    参数:
    corpus: 语料库
    D_s: 句向量维度（不小于2）
    epochs: 训练轮数，0表示不训练
    lr: 初始学习率；某轮损失上升时拒绝该步并将学习率减半
    seed: 初始化种子

    返回:
    encoder: SentenceEncoder，loss_history 记录每轮结束时的损失（首项为初始损失）
    """
    if D_s < 2:
        raise ContractError(f"句向量维度 D_s={D_s} 过小，至少为2")
    if not corpus.sentences:
        raise ContractError("语料库为空，无法训练自编码器")

    encoder = SentenceEncoder.initialize(corpus.vocabulary, D_s, hidden, seed)
    X = np.stack([encoder.counts(sentence) for sentence in corpus.sentences])
    loss, grads = encoder.loss_and_grads(X)
    if not math.isfinite(loss):
        raise NumericError(f"自编码器初始损失非有限值 (lr={lr})")
    encoder.loss_history.append(loss)

    current_lr = lr
    for _ in range(epochs):
        proposal = {name: encoder.weights[name] - current_lr * grads[name] for name in encoder.WEIGHT_ORDER}
        previous = encoder.weights
        encoder.weights = proposal
        new_loss, new_grads = encoder.loss_and_grads(X)
        if not math.isfinite(new_loss):
            raise NumericError(f"自编码器训练发散：损失变为非有限值 (lr={current_lr})")
        if new_loss > loss:
            encoder.weights = previous
            current_lr *= 0.5
        else:
            loss, grads = new_loss, new_grads
        encoder.loss_history.append(loss)
    return encoder


def encode_sentence(encoder: SentenceEncoder, tokens: Iterable[str]) -> np.ndarray:
    """句子编码为 D_s 维向量；词袋表示与词序无关"""
    return encoder.encode_counts(encoder.counts(tokens)[None, :])[0]


def frame_semantics(annotations: Sequence[Annotation], encoder: SentenceEncoder) -> np.ndarray:
    """
    拼装一帧的语义向量

    参数:
    annotations: 该帧的全部标注
    encoder: 句子编码器

    返回:
    values: 长度 5·(D_s+5) 的向量，按置信度降序排列 [句向量 | 包围框 | 置信度]，不足5条的槽位为0
    """
    width = slot_width(encoder.sentence_dim)
    values = np.zeros(TOP_ANNOTATIONS * width)
    for slot, ann in enumerate(top_annotations(annotations)):
        offset = slot * width
        values[offset:offset + encoder.sentence_dim] = encode_sentence(encoder, ann.tokens)
        values[offset + encoder.sentence_dim:offset + encoder.sentence_dim + BOX_SIZE] = ann.box
        values[offset + width - 1] = ann.confidence
    return values


class SemanticTable:
    """场景各位姿的帧语义向量缓存，生成后只读"""

    def __init__(self, observations: SceneObservations, encoder: SentenceEncoder):
        self.scene = observations.scene
        self.width = semantic_width(encoder.sentence_dim)
        self.vectors: Dict[Pose, np.ndarray] = {}
        for pose in observations.poses:
            vector = frame_semantics(observations.annotations[pose], encoder)
            vector.flags.writeable = False
            self.vectors[pose] = vector
