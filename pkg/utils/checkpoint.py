# -*- coding: utf-8 -*-
"""
检查点读写 - 句子编码器与网络参数的二进制格式（小端序，矩阵按行优先存储）

编码器 SEMNAV01:
    magic(8) | V, D_s, H (uint32×3) | V个词 (uint16长度 + UTF-8) | We1 be1 We2 be2 Wd1 bd1 Wd2 bd2 (float64)
网络参数 SNPARAM1:
    magic(8) | variant (uint8, 0=SN 1=SSN) | F, E, S_f, 策略头数量 (uint32×4) | 参数矩阵 (float64，顺序同 parameter_shapes)
"""

import os
import struct
from collections import OrderedDict
from typing import Tuple

import numpy as np

from navigation.errors import ContractError, SceneFileError
from navigation.gridscene import SCENE_TYPES
from navigation.policynet import VARIANTS, NetworkParams, parameter_shapes
from navigation.semantics import SentenceEncoder


ENCODER_MAGIC = b'SEMNAV01'
PARAMS_MAGIC = b'SNPARAM1'
FLOAT_DTYPE = np.dtype('<f8')


def _encoder_shapes(V: int, D: int, H: int):
    return OrderedDict([
        ('We1', (V, H)), ('be1', (H,)), ('We2', (H, D)), ('be2', (D,)),
        ('Wd1', (D, H)), ('bd1', (H,)), ('Wd2', (H, V)), ('bd2', (V,)),
    ])


def encoder_to_bytes(encoder: SentenceEncoder) -> bytes:
    V = len(encoder.vocabulary)
    parts = [ENCODER_MAGIC, struct.pack('<III', V, encoder.sentence_dim, encoder.hidden)]
    for token in encoder.vocabulary:
        raw = token.encode('utf-8')
        parts.append(struct.pack('<H', len(raw)))
        parts.append(raw)
    for name in SentenceEncoder.WEIGHT_ORDER:
        parts.append(np.ascontiguousarray(encoder.weights[name], dtype=FLOAT_DTYPE).tobytes())
    return b''.join(parts)


class _Reader:
    """按顺序读取字节串，越界时抛出带文件名的 SceneFileError"""

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise SceneFileError(f"文件 {self.path} 已截断或损坏")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def matrix(self, shape) -> np.ndarray:
        count = int(np.prod(shape))
        values = np.frombuffer(self.take(count * FLOAT_DTYPE.itemsize), dtype=FLOAT_DTYPE)
        return values.astype(np.float64).reshape(shape)

    def finish(self):
        if self.offset != len(self.data):
            raise SceneFileError(f"文件 {self.path} 末尾有多余数据")


def encoder_from_bytes(data: bytes, path: str = '<memory>') -> SentenceEncoder:
    reader = _Reader(data, path)
    if reader.take(len(ENCODER_MAGIC)) != ENCODER_MAGIC:
        raise SceneFileError(f"文件 {path} 不是编码器检查点 (缺少 {ENCODER_MAGIC.decode()} 标识)")
    V, D, H = reader.unpack('<III')
    vocabulary = []
    for _ in range(V):
        (length,) = reader.unpack('<H')
        try:
            vocabulary.append(reader.take(length).decode('utf-8'))
        except UnicodeDecodeError as exc:
            raise SceneFileError(f"文件 {path} 词表编码错误") from exc
    weights = {name: reader.matrix(shape) for name, shape in _encoder_shapes(V, D, H).items()}
    reader.finish()
    return SentenceEncoder(vocabulary, weights)


def params_to_bytes(params: NetworkParams) -> bytes:
    header = struct.pack('<BIIII', VARIANTS.index(params.variant), params.F, params.E, params.S_f,
                         len(params.heads))
    parts = [PARAMS_MAGIC, header]
    for name in params.names():
        parts.append(np.ascontiguousarray(params[name], dtype=FLOAT_DTYPE).tobytes())
    return b''.join(parts)


def params_from_bytes(data: bytes, path: str = '<memory>') -> NetworkParams:
    reader = _Reader(data, path)
    if reader.take(len(PARAMS_MAGIC)) != PARAMS_MAGIC:
        raise SceneFileError(f"文件 {path} 不是网络参数检查点 (缺少 {PARAMS_MAGIC.decode()} 标识)")
    variant_code, F, E, S_f, head_count = reader.unpack('<BIIII')
    if variant_code >= len(VARIANTS) or head_count != len(SCENE_TYPES):
        raise SceneFileError(f"文件 {path} 头部信息无效 (variant={variant_code}, heads={head_count})")
    variant = VARIANTS[variant_code]
    try:
        shapes = parameter_shapes(variant, F, E, S_f)
    except ContractError as exc:
        raise SceneFileError(f"文件 {path} 头部维度无效: {exc}") from exc
    tensors = OrderedDict((name, reader.matrix(shape)) for name, shape in shapes.items())
    reader.finish()
    return NetworkParams(variant, F, E, S_f, tensors)


def _write(path: str, data: bytes):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(data)


def _read(path: str) -> bytes:
    try:
        with open(path, 'rb') as f:
            return f.read()
    except OSError as exc:
        raise SceneFileError(f"无法读取文件 {path}: {exc}") from exc


def save_encoder(encoder: SentenceEncoder, path: str):
    _write(path, encoder_to_bytes(encoder))


def load_encoder(path: str) -> SentenceEncoder:
    return encoder_from_bytes(_read(path), path)


def save_params(params: NetworkParams, path: str):
    _write(path, params_to_bytes(params))


def load_params(path: str) -> NetworkParams:
    return params_from_bytes(_read(path), path)
