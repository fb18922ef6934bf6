#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
检查点读写测试脚本
"""

import os
import struct
import sys
import tempfile

import numpy as np
import pytest

# 添加项目路径
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from navigation.errors import SceneFileError
from navigation.gridscene import generate_scene
from navigation.policynet import init_params
from navigation.semantics import SentenceEncoder, build_corpus, encode_sentence, train_autoencoder
from utils.checkpoint import (ENCODER_MAGIC, PARAMS_MAGIC, encoder_from_bytes, encoder_to_bytes, load_encoder,
                              load_params, params_from_bytes, params_to_bytes, save_encoder, save_params)


def small_encoder():
    corpus = build_corpus([generate_scene(6, 'livingroom', 6, 6)])
    return train_autoencoder(corpus, D_s=5, epochs=3, hidden=7)


def test_encoder_checkpoint():
    print("测试编码器检查点...")
    encoder = small_encoder()
    data = encoder_to_bytes(encoder)
    assert data[:8] == ENCODER_MAGIC
    V, D, H = struct.unpack('<III', data[8:20])
    assert (V, D, H) == (len(encoder.vocabulary), 5, 7)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, 'nested', 'encoder.bin')
        save_encoder(encoder, path)
        loaded = load_encoder(path)
    assert loaded.vocabulary == encoder.vocabulary
    for name in SentenceEncoder.WEIGHT_ORDER:
        np.testing.assert_array_equal(loaded.weights[name], encoder.weights[name])
    tokens = encoder.vocabulary[:3]
    np.testing.assert_array_equal(encode_sentence(loaded, tokens), encode_sentence(encoder, tokens))
    print("编码器检查点测试通过！\n")


def test_params_checkpoint():
    print("测试网络参数检查点...")
    for params in (init_params('sn', 6, 4, seed=1), init_params('ssn', 6, 4, 20, seed=2)):
        data = params_to_bytes(params)
        assert data[:8] == PARAMS_MAGIC
        variant_code, F, E, S_f, heads = struct.unpack('<BIIII', data[8:25])
        assert (F, E, S_f, heads) == (6, 4, params.S_f, 4)
        assert len(data) == 25 + 8 * sum(v.size for v in params.tensors.values())
        assert params_from_bytes(data).same_as(params)

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, 'params.bin')
        save_params(params, path)
        assert load_params(path).same_as(params)
    print("网络参数检查点测试通过！\n")


def test_corrupt_checkpoints():
    encoder_data = encoder_to_bytes(small_encoder())
    params_data = params_to_bytes(init_params('sn', 6, 4))
    with pytest.raises(SceneFileError):
        encoder_from_bytes(encoder_data[:-8])
    with pytest.raises(SceneFileError):
        encoder_from_bytes(encoder_data + b'\x00')
    with pytest.raises(SceneFileError):
        encoder_from_bytes(params_data)
    with pytest.raises(SceneFileError):
        params_from_bytes(params_data[:40])
    with pytest.raises(SceneFileError):
        params_from_bytes(encoder_data)

    bad_header = bytearray(params_data)
    bad_header[8] = 7
    with pytest.raises(SceneFileError):
        params_from_bytes(bytes(bad_header))

    with tempfile.TemporaryDirectory() as tmp:
        with pytest.raises(SceneFileError) as info:
            load_params(os.path.join(tmp, 'missing.bin'))
        assert 'missing.bin' in str(info.value)


if __name__ == "__main__":
    print("=" * 50)
    print("检查点读写测试")
    print("=" * 50)
    test_encoder_checkpoint()
    test_params_checkpoint()
    test_corrupt_checkpoints()
    print("所有测试通过！")
