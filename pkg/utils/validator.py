# -*- coding: utf-8 -*-
"""
配置验证器 - 解析运行配置文件并验证各参数的有效性
"""

import configparser
import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Tuple

from navigation.a3c import TrainConfig
from navigation.errors import ConfigError, SceneFileError
from navigation.gridscene import MIN_SCENE_SIZE, TARGET_MODES
from navigation.policynet import VARIANTS
from navigation.semantics import AutoencoderConfig


# 配置项定义: 节 -> 键 -> (类型, 最小值或可选值, 最大值)
CONFIG_SCHEMA = {
    'scenes': {
        'count_per_type': ('int', 1, None),
        'width': ('int', MIN_SCENE_SIZE, None),
        'height': ('int', MIN_SCENE_SIZE, None),
        'seed': ('int', 0, None),
    },
    'featurizer': {
        'feature_dim': ('int', 1, None),
        'feature_seed': ('int', 0, None),
    },
    'semantics': {
        'sentence_dim': ('int', 2, None),
        'hidden': ('int', 1, None),
        'epochs': ('int', 0, None),
        'lr': ('float', 0.0, None),
        'seed': ('int', 0, None),
    },
    'policynet': {
        'variant': ('choice', VARIANTS, None),
        'embed_dim': ('int', 1, None),
    },
    'a3c': {
        'workers': ('int', 1, None),
        'total_frames': ('int', 1, None),
        't_max': ('int', 1, None),
        'gamma': ('float', 0.0, 1.0),
        'beta': ('float', 0.0, None),
        'value_coef': ('float', 0.0, None),
        'lr': ('float', 0.0, None),
        'rmsprop_decay': ('float', 0.0, 1.0),
        'rmsprop_eps': ('float', 0.0, None),
        'target_mode': ('choice', TARGET_MODES, None),
        'seed': ('int', 0, None),
        'episode_cap': ('int', 1, None),
        'max_grad_norm': ('float', 0.0, None),
        'match_heading': ('bool', None, None),
        'report_every': ('int', 0, None),
    },
    'eval': {
        'episodes': ('int', 1, None),
        'cap': ('int', 1, None),
        'seed': ('int', 0, None),
        'workers': ('int', 1, None),
        'targets_per_scene': ('int', 1, None),
        'eval_targets': ('int', 1, None),
        'eval_target_mode': ('choice', TARGET_MODES, None),
    },
    'paths': {
        'scenes': ('str', None, None),
        'encoder': ('str', None, None),
        'checkpoint': ('str', None, None),
        'log': ('str', None, None),
    },
}

# 配置项 -> TrainConfig 字段
_TRAIN_FIELDS = {
    ('featurizer', 'feature_dim'): 'feature_dim',
    ('featurizer', 'feature_seed'): 'feature_seed',
    ('semantics', 'sentence_dim'): 'sentence_dim',
    ('policynet', 'variant'): 'variant',
    ('policynet', 'embed_dim'): 'embed_dim',
}
_TRUE_VALUES = ('1', 'true', 'yes', 'on')
_FALSE_VALUES = ('0', 'false', 'no', 'off')


@dataclass
class SceneInventory:
    """场景清单参数"""
    count_per_type: int = 5
    width: int = 8
    height: int = 8
    seed: int = 0


@dataclass
class EvalSettings:
    """评估参数"""
    episodes: int = 100
    cap: int = 1000
    seed: int = 1234
    workers: int = 4
    targets_per_scene: int = 5
    eval_targets: int = 5
    eval_target_mode: str = 'object_oriented'


@dataclass
class RunConfig:
    """一次运行的全部参数"""
    scenes: SceneInventory = field(default_factory=SceneInventory)
    train: TrainConfig = field(default_factory=TrainConfig)
    autoencoder: AutoencoderConfig = field(default_factory=AutoencoderConfig)
    evaluation: EvalSettings = field(default_factory=EvalSettings)
    paths: Dict[str, Optional[str]] = field(default_factory=lambda: {k: None for k in CONFIG_SCHEMA['paths']})


class ConfigValidator:
    """配置验证器类"""

    def validate_numeric_input(self, value, min_value=None, max_value=None, integer=False):
        """
        验证数值输入

        参数:
        value: 输入值（字符串或数值）
        min_value: 最小值
        max_value: 最大值
        integer: 是否要求整数

        返回:
        is_valid: 是否有效
        error_msg: 错误信息
        parsed_value: 解析后的数值
        """
        try:
            if integer:
                if isinstance(value, float) and not value.is_integer():
                    return False, "必须是整数", None
                parsed_value = int(value.strip()) if isinstance(value, str) else int(value)
            else:
                parsed_value = float(value)
        except (TypeError, ValueError):
            return False, "输入的不是有效数字" if not integer else "必须是整数", None

        if isinstance(parsed_value, float) and (math.isnan(parsed_value) or math.isinf(parsed_value)):
            return False, "输入的数值无效", None
        if min_value is not None and parsed_value < min_value:
            return False, f"数值不能小于{min_value}", None
        if max_value is not None and parsed_value > max_value:
            return False, f"数值不能大于{max_value}", None
        return True, "验证通过", parsed_value

    def validate_choice(self, value, choices):
        value = str(value).strip()
        if value not in choices:
            return False, f"必须是以下之一：{', '.join(choices)}", None
        return True, "验证通过", value

    def validate_bool(self, value):
        if isinstance(value, bool):
            return True, "验证通过", value
        text = str(value).strip().lower()
        if text in _TRUE_VALUES:
            return True, "验证通过", True
        if text in _FALSE_VALUES:
            return True, "验证通过", False
        return False, "必须是 true/false", None

    def validate_item(self, section, key, value):
        """按 CONFIG_SCHEMA 验证单个配置项，返回 (is_valid, error_msg, parsed_value)"""
        if section not in CONFIG_SCHEMA:
            return False, f"未知配置节 [{section}]", None
        if key not in CONFIG_SCHEMA[section]:
            return False, f"[{section}] 中的未知配置项 {key}", None

        kind, low, high = CONFIG_SCHEMA[section][key]
        if kind == 'int':
            ok, msg, parsed = self.validate_numeric_input(value, low, high, integer=True)
        elif kind == 'float':
            ok, msg, parsed = self.validate_numeric_input(value, low, high)
        elif kind == 'choice':
            ok, msg, parsed = self.validate_choice(value, low)
        elif kind == 'bool':
            ok, msg, parsed = self.validate_bool(value)
        else:
            parsed = str(value).strip()
            ok, msg = (True, "验证通过") if parsed else (False, "路径不能为空")
        if not ok:
            return False, f"[{section}] {key}={value}：{msg}", None
        return True, "验证通过", parsed

    def validate_consistency(self, config: RunConfig):
        """验证参数之间的一致性"""
        train = config.train
        if train.total_frames < train.t_max:
            return False, f"total_frames={train.total_frames} 不能小于 t_max={train.t_max}"
        if train.rmsprop_decay >= 1.0:
            return False, "rmsprop_decay 必须小于1"
        if train.rmsprop_eps <= 0:
            return False, "rmsprop_eps 必须为正数"
        if config.autoencoder.sentence_dim != train.sentence_dim:
            return False, "语义句向量维度不一致"
        return True, "参数一致性验证通过"

    def validate_all_inputs(self, sections: Dict[str, Dict[str, Any]]):
        """
        验证全部配置项

        参数:
        sections: 节 -> {键: 原始值}

        返回:
        is_valid: 是否全部有效
        error_messages: 错误信息列表
        parsed: 节 -> {键: 解析后的值}
        """
        error_messages = []
        parsed: Dict[str, Dict[str, Any]] = {}
        for section, items in sections.items():
            if section not in CONFIG_SCHEMA:
                error_messages.append(f"未知配置节 [{section}]")
                continue
            for key, value in items.items():
                ok, msg, value_ = self.validate_item(section, key, value)
                if not ok:
                    error_messages.append(msg)
                else:
                    parsed.setdefault(section, {})[key] = value_
        return len(error_messages) == 0, error_messages, parsed


def read_config_file(path: str) -> Dict[str, Dict[str, str]]:
    """读取 key = value 配置文件，返回 节 -> {键: 字符串值}"""
    if not os.path.isfile(path):
        raise SceneFileError(f"配置文件不存在: {path}")
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str
    try:
        with open(path, 'r', encoding='utf-8') as f:
            parser.read_file(f)
    except configparser.Error as exc:
        raise ConfigError(f"配置文件 {path} 格式错误: {exc}") from exc
    return {section: dict(parser.items(section)) for section in parser.sections()}


def build_run_config(parsed: Dict[str, Dict[str, Any]]) -> RunConfig:
    """把已验证的配置项写入 RunConfig"""
    config = RunConfig()
    train_values: Dict[str, Any] = {}
    ae_values: Dict[str, Any] = {}
    for section, items in parsed.items():
        for key, value in items.items():
            if (section, key) in _TRAIN_FIELDS:
                train_values[_TRAIN_FIELDS[(section, key)]] = value
            if section == 'scenes':
                setattr(config.scenes, key, value)
            elif section == 'semantics':
                ae_values[key] = value
            elif section == 'a3c':
                train_values[key] = value
            elif section == 'eval':
                setattr(config.evaluation, key, value)
            elif section == 'paths':
                config.paths[key] = value

    config.train = config.train.replace(**train_values)
    config.autoencoder = replace(config.autoencoder, **ae_values)
    return config


def load_run_config(path: Optional[str] = None,
                    overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> RunConfig:
    """
    加载运行配置

    参数:
    path: 配置文件路径，None 时全部使用缺省值
    overrides: 命令行参数覆盖，结构同配置文件（节 -> {键: 值}），值为 None 的项忽略

    返回:
    config: RunConfig；任何未知节、未知键或非法取值都会抛出 ConfigError 并列出全部问题
    """
    sections: Dict[str, Dict[str, Any]] = read_config_file(path) if path else {}
    for section, items in (overrides or {}).items():
        for key, value in items.items():
            if value is not None:
                sections.setdefault(section, {})[key] = value

    validator = ConfigValidator()
    is_valid, error_messages, parsed = validator.validate_all_inputs(sections)
    if not is_valid:
        source = f"配置文件 {path}" if path else "命令行参数"
        raise ConfigError(f"{source} 参数错误: " + "; ".join(error_messages))

    config = build_run_config(parsed)
    ok, msg = validator.validate_consistency(config)
    if not ok:
        raise ConfigError(msg)
    return config


def config_sections(config: RunConfig) -> List[Tuple[str, Dict[str, Any]]]:
    """RunConfig 展开为 (节, {键: 值}) 列表，用于写入报告"""
    train = config.train
    ae = config.autoencoder
    return [
        ('scenes', {f.name: getattr(config.scenes, f.name) for f in fields(config.scenes)}),
        ('featurizer', {'feature_dim': train.feature_dim, 'feature_seed': train.feature_seed}),
        ('semantics', {'sentence_dim': ae.sentence_dim, 'hidden': ae.hidden, 'epochs': ae.epochs,
                       'lr': ae.lr, 'seed': ae.seed}),
        ('policynet', {'variant': train.variant, 'embed_dim': train.embed_dim}),
        ('a3c', {key: getattr(train, key) for key in CONFIG_SCHEMA['a3c']}),
        ('eval', {f.name: getattr(config.evaluation, f.name) for f in fields(config.evaluation)}),
        ('paths', dict(config.paths)),
    ]
