# -*- coding: utf-8 -*-
"""
异常定义模块
每类异常携带命令行退出码：2 配置错误，3 文件读写错误，4 数值计算失败
"""


class NavigationError(Exception):
    """导航软件异常基类"""

    exit_code = 1


class ConfigError(NavigationError, ValueError):
    """配置参数错误（未知键、取值越界、维度不匹配等）"""

    exit_code = 2


class ContractError(NavigationError, ValueError):
    """调用前置条件不满足（非法动作、非法位姿、缺少策略头等）"""

    exit_code = 2


class TargetSelectionError(ContractError):
    """候选位姿数量不足，无法选出k个目标"""


class SceneFileError(NavigationError, IOError):
    """场景文件、检查点或日志文件无法读取或已损坏"""

    exit_code = 3


class NumericError(NavigationError, ArithmeticError):
    """损失、梯度或参数更新出现非有限值"""

    exit_code = 4


class TrainingError(NumericError):
    """训练线程异常退出"""

    def __init__(self, message, worker_id=None):
        super().__init__(message)
        self.worker_id = worker_id
