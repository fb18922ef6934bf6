# -*- coding: utf-8 -*-
"""
结果绘图器 - 训练奖励曲线
"""

import io
from typing import Dict, Tuple

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from navigation.errors import ContractError

# 设置中文字体
plt.rcParams['font.sans-serif'] = ['SimHei', 'Microsoft YaHei', 'DejaVu Sans']
plt.rcParams['axes.unicode_minus'] = False
# 固定SVG中的随机标识，保证相同输入输出相同文本
plt.rcParams['svg.hashsalt'] = 'reward-curve'

DEFAULT_WINDOW = 500


def moving_average(values, window: int) -> np.ndarray:
    """
    尾随滑动平均

    参数:
    values: 序列
    window: 窗口大小；大于序列长度时整个序列取一个平均值

    返回:
    averages: 长度为 n - min(window, n) + 1
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return values
    if window < 1:
        raise ContractError(f"滑动窗口 {window} 必须不小于1")
    w = min(window, values.size)
    cumsum = np.concatenate([[0.0], np.cumsum(values)])
    return (cumsum[w:] - cumsum[:-w]) / w


class ResultPlotter:
    """结果绘图器类"""

    def reward_curve_series(self, log: pd.DataFrame, window: int = DEFAULT_WINDOW
                            ) -> Dict[Tuple[str, int], Tuple[np.ndarray, np.ndarray]]:
        """
        每个 (场景, 目标) 的奖励曲线数据

        返回:
        series: (scene_id, target_idx) -> (帧数, 回报滑动平均)
        """
        if log.empty:
            raise ContractError("奖励日志为空，无法绘图")
        series = {}
        for (scene_id, target_idx), group in log.groupby(['scene_id', 'target_idx'], sort=True):
            group = group.sort_values('frames', kind='mergesort')
            averages = moving_average(group['episode_return'].to_numpy(), window)
            frames = group['frames'].to_numpy()[len(group) - len(averages):]
            series[(str(scene_id), int(target_idx))] = (frames, averages)
        return series

    def create_reward_plot(self, log: pd.DataFrame, window: int = DEFAULT_WINDOW):
        """绘制奖励曲线：横轴为训练帧数，纵轴为回合回报的滑动平均，每个 (场景, 目标) 一条折线"""
        series = self.reward_curve_series(log, window)
        fig, ax = plt.subplots(figsize=(10, 6))
        for (scene_id, target_idx), (frames, averages) in series.items():
            ax.plot(frames, averages, marker='o' if len(frames) == 1 else None,
                    linewidth=1.2, label=f"{scene_id} #{target_idx}")
        ax.set_xlabel('训练帧数')
        ax.set_ylabel(f'回合回报（{window} 回合滑动平均）')
        ax.set_title('目标观测的奖励变化')
        ax.grid(True, alpha=0.3)
        if len(series) <= 20:
            ax.legend(fontsize=8, loc='lower right')
        fig.tight_layout()
        return fig

    def render_svg(self, fig) -> str:
        buffer = io.StringIO()
        fig.savefig(buffer, format='svg', metadata={'Date': None})
        plt.close(fig)
        return buffer.getvalue()

    def save_reward_plot(self, log: pd.DataFrame, filename: str, window: int = DEFAULT_WINDOW) -> int:
        """保存奖励曲线SVG，返回折线数量"""
        series_count = len(self.reward_curve_series(log, window))
        svg = self.render_svg(self.create_reward_plot(log, window))
        with open(filename, 'w', encoding='utf-8') as f:
            f.write(svg)
        return series_count
