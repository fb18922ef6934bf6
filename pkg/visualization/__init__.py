# -*- coding: utf-8 -*-
"""
可视化模块 - 训练奖励曲线绘制
"""

__version__ = "1.0.0"
__author__ = "金洪松" 