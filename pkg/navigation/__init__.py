# -*- coding: utf-8 -*-
"""
导航模块 - 场景仿真、语义特征与A3C训练的核心算法实现
"""

__version__ = "1.0.0"
__author__ = "金洪松"
