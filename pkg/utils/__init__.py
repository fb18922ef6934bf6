# -*- coding: utf-8 -*-
"""
工具模块 - 运行配置、检查点与结果导出
"""

__version__ = "1.0.0"
__author__ = "金洪松" 