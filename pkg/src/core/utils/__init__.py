"""
数值核心的辅助工具，包含系数表达式语法与打靶法对照解。
"""

from .expression import Expression, parse_expression
from .shooting import ShootingSolution, shoot_solutions

__all__ = [
    'Expression',
    'parse_expression',
    'ShootingSolution',
    'shoot_solutions'
]
