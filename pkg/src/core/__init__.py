"""
数值核心模块，包含网格、耦合、算子、指数变换、主特征值、求解器、延拓与验证。
"""

__all__ = [
    'grid',
    'coupling',
    'operators',
    'transform',
    'eigen',
    'solver',
    'continuation',
    'verify',
    'exceptions',
    'utils'
]
