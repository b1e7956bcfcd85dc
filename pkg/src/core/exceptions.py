#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
异常定义模块 - 数值核心统一的异常层次结构

所有数值模块抛出的异常都继承自 PucciLabError，
命令行层根据异常类型映射到退出码。
"""

from typing import Any, Optional


class PucciLabError(Exception):
    """项目基础异常类"""

    def __init__(self, message: str, **context: Any):
        """
        初始化异常

        Args:
            message: 错误描述
            **context: 附加的结构化上下文（见证节点、最后迭代值等）
        """
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(
            f"{key}={value}" for key, value in self.context.items()
            if not hasattr(value, "shape")
        )
        return f"{self.message} ({details})" if details else self.message


class GridError(PucciLabError):
    """网格构造错误"""


class CouplingError(PucciLabError):
    """耦合矩阵不满足非负性等约束"""


class OperatorError(PucciLabError):
    """算子规格或离散导数错误"""


class TransformDomainError(PucciLabError):
    """指数变换溢出或定义域错误"""


class EigenError(PucciLabError):
    """主特征值迭代失败"""


class ConvergenceError(PucciLabError):
    """非线性求解不收敛"""


class SingularJacobianError(ConvergenceError):
    """线性化矩阵奇异"""

    def __init__(self, message: str, indicator: float, **context: Any):
        super().__init__(message, indicator=indicator, **context)
        self.indicator = indicator


class MonotonicityError(ConvergenceError):
    """单调迭代的序被破坏（通常需要更大的平移常数 K）"""


class ContinuationError(PucciLabError):
    """延拓起点失败"""


class VerificationError(PucciLabError):
    """验证报告的输入不足"""


class ConfigError(PucciLabError):
    """配置文件错误，携带行列位置或 section/key"""

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        column: Optional[int] = None,
        key: Optional[str] = None,
        witness: Any = None,
    ):
        super().__init__(message)
        self.line = line
        self.column = column
        self.key = key
        self.witness = witness

    def __str__(self) -> str:
        parts = []
        if self.line is not None:
            parts.append(f"第{self.line}行")
        if self.column is not None:
            parts.append(f"第{self.column}列")
        if self.key:
            parts.append(self.key)
        if self.witness is not None:
            parts.append(f"见证={self.witness}")
        location = " ".join(parts)
        return f"{self.message} [{location}]" if location else self.message
