#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
指数变换模块 - mv = e^{mu} − 1 与 mw = 1 − e^{−mu}

既用作求解器的变量替换，也用来生成精确解做对照。
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Union

import numpy as np

from src.core.exceptions import GridError, TransformDomainError
from src.core.grid import Grid, ScalarField

# 设置日志
logger = logging.getLogger(__name__)

# 双精度指数上限
EXPONENT_LIMIT = 700.0

FieldLike = Union[ScalarField, np.ndarray]


@dataclass(frozen=True)
class ExpChangeParams:
    """指数变换参数 m > 0"""

    m: float

    def __post_init__(self):
        if not (self.m > 0 and np.isfinite(self.m)):
            raise TransformDomainError(f"指数变换参数必须为正，收到 m={self.m}")


def _unwrap(u: FieldLike):
    if isinstance(u, ScalarField):
        return u.values, u.grid
    return np.asarray(u, dtype=float), None


def _wrap(values: np.ndarray, grid: Grid) -> FieldLike:
    return ScalarField(grid, values) if grid is not None else values


def exp_change_up(u: FieldLike, m: float) -> FieldLike:
    """v = (e^{mu} − 1)/m"""
    ExpChangeParams(m)
    values, grid = _unwrap(u)
    exponent = m * values
    if np.max(exponent, initial=-np.inf) > EXPONENT_LIMIT:
        node = int(np.argmax(exponent))
        raise TransformDomainError("指数变换溢出 (m·u > 700)", node=node, exponent=float(exponent[node]))
    return _wrap(np.expm1(exponent) / m, grid)


def exp_change_down(u: FieldLike, m: float) -> FieldLike:
    """w = (1 − e^{−mu})/m，恒有 w < 1/m"""
    ExpChangeParams(m)
    values, grid = _unwrap(u)
    exponent = -m * values
    if np.max(exponent, initial=-np.inf) > EXPONENT_LIMIT:
        node = int(np.argmax(exponent))
        raise TransformDomainError("指数变换溢出 (−m·u > 700)", node=node, exponent=float(exponent[node]))
    return _wrap(-np.expm1(exponent) / m, grid)


def invert_up(v: FieldLike, m: float) -> FieldLike:
    """u = ln(1 + mv)/m，要求 1 + mv > 0"""
    ExpChangeParams(m)
    values, grid = _unwrap(v)
    argument = 1.0 + m * values
    if np.any(argument <= 0):
        node = int(np.argmin(argument))
        raise TransformDomainError("1 + m·v ≤ 0，逆变换无定义", node=node, value=float(values[node]))
    return _wrap(np.log1p(m * values) / m, grid)


def verify_exp_sandwich(
    u: ScalarField,
    m: float,
    lam_p: float,
    Lam_p: float,
    tol_factor: float = 10.0,
) -> Dict[str, Any]:
    """
    逐节点检验夹逼不等式
    ℳ±(D²u) + mλ_P|Du|² ≤ ℳ±(D²v)/(1+mv) ≤ ℳ±(D²u) + mΛ_P|Du|²

    违背量按 max(1, |下界|, |上界|) 归一化，与 tol_factor·h² 比较。

    Returns:
        {"passed", "max_violation", "tolerance", "violations", "worst_node"}
    """
    if not isinstance(u, ScalarField):
        raise GridError("verify_exp_sandwich 需要 ScalarField")
    if not (0 < lam_p <= Lam_p):
        raise TransformDomainError(f"椭圆常数无效: ({lam_p}, {Lam_p})")
    grid = u.grid
    v = exp_change_up(u, m)
    du1, du2 = grid.derivatives(u.values)
    dv1, dv2 = grid.derivatives(v.values)
    interior = grid.interior_mask
    grad_sq = np.sum(du1**2, axis=0)

    def plus(d2):
        return np.sum(np.where(d2 > 0, Lam_p, lam_p) * d2, axis=0)

    def minus(d2):
        return np.sum(np.where(d2 > 0, lam_p, Lam_p) * d2, axis=0)

    h = max(grid.spacing)
    tolerance = tol_factor * h**2
    violations = {}
    worst_node = None
    overall = 0.0
    for name, extremal in (("plus", plus), ("minus", minus)):
        base = extremal(du2)
        lower = base + m * lam_p * grad_sq
        upper = base + m * Lam_p * grad_sq
        middle = extremal(dv2) / (1.0 + m * v.values)
        excess = np.maximum.reduce([np.zeros_like(lower), lower - middle, middle - upper])
        scale = np.maximum.reduce([np.ones_like(lower), np.abs(lower), np.abs(upper)])
        relative = np.where(interior, excess / scale, 0.0)
        violations[name] = float(np.max(relative))
        if violations[name] >= overall:
            overall = violations[name]
            worst_node = int(np.argmax(relative))

    passed = overall <= tolerance
    if not passed:
        logger.warning(f"⚠️ 指数变换夹逼检验失败: 违背 {overall:.3e} > {tolerance:.3e}")
    return {
        "passed": passed,
        "max_violation": overall,
        "tolerance": tolerance,
        "violations": violations,
        "worst_node": worst_node,
    }


def exponential_profile(grid: Grid, mu: float, h: float) -> ScalarField:
    """
    −u″ − μ(u′)² = h（常数 h）在区间上的精确解，u 在两端为零

    w = e^{μu} 满足 −w″ = μh·w，w = 1 于端点。
    """
    if grid.dim != 1:
        raise GridError("exponential_profile 只支持 1 维网格")
    ExpChangeParams(mu)
    lower, upper = grid.extents[0]
    center = 0.5 * (lower + upper)
    half = 0.5 * (upper - lower)
    x = grid.x
    k2 = mu * h
    if k2 > 0:
        k = np.sqrt(k2)
        if k * half >= np.pi / 2:
            raise TransformDomainError("μh 过大，区间上不存在正的 e^{μu}", mu=mu, h=h)
        w = np.cos(k * (x - center)) / np.cos(k * half)
    elif k2 < 0:
        k = np.sqrt(-k2)
        w = np.cosh(k * (x - center)) / np.cosh(k * half)
    else:
        w = np.ones_like(x)
    u = np.log(w) / mu
    u[grid.boundary_mask] = 0.0
    return ScalarField(grid, u)
