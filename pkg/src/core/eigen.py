#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
主特征值模块 - 正齐次真算子的加权主特征对 λ₁^±, φ₁^±

反幂迭代：解 −F[w] = c·v_k，λ_k = 1/max|w|，v_{k+1} = w/max|w|。
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from src.core.exceptions import ConvergenceError, EigenError
from src.core.grid import Grid, ScalarField
from src.core.operators import OperatorSpec, apply_operator
from src.core.solver import SolveOptions, solve_operator_equation

# 设置日志
logger = logging.getLogger(__name__)

ANTIMAXIMUM_COLUMNS = ["lambda", "min_u", "max_u", "sign", "status"]


@dataclass
class EigenResult:
    """主特征对"""

    sign: int
    lambda1: float
    phi1: ScalarField
    iterations: int
    residual: float
    converged: bool = True

    @property
    def sign_label(self) -> str:
        return "+" if self.sign > 0 else "-"


def _weight_values(c: ScalarField) -> np.ndarray:
    weight = c.values * c.grid.interior_mask
    if np.any(weight < 0):
        raise EigenError("权函数 c 必须非负", node=int(np.argmin(weight)))
    if not np.any(weight > 0):
        raise EigenError("权函数 c 的非零模式为空")
    return weight


def principal_eigenpair(
    op: OperatorSpec,
    c: ScalarField,
    sign: int = 1,
    tol: float = 1e-8,
    max_iters: int = 500,
    residual_factor: float = 1e-6,
    initial: Optional[np.ndarray] = None,
    opts: Optional[SolveOptions] = None,
) -> EigenResult:
    """
    计算主特征对 F[φ] + λ₁ c φ = 0，max(±φ) = 1

    Args:
        op: 无零阶项的正齐次算子
        c: 权函数（c ⪈ 0）
        sign: +1 求正特征函数，-1 求负特征函数
        tol: λ 的相对收敛容差
        max_iters: 最大迭代次数
        residual_factor: 残差容差因子，容差为 residual_factor·λ·max c
        initial: 可选初始场（符号需与 sign 一致）
        opts: 内层求解选项

    Returns:
        EigenResult

    Raises:
        EigenError: 迭代不收敛或权函数为空
    """
    if sign not in (1, -1):
        raise EigenError(f"sign 必须为 ±1，收到 {sign}")
    grid = c.grid
    weight = _weight_values(c)
    interior = grid.interior_mask

    v = sign * interior.astype(float) if initial is None else np.asarray(initial, dtype=float) * interior
    lam_prev = np.nan
    w = None
    for k in range(1, max_iters + 1):
        guess = None if w is None else w
        try:
            w = solve_operator_equation(op, grid, weight * v, 0.0, initial=guess, opts=opts)
        except ConvergenceError as e:
            raise EigenError(f"反幂迭代第 {k} 步内层求解失败: {e}", iteration=k, last_iterate=v) from e
        scale = float(np.max(np.abs(w)))
        if scale == 0.0:
            raise EigenError("反幂迭代得到零场", iteration=k)
        lam = 1.0 / scale
        v_next = w * lam
        # F[v_next] + λ c v_next = λ c (v_next − v_k)
        residual = float(np.max(np.abs(lam * weight * (v_next - v))))
        v = v_next
        if np.isfinite(lam_prev) and abs(lam - lam_prev) <= tol * lam and residual <= residual_factor * lam * np.max(weight):
            residual = float(np.max(np.abs(apply_operator(op, grid, v) + lam * weight * v)))
            logger.info(f"✅ 主特征值 λ₁{'+' if sign > 0 else '-'} = {lam:.8g}（{k} 次迭代, 残差 {residual:.2e}）")
            return EigenResult(sign, lam, ScalarField(grid, v), k, residual)
        lam_prev = lam

    raise EigenError(
        f"反幂迭代 {max_iters} 次未收敛",
        iterations=max_iters,
        last_lambda=lam_prev,
        last_iterate=v,
    )


def antimaximum_solve(
    op: OperatorSpec,
    c: ScalarField,
    f: ScalarField,
    lam: float,
    opts: Optional[SolveOptions] = None,
) -> np.ndarray:
    """解 −F[u] − λ c u = f，u = 0 于边界"""
    weight = _weight_values(c)
    return solve_operator_equation(op, c.grid, f.values, -lam * weight, opts=opts)


def antimaximum_window(
    op: OperatorSpec,
    c: ScalarField,
    f: ScalarField,
    lam_step: float,
    max_steps: int,
    lambda1: Optional[float] = None,
    opts: Optional[SolveOptions] = None,
) -> Dict[str, Any]:
    """
    反极大值原理的经验窗口

    对 λ = λ₁⁻ + k·lam_step（k = 1..max_steps）求解并记录符号，
    epsilon0_estimate 为 λ₁⁻ 之上连续 u < 0 的最大窗口。

    Returns:
        {"epsilon0_estimate", "lambda1", "table", "degenerate"}
    """
    grid = c.grid
    interior = grid.interior_mask
    if not np.any(np.abs(f.values[interior]) > 0):
        logger.warning("⚠️ f ≡ 0：反极大值窗口无定义")
        return {
            "epsilon0_estimate": None,
            "lambda1": lambda1,
            "table": pd.DataFrame(columns=ANTIMAXIMUM_COLUMNS),
            "degenerate": True,
        }
    if lambda1 is None:
        lambda1 = principal_eigenpair(op, c, -1, opts=opts).lambda1

    rows = []
    for k in range(1, max_steps + 1):
        lam = lambda1 + k * lam_step
        try:
            u = antimaximum_solve(op, c, f, lam, opts)
            u_int = u[interior]
            if np.all(u_int < 0):
                sign = "negative"
            elif np.all(u_int > 0):
                sign = "positive"
            else:
                sign = "mixed"
            rows.append({"lambda": lam, "min_u": float(u_int.min()), "max_u": float(u_int.max()), "sign": sign, "status": "ok"})
        except ConvergenceError as e:
            logger.warning(f"⚠️ λ={lam:.6g} 处求解失败: {e}")
            rows.append({"lambda": lam, "min_u": np.nan, "max_u": np.nan, "sign": "unknown", "status": "failed"})

    table = pd.DataFrame(rows, columns=ANTIMAXIMUM_COLUMNS)
    window = 0
    for sign in table["sign"]:
        if sign != "negative":
            break
        window += 1
    epsilon0 = window * lam_step
    logger.info(f"反极大值窗口: ε₀ ≈ {epsilon0:.4g}（λ₁⁻ = {lambda1:.6g}）")
    return {"epsilon0_estimate": epsilon0, "lambda1": lambda1, "table": table, "degenerate": False}


def eigenpair_table(result: EigenResult, grid: Grid) -> pd.DataFrame:
    """特征函数导出表"""
    data = {"index": np.arange(grid.size), "x": grid.x}
    if grid.dim == 2:
        data["y"] = grid.y
    data["phi"] = result.phi1.values
    return pd.DataFrame(data)
