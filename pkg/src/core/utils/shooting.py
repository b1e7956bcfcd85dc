#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
打靶法对照解 - 常系数一维问题 −a u″ − μ(u′)² = λ c u + h，u(0) = u(1) = 0

对称解由中点振幅 A = u(½) 决定。用 q = e^{μ(u−A)}（q(½)=1, q′(½)=0）积分
    −q″ = (λc(μA + ln q) + μh) q（各系数先除以 a）
边界条件 u(1) = 0 等价于 q(1) = e^{−μA}。上分支解在 q 变量下是光滑的。
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

# 设置日志
logger = logging.getLogger(__name__)

MIDPOINT = 0.5


def default_amplitudes() -> np.ndarray:
    positive = np.geomspace(1e-5, 500.0, 240)
    negative = -np.geomspace(1e-5, 60.0, 160)
    return np.sort(np.concatenate([negative, [0.0], positive]))


@dataclass(frozen=True)
class ShootingProblem:
    """常系数参数，内部按 a 归一化"""

    lam: float
    mu: float
    h: float
    c: float = 1.0
    a: float = 1.0

    @property
    def scaled(self):
        return self.lam * self.c / self.a, self.mu / self.a, self.h / self.a

    def rhs(self, amplitude: float):
        lam_c, mu, h = self.scaled

        def field(_x, state):
            q, dq = state
            log_q = np.log(max(q, np.finfo(float).tiny))
            return [dq, -(lam_c * (mu * amplitude + log_q) + mu * h) * q]

        return field


def _hit_zero(_x, state):
    return state[0]


_hit_zero.terminal = True
_hit_zero.direction = -1


def shooting_residual(problem: ShootingProblem, amplitude: float, rtol: float = 1e-11, atol: float = 1e-14) -> float:
    """
    G(A) = q(1) − e^{−μA}；q 提前到零时用线性外推的负值

    μ ≤ 0 时退化为直接对 u 打靶（G = u(1)）。
    """
    lam_c, mu, h = problem.scaled
    if mu <= 0:
        result = solve_ivp(
            lambda _x, s: [s[1], -(lam_c * s[0] + h)],
            (MIDPOINT, 1.0), [amplitude, 0.0], rtol=rtol, atol=atol,
        )
        return float(result.y[0, -1])
    result = solve_ivp(
        problem.rhs(amplitude), (MIDPOINT, 1.0), [1.0, 0.0],
        rtol=rtol, atol=atol, events=_hit_zero,
    )
    target = np.exp(-mu * amplitude) if -mu * amplitude < 700 else np.inf
    if result.status == 1:
        x_hit = float(result.t_events[0][0])
        slope = float(result.y_events[0][0][1])
        return -(1.0 - x_hit) * abs(slope) - target
    return float(result.y[0, -1]) - target


@dataclass(frozen=True)
class ShootingSolution:
    """打靶得到的对称解"""

    problem: ShootingProblem
    amplitude: float

    @property
    def sup_norm(self) -> float:
        return abs(self.amplitude)

    def profile(self, x: Sequence[float], rtol: float = 1e-11, atol: float = 1e-14) -> np.ndarray:
        """在给定点（[0,1] 内）上取值"""
        x = np.asarray(x, dtype=float)
        distance = np.abs(x - MIDPOINT)
        order = np.argsort(distance)
        points = MIDPOINT + distance[order]
        lam_c, mu, h = self.problem.scaled
        if mu <= 0:
            result = solve_ivp(
                lambda _x, s: [s[1], -(lam_c * s[0] + h)],
                (MIDPOINT, 1.0), [self.amplitude, 0.0], t_eval=points, rtol=rtol, atol=atol,
            )
            values_sorted = result.y[0]
        else:
            result = solve_ivp(
                self.problem.rhs(self.amplitude), (MIDPOINT, 1.0), [1.0, 0.0],
                t_eval=points, rtol=rtol, atol=atol,
            )
            q = np.maximum(result.y[0], np.finfo(float).tiny)
            values_sorted = self.amplitude + np.log(q) / mu
        values = np.empty_like(x)
        values[order] = values_sorted
        values[np.isclose(distance, MIDPOINT)] = 0.0
        return values


def shoot_solutions(
    lam: float,
    mu: float,
    h: float,
    c: float = 1.0,
    a: float = 1.0,
    amplitudes: Optional[Sequence[float]] = None,
) -> List[ShootingSolution]:
    """
    在振幅梯子上找出 G(A) 的所有变号区间并用 brentq 求根

    Returns:
        按振幅排序的对称解列表（可能为空）
    """
    problem = ShootingProblem(float(lam), float(mu), float(h), float(c), float(a))
    ladder = default_amplitudes() if amplitudes is None else np.sort(np.asarray(amplitudes, dtype=float))
    values = np.array([shooting_residual(problem, A) for A in ladder])
    solutions = []
    for k in range(ladder.size - 1):
        left, right = values[k], values[k + 1]
        if not (np.isfinite(left) and np.isfinite(right)):
            continue
        if left == 0.0:
            solutions.append(ShootingSolution(problem, float(ladder[k])))
            continue
        if left * right < 0:
            root = brentq(lambda A: shooting_residual(problem, A), ladder[k], ladder[k + 1], xtol=1e-13, rtol=1e-13)
            solutions.append(ShootingSolution(problem, float(root)))
    logger.info(f"打靶对照: λ={lam:g}, μ={mu:g}, h={h:g} 找到 {len(solutions)} 个解")
    return solutions
