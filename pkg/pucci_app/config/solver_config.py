"""
求解器配置文件
集中管理数值容差与迭代上限，避免硬编码
"""

import os
from typing import Any, Dict

from dotenv import load_dotenv

from src.core.continuation import ContinuationOptions
from src.core.solver import SolveOptions

# 加载环境变量
load_dotenv()


def _env_float(name: str, default: float) -> float:
    value = os.getenv(name)
    return float(value) if value not in (None, "") else default


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    return int(value) if value not in (None, "") else default


class SolverConfig:
    """求解器配置类"""

    # Newton
    NEWTON_TOL = _env_float("PUCCI_NEWTON_TOL", 1e-9)
    MAX_NEWTON_ITERS = _env_int("PUCCI_MAX_NEWTON_ITERS", 100)
    BACKTRACKING = _env_float("PUCCI_BACKTRACKING", 0.5)
    MIN_STEP = _env_float("PUCCI_MIN_STEP", 2.0**-20)
    SINGULAR_TOL = _env_float("PUCCI_SINGULAR_TOL", 1e-10)
    FORMULATION = os.getenv("PUCCI_FORMULATION", "direct")

    # 主特征值
    EIGEN_TOL = _env_float("PUCCI_EIGEN_TOL", 1e-8)
    EIGEN_MAX_ITERS = _env_int("PUCCI_EIGEN_MAX_ITERS", 500)

    # 延拓
    CONTINUATION_STEP = _env_float("PUCCI_CONTINUATION_STEP", 0.05)
    CONTINUATION_MIN_STEP = _env_float("PUCCI_CONTINUATION_MIN_STEP", 1e-8)
    CONTINUATION_MAX_STEP = _env_float("PUCCI_CONTINUATION_MAX_STEP", 1.0)
    CONTINUATION_MAX_POINTS = _env_int("PUCCI_CONTINUATION_MAX_POINTS", 500)
    SUP_CEILING = _env_float("PUCCI_SUP_CEILING", 1e6)

    # 不存在性搜索的种子梯子 t·φ₁
    SEED_LADDER = tuple(
        float(v) for v in os.getenv("PUCCI_SEED_LADDER", "1,2,5,10,20,50").split(",") if v.strip()
    )

    @classmethod
    def solve_options(cls, **overrides: Any) -> SolveOptions:
        """按配置构造 SolveOptions，overrides 覆盖对应字段"""
        values = {
            "newton_tol": cls.NEWTON_TOL,
            "max_newton_iters": cls.MAX_NEWTON_ITERS,
            "damping": cls.BACKTRACKING,
            "min_step": cls.MIN_STEP,
            "singular_tol": cls.SINGULAR_TOL,
            "formulation": cls.FORMULATION,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return SolveOptions(**values)

    @classmethod
    def continuation_options(cls, solve: SolveOptions = None, **overrides: Any) -> ContinuationOptions:
        values = {
            "step": cls.CONTINUATION_STEP,
            "min_step": cls.CONTINUATION_MIN_STEP,
            "max_step": cls.CONTINUATION_MAX_STEP,
            "max_points": cls.CONTINUATION_MAX_POINTS,
            "sup_ceiling": cls.SUP_CEILING,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return ContinuationOptions(solve=solve or cls.solve_options(), **values)

    @classmethod
    def validate_config(cls) -> Dict[str, bool]:
        """验证配置是否正确"""
        return {
            "tolerances_positive": min(cls.NEWTON_TOL, cls.EIGEN_TOL, cls.SINGULAR_TOL) > 0,
            "backtracking_in_range": 0 < cls.BACKTRACKING < 1,
            "iterations_positive": min(cls.MAX_NEWTON_ITERS, cls.EIGEN_MAX_ITERS, cls.CONTINUATION_MAX_POINTS) >= 1,
            "step_order": 0 < cls.CONTINUATION_MIN_STEP <= cls.CONTINUATION_STEP <= cls.CONTINUATION_MAX_STEP,
            "formulation_known": cls.FORMULATION in ("direct", "exponential"),
            "seed_ladder_positive": bool(cls.SEED_LADDER) and min(cls.SEED_LADDER) > 0,
        }
