"""
测试公共夹具
"""

import os
import sys

import numpy as np
import pytest

# 添加项目根目录
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "..")))

from src.core.coupling import CouplingMatrix  # noqa: E402
from src.core.grid import build_grid  # noqa: E402
from src.core.operators import GradientMatrixSpec, LinearSpec, ProblemSpec, PucciSpec  # noqa: E402
from src.core.solver import SolveOptions  # noqa: E402

CONFIG_DIR = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "..", "config"))


def make_problem(
    resolution=99,
    operators=None,
    mu=1.0,
    c=1.0,
    h=-0.1,
    lam=0.0,
    gamma=1.0,
    two_parameter=False,
):
    """
    一维问题构造器

    Args:
        operators: None 表示单个 Laplace；字符串 "pucci_plus"/"pucci_minus" 表示 ℳ±(1,2)；
            列表时逐项按同样规则解释（也可直接给规格）
        mu: 标量或每分量列表
        c: 标量或 n×n 矩阵
        h: 标量、每分量列表或形状 (n, size) 的数组
    """
    grid = build_grid(1, [0.0, 1.0], resolution)

    def spec(entry):
        if entry is None:
            return LinearSpec.build(grid)
        if isinstance(entry, str):
            return PucciSpec.build(grid, 1 if entry == "pucci_plus" else -1, 1.0, 2.0)
        return entry

    if operators is None or isinstance(operators, str):
        operators = [operators]
    operators = [spec(entry) for entry in operators]
    n = len(operators)
    matrix = np.broadcast_to(np.asarray(c, dtype=float), (n, n)) if np.ndim(c) < 2 else np.asarray(c, dtype=float)
    rhs = np.asarray(h, dtype=float)
    if rhs.ndim == 0:
        rhs = np.full((n, grid.size), float(rhs))
    elif rhs.ndim == 1 and rhs.size == n:
        rhs = np.repeat(rhs[:, None], grid.size, axis=1)
    return ProblemSpec(
        grid=grid,
        operators=tuple(operators),
        gradient=GradientMatrixSpec.isotropic(grid, mu, n),
        coupling=CouplingMatrix.constant(grid, matrix),
        rhs=rhs,
        lam=lam,
        gamma=gamma,
        two_parameter=two_parameter,
    )


@pytest.fixture(scope="session")
def problem_factory():
    return make_problem


@pytest.fixture
def exp_opts():
    return SolveOptions(formulation="exponential")


@pytest.fixture
def config_dir():
    return CONFIG_DIR
