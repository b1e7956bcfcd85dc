"""
算子测试：Pucci 闭式、Bellman、残差与线性化
"""

import numpy as np
import pytest

from src.core.coupling import CouplingMatrix
from src.core.exceptions import OperatorError
from src.core.grid import VectorField, build_grid
from src.core.operators import (
    BellmanSpec,
    GradientMatrixSpec,
    LinearSpec,
    ProblemSpec,
    PucciSpec,
    apply_operator,
    dual_operator,
    extremal_operator,
    gradient_quadratic,
    linearize,
    pucci_minus,
    pucci_plus,
    residual,
)


def test_pucci_closed_form():
    X = np.diag([1.0, -2.0])
    assert pucci_plus(X, 1.0, 2.0) == pytest.approx(0.0)
    assert pucci_minus(X, 1.0, 2.0) == pytest.approx(-3.0)
    assert pucci_plus(3.0, 1.0, 2.0) == pytest.approx(6.0)
    assert pucci_minus(-3.0, 1.0, 2.0) == pytest.approx(-6.0)
    # 非对角矩阵：特征值 3, −1
    X = np.array([[1.0, 2.0], [2.0, 1.0]])
    assert pucci_plus(X, 1.0, 2.0) == pytest.approx(2.0 * 3.0 - 1.0)
    assert pucci_minus(X, 1.0, 2.0) == pytest.approx(3.0 - 2.0)


def test_pucci_duality():
    """ℳ⁻(X) = −ℳ⁺(−X)"""
    rng = np.random.default_rng(3)
    for _ in range(20):
        A = rng.standard_normal((2, 2))
        X = A + A.T
        assert pucci_minus(X, 0.5, 3.0) == pytest.approx(-pucci_plus(-X, 0.5, 3.0))


def test_pucci_invalid_input():
    with pytest.raises(OperatorError):
        pucci_plus(np.array([[1.0, 2.0], [0.0, 1.0]]), 1.0, 2.0)
    with pytest.raises(OperatorError):
        pucci_plus(1.0, 2.0, 1.0)
    with pytest.raises(OperatorError):
        pucci_minus(np.eye(3), 1.0, 2.0)


def test_gradient_quadratic():
    assert gradient_quadratic([1.0, 2.0], [[2.0, 0.0], [0.0, 1.0]]) == pytest.approx(6.0)
    with pytest.raises(OperatorError):
        gradient_quadratic([1.0], [[1.0, 0.0], [0.0, 1.0]])


def test_operator_validation():
    grid = build_grid(1, [0.0, 1.0], 9)
    with pytest.raises(OperatorError):
        LinearSpec.build(grid, a=0.0)
    with pytest.raises(OperatorError):
        PucciSpec.build(grid, 2, 1.0, 2.0)
    with pytest.raises(OperatorError):
        BellmanSpec("max", ())
    with pytest.raises(OperatorError):
        GradientMatrixSpec(np.array([[[[1.0, 1.0], [0.0, 1.0]]]]))


def test_dual_operator():
    grid = build_grid(1, [0.0, 1.0], 9)
    op = PucciSpec.build(grid, 1, 1.0, 2.0)
    assert dual_operator(op).sign == -1
    bellman = BellmanSpec("max", (LinearSpec.build(grid), LinearSpec.build(grid, a=2.0)))
    assert dual_operator(bellman).mode == "min"


def test_extremal_operator_drift_term():
    """u = x(1−x)：u″ = −2，|u′| = |1 − 2x|"""
    grid = build_grid(1, [0.0, 1.0], 19)
    u = grid.x * (1 - grid.x)
    interior = grid.interior_mask
    slope = np.abs(1 - 2 * grid.x[interior])
    upper = apply_operator(extremal_operator(grid, 1, 1.0, 2.0, 0.5), grid, u)[interior]
    lower = apply_operator(extremal_operator(grid, -1, 1.0, 2.0, 0.5), grid, u)[interior]
    assert np.allclose(upper, -2.0 + 0.5 * slope)
    assert np.allclose(lower, -4.0 - 0.5 * slope)
    # 对偶算子：G(X) = −F(−X)
    dual = apply_operator(dual_operator(extremal_operator(grid, 1, 1.0, 2.0, 0.5)), grid, u)[interior]
    assert np.allclose(dual, -apply_operator(extremal_operator(grid, 1, 1.0, 2.0, 0.5), grid, -u)[interior])


def test_bellman_matches_pucci_in_1d():
    """一维时 max(u″, 2u″) 就是 ℳ⁺(1,2)"""
    grid = build_grid(1, [0.0, 1.0], 49)
    u = np.sin(3 * np.pi * grid.x)
    bellman = BellmanSpec("max", (LinearSpec.build(grid, a=1.0), LinearSpec.build(grid, a=2.0)))
    pucci = PucciSpec.build(grid, 1, 1.0, 2.0)
    assert np.allclose(apply_operator(bellman, grid, u), apply_operator(pucci, grid, u))


def test_residual_of_exact_polynomial(problem_factory):
    """u = x(1−x)：中心差分精确，−u″ = 2"""
    p = problem_factory(resolution=19, mu=0.0, h=2.0)
    u = VectorField(p.grid, p.grid.x * (1 - p.grid.x))
    r = residual(p, u).values
    assert np.max(np.abs(r)) < 1e-10


def test_linearization_matches_finite_difference():
    grid = build_grid(1, [0.0, 1.0], 15)
    interior = grid.interior_mask
    p = ProblemSpec(
        grid=grid,
        operators=(LinearSpec.build(grid, a=1.5, b=0.2), PucciSpec.build(grid, 1, 1.0, 2.0)),
        gradient=GradientMatrixSpec.isotropic(grid, [1.0, 0.5], 2),
        coupling=CouplingMatrix.constant(grid, [[1.0, 0.5], [0.2, 1.0]]),
        rhs=np.full((2, grid.size), -0.1),
        lam=0.3,
    )
    # 第二分量取严格凹函数，扰动后 Pucci 策略不变
    u = VectorField(grid, np.vstack([np.sin(np.pi * grid.x), 0.5 * np.sin(np.pi * grid.x)]) * interior)
    direction = np.vstack([grid.x * (1 - grid.x), 0.1 * np.cos(grid.x) * interior])
    J = linearize(p, u)
    eps = 1e-7
    base = residual(p, u).values
    shifted = residual(p, VectorField(grid, u.values + eps * direction)).values
    fd = ((shifted - base) / eps).ravel()
    assert np.max(np.abs(J @ direction.ravel() - fd)) < 1e-4 * max(1.0, np.max(np.abs(fd)))
