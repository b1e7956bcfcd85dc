"""
Newton 求解、(P₀)、Picard / 单调迭代与序比较测试
"""

import numpy as np
import pytest

from src.core.exceptions import ConvergenceError, SingularJacobianError
from src.core.grid import VectorField, build_grid
from src.core.solver import (
    SolveOptions,
    check_subsolution,
    compare_order,
    fixed_point_map,
    monotone_iterate,
    newton_solve,
    picard_iterate,
    singularity_indicator,
    solve_P0,
    strict_subsolution_barrier,
    truncate_Ra,
)
from src.core.operators import linearize
from src.core.transform import exponential_profile


def test_solve_options_validation():
    with pytest.raises(ConvergenceError):
        SolveOptions(newton_tol=0.0)
    with pytest.raises(ConvergenceError):
        SolveOptions(damping=1.0)
    with pytest.raises(ConvergenceError):
        SolveOptions(formulation="spectral")


def test_linear_P0_oracle(problem_factory):
    """μ = 0，h = π² sin(πx)：u₀ ≈ sin(πx)"""
    p = problem_factory(resolution=199, mu=0.0, h=0.0)
    p = p.with_rhs(np.pi**2 * np.sin(np.pi * p.grid.x)[None, :])
    u0 = solve_P0(p)
    assert u0.converged
    assert np.max(np.abs(u0.u.values[0] - np.sin(np.pi * p.grid.x))) < 1e-4


def test_cole_hopf_convergence_order(problem_factory):
    """−u″ − (u′)² = 1：二阶收敛，h = 1/400 时误差小于 1e-4"""
    errors = []
    spacings = []
    for resolution in (99, 199, 399):
        p = problem_factory(resolution=resolution, mu=1.0, h=1.0)
        solution = solve_P0(p)
        assert solution.converged
        exact = exponential_profile(p.grid, 1.0, 1.0).values
        errors.append(float(np.max(np.abs(solution.u.values[0] - exact))))
        spacings.append(p.grid.spacing[0])
    orders = np.log(np.array(errors[:-1]) / np.array(errors[1:])) / np.log(np.array(spacings[:-1]) / np.array(spacings[1:]))
    assert np.all(orders >= 1.9)
    assert errors[-1] < 1e-4


def test_exponential_formulation_agrees_with_direct(problem_factory, exp_opts):
    p = problem_factory(resolution=99, mu=1.0, h=-0.1, lam=0.5)
    start = VectorField.zeros(p.grid, 1)
    direct = newton_solve(p, start)
    exponential = newton_solve(p, start, exp_opts)
    assert direct.converged and exponential.converged
    assert exponential.metadata["formulation"] == "exponential"
    # 两种格式的离散化误差同为 O(h²)
    assert direct.u.distance(exponential.u) < 1e-4


def test_exponential_formulation_requires_laplacian(problem_factory, exp_opts):
    from src.core.exceptions import OperatorError

    p = problem_factory(resolution=19, operators="pucci_minus")
    with pytest.raises(OperatorError):
        newton_solve(p, VectorField.zeros(p.grid, 1), exp_opts)


def test_linear_resonance_is_singular(problem_factory):
    """λ 取离散 Laplace 的主特征值时线性化奇异"""
    p = problem_factory(resolution=99, mu=0.0, h=0.0)
    h = p.grid.spacing[0]
    lam1 = 4.0 / h**2 * np.sin(np.pi * h / 2) ** 2
    p = p.with_rhs(np.sin(np.pi * p.grid.x)[None, :]).with_params(lam=lam1)
    with pytest.raises(SingularJacobianError) as info:
        newton_solve(p, VectorField.zeros(p.grid, 1))
    assert info.value.indicator <= 1e-10


def test_linear_solution_below_resonance(problem_factory):
    p = problem_factory(resolution=99, mu=0.0, h=0.0, lam=np.pi**2 - 1)
    p = p.with_rhs(np.sin(np.pi * p.grid.x)[None, :])
    h = p.grid.spacing[0]
    lam1 = 4.0 / h**2 * np.sin(np.pi * h / 2) ** 2
    solution = newton_solve(p, VectorField.zeros(p.grid, 1))
    assert solution.converged
    expected = np.sin(np.pi * p.grid.x) / (lam1 - p.lam)
    assert np.allclose(solution.u.values[0], expected, atol=1e-8)
    assert solution.jacobian_singularity_indicator > 1e-10


def test_singularity_indicator_positive_for_regular_problem(problem_factory):
    p = problem_factory(resolution=49, mu=1.0, h=-0.1, lam=0.1)
    J = linearize(p, VectorField.zeros(p.grid, 1))
    assert singularity_indicator(J) > 1e-6


def test_pucci_problem_newton_and_howard(problem_factory):
    """半光滑 Newton 与冻结策略的 Howard 迭代给出同一解"""
    p = problem_factory(resolution=99, operators="pucci_plus", mu=1.0, h=-0.5, lam=1.0)
    start = VectorField.zeros(p.grid, 1)
    newton = newton_solve(p, start)
    howard = newton_solve(p, start, SolveOptions(policy_freeze=True))
    assert newton.converged and howard.converged
    assert newton.u.distance(howard.u) < 1e-8
    assert newton.residual_norm <= 1e-9


def test_system_P0_decouples(problem_factory):
    p = problem_factory(resolution=49, mu=[1.0, 0.5], c=[[1, 1], [1, 1]], h=[-0.1, -0.2], operators=[None, None])
    u0 = solve_P0(p)
    assert u0.converged
    assert u0.lam == 0.0
    for i in range(2):
        single = solve_P0(p.component_problem(i))
        assert np.allclose(single.u.values[0], u0.u.values[i])


def test_picard_matches_newton(problem_factory):
    p = problem_factory(resolution=99, mu=1.0, h=-0.1, lam=0.05)
    newton = newton_solve(p, VectorField.zeros(p.grid, 1))
    picard = picard_iterate(p, tol=1e-12)
    assert picard.converged
    assert picard.u.distance(newton.u) <= 1e-8


def test_monotone_iteration_between_barrier_and_u0(problem_factory):
    """线性情形：从严格下解屏障出发单调上升到唯一解"""
    p = problem_factory(resolution=99, mu=0.0, h=-0.1, lam=0.5)
    u0 = solve_P0(p)
    xi, K = strict_subsolution_barrier(p)
    assert np.min(xi.values) >= -K
    assert check_subsolution(p, xi, "sub")[1] > 0
    result = monotone_iterate(p, xi, u0.u, start="sub", tol=1e-12)
    assert result.converged
    newton = newton_solve(p, u0.u)
    assert result.u.distance(newton.u) < 1e-6


def test_monotone_iteration_rejects_bad_bracket(problem_factory):
    p = problem_factory(resolution=49, mu=1.0, h=-0.1, lam=0.1)
    u0 = solve_P0(p)
    with pytest.raises(ConvergenceError):
        monotone_iterate(p, u0.u, VectorField(p.grid, u0.u.values - 1.0))


def test_compare_order_relations():
    grid = build_grid(1, [0.0, 1.0], 99)
    zero = VectorField.zeros(grid, 1)
    bump = VectorField(grid, np.sin(np.pi * grid.x))
    wave = VectorField(grid, np.sin(2 * np.pi * grid.x))

    report = compare_order(zero, bump)
    assert report.relation == "strict_ll"
    assert report.leq and report.strict_ll
    assert compare_order(bump, zero).relation == "strict_gg"
    assert compare_order(zero, wave).relation == "incomparable"
    assert compare_order(bump, bump).relation == "leq"


def test_check_subsolution_sides(problem_factory):
    p = problem_factory(resolution=49, mu=1.0, h=-0.1, lam=0.1)
    zero = VectorField.zeros(p.grid, 1)
    # h < 0：零函数的残差为 0.1 > 0，是上解不是下解
    assert check_subsolution(p, zero, "super")[0]
    assert not check_subsolution(p, zero, "sub")[0]
    with pytest.raises(ConvergenceError):
        check_subsolution(p, zero, "middle")


def test_truncate_Ra():
    grid = build_grid(1, [0.0, 1.0], 9)
    above = VectorField(grid, np.vstack([1.0 + grid.x, 2.0 - grid.x]))
    assert np.array_equal(truncate_Ra(above, 0.5).values, above.values)

    a = -0.3
    flat = VectorField(grid, np.full((2, grid.size), a - 1.0))
    assert np.all(truncate_Ra(flat, a).values == a)

    mixed = VectorField(grid, np.sin(2 * np.pi * grid.x)[None, :])
    cut = truncate_Ra(mixed, 0.0).values[0]
    positive = mixed.values[0] > 0
    assert np.array_equal(cut[positive], mixed.values[0][positive])
    assert np.all(cut[~positive] == 0.0)


def test_truncated_monotone_iteration(problem_factory):
    """a = 0 且解非正时 λ·max(u, 0) 消失，极限就是 (P₀) 的解"""
    p = problem_factory(resolution=99, mu=0.0, h=-0.1, lam=0.5)
    u0 = solve_P0(p)
    xi, _ = strict_subsolution_barrier(p)
    truncated = monotone_iterate(p, xi, u0.u, start="sub", tol=1e-12, truncate_below=0.0)
    assert truncated.converged
    assert truncated.metadata["truncate_below"] == 0.0
    assert truncated.u.distance(u0.u) < 1e-6

    plain = monotone_iterate(p, xi, u0.u, start="sub", tol=1e-12)
    assert plain.u.distance(u0.u) > 1e-4
    assert compare_order(plain.u, truncated.u).leq


def test_fixed_point_map_fixes_solution(problem_factory):
    p = problem_factory(resolution=99, mu=1.0, h=-0.1, lam=0.5)
    solution = newton_solve(p, solve_P0(p).u)
    assert solution.converged
    image = fixed_point_map(p, solution.u)
    assert image.distance(solution.u) < 1e-8


def test_fixed_point_map_without_lambda_and_gradient(problem_factory):
    """λ = 0、μ = 0 时映射与输入无关，恒为 u₀"""
    p = problem_factory(resolution=49, mu=0.0, h=-0.1, lam=0.0)
    u0 = solve_P0(p).u
    rng = np.random.default_rng(5)
    for _ in range(3):
        values = rng.standard_normal((1, p.grid.size))
        values[:, p.grid.boundary_mask] = 0.0
        image = fixed_point_map(p, VectorField(p.grid, values))
        assert image.distance(u0) < 1e-10
