"""
验证测试：假设检查、估计常数、先验界、不存在性搜索、多解认证与负上解屏障
"""

import numpy as np
import pytest

from src.core.continuation import ContinuationOptions, natural_continue
from src.core.exceptions import VerificationError
from src.core.solver import SolveOptions, solve_P0
from src.core.utils.shooting import shoot_solutions
from src.core.verify import (
    MULTIPLICITY_COLUMNS,
    apriori_report,
    certify_multiplicity,
    check_hypotheses,
    estimate_constants,
    hat_eigenvalue,
    negative_supersolution_barrier,
    nonexistence_nonneg,
    nonexistence_search_Pk,
)

EXP_CONTINUATION = ContinuationOptions(solve=SolveOptions(formulation="exponential"))


def test_hypotheses_scalar_model(problem_factory):
    report = check_hypotheses(problem_factory(resolution=49))
    assert report.passed
    assert report.fully_coupled
    assert report.H0["passed"]
    assert report.u0.converged
    assert report.block_summary == [{"block": 1, "size": 1, "components": [1]}]


def test_hypotheses_diagonal_system_violates_H3(problem_factory):
    p = problem_factory(resolution=49, operators=[None, None], c=[[1, 0], [0, 0]], h=[-0.1, -0.1])
    report = check_hypotheses(p)
    assert "H3" in report.violations
    assert not report.fully_coupled
    assert not report.passed


def test_H4_vacuous_when_u0_vanishes(problem_factory):
    report = check_hypotheses(problem_factory(resolution=29, h=0.0))
    assert report.H4_vacuous
    assert "H4" not in report.violations


def test_estimate_constants_scalar_model(problem_factory):
    p = problem_factory(resolution=99)
    u0 = solve_P0(p)
    constants = estimate_constants(p, (), u0.u)
    assert constants.m1 == pytest.approx(1.0)
    assert constants.m2 == pytest.approx(1.0)
    assert constants.lambda1 == pytest.approx(np.pi**2, rel=1e-2)
    assert constants.A == pytest.approx(constants.lambda1)
    assert constants.C0 == pytest.approx(1.1 * np.max(u0.u.negative_part_norms()))
    assert np.all(constants.c_tilde.values == 1.0)
    # u₀ ≤ 0 时边界商为负
    assert constants.I_quotients[0] < 0
    assert set(constants.summary()) == {"C0", "m1", "m2", "A", "lambda1"}


def test_apriori_report_bounded_window(problem_factory):
    p = problem_factory(resolution=99)
    branch = natural_continue(p, 0.0, 2.0, solve_P0(p))
    report = apriori_report([branch], 0.5, 1.5, p)
    assert report["passed"] and report["finite"]
    assert not report["edge_growth"]
    assert report["points"] >= 1
    assert list(report["table"]["component"]) == [1]
    assert report["constants"] is not None

    with pytest.raises(VerificationError):
        apriori_report([branch], 5.0, 6.0)
    with pytest.raises(VerificationError):
        apriori_report([branch], 1.5, 0.5)


def test_apriori_report_flags_growth_near_resonance(problem_factory):
    """μ = 0, h = sin(πx)：λ → λ₁ 时 sup 范数爆破"""
    p = problem_factory(resolution=99, mu=0.0, h=0.0)
    p = p.with_rhs(np.sin(np.pi * p.grid.x)[None, :])
    branch = natural_continue(p, 0.0, 0.99 * np.pi**2, solve_P0(p))
    report = apriori_report([branch], 0.0, 0.99 * np.pi**2)
    assert report["edge_growth"]
    assert report["edge_flags"]["upper"]
    assert not report["passed"]


def test_search_Pk_finds_nothing_for_k1(problem_factory, exp_opts):
    p = problem_factory(resolution=99, lam=1.0)
    u0 = solve_P0(p, exp_opts)
    constants = estimate_constants(p, (), u0.u)
    search = nonexistence_search_Pk(p, 1, constants, u0.u, opts=exp_opts)
    assert search["status"] == "all-failed"
    assert search["counterexample"] is None
    assert not search["attempts"]["converged"].any()
    # 零、u₀ 以及 ±t·φ₁
    assert len(search["attempts"]) == 2 + 2 * 6

    # 修改后的常系数右端项远超 λ₁，打靶也找不到解
    rhs = float(search["rhs"][0, 50])
    assert rhs > np.pi**2
    assert shoot_solutions(1.0, 1.0, rhs) == []


def test_search_P0_is_the_original_problem(problem_factory, exp_opts):
    p = problem_factory(resolution=49, lam=1.0)
    u0 = solve_P0(p, exp_opts)
    constants = estimate_constants(p, (), u0.u)
    search = nonexistence_search_Pk(p, 0, constants, u0.u, opts=exp_opts)
    assert search["status"] == "solution-found"
    with pytest.raises(VerificationError):
        nonexistence_search_Pk(p, -1, constants)


def test_hat_eigenvalue_gradient_shift(problem_factory):
    p = problem_factory(resolution=99)
    result = hat_eigenvalue(p)
    # u₀ = 0.05 x(x−1)，‖u₀′‖∞ = 0.05
    assert result["b_hat"] == pytest.approx(0.1, rel=5e-2)
    assert result["lambda_hat1"] >= np.pi**2 * (1 - 5e-3)

    flat = hat_eigenvalue(problem_factory(resolution=99, h=0.0))
    assert flat["b_hat"] == pytest.approx(0.0, abs=1e-12)
    assert flat["lambda_hat1"] == pytest.approx(np.pi**2, rel=5e-3)


def test_nonexistence_nonneg_and_sanity_inversion(problem_factory):
    p = problem_factory(resolution=99, h=0.1)
    lambda_hat1 = hat_eigenvalue(p)["lambda_hat1"]
    above = nonexistence_nonneg(p, 1.5 * lambda_hat1, lambda_hat1)
    assert above["status"] == "none-found"
    assert not above["nonnegative_found"]

    below = nonexistence_nonneg(p, 0.5, lambda_hat1)
    assert below["nonnegative_found"]
    assert np.min(below["solution"].u.values) >= -1e-9


def test_certify_multiplicity_scalar_model(problem_factory):
    """h = −0.1, μ = 1：每个 λ > 0 处两解且严格有序，与打靶对照一致"""
    p = problem_factory(resolution=399)
    lams = [0.0, 1.0, 2.0]
    result = certify_multiplicity(p, lams, options=EXP_CONTINUATION)
    table = result["table"]
    assert list(table.columns) == MULTIPLICITY_COLUMNS
    assert result["passed"]
    assert table.iloc[0]["status"] == "multiplicity not applicable"
    certified = table.iloc[1:]
    assert (certified["status"] == "certified").all()
    assert (certified["count"] == 2).all()
    assert certified["sign_clause"].all()
    # 上分支随 λ 递减，下分支 sup 随 λ 增大
    assert certified["upper_sup"].iloc[0] > certified["upper_sup"].iloc[1]
    assert certified["lower_sup"].iloc[0] < certified["lower_sup"].iloc[1]

    for lam in (1.0, 2.0):
        lower, upper = result["solutions"][lam]
        amplitudes = sorted(s.amplitude for s in shoot_solutions(lam, 1.0, -0.1))
        assert len(amplitudes) >= 2
        assert np.min(lower.u.values) == pytest.approx(amplitudes[0], rel=1e-3)
        assert np.max(upper.u.values) == pytest.approx(amplitudes[-1], rel=1e-2)


def test_certify_multiplicity_fully_coupled_system(problem_factory):
    p = problem_factory(resolution=199, operators=[None, None], mu=[1.0, 1.0], c=[[1, 1], [1, 1]], h=[-0.1, -0.2])
    result = certify_multiplicity(p, [1.0], options=EXP_CONTINUATION)
    row = result["table"].iloc[0]
    assert result["passed"]
    assert row["strict_block"]
    assert row["strict_all"]
    assert result["form"].n_blocks == 1


def test_negative_supersolution_barrier(problem_factory):
    p = problem_factory(resolution=99)
    report = negative_supersolution_barrier(p, eps=0.1)
    assert report["w_negative"]
    assert report["lambda0"] == pytest.approx(report["lambda1_minus"] + 0.1)
    assert report["Gamma"] > 0
    assert report["table"]["supersolution"].all()
    assert report["passed"]

    with pytest.raises(VerificationError):
        negative_supersolution_barrier(problem_factory(resolution=19, operators=[None, None], c=[[1, 1], [1, 1]]))
