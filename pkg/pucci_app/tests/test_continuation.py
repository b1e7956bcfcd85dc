"""
延拓测试：自然延拓、伪弧长越过折点、折点估计、上分支播种、导出与双参数扫描
"""

import numpy as np
import pandas as pd
import pytest

from src.core.continuation import (
    CURVE_COLUMNS,
    SCAN_COLUMNS,
    Branch,
    ContinuationOptions,
    arclength_continue,
    branch_monotonicity,
    export_branch,
    fold_estimates,
    locate_fold,
    natural_continue,
    seed_upper_branch,
    two_parameter_scan,
)
from src.core.eigen import principal_eigenpair
from src.core.exceptions import ContinuationError
from src.core.grid import ScalarField, VectorField
from src.core.operators import LinearSpec
from src.core.solver import SolveOptions, newton_solve, solve_P0


@pytest.fixture(scope="module")
def fold_problem(problem_factory):
    """h = +0.1, μ = 1：下分支在 λ̄ < λ₁ 处折回"""
    p = problem_factory(resolution=99, mu=1.0, h=0.1)
    natural = natural_continue(p, 0.0, np.pi**2, solve_P0(p))
    return p, natural


def test_options_validation():
    with pytest.raises(ContinuationError):
        ContinuationOptions(step=0.0)
    with pytest.raises(ContinuationError):
        ContinuationOptions(step=2.0, max_step=1.0)
    with pytest.raises(ContinuationError):
        ContinuationOptions(growth=0.5)


def test_natural_continuation_linear_oracle(problem_factory):
    """μ = 0, h = sin(πx)：u = sin(πx)/(λ₁ʰ − λ)"""
    p = problem_factory(resolution=99, mu=0.0, h=0.0)
    p = p.with_rhs(np.sin(np.pi * p.grid.x)[None, :])
    lam_end = 0.9 * np.pi**2
    branch = natural_continue(p, 0.0, lam_end, solve_P0(p))
    assert branch.stop_reason == "reached_end"
    assert branch.lambdas[-1] == pytest.approx(lam_end)
    assert np.all(np.diff(branch.arclengths) > 0)

    h = p.grid.spacing[0]
    lam1 = 4.0 / h**2 * np.sin(np.pi * h / 2) ** 2
    expected = 1.0 / (lam1 - branch.lambdas)
    assert branch.sup_norm(0) == pytest.approx(expected, rel=1e-6)
    assert not branch.folds


def test_natural_continuation_stalls_before_first_eigenvalue(fold_problem):
    _, natural = fold_problem
    assert natural.stop_reason == "fold_suspected"
    lam_stop = natural.lambdas[-1]
    assert 0.0 < lam_stop < np.pi**2
    # 下分支为正解
    assert np.all(natural.points[-1].mins >= -1e-12)


def test_arclength_passes_fold_and_refines(fold_problem):
    p, natural = fold_problem
    lam_stop = natural.lambdas[-1]
    options = ContinuationOptions(step=0.1, max_step=0.5)
    branch = arclength_continue(
        p, natural.points[0].solution, 1, max_arclength=50.0, options=options, stop_after_folds=1
    )
    assert branch.folds
    fold = branch.folds[0]
    assert fold["kind"] == "right"
    assert abs(fold["lambda_bar"] - lam_stop) < 5e-2
    assert any(pt.fold_flag for pt in branch.points)
    # 折点之后 sup 范数继续增大（上分支）
    k = fold["index"]
    assert branch.sup_norm(0)[-1] > branch.sup_norm(0)[k]

    refined = locate_fold(p, branch, fold, options, target_width=1e-3)
    assert refined["width"] <= 1e-3
    assert abs(refined["lambda_bar"] - lam_stop) < 5e-3


def test_fold_estimates_on_parabola():
    s = np.array([0.0, 0.5, 1.0, 1.5, 2.0])
    folds = fold_estimates(s, 3.0 - (s - 1.0) ** 2)
    assert len(folds) == 1
    assert folds[0]["lambda_bar"] == pytest.approx(3.0, abs=1e-12)
    assert folds[0]["kind"] == "right"
    assert folds[0]["width"] == pytest.approx(0.0, abs=1e-12)
    assert folds[0]["index"] == 2

    left = fold_estimates(s, (s - 1.0) ** 2)
    assert left[0]["kind"] == "left"
    assert fold_estimates([0.0, 1.0], [0.0, 1.0]) == []


def test_lower_branch_strictly_decreasing(problem_factory):
    """h < 0：下分支关于 λ 严格递减"""
    p = problem_factory(resolution=99, mu=1.0, h=-0.1)
    branch = natural_continue(p, 0.0, 2.0, solve_P0(p))
    report = branch_monotonicity(branch)
    assert report["pairs"] == len(branch) - 1
    assert report["strictly_decreasing"]
    assert not report["strictly_increasing"]


def test_seed_upper_branch_above_lower(problem_factory, exp_opts):
    p = problem_factory(resolution=199, mu=1.0, h=-0.1)
    lam = 2.0
    phi1 = principal_eigenpair(LinearSpec.build(p.grid), ScalarField(p.grid, 1.0), 1).phi1
    lower = newton_solve(p.with_params(lam=lam), solve_P0(p).u, exp_opts)
    assert lower.converged
    upper = seed_upper_branch(p, lam, phi1, lower=lower, opts=exp_opts)
    assert upper.metadata["branch"] == "upper"
    assert np.max(upper.sup_norms) > 10 * np.max(lower.sup_norms)
    assert upper.metadata["order"].leq


def test_seed_upper_branch_vector_profile(problem_factory, exp_opts):
    """逐分量剖面：单分量时与标量剖面一致，分量数不符时报错"""
    p = problem_factory(resolution=199, mu=1.0, h=-0.1)
    lam = 2.0
    phi1 = principal_eigenpair(LinearSpec.build(p.grid), ScalarField(p.grid, 1.0), 1).phi1
    from_scalar = seed_upper_branch(p, lam, phi1, opts=exp_opts)
    from_vector = seed_upper_branch(p, lam, VectorField.from_components([phi1]), opts=exp_opts)
    assert from_vector.metadata["seed_t"] == from_scalar.metadata["seed_t"]
    assert np.allclose(from_vector.u.values, from_scalar.u.values)

    pair = problem_factory(resolution=19, operators=[None, "pucci_plus"], mu=1.0, h=-0.1)
    with pytest.raises(ContinuationError):
        seed_upper_branch(pair, lam, VectorField(p.grid, phi1.values[None, :]))


def test_export_branch(tmp_path, problem_factory):
    p = problem_factory(resolution=19, mu=1.0, h=-0.1)
    branch = natural_continue(p, 0.0, 0.5, solve_P0(p), branch_id="lower")
    path = export_branch(branch, tmp_path / "out" / "lower.csv")
    table = pd.read_csv(path)
    assert list(table.columns) == ["branch_id", "arclength", "lambda", "gamma", "sup_norm_1", "min_1", "fold_flag"]
    assert len(table) == len(branch)
    assert (table["branch_id"] == "lower").all()

    with pytest.raises(ContinuationError):
        export_branch(Branch(), tmp_path / "empty.csv")


def test_two_parameter_scan_small_grid(problem_factory):
    p = problem_factory(resolution=29, mu=1.0, h=1.0, two_parameter=True)
    result = two_parameter_scan(p, [0.5], [0.05], ContinuationOptions(step=0.2))
    cells, curves = result["cells"], result["curves"]
    assert list(cells.columns) == SCAN_COLUMNS
    assert list(curves.columns) == CURVE_COLUMNS
    assert len(cells) == 1 and len(curves) == 1

    cell = cells.iloc[0]
    assert cell["lower_found"]
    assert cell["count"] >= 1
    assert "nonnegative" in cell["sign_class"]
    assert 0.5 < curves.iloc[0]["lambda_bar1"] < np.pi**2
    assert isinstance(cell["order"], str)


def test_two_parameter_scan_curves_approach_eigenvalue(problem_factory):
    """h ≡ 1：γ → 0 时 λ̄₁(γ) 自下、λ̄₂(γ) 自上逼近 λ₁"""
    p = problem_factory(resolution=29, mu=1.0, h=1.0, two_parameter=True)
    options = ContinuationOptions(step=0.2, solve=SolveOptions(formulation="exponential"))
    gammas = [0.2, 0.1, 0.05]
    lams = [0.5, 5.0, 9.0, 10.5, 12.0]
    result = two_parameter_scan(p, lams, gammas, options)
    cells, curves = result["cells"], result["curves"]
    assert len(cells) == len(lams) * len(gammas)

    bar1 = curves["lambda_bar1"].to_numpy()
    assert np.all(np.isfinite(bar1))
    assert np.all(np.diff(bar1) > 0)
    assert bar1[-1] < np.pi**2

    bar2 = curves["lambda_bar2"].to_numpy()
    finite = np.isfinite(bar2)
    assert finite.any()
    assert np.all(np.diff(bar2[finite]) < 0)
    assert np.all(bar2[finite] > bar1[finite])

    # λ̄₂(γ) 以下没有非正解
    for gamma, lam_bar2 in zip(gammas, bar2):
        if not np.isfinite(lam_bar2):
            continue
        below = cells[(cells["gamma"] == gamma) & (cells["lambda"] < lam_bar2)]
        assert not below["nonpositive_found"].any()

    # 同一单元内下分支解严格位于上分支解之下
    both = cells[cells["lower_found"] & cells["upper_found"]]
    assert not both.empty
    assert both["order"].str.contains("lower:upper=strict_ll").all()


def test_two_parameter_scan_empty_grid(problem_factory):
    p = problem_factory(resolution=19, two_parameter=True)
    result = two_parameter_scan(p, [], [0.1])
    assert result["cells"].empty and result["curves"].empty
