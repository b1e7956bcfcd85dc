#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
验证模块 - 假设检查、先验界报告、不存在性搜索、多解认证与估计常数台账

所有检查都以报告形式返回结论，负面结论不抛出异常。
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.core.continuation import Branch, ContinuationOptions, natural_continue, seed_upper_branch
from src.core.coupling import BlockForm, block_triangular_form, check_H3, check_H4, is_fully_coupled
from src.core.eigen import EigenResult, antimaximum_solve, principal_eigenpair
from src.core.exceptions import (
    ContinuationError,
    ConvergenceError,
    EigenError,
    SingularJacobianError,
    VerificationError,
)
from src.core.grid import ScalarField, VectorField, boundary_distance, inf_quotient
from src.core.operators import ProblemSpec, extremal_operator
from src.core.solver import Solution, SolveOptions, check_subsolution, compare_order, newton_solve, solve_P0

# 设置日志
logger = logging.getLogger(__name__)

SEED_LADDER = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0)
EDGE_GROWTH_RATIO = 10.0


@dataclass
class EstimateConstants:
    """估计常数台账"""

    C0: float
    m1: float
    m2: float
    A: float
    lambda1: float
    c_tilde: ScalarField
    c_hat: ScalarField
    I_quotients: List[float] = field(default_factory=list)
    phi1: Optional[ScalarField] = None

    def summary(self) -> Dict[str, float]:
        return {"C0": self.C0, "m1": self.m1, "m2": self.m2, "A": self.A, "lambda1": self.lambda1}


@dataclass
class HypothesisReport:
    """(M)、(H0)、(H3)、(H4) 的检查结论"""

    M_bounds: Dict[str, Any]
    H0: Dict[str, Any]
    H3: Dict[str, Any]
    H4: Dict[str, Any]
    H4_vacuous: bool
    fully_coupled: bool
    block_summary: List[Dict[str, Any]]
    form: BlockForm
    u0: Optional[Solution] = None

    @property
    def violations(self) -> List[str]:
        failed = []
        if not self.M_bounds["passed"]:
            failed.append("M")
        if not self.H0["passed"]:
            failed.append("H0")
        if not self.H3["passed"]:
            failed.append("H3")
        if not self.H4["passed"] and not self.H4_vacuous:
            failed.append("H4")
        return failed

    @property
    def passed(self) -> bool:
        return not self.violations


def _first_block_rows(p: ProblemSpec, form: Optional[BlockForm] = None) -> List[int]:
    form = form or block_triangular_form(p.coupling)
    return list(form.blocks[0])


def estimate_constants(
    p: ProblemSpec,
    branches: Sequence[Branch] = (),
    u0: Optional[VectorField] = None,
    opts: Optional[SolveOptions] = None,
) -> EstimateConstants:
    """
    计算 C0、m1、m2、A = λ₁/m1、c̃ 与 ĉ

    C0 取已有分支数据上 ‖u_i⁻‖∞ 最大值加 10% 余量；
    λ₁ 为 ℒ⁻ 关于权 c̃ 的正主特征值。
    """
    lam_p, Lam_p = p.ellipticity()
    mu1, mu2 = p.gradient.mu1, p.gradient.mu2
    m1 = mu1 / Lam_p
    m2 = mu2 / lam_p

    row_sums = p.coupling.row_sums()
    c_tilde = ScalarField(p.grid, np.max(row_sums, axis=0))
    c_hat = ScalarField(p.grid, np.min(row_sums[_first_block_rows(p)], axis=0))

    negative = [float(np.max(u0.negative_part_norms()))] if u0 is not None else [0.0]
    for branch in branches:
        for pt in branch.points:
            negative.append(float(np.max(pt.solution.u.negative_part_norms())))
    C0 = 1.1 * max(negative)

    lower = extremal_operator(p.grid, -1, lam_p, Lam_p, p.max_drift())
    lambda1, phi1 = np.nan, None
    try:
        eig = principal_eigenpair(lower, c_tilde, 1, opts=opts)
        lambda1, phi1 = eig.lambda1, eig.phi1
    except EigenError as e:
        logger.warning(f"⚠️ 无法计算 ℒ⁻ 的主特征值: {e}")
    A = lambda1 / m1 if m1 > 0 else np.inf

    quotients: List[float] = []
    if u0 is not None:
        d = boundary_distance(p.grid)
        quotients = [inf_quotient(u0.values[i], d) for i in range(p.n)]

    constants = EstimateConstants(C0, m1, m2, A, lambda1, c_tilde, c_hat, quotients, phi1)
    logger.info(f"估计常数: {constants.summary()}")
    return constants


# ----------------------------------------------------------------------
# 假设检查
# ----------------------------------------------------------------------
def check_hypotheses(p: ProblemSpec, opts: Optional[SolveOptions] = None) -> HypothesisReport:
    """
    检查 (M)、求解 (P₀) 验证 (H0)、块三角分解、(H3)、(H4)

    u₀ ≡ 0 时 (H4) 视为空条件，不计入违背。
    """
    bounds = p.gradient.check_bounds()
    form = block_triangular_form(p.coupling)
    h3 = check_H3(form, p.coupling)

    u0 = None
    h0 = {"passed": False, "message": ""}
    try:
        u0 = solve_P0(p, opts)
        h0 = {"passed": u0.converged, "message": u0.message, "residual": u0.residual_norm}
    except ConvergenceError as e:
        h0 = {"passed": False, "message": str(e)}

    if u0 is not None and u0.converged:
        h4 = check_H4(p.coupling, u0.u, form)
        vacuous = bool(np.max(np.abs(u0.u.values)) <= p.coupling.threshold)
    else:
        h4 = {"passed": False, "witnesses": [], "failed_blocks": list(range(form.n_blocks))}
        vacuous = False

    report = HypothesisReport(
        M_bounds=bounds,
        H0=h0,
        H3=h3,
        H4=h4,
        H4_vacuous=vacuous,
        fully_coupled=form.n_blocks == 1,
        block_summary=form.summary(),
        form=form,
        u0=u0,
    )
    if report.passed:
        logger.info("✅ 假设检查全部通过")
    else:
        logger.warning(f"⚠️ 假设违背: {report.violations}")
    return report


# ----------------------------------------------------------------------
# 先验界
# ----------------------------------------------------------------------
def _edge_growth(values: np.ndarray) -> Dict[str, bool]:
    """边缘值 / 中位数 > 10 且最后三个点单调趋向边缘增长"""
    median = float(np.median(values))
    flags = {"lower": False, "upper": False}
    if values.size < 3:
        return flags
    scale = max(median, 1e-300)
    upper_tail = values[-3:]
    lower_tail = values[:3]
    flags["upper"] = bool(values[-1] / scale > EDGE_GROWTH_RATIO and np.all(np.diff(upper_tail) > 0))
    flags["lower"] = bool(values[0] / scale > EDGE_GROWTH_RATIO and np.all(np.diff(lower_tail) < 0))
    return flags


def apriori_report(
    branches: Sequence[Branch],
    Lam1: float,
    Lam2: float,
    p: Optional[ProblemSpec] = None,
) -> Dict[str, Any]:
    """
    窗口 [Λ1, Λ2] 内分支点的 ‖u_i‖∞ 与 ‖u_i⁻‖∞ 上确界

    Returns:
        {"passed", "finite", "edge_growth", "edge_flags", "table", "points", "window", "constants"}

    Raises:
        VerificationError: 窗口内没有分支点
    """
    if Lam1 > Lam2:
        raise VerificationError(f"窗口无效: [{Lam1}, {Lam2}]")
    points = sorted(
        (pt for branch in branches for pt in branch.points if Lam1 <= pt.lam <= Lam2),
        key=lambda pt: pt.lam,
    )
    if not points:
        raise VerificationError(f"窗口 [{Lam1:g}, {Lam2:g}] 内没有分支点")

    sup = np.array([pt.sup_norms for pt in points])
    negative = np.array([pt.solution.u.negative_part_norms() for pt in points])
    finite = bool(np.all(np.isfinite(sup)) and np.all(np.isfinite(negative)))
    flags = _edge_growth(np.max(sup, axis=1))
    edge_growth = flags["lower"] or flags["upper"]

    table = pd.DataFrame({
        "component": np.arange(1, sup.shape[1] + 1),
        "sup_norm": np.max(sup, axis=0),
        "negative_part_norm": np.max(negative, axis=0),
    })
    constants = estimate_constants(p, branches) if p is not None else None
    passed = finite and not edge_growth
    if edge_growth:
        logger.warning(f"⚠️ 先验界报告: 窗口边缘出现增长趋势 {flags}")
    else:
        logger.info(f"✅ 先验界报告: {len(points)} 个点, sup = {float(np.max(sup)):.6g}")
    return {
        "passed": passed,
        "finite": finite,
        "edge_growth": edge_growth,
        "edge_flags": flags,
        "table": table,
        "points": len(points),
        "window": (float(Lam1), float(Lam2)),
        "constants": constants,
    }


# ----------------------------------------------------------------------
# 不存在性搜索
# ----------------------------------------------------------------------
def _attempt(p: ProblemSpec, label: str, initial: VectorField, opts: SolveOptions) -> Dict[str, Any]:
    try:
        solution = newton_solve(p, initial, opts)
    except SingularJacobianError as e:
        return {"seed": label, "converged": False, "min_u": np.nan, "sup_u": np.nan, "message": str(e), "solution": None}
    return {
        "seed": label,
        "converged": solution.converged,
        "min_u": float(np.min(solution.u.values)) if solution.converged else np.nan,
        "sup_u": float(np.max(solution.sup_norms)) if solution.converged else np.nan,
        "message": solution.message,
        "solution": solution if solution.converged else None,
    }


def _attempts_table(attempts: List[Dict[str, Any]]) -> pd.DataFrame:
    return pd.DataFrame(
        [{k: v for k, v in a.items() if k != "solution"} for a in attempts],
        columns=["seed", "converged", "min_u", "sup_u", "message"],
    )


def modified_rhs(p: ProblemSpec, k: float, constants: EstimateConstants, lam_upper: Optional[float] = None) -> np.ndarray:
    """h + k·h̃，h̃ = h⁻ + (A + Λ₂C₀)c̃（已乘 γ）"""
    lam_upper = p.lam if lam_upper is None else lam_upper
    h = p.gamma * p.rhs
    h_minus = np.maximum(-h, 0.0)
    h_tilde = h_minus + (constants.A + lam_upper * constants.C0) * constants.c_tilde.values
    return (h + k * h_tilde) * p.grid.interior_mask


def nonexistence_search_Pk(
    p: ProblemSpec,
    k: int,
    constants: EstimateConstants,
    u0: Optional[VectorField] = None,
    ladder: Sequence[float] = SEED_LADDER,
    lam_upper: Optional[float] = None,
    opts: Optional[SolveOptions] = None,
) -> Dict[str, Any]:
    """
    对修改右端项后的问题 (P_λ,k) 从固定种子梯子尝试 Newton

    种子：零、u₀、±t·φ₁（t ∈ ladder）。k ≥ 1 时任何收敛都记为反例。

    Returns:
        {"status", "k", "attempts", "counterexample", "rhs"}
    """
    if k < 0:
        raise VerificationError(f"k 必须非负，收到 {k}")
    opts = opts or SolveOptions()
    rhs = modified_rhs(p, k, constants, lam_upper)
    pk = p.with_rhs(rhs, gamma=1.0)

    seeds = [("zero", VectorField.zeros(p.grid, p.n))]
    if u0 is not None:
        seeds.append(("u0", u0))
    if constants.phi1 is not None:
        for t in ladder:
            for sign, name in ((1.0, "+"), (-1.0, "-")):
                seeds.append((f"{name}{t:g}phi", VectorField(p.grid, np.tile(sign * t * constants.phi1.values, (p.n, 1)))))

    attempts = [_attempt(pk, label, initial, opts) for label, initial in seeds]
    found = next((a["solution"] for a in attempts if a["converged"]), None)
    if found is None:
        status = "all-failed"
        logger.info(f"✅ (P_λ,{k}) 搜索: {len(seeds)} 个种子全部失败")
    elif k >= 1:
        status = "counterexample-found"
        logger.error(f"❌ (P_λ,{k}) 搜索找到收敛解, sup = {np.max(found.sup_norms):.6g}")
    else:
        status = "solution-found"
    return {
        "status": status,
        "k": k,
        "attempts": _attempts_table(attempts),
        "counterexample": found if k >= 1 else None,
        "solution": found,
        "rhs": rhs,
    }


def hat_eigenvalue(
    p: ProblemSpec,
    u0: Optional[VectorField] = None,
    opts: Optional[SolveOptions] = None,
) -> Dict[str, Any]:
    """
    λ̂₁ = λ₁⁺(L̂⁻, ĉ)，L̂⁻ = ℳ⁻ − b̂|Du|，b̂ = b + 2μ₂‖Du₀‖∞

    Returns:
        {"lambda_hat1", "b_hat", "eigen", "c_hat"}
    """
    if u0 is None:
        solution = solve_P0(p, opts)
        if not solution.converged:
            raise VerificationError("(P₀) 不收敛，无法构造 L̂⁻")
        u0 = solution.u
    grad_max = 0.0
    for i in range(p.n):
        d1, _ = p.grid.derivatives(u0.values[i])
        grad_max = max(grad_max, float(np.max(np.sqrt(np.sum(d1**2, axis=0)))))
    b_hat = p.max_drift() + 2.0 * p.gradient.mu2 * grad_max
    lam_p, Lam_p = p.ellipticity()
    operator = extremal_operator(p.grid, -1, lam_p, Lam_p, b_hat)
    rows = _first_block_rows(p)
    c_hat = ScalarField(p.grid, np.min(p.coupling.row_sums()[rows], axis=0))
    eig = principal_eigenpair(operator, c_hat, 1, opts=opts)
    logger.info(f"λ̂₁ = {eig.lambda1:.8g}（b̂ = {b_hat:.4g}）")
    return {"lambda_hat1": eig.lambda1, "b_hat": b_hat, "eigen": eig, "c_hat": c_hat}


def nonexistence_nonneg(
    p: ProblemSpec,
    lam: float,
    lambda_hat1: Optional[float] = None,
    u0: Optional[VectorField] = None,
    phi1: Optional[ScalarField] = None,
    ladder: Sequence[float] = SEED_LADDER,
    opts: Optional[SolveOptions] = None,
    tol: float = 1e-9,
) -> Dict[str, Any]:
    """
    只用非负种子寻找 λ 处的非负解

    Returns:
        {"status", "lambda", "lambda_hat1", "nonnegative_found", "solution", "attempts"}
    """
    opts = opts or SolveOptions()
    if lambda_hat1 is not None and lam < lambda_hat1:
        logger.info(f"λ={lam:g} < λ̂₁={lambda_hat1:g}：不存在性结论不适用，仅做搜索")
    p_lam = p.with_params(lam=lam)
    seeds = [("zero", VectorField.zeros(p.grid, p.n))]
    if u0 is not None:
        seeds.append(("u0+", VectorField(p.grid, np.maximum(u0.values, 0.0))))
    if phi1 is None:
        weight = ScalarField(p.grid, np.max(p.coupling.row_sums(), axis=0))
        phi1 = principal_eigenpair(p.operators[0], weight, 1, opts=opts).phi1
    for t in ladder:
        seeds.append((f"{t:g}phi", VectorField(p.grid, np.tile(t * np.abs(phi1.values), (p.n, 1)))))

    attempts = [_attempt(p_lam, label, initial, opts) for label, initial in seeds]
    found = None
    for a in attempts:
        if a["converged"] and np.min(a["solution"].u.values) >= -tol:
            found = a["solution"]
            break
    status = "nonnegative-found" if found is not None else "none-found"
    logger.info(f"非负解搜索 λ={lam:.6g}: {status}")
    return {
        "status": status,
        "lambda": lam,
        "lambda_hat1": lambda_hat1,
        "nonnegative_found": found is not None,
        "solution": found,
        "attempts": _attempts_table(attempts),
    }


# ----------------------------------------------------------------------
# 多解认证
# ----------------------------------------------------------------------
MULTIPLICITY_COLUMNS = [
    "lambda", "count", "sup_gap", "strict_order", "strict_block", "strict_all",
    "sign_clause", "lower_sup", "upper_sup", "status",
]


def certify_multiplicity(
    p: ProblemSpec,
    lams: Sequence[float],
    lower_branch: Optional[Branch] = None,
    u0: Optional[Solution] = None,
    phi1: Optional[ScalarField] = None,
    options: Optional[ContinuationOptions] = None,
    seed_ladder: Optional[Sequence[float]] = None,
) -> Dict[str, Any]:
    """
    对每个 λ 求下分支解与上分支解并检查相异性、严格序与符号条款

    Returns:
        {"passed", "table", "solutions", "form"}

    Raises:
        VerificationError: 缺少下分支数据且无法计算
    """
    options = options or ContinuationOptions()
    opts = options.solve
    form = block_triangular_form(p.coupling)
    fully = is_fully_coupled(p.coupling)
    if u0 is None:
        u0 = solve_P0(p, opts)
    if not u0.converged:
        raise VerificationError("(P₀) 不收敛，无法认证多解")
    positive_lams = [lam for lam in lams if lam > 0]
    if lower_branch is None and positive_lams:
        try:
            lower_branch = natural_continue(p, 0.0, max(positive_lams), u0, options, branch_id="lower")
        except ContinuationError as e:
            raise VerificationError(f"下分支不可用: {e}") from e
    if phi1 is None:
        weight = ScalarField(p.grid, np.max(p.coupling.row_sums(), axis=0))
        phi1 = principal_eigenpair(p.operators[0], weight, 1, opts=opts).phi1

    u0_nonpositive = bool(np.max(u0.u.values) <= 1e-12)
    u0_nonnegative = bool(np.min(u0.u.values) >= -1e-12)
    distinct_tol = 10.0 * opts.newton_tol
    rows, solutions = [], {}
    for lam in lams:
        if lam == 0:
            rows.append({"lambda": 0.0, "count": 1, "status": "multiplicity not applicable"})
            solutions[0.0] = (u0, None)
            continue
        point = min(lower_branch.points, key=lambda pt: abs(pt.lam - lam)) if lower_branch and lower_branch.points else None
        if point is None:
            raise VerificationError(f"λ={lam:g} 处缺少下分支数据")
        lower = newton_solve(p.with_params(lam=lam), point.solution.u, opts)
        if not lower.converged:
            rows.append({"lambda": lam, "count": 0, "status": "lower branch not converged"})
            continue
        try:
            kwargs = {"ladder": seed_ladder} if seed_ladder is not None else {}
            upper = seed_upper_branch(p, lam, phi1, lower=lower, form=form, opts=opts, **kwargs)
        except ContinuationError as e:
            logger.warning(f"⚠️ λ={lam:g} 未找到上分支解: {e}")
            rows.append({"lambda": lam, "count": 1, "lower_sup": float(np.max(lower.sup_norms)), "status": "upper not found"})
            solutions[lam] = (lower, None)
            continue

        gap = lower.u.distance(upper.u)
        distinct = gap > distinct_tol and upper.metadata.get("branch") != "lower"
        order = compare_order(lower.u, upper.u, form)
        strict_block = any(order.block_strict_ll)
        strict_all = all(order.component_strict_ll) if fully else None

        sign_clause = True
        for sol in (lower, upper):
            if u0_nonpositive and np.max(sol.u.values) <= 1e-12:
                sign_clause = sign_clause and compare_order(sol.u, u0.u, form).strict_ll
            if u0_nonnegative and np.min(sol.u.values) >= -1e-12 and not u0_nonpositive:
                sign_clause = sign_clause and compare_order(u0.u, sol.u, form).strict_ll

        ok = distinct and order.leq and strict_block and sign_clause and (strict_all is not False)
        rows.append({
            "lambda": lam,
            "count": 2 if distinct else 1,
            "sup_gap": gap,
            "strict_order": order.strict_ll,
            "strict_block": strict_block,
            "strict_all": strict_all,
            "sign_clause": sign_clause,
            "lower_sup": float(np.max(lower.sup_norms)),
            "upper_sup": float(np.max(upper.sup_norms)),
            "status": "certified" if ok else "failed",
        })
        solutions[lam] = (lower, upper)
        logger.info(f"{'✅' if ok else '⚠️'} λ={lam:g}: 两解间距 {gap:.4g}, 块严格序 {strict_block}")

    table = pd.DataFrame(rows, columns=MULTIPLICITY_COLUMNS)
    applicable = table[table["status"] != "multiplicity not applicable"]
    passed = bool(len(applicable)) and bool((applicable["status"] == "certified").all())
    return {"passed": passed, "table": table, "solutions": solutions, "form": form}


# ----------------------------------------------------------------------
# 负上解屏障
# ----------------------------------------------------------------------
def negative_supersolution_barrier(
    p: ProblemSpec,
    eps: float = 0.1,
    gammas: Optional[Sequence[float]] = None,
    opts: Optional[SolveOptions] = None,
) -> Dict[str, Any]:
    """
    解 −ℒ⁺[w] = λ₀cw + 1 + h，λ₀ = λ₁⁻(ℒ⁺, c) + eps；w ≪ 0 时 η = γw
    对 γ < Γ = 1/(μ₂‖Dw‖²∞) 是 (P_λ₀,γ) 的上解

    Returns:
        {"passed", "lambda0", "lambda1_minus", "w", "w_negative", "C_w", "Gamma", "table"}
    """
    if p.n != 1:
        raise VerificationError("负上解屏障只支持标量问题")
    grid = p.grid
    lam_p, Lam_p = p.ellipticity()
    upper = extremal_operator(grid, 1, lam_p, Lam_p, p.max_drift())
    c = ScalarField(grid, p.coupling.row_sums()[0])
    eig: EigenResult = principal_eigenpair(upper, c, -1, opts=opts)
    lam0 = eig.lambda1 + eps
    forcing = ScalarField(grid, (1.0 + p.rhs[0]) * grid.interior_mask)
    try:
        w_values = antimaximum_solve(upper, c, forcing, lam0, opts)
    except ConvergenceError as e:
        raise VerificationError(f"屏障方程求解失败: {e}") from e
    w = VectorField(grid, w_values[None, :])
    w_negative = compare_order(w, VectorField.zeros(grid, 1)).strict_ll

    d1, _ = grid.derivatives(w_values)
    C_w = float(np.max(np.sum(d1**2, axis=0)))
    Gamma = 1.0 / (p.gradient.mu2 * C_w) if C_w > 0 else np.inf
    if gammas is None:
        gammas = [0.25 * Gamma, 0.5 * Gamma, 0.9 * Gamma] if np.isfinite(Gamma) else [1.0]

    rows = []
    for gamma in gammas:
        p_gamma = p.with_params(lam=lam0, gamma=gamma)
        ok, margin = check_subsolution(p_gamma, VectorField(grid, gamma * w.values), "super")
        rows.append({"gamma": float(gamma), "supersolution": ok, "margin": margin})
    table = pd.DataFrame(rows, columns=["gamma", "supersolution", "margin"])
    passed = w_negative and bool(table["supersolution"].all())
    logger.info(f"{'✅' if passed else '⚠️'} 负上解屏障: λ₀={lam0:.6g}, Γ={Gamma:.4g}, w≪0={w_negative}")
    return {
        "passed": passed,
        "lambda0": lam0,
        "lambda1_minus": eig.lambda1,
        "w": ScalarField(grid, w_values),
        "w_negative": w_negative,
        "C_w": C_w,
        "Gamma": Gamma,
        "table": table,
    }
