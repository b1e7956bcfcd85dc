#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
延拓模块 - 自然延拓、伪弧长延拓、折点检测、上分支播种与 (λ,γ) 双参数扫描

伪弧长范数：λ 分量权重 1，场分量权重 1/√(节点数)。
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sparse
from tqdm import tqdm

from src.core.coupling import BlockForm
from src.core.eigen import principal_eigenpair
from src.core.exceptions import (
    ContinuationError,
    ConvergenceError,
    EigenError,
    SingularJacobianError,
    TransformDomainError,
)
from src.core.grid import ScalarField, VectorField
from src.core.operators import ProblemSpec
from src.core.solver import (
    Solution,
    SolveOptions,
    _factorize,
    _singularity_indicator,
    build_system,
    compare_order,
    newton_solve,
    solve_P0,
)

# 设置日志
logger = logging.getLogger(__name__)

SEED_LADDER = (5.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0)
NEGATIVE_LADDER = (1.0, 2.0, 5.0, 10.0, 20.0, 50.0)
SCAN_COLUMNS = [
    "lambda", "gamma", "count", "sign_class", "lower_found", "upper_found", "nonpositive_found", "order", "status",
]
CURVE_COLUMNS = ["gamma", "lambda_bar1", "lambda_bar2", "lower_stop", "negative_stop"]


@dataclass(frozen=True)
class ContinuationOptions:
    """延拓步长控制"""

    step: float = 0.05
    min_step: float = 1e-8
    max_step: float = 1.0
    max_points: int = 500
    sup_ceiling: float = 1e6
    corrector_iters: int = 30
    growth: float = 1.5
    solve: SolveOptions = field(default_factory=SolveOptions)

    def __post_init__(self):
        if not (0 < self.min_step <= self.step <= self.max_step):
            raise ContinuationError("步长需满足 0 < min_step ≤ step ≤ max_step")
        if self.growth < 1:
            raise ContinuationError("步长增长因子必须 ≥ 1")

    def corrector_options(self) -> SolveOptions:
        return replace(self.solve, max_newton_iters=min(self.solve.max_newton_iters, self.corrector_iters))


@dataclass
class BranchPoint:
    """分支上的一个点"""

    lam: float
    gamma: float
    solution: Solution
    sup_norms: np.ndarray
    mins: np.ndarray
    arclength: float
    fold_flag: bool = False
    step: float = 0.0

    @classmethod
    def from_solution(cls, solution: Solution, arclength: float, step: float = 0.0) -> "BranchPoint":
        return cls(
            lam=float(solution.lam),
            gamma=float(solution.gamma),
            solution=solution,
            sup_norms=solution.u.sup_norms(),
            mins=solution.u.mins(),
            arclength=float(arclength),
            step=float(step),
        )


@dataclass
class Branch:
    """有序的延拓点列"""

    points: List[BranchPoint] = field(default_factory=list)
    origin: str = ""
    folds: List[Dict[str, Any]] = field(default_factory=list)
    stop_reason: str = ""
    branch_id: str = "branch"

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([pt.lam for pt in self.points])

    @property
    def arclengths(self) -> np.ndarray:
        return np.array([pt.arclength for pt in self.points])

    def sup_norm(self, component: int = 0) -> np.ndarray:
        return np.array([pt.sup_norms[component] for pt in self.points])

    def __len__(self) -> int:
        return len(self.points)


def _weighted_distance(d_lam: float, d_field: np.ndarray) -> float:
    return float(np.sqrt(d_lam**2 + np.sum(d_field**2) / d_field.size))


def _append(branch: Branch, solution: Solution, step: float = 0.0) -> None:
    if branch.points:
        last = branch.points[-1]
        s = last.arclength + _weighted_distance(solution.lam - last.lam, solution.u.values - last.solution.u.values)
    else:
        s = 0.0
    branch.points.append(BranchPoint.from_solution(solution, s, step))


def _try_newton(p: ProblemSpec, initial: VectorField, opts: SolveOptions) -> Optional[Solution]:
    try:
        solution = newton_solve(p, initial, opts)
    except (SingularJacobianError, TransformDomainError, FloatingPointError) as e:
        logger.debug(f"Newton 失败: {e}")
        return None
    return solution if solution.converged else None


# ----------------------------------------------------------------------
# 自然延拓
# ----------------------------------------------------------------------
def natural_continue(
    p: ProblemSpec,
    lam_start: float,
    lam_end: float,
    initial: Solution,
    options: Optional[ContinuationOptions] = None,
    branch_id: str = "natural",
) -> Branch:
    """
    λ 方向的自然延拓，Newton 失败时步长减半

    步长低于 min_step 时停止并标记 fold_suspected；
    sup 范数超过上限时停止并标记 sup_ceiling。

    Raises:
        ContinuationError: 起点处不收敛
    """
    options = options or ContinuationOptions()
    opts = options.corrector_options()
    first = _try_newton(p.with_params(lam=lam_start), initial.u, options.solve)
    if first is None:
        raise ContinuationError(f"自然延拓起点 λ={lam_start} 处不收敛")

    branch = Branch(origin=f"natural λ:{lam_start:g}->{lam_end:g}", branch_id=branch_id)
    _append(branch, first)
    if lam_start == lam_end:
        branch.stop_reason = "reached_end"
        return branch

    direction = 1.0 if lam_end > lam_start else -1.0
    lam = float(lam_start)
    current = first
    step = options.step
    branch.stop_reason = "max_points"
    while len(branch.points) < options.max_points:
        remaining = abs(lam_end - lam)
        if remaining <= 1e-14:
            branch.stop_reason = "reached_end"
            break
        d_lam = min(step, remaining)
        lam_try = lam_end if d_lam == remaining else lam + direction * d_lam
        solution = _try_newton(p.with_params(lam=lam_try), current.u, opts)
        if solution is None:
            step = 0.5 * d_lam
            if step < options.min_step:
                branch.stop_reason = "fold_suspected"
                logger.info(f"⚠️ 自然延拓在 λ≈{lam:.8g} 处停滞，疑似折点")
                break
            continue
        _append(branch, solution, d_lam)
        lam, current = lam_try, solution
        if np.max(solution.u.sup_norms()) > options.sup_ceiling:
            branch.stop_reason = "sup_ceiling"
            break
        step = min(options.max_step, d_lam * options.growth)

    branch.folds = detect_fold(branch)
    logger.info(f"自然延拓 {branch.branch_id}: {len(branch)} 个点, 终止原因 {branch.stop_reason}")
    return branch


# ----------------------------------------------------------------------
# 伪弧长延拓
# ----------------------------------------------------------------------
def _bordered_corrector(system, X_pred, lam_pred, X_prev, lam_prev, tau_x, tau_l, ds, opts: SolveOptions, max_iters: int):
    """加边 Newton 校正，失败返回 None"""
    size = X_pred.size
    X = X_pred.copy()
    lam = lam_pred
    for iteration in range(max_iters + 1):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            r, J, _ = system.evaluate(X, lam, None, with_jacobian=True)
        constraint = float(np.dot(tau_x.ravel(), (X - X_prev).ravel()) / size + tau_l * (lam - lam_prev) - ds)
        if not np.all(np.isfinite(r)):
            return None
        if np.max(np.abs(r)) <= opts.newton_tol and abs(constraint) <= opts.newton_tol:
            return X, lam, iteration
        if iteration == max_iters:
            return None
        d_lam = system.d_lambda(X, lam).ravel()
        bordered = sparse.bmat([
            [J, sparse.csc_matrix(d_lam[:, None])],
            [sparse.csr_matrix(tau_x.ravel()[None, :] / size), sparse.csr_matrix([[tau_l]])],
        ], format="csc")
        lu, scale = _factorize(bordered)
        if _singularity_indicator(lu, bordered.shape[0]) <= opts.singular_tol:
            return None
        rhs = np.concatenate([r.ravel(), [constraint]])
        delta = -lu.solve(scale * rhs)
        t = 1.0
        while not system.admissible(X + t * delta[:-1].reshape(X.shape)):
            t *= 0.5
            if t < opts.min_step:
                return None
        X = X + t * delta[:-1].reshape(X.shape)
        lam = lam + t * delta[-1]
    return None


def arclength_continue(
    p: ProblemSpec,
    start: Solution,
    direction: int = 1,
    max_arclength: float = 10.0,
    options: Optional[ContinuationOptions] = None,
    lam_bounds: Tuple[float, float] = (-np.inf, np.inf),
    stop_after_folds: Optional[int] = None,
    branch_id: str = "arclength",
) -> Branch:
    """
    伪弧长延拓：割线预测 + 加边 Newton 校正，可越过折点

    Args:
        p: 问题规格（λ 取 start.lam）
        start: 已收敛的起点
        direction: 初始切向上 dλ/ds 的符号
        max_arclength: 状态空间中的最大弧长
        options: 步长控制
        lam_bounds: λ 越界即停止
        stop_after_folds: 检测到指定数目的折点后再走两步停止
        branch_id: 分支标识

    Returns:
        Branch；加边系统反复奇异时截断并记录原因
    """
    options = options or ContinuationOptions()
    opts = options.corrector_options()
    p_start = p.with_params(lam=start.lam)
    verified = _try_newton(p_start, start.u, options.solve)
    if verified is None:
        raise ContinuationError(f"伪弧长延拓起点 λ={start.lam} 处不收敛")

    system = build_system(p, opts.formulation)
    X = system.to_state(verified.u.values)
    lam = float(verified.lam)
    size = X.size

    _, J, _ = system.evaluate(X, lam, None, with_jacobian=True)
    lu, scale = _factorize(J)
    if _singularity_indicator(lu, size) <= opts.singular_tol:
        raise ContinuationError("起点处 Jacobian 奇异，无法计算初始切向")
    tau_x = lu.solve(scale * (-system.d_lambda(X, lam).ravel())).reshape(X.shape)
    tau_l = 1.0
    norm = np.sqrt(tau_l**2 + np.sum(tau_x**2) / size)
    sign = 1.0 if direction >= 0 else -1.0
    tau_x, tau_l = sign * tau_x / norm, sign * tau_l / norm

    branch = Branch(origin=f"arclength from λ={lam:g}", branch_id=branch_id)
    _append(branch, verified)
    travelled = 0.0
    ds = options.step
    d_lam_prev = 0.0
    beyond_fold = 0
    branch.stop_reason = "max_arclength"
    while travelled < max_arclength:
        if len(branch.points) >= options.max_points:
            branch.stop_reason = "max_points"
            break
        X_pred = X + ds * tau_x
        lam_pred = lam + ds * tau_l
        corrected = None
        if system.admissible(X_pred):
            corrected = _bordered_corrector(system, X_pred, lam_pred, X, lam, tau_x, tau_l, ds, opts, options.corrector_iters)
        if corrected is None:
            ds *= 0.5
            if ds < options.min_step:
                branch.stop_reason = "bordered_singular"
                logger.warning(f"⚠️ 伪弧长延拓在 λ≈{lam:.6g} 处截断：加边系统不收敛")
                break
            continue

        X_new, lam_new, iterations = corrected
        dX = X_new - X
        d_lam = lam_new - lam
        step_norm = np.sqrt(d_lam**2 + np.sum(dX**2) / size)
        if step_norm == 0:
            branch.stop_reason = "stalled"
            break
        tau_x, tau_l = dX / step_norm, d_lam / step_norm
        travelled += step_norm
        X, lam = X_new, lam_new

        U = system.to_field(X)
        U[:, p.grid.boundary_mask] = 0.0
        r = system.evaluate(X, lam, None, with_jacobian=False)[0]
        solution = Solution(
            u=VectorField(p.grid, U), residual_norm=float(np.max(np.abs(r))), converged=True,
            iterations=iterations, jacobian_singularity_indicator=np.nan, lam=lam, gamma=p.gamma,
            message="收敛", metadata={"formulation": system.formulation},
        )
        _append(branch, solution, step_norm)
        if d_lam_prev * d_lam < 0:
            branch.points[-2].fold_flag = True
            logger.info(f"🎯 检测到折点: λ ≈ {branch.points[-2].lam:.8g}")
        if d_lam != 0:
            d_lam_prev = d_lam
        if any(pt.fold_flag for pt in branch.points):
            beyond_fold += 1
        if stop_after_folds is not None and sum(pt.fold_flag for pt in branch.points) >= stop_after_folds and beyond_fold >= 3:
            branch.stop_reason = "fold_passed"
            break
        if np.max(solution.u.sup_norms()) > options.sup_ceiling:
            branch.stop_reason = "sup_ceiling"
            break
        if not (lam_bounds[0] <= lam <= lam_bounds[1]):
            branch.stop_reason = "lambda_bounds"
            break

        if iterations <= 3:
            ds = min(options.max_step, ds * options.growth)
        elif iterations >= 8:
            ds = max(options.min_step, 0.5 * ds)

    branch.folds = detect_fold(branch)
    logger.info(f"伪弧长延拓 {branch.branch_id}: {len(branch)} 个点, {len(branch.folds)} 个折点, 终止原因 {branch.stop_reason}")
    return branch


# ----------------------------------------------------------------------
# 折点
# ----------------------------------------------------------------------
def fold_estimates(arclengths: Sequence[float], lambdas: Sequence[float]) -> List[Dict[str, Any]]:
    """
    Δλ 变号处用三点二次拟合 λ(s) 的顶点估计 λ̄

    Returns:
        每个折点 {"index", "lambda_bar", "bracket", "width", "kind"}
    """
    s = np.asarray(arclengths, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    if s.size < 3:
        return []
    d_lam = np.diff(lam)
    folds = []
    for k in range(d_lam.size - 1):
        if d_lam[k] * d_lam[k + 1] >= 0:
            continue
        idx = [k, k + 1, k + 2]
        a, b, c = np.polyfit(s[idx], lam[idx], 2)
        lam_bar = c - b**2 / (4.0 * a) if a != 0 else float(lam[k + 1])
        turning = float(lam[k + 1])
        folds.append({
            "index": k + 1,
            "lambda_bar": float(lam_bar),
            "bracket": (min(turning, lam_bar), max(turning, lam_bar)),
            "width": float(abs(lam_bar - turning)),
            "kind": "right" if d_lam[k] > 0 else "left",
        })
    return folds


def detect_fold(branch: Branch) -> List[Dict[str, Any]]:
    """分支上所有折点的 λ̄ 估计（少于 3 个点时为空）"""
    if len(branch) < 3:
        return []
    return fold_estimates(branch.arclengths, branch.lambdas)


def locate_fold(
    p: ProblemSpec,
    branch: Branch,
    fold: Dict[str, Any],
    options: Optional[ContinuationOptions] = None,
    target_width: float = 1e-3,
    refine_factor: float = 0.1,
    max_rounds: int = 4,
) -> Dict[str, Any]:
    """
    用更小的弧长步重走折点附近以缩小括号宽度

    Returns:
        细化后的折点字典（含 "refined" 与 "rounds"）
    """
    options = options or ContinuationOptions()
    current_branch, current = branch, dict(fold)
    for round_index in range(1, max_rounds + 1):
        if current["width"] <= target_width:
            break
        k = current["index"]
        anchor_index = max(k - 2, 0)
        anchor = current_branch.points[anchor_index]
        local = [pt.step for pt in current_branch.points[anchor_index + 1:k + 2] if pt.step > 0]
        base = float(np.mean(local)) if local else options.step
        step = max(options.min_step * 10, refine_factor * base)
        refined_options = replace(options, step=step, max_step=step, min_step=min(options.min_step, step))
        direction = 1 if current["kind"] == "right" else -1
        try:
            sub = arclength_continue(
                p, anchor.solution, direction, max_arclength=np.inf, options=refined_options,
                stop_after_folds=1, branch_id=f"{branch.branch_id}-fold{round_index}",
            )
        except ContinuationError as e:
            logger.warning(f"⚠️ 折点细化失败: {e}")
            break
        if not sub.folds:
            break
        current_branch = sub
        current = min(sub.folds, key=lambda f: abs(f["lambda_bar"] - fold["lambda_bar"]))
        logger.info(f"折点细化第 {round_index} 轮: λ̄ ≈ {current['lambda_bar']:.8g}, 宽度 {current['width']:.2e}")
    current["refined"] = current_branch is not branch
    current["rounds"] = round_index if max_rounds else 0
    return current


# ----------------------------------------------------------------------
# 上分支与指定 λ 的解
# ----------------------------------------------------------------------
def seed_upper_branch(
    p: ProblemSpec,
    lam: float,
    phi1: Union[ScalarField, VectorField],
    t: Optional[float] = None,
    ladder: Sequence[float] = SEED_LADDER,
    lower: Optional[Solution] = None,
    form: Optional[BlockForm] = None,
    opts: Optional[SolveOptions] = None,
) -> Solution:
    """
    从 t·φ₁ 出发求解，用于落到上分支

    φ₁ 为 ScalarField 时各分量取同一剖面，为 VectorField 时逐分量取剖面。
    给出 lower 时与下分支比较，返回值的 metadata["branch"] 标记
    upper / lower / other。

    Raises:
        ContinuationError: 梯子上所有 t 都不收敛
    """
    opts = opts or SolveOptions()
    p_lam = p.with_params(lam=lam)
    profile = _seed_profile(p, phi1)
    candidates = ([float(t)] if t is not None else []) + [float(v) for v in ladder if t is None or v != t]
    distinct_tol = 10.0 * opts.newton_tol
    fallback = None
    for t_i in candidates:
        initial = VectorField(p.grid, t_i * profile)
        solution = _try_newton(p_lam, initial, opts)
        if solution is None:
            continue
        solution.metadata["seed_t"] = t_i
        if lower is None:
            solution.metadata["branch"] = "unknown"
            return solution
        if solution.u.distance(lower.u) <= max(distinct_tol, 1e-6):
            solution.metadata["branch"] = "lower"
            fallback = fallback or solution
            continue
        order = compare_order(lower.u, solution.u, form)
        solution.metadata["branch"] = "upper" if order.leq else "other"
        solution.metadata["order"] = order
        logger.info(f"✅ λ={lam:.6g} 从 t={t_i:g} 播种得到 {solution.metadata['branch']} 解, sup={np.max(solution.sup_norms):.6g}")
        return solution
    if fallback is not None:
        logger.info(f"λ={lam:.6g} 处只找到下分支解")
        return fallback
    raise ContinuationError(f"λ={lam:.6g} 处种子梯子 {candidates} 全部不收敛")


def _seed_profile(p: ProblemSpec, phi1: Union[ScalarField, VectorField]) -> np.ndarray:
    if isinstance(phi1, VectorField):
        if phi1.n != p.n:
            raise ContinuationError(f"种子剖面分量数 {phi1.n} 与问题分量数 {p.n} 不一致")
        return phi1.values
    return np.tile(phi1.values, (p.n, 1))


def branch_monotonicity(branch: Branch, form: Optional[BlockForm] = None) -> Dict[str, Any]:
    """相邻分支点的严格序（λ 递增方向）"""
    ordered = sorted(branch.points, key=lambda pt: pt.lam)
    decreasing, increasing = [], []
    for first, second in zip(ordered, ordered[1:]):
        report = compare_order(second.solution.u, first.solution.u, form)
        decreasing.append(report.strict_ll)
        increasing.append(report.strict_gg)
    return {
        "strictly_decreasing": bool(decreasing) and all(decreasing),
        "strictly_increasing": bool(increasing) and all(increasing),
        "pairs": len(decreasing),
    }


# ----------------------------------------------------------------------
# 导出
# ----------------------------------------------------------------------
def branch_table(branch: Branch) -> pd.DataFrame:
    """分支点表，按弧长排序"""
    n = branch.points[0].sup_norms.size if branch.points else 1
    columns = (
        ["branch_id", "arclength", "lambda", "gamma"]
        + [f"sup_norm_{i + 1}" for i in range(n)]
        + [f"min_{i + 1}" for i in range(n)]
        + ["fold_flag"]
    )
    rows = []
    for pt in sorted(branch.points, key=lambda point: point.arclength):
        row = {"branch_id": branch.branch_id, "arclength": pt.arclength, "lambda": pt.lam, "gamma": pt.gamma}
        for i in range(n):
            row[f"sup_norm_{i + 1}"] = float(pt.sup_norms[i])
            row[f"min_{i + 1}"] = float(pt.mins[i])
        row["fold_flag"] = bool(pt.fold_flag)
        rows.append(row)
    return pd.DataFrame(rows, columns=columns)


def export_branch(branch: Branch, destination: Union[str, Path]) -> Path:
    """
    分支导出为 CSV

    Raises:
        ContinuationError: 分支为空或目标不可写
    """
    if not branch.points:
        raise ContinuationError("空分支无法导出")
    path = Path(destination)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        branch_table(branch).to_csv(path, index=False)
    except OSError as e:
        logger.error(f"❌ 分支导出失败: {e}")
        raise ContinuationError(f"无法写入 {path}: {e}") from e
    logger.info(f"分支已导出: {path}")
    return path


# ----------------------------------------------------------------------
# 双参数扫描
# ----------------------------------------------------------------------
def _sign_class(solution: Solution, tol: float = 1e-9) -> str:
    values = solution.u.values
    if np.min(values) >= -tol:
        return "nonnegative"
    if np.max(values) <= tol:
        return "nonpositive"
    return "sign-changing"


def _order_relations(
    lower: Optional[Solution],
    upper: Optional[Solution],
    distinct: Sequence[Solution],
    form: Optional[BlockForm] = None,
) -> str:
    """单元内各类解两两之间的序，如 "lower:upper=strict_ll;negative:lower=strict_ll" """
    named = {"lower": lower, "upper": upper, "negative": None}
    for solution in distinct:
        if solution is lower or solution is upper or _sign_class(solution) != "nonpositive":
            continue
        if all(other is None or solution.u.distance(other.u) > 1e-6 for other in (lower, upper)):
            named["negative"] = solution
            break
    relations = []
    for left, right in (("lower", "upper"), ("negative", "lower"), ("negative", "upper")):
        if named[left] is not None and named[right] is not None:
            report = compare_order(named[left].u, named[right].u, form)
            relations.append(f"{left}:{right}={report.relation}")
    return ";".join(relations) if relations else "none"


def _nearest_start(branch: Branch, lam: float) -> Optional[BranchPoint]:
    if not branch.points:
        return None
    return min(branch.points, key=lambda pt: abs(pt.lam - lam))


def two_parameter_scan(
    p: ProblemSpec,
    lam_grid: Sequence[float],
    gamma_grid: Sequence[float],
    options: Optional[ContinuationOptions] = None,
    lam_max: Optional[float] = None,
    lam_top: Optional[float] = None,
    seed_ladder: Sequence[float] = SEED_LADDER,
    negative_ladder: Sequence[float] = NEGATIVE_LADDER,
    progress: bool = False,
) -> Dict[str, pd.DataFrame]:
    """
    (λ,γ) 区域图：下分支延拓、上分支播种、负分支播种

    λ̄₁(γ) 取下分支自然延拓的停滞点；λ̄₂(γ) 取负分支从 lam_top 向下延拓的停滞点。
    未找到的解一律按"在给定种子梯子下未找到"记录，不视为证明。

    Returns:
        {"cells": 区域图, "curves": 经验曲线}
    """
    options = options or ContinuationOptions()
    opts = options.solve
    lam_grid = [float(v) for v in lam_grid]
    gamma_grid = [float(v) for v in gamma_grid]
    if not lam_grid or not gamma_grid:
        return {"cells": pd.DataFrame(columns=SCAN_COLUMNS), "curves": pd.DataFrame(columns=CURVE_COLUMNS)}

    weight = ScalarField(p.grid, np.max(p.coupling.row_sums(), axis=0))
    try:
        # 种子剖面逐分量取各自算子的主特征函数
        plus_pairs = [principal_eigenpair(op, weight, 1) for op in p.operators]
        minus_pairs = [principal_eigenpair(op, weight, -1) for op in p.operators]
    except EigenError as e:
        raise ContinuationError(f"扫描需要主特征函数: {e}") from e
    lambda1_minus = max(pair.lambda1 for pair in minus_pairs)
    lam_max = 2.0 * lambda1_minus if lam_max is None else lam_max
    lam_top = max(max(lam_grid), 1.25 * lambda1_minus) if lam_top is None else lam_top
    phi_plus = VectorField.from_components([pair.phi1 for pair in plus_pairs])
    abs_phi_minus = np.abs(np.stack([pair.phi1.values for pair in minus_pairs]))

    cells, curves = [], []
    iterator = tqdm(gamma_grid, desc="γ 扫描", disable=not progress)
    for gamma in iterator:
        pg = replace(p, gamma=gamma, two_parameter=True)
        u0 = solve_P0(pg, opts)
        lower_branch = Branch(branch_id=f"lower-γ{gamma:g}")
        if u0.converged:
            try:
                lower_branch = natural_continue(pg, 0.0, lam_max, u0, options, branch_id=f"lower-γ{gamma:g}")
            except ContinuationError as e:
                logger.warning(f"⚠️ γ={gamma:g} 下分支延拓失败: {e}")
        lam_bar1 = float(lower_branch.lambdas[-1]) if lower_branch.stop_reason == "fold_suspected" else np.inf

        negative_branch = Branch(branch_id=f"negative-γ{gamma:g}")
        for t in negative_ladder:
            seed = VectorField(p.grid, -t * abs_phi_minus)
            start = _try_newton(pg.with_params(lam=lam_top), seed, opts)
            if start is not None and _sign_class(start) == "nonpositive":
                try:
                    negative_branch = natural_continue(pg, lam_top, 0.0, start, options, branch_id=f"negative-γ{gamma:g}")
                except ContinuationError as e:
                    logger.warning(f"⚠️ γ={gamma:g} 负分支延拓失败: {e}")
                break
        lam_bar2 = float(negative_branch.lambdas[-1]) if negative_branch.stop_reason == "fold_suspected" else np.nan
        curves.append({
            "gamma": gamma, "lambda_bar1": lam_bar1, "lambda_bar2": lam_bar2,
            "lower_stop": lower_branch.stop_reason or "not_started",
            "negative_stop": negative_branch.stop_reason or "not_found",
        })
        logger.info(f"γ={gamma:g}: λ̄₁ ≈ {lam_bar1:.6g}, λ̄₂ ≈ {lam_bar2:.6g}")

        for lam in lam_grid:
            found: List[Solution] = []
            status = "ok"
            lower_found = upper_found = False
            lower_solution = upper_solution = None
            try:
                point = _nearest_start(lower_branch, lam)
                if point is not None and lam <= lam_bar1:
                    lower_solution = _try_newton(pg.with_params(lam=lam), point.solution.u, opts)
                if lower_solution is not None:
                    found.append(lower_solution)
                    lower_found = True
                if lam > 0:
                    try:
                        upper = seed_upper_branch(pg, lam, phi_plus, ladder=seed_ladder, lower=lower_solution, opts=opts)
                        if upper.metadata.get("branch") != "lower":
                            found.append(upper)
                            upper_solution = upper
                            upper_found = True
                    except ContinuationError:
                        pass
                negative_starts = [VectorField(p.grid, -t * abs_phi_minus) for t in negative_ladder]
                point = _nearest_start(negative_branch, lam)
                if point is not None:
                    negative_starts.insert(0, point.solution.u)
                for initial in negative_starts:
                    candidate = _try_newton(pg.with_params(lam=lam), initial, opts)
                    if candidate is not None:
                        found.append(candidate)
            except (ConvergenceError, TransformDomainError) as e:
                status = f"failed: {e}"
                logger.warning(f"⚠️ 单元 (λ={lam:g}, γ={gamma:g}) 失败: {e}")

            distinct: List[Solution] = []
            for solution in found:
                if all(solution.u.distance(other.u) > 1e-6 for other in distinct):
                    distinct.append(solution)
            classes = sorted({_sign_class(s) for s in distinct})
            cells.append({
                "lambda": lam,
                "gamma": gamma,
                "count": len(distinct),
                "sign_class": "|".join(classes) if classes else "none",
                "lower_found": lower_found,
                "upper_found": upper_found,
                "nonpositive_found": "nonpositive" in classes,
                "order": _order_relations(lower_solution, upper_solution, distinct),
                "status": status,
            })

    return {
        "cells": pd.DataFrame(cells, columns=SCAN_COLUMNS),
        "curves": pd.DataFrame(curves, columns=CURVE_COLUMNS),
    }
