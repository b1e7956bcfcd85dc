#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
求解器模块 - 阻尼半光滑 Newton / 策略迭代、Picard 不动点映射、
单调上下解迭代与离散序比较

两种离散格式：
- direct：直接对 u 求解
- exponential：对 v = (e^{mu}−1)/m 求解（算子为各向同性常系数 Laplace 型、
  M_i = μ_i I 时可用），能表示量级 π²/λ 的上分支解
"""

import functools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from src.core.coupling import BlockForm
from src.core.exceptions import (
    ConvergenceError,
    MonotonicityError,
    OperatorError,
    SingularJacobianError,
    TransformDomainError,
)
from src.core.grid import Grid, VectorField
from src.core.operators import (
    LinearSpec,
    OperatorSpec,
    Policy,
    ProblemSpec,
    evaluate_system,
    extremal_operator,
    operator_matrix,
    operator_value_and_jacobian,
    residual,
)
from src.core.transform import EXPONENT_LIMIT

# 设置日志
logger = logging.getLogger(__name__)

FORMULATIONS = ("direct", "exponential")


@dataclass(frozen=True)
class SolveOptions:
    """Newton 求解选项"""

    newton_tol: float = 1e-9
    max_newton_iters: int = 100
    damping: float = 0.5
    min_step: float = 2.0**-20
    policy_freeze: bool = False
    formulation: str = "direct"
    singular_tol: float = 1e-10

    def __post_init__(self):
        if self.newton_tol <= 0 or self.min_step <= 0 or self.singular_tol <= 0:
            raise ConvergenceError("求解容差必须为正")
        if not (0 < self.damping < 1):
            raise ConvergenceError(f"回溯因子必须在 (0,1) 内，收到 {self.damping}")
        if self.max_newton_iters < 1:
            raise ConvergenceError("最大迭代次数至少为 1")
        if self.formulation not in FORMULATIONS:
            raise ConvergenceError(f"未知的离散格式: {self.formulation}")


@dataclass
class Solution:
    """求解结果"""

    u: VectorField
    residual_norm: float
    converged: bool
    iterations: int
    jacobian_singularity_indicator: float
    lam: float = 0.0
    gamma: float = 1.0
    message: str = ""
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def sup_norms(self) -> np.ndarray:
        return self.u.sup_norms()


@dataclass
class OrderReport:
    """两个向量场的离散序关系"""

    relation: str
    leq: bool
    geq: bool
    strict_ll: bool
    strict_gg: bool
    margins: np.ndarray
    boundary_margins: np.ndarray
    component_strict_ll: List[bool]
    component_strict_gg: List[bool]
    block_strict_ll: List[bool]
    block_strict_gg: List[bool]

    @property
    def strict_in_some_block(self) -> bool:
        return any(self.block_strict_ll) or any(self.block_strict_gg)


# ----------------------------------------------------------------------
# 非线性系统（两种格式）
# ----------------------------------------------------------------------
def exponential_parameters(p: ProblemSpec) -> Tuple[np.ndarray, np.ndarray]:
    """
    指数格式的适用性检查

    Returns:
        (a_i, m_i = μ_i/a_i)

    Raises:
        OperatorError: 问题不满足指数格式的条件
    """
    diffusion = []
    for i, op in enumerate(p.operators):
        a = op.isotropic_constant() if isinstance(op, LinearSpec) else None
        if a is None:
            raise OperatorError("指数格式要求各向同性常系数 Linear 算子且 b ≡ 0", component=i)
        diffusion.append(a)
    mus = p.gradient.isotropic_constants()
    if mus is None or np.any(mus <= 0):
        raise OperatorError("指数格式要求 M_i = μ_i I 且 μ_i > 0")
    a = np.asarray(diffusion)
    return a, mus / a


class NonlinearSystem:
    """直接格式的残差系统，状态即 u"""

    formulation = "direct"

    def __init__(self, p: ProblemSpec):
        self.p = p
        self.shape = (p.n, p.grid.size)

    def to_state(self, U: np.ndarray) -> np.ndarray:
        return np.array(U, dtype=float).reshape(self.shape)

    def to_field(self, X: np.ndarray) -> np.ndarray:
        return np.array(X, dtype=float).reshape(self.shape)

    def admissible(self, X: np.ndarray) -> bool:
        return bool(np.all(np.isfinite(X)))

    def evaluate(self, X: np.ndarray, lam: float, policies: Optional[List[Policy]] = None, with_jacobian: bool = True):
        return evaluate_system(self.p, X, lam=lam, policies=policies, with_jacobian=with_jacobian)

    def d_lambda(self, X: np.ndarray, lam: float) -> np.ndarray:
        """残差对 λ 的偏导 −(𝒞u)（边界为零）"""
        return -self.p.coupling.apply(self.to_field(X)) * self.p.grid.interior_mask


class ExponentialSystem(NonlinearSystem):
    """
    指数格式：状态 v，W = 1 + m v，u = ln W / m

    缩放残差 R_i = −a_i Δv_i / W_i − λ(𝒞u)_i − γh_i
    """

    formulation = "exponential"

    def __init__(self, p: ProblemSpec):
        super().__init__(p)
        self.a, self.m = exponential_parameters(p)
        grid = p.grid
        self.laplacian = functools.reduce(
            lambda acc, k: acc + grid.second_difference(k), range(1, grid.dim), grid.second_difference(0)
        ).tocsr()

    def to_state(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U, dtype=float).reshape(self.shape)
        exponent = self.m[:, None] * U
        if np.max(exponent) > EXPONENT_LIMIT:
            raise TransformDomainError("初值超出指数变换范围", exponent=float(np.max(exponent)))
        return np.expm1(exponent) / self.m[:, None]

    def to_field(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(self.shape)
        return np.log1p(self.m[:, None] * X) / self.m[:, None]

    def admissible(self, X: np.ndarray) -> bool:
        W = 1.0 + self.m[:, None] * np.asarray(X).reshape(self.shape)
        return bool(np.all(np.isfinite(W)) and np.all(W > 0))

    def evaluate(self, X: np.ndarray, lam: float, policies: Optional[List[Policy]] = None, with_jacobian: bool = True):
        p = self.p
        grid = p.grid
        X = np.asarray(X, dtype=float).reshape(self.shape)
        interior = grid.interior_mask
        boundary = grid.boundary_mask
        W = 1.0 + self.m[:, None] * X
        U = np.log(W) / self.m[:, None]
        coupled = p.coupling.apply(U)

        residual_values = np.empty_like(X)
        blocks: List[List[Any]] = [[None] * p.n for _ in range(p.n)]
        for i in range(p.n):
            lap = self.laplacian @ X[i]
            r = -self.a[i] * lap / W[i] - lam * coupled[i] - p.gamma * p.rhs[i]
            residual_values[i] = np.where(interior, r, X[i])
            if with_jacobian:
                row_scale = np.where(interior, self.a[i] / W[i], 0.0)
                diag = np.where(interior, self.a[i] * self.m[i] * lap / W[i] ** 2, 0.0) + boundary
                blocks[i][i] = -sparse.diags(row_scale) @ self.laplacian + sparse.diags(diag)
                for j in range(p.n):
                    weights = -lam * p.coupling.entries[i, j] / W[j] * interior
                    if np.any(weights):
                        blocks[i][j] = blocks[i][j] + sparse.diags(weights) if blocks[i][j] is not None else sparse.diags(weights)
        jacobian = sparse.bmat(blocks, format="csc") if with_jacobian else None
        return residual_values, jacobian, [None] * p.n


class _OperatorSystem(NonlinearSystem):
    """单个算子方程 −F[w] + shift·w = rhs（内部），w = 0（边界）"""

    def __init__(self, op: OperatorSpec, grid: Grid, rhs: np.ndarray, shift: Union[float, np.ndarray]):
        self.op = op
        self.grid = grid
        self.rhs = np.asarray(rhs, dtype=float)
        self.shift = np.broadcast_to(np.asarray(shift, dtype=float), (grid.size,)) * grid.interior_mask
        self.shape = (1, grid.size)

    def evaluate(self, X: np.ndarray, lam: float = 0.0, policies: Optional[List[Policy]] = None, with_jacobian: bool = True):
        grid = self.grid
        w = np.asarray(X, dtype=float).reshape(grid.size)
        d1, d2 = grid.derivatives(w)
        value, coef_d2, coef_d1, policy = operator_value_and_jacobian(
            self.op, d1, d2, None if policies is None else policies[0]
        )
        r = np.where(grid.interior_mask, -value + self.shift * w - self.rhs, w)
        jacobian = None
        if with_jacobian:
            jacobian = (
                -operator_matrix(grid, coef_d2, coef_d1)
                + sparse.diags(self.shift + grid.boundary_mask)
            ).tocsc()
        return r[None, :], jacobian, [policy]


def build_system(p: ProblemSpec, formulation: str = "direct") -> NonlinearSystem:
    if formulation == "exponential":
        return ExponentialSystem(p)
    if formulation == "direct":
        return NonlinearSystem(p)
    raise ConvergenceError(f"未知的离散格式: {formulation}")


# ----------------------------------------------------------------------
# Newton 内核
# ----------------------------------------------------------------------
def _factorize(jacobian: sparse.spmatrix):
    """行均衡后做 LU 分解，返回 (lu, 行缩放)；精确奇异时 lu 为 None"""
    row_max = np.asarray(abs(jacobian).max(axis=1).todense()).ravel()
    scale = 1.0 / np.where(row_max > 0, row_max, 1.0)
    scaled = (sparse.diags(scale) @ jacobian).tocsc()
    try:
        return spla.splu(scaled), scale
    except RuntimeError:
        return None, scale


def _singularity_indicator(lu, size: int, steps: int = 4) -> float:
    """反迭代估计行均衡 Jacobian 的最小特征值模"""
    if lu is None:
        return 0.0
    x = np.random.default_rng(0).standard_normal(size)
    x /= np.linalg.norm(x)
    norm = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            y = lu.solve(x)
            norm = float(np.linalg.norm(y))
            if not np.isfinite(norm) or norm == 0.0:
                return 0.0
            x = y / norm
    return 1.0 / norm


def singularity_indicator(jacobian: sparse.spmatrix) -> float:
    """Jacobian 奇异性指标（行均衡后最小特征值模的估计）"""
    lu, _ = _factorize(jacobian)
    return _singularity_indicator(lu, jacobian.shape[0])


def _policies_equal(first: List[Policy], second: List[Policy]) -> bool:
    return all(
        (a is None and b is None) or (a is not None and b is not None and np.array_equal(a, b))
        for a, b in zip(first, second)
    )


def newton_iterate(
    system: NonlinearSystem,
    X0: np.ndarray,
    lam: float,
    opts: SolveOptions,
) -> Dict[str, Any]:
    """
    阻尼半光滑 Newton（policy_freeze 时为外层冻结策略的 Howard 迭代）

    Returns:
        {"state", "residual_norm", "converged", "iterations", "indicator", "message"}

    Raises:
        SingularJacobianError: 线性化奇异
    """
    X = np.array(X0, dtype=float).reshape(system.shape)
    frozen = system.evaluate(X, lam, None, with_jacobian=False)[2] if opts.policy_freeze else None
    steps = 0
    norm = np.inf
    message = "达到最大迭代次数"
    converged = False

    for _ in range(opts.max_newton_iters + 1):
        r, jacobian, used = system.evaluate(X, lam, frozen, with_jacobian=True)
        norm = float(np.max(np.abs(r)))
        logger.debug(f"Newton 第 {steps} 步: 残差 {norm:.3e}")
        if norm <= opts.newton_tol:
            if frozen is None:
                converged, message = True, "收敛"
                break
            current = system.evaluate(X, lam, None, with_jacobian=False)[2]
            if _policies_equal(current, frozen):
                converged, message = True, "收敛"
                break
            frozen = current
            continue
        if steps >= opts.max_newton_iters:
            break

        lu, scale = _factorize(jacobian)
        indicator = _singularity_indicator(lu, jacobian.shape[0])
        if indicator <= opts.singular_tol:
            raise SingularJacobianError(
                "线性化矩阵奇异", indicator=indicator, iteration=steps, last_iterate=X
            )
        delta = -lu.solve(scale * r.ravel()).reshape(system.shape)
        merit = float(np.linalg.norm(r))

        t = 1.0
        accepted = False
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            while t >= opts.min_step:
                trial = X + t * delta
                if system.admissible(trial):
                    r_trial = system.evaluate(trial, lam, frozen, with_jacobian=False)[0]
                    merit_trial = float(np.linalg.norm(r_trial))
                    if np.isfinite(merit_trial) and merit_trial <= (1.0 - 1e-4 * t) * merit:
                        accepted = True
                        break
                t *= opts.damping
        steps += 1
        if not accepted:
            message = "步长下溢"
            break
        X = trial

    return {
        "state": X,
        "residual_norm": norm,
        "converged": converged,
        "iterations": steps,
        "message": message,
    }


def _final_indicator(system: NonlinearSystem, X: np.ndarray, lam: float) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        _, jacobian, _ = system.evaluate(X, lam, None, with_jacobian=True)
    return singularity_indicator(jacobian)


def _solution_from_state(p: ProblemSpec, system: NonlinearSystem, result: Dict[str, Any], lam: float) -> Solution:
    U = system.to_field(result["state"])
    if result["converged"]:
        U[:, p.grid.boundary_mask] = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        finite = bool(np.all(np.isfinite(U)))
    if not finite:
        U = np.nan_to_num(U, nan=0.0, posinf=0.0, neginf=0.0)
    indicator = _final_indicator(system, result["state"], lam) if finite else 0.0
    return Solution(
        u=VectorField(p.grid, U),
        residual_norm=result["residual_norm"],
        converged=result["converged"] and finite,
        iterations=result["iterations"],
        jacobian_singularity_indicator=indicator,
        lam=lam,
        gamma=p.gamma,
        message=result["message"],
        metadata={"formulation": system.formulation},
    )


def newton_solve(p: ProblemSpec, initial: VectorField, opts: Optional[SolveOptions] = None) -> Solution:
    """
    从给定初值求解离散 (P_λ)

    Args:
        p: 问题规格
        initial: 初值场
        opts: 求解选项

    Returns:
        Solution；步长下溢或迭代次数用尽时 converged=False

    Raises:
        SingularJacobianError: 线性化奇异
    """
    opts = opts or SolveOptions()
    if initial.grid != p.grid or initial.n != p.n:
        raise ConvergenceError("初值与问题的网格或分量数不一致")
    system = build_system(p, opts.formulation)
    try:
        X0 = system.to_state(initial.values)
    except TransformDomainError as e:
        logger.debug(f"初值无法变换: {e}")
        return Solution(
            u=initial, residual_norm=np.inf, converged=False, iterations=0,
            jacobian_singularity_indicator=np.nan, lam=p.lam, gamma=p.gamma,
            message=f"初值超出指数变换范围: {e}", metadata={"formulation": system.formulation},
        )
    result = newton_iterate(system, X0, p.lam, opts)
    solution = _solution_from_state(p, system, result, p.lam)
    if solution.converged:
        logger.debug(f"✅ Newton 收敛: λ={p.lam:.6g}, 迭代 {solution.iterations} 次, 残差 {solution.residual_norm:.2e}")
    else:
        logger.debug(f"⚠️ Newton 未收敛: λ={p.lam:.6g}, {solution.message}")
    return solution


def solve_P0(p: ProblemSpec, opts: Optional[SolveOptions] = None) -> Solution:
    """
    求解 λ = 0 的解耦问题 (P₀)，逐分量从零初值做 Newton

    失败以 converged=False 报告，不抛出异常。
    """
    opts = opts or SolveOptions()
    p0 = p.with_params(lam=0.0)
    components = []
    residuals, iterations, indicators = [], 0, []
    converged = True
    messages = []
    for i in range(p.n):
        sub = p0.component_problem(i)
        try:
            solution = newton_solve(sub, VectorField.zeros(p.grid, 1), opts)
        except SingularJacobianError as e:
            logger.warning(f"⚠️ (P₀) 第 {i + 1} 个分量线性化奇异: {e}")
            components.append(np.zeros(p.grid.size))
            residuals.append(np.inf)
            indicators.append(e.indicator)
            converged = False
            messages.append(f"分量{i + 1}: 奇异")
            continue
        components.append(solution.u.values[0])
        residuals.append(solution.residual_norm)
        iterations += solution.iterations
        indicators.append(solution.jacobian_singularity_indicator)
        converged = converged and solution.converged
        messages.append(f"分量{i + 1}: {solution.message}")

    if converged:
        logger.info(f"✅ (P₀) 求解成功, ‖u₀‖∞ = {np.max(np.abs(components)):.6g}")
    else:
        logger.warning(f"⚠️ (P₀) 求解失败: {'; '.join(messages)}")
    return Solution(
        u=VectorField(p.grid, np.stack(components)),
        residual_norm=float(np.max(residuals)),
        converged=converged,
        iterations=iterations,
        jacobian_singularity_indicator=float(np.min(indicators)),
        lam=0.0,
        gamma=p.gamma,
        message="; ".join(messages),
        metadata={"formulation": opts.formulation},
    )


# ----------------------------------------------------------------------
# 算子方程与不动点映射
# ----------------------------------------------------------------------
def solve_operator_equation(
    op: OperatorSpec,
    grid: Grid,
    rhs: np.ndarray,
    shift: Union[float, np.ndarray] = 0.0,
    initial: Optional[np.ndarray] = None,
    opts: Optional[SolveOptions] = None,
) -> np.ndarray:
    """
    求解 −F[w] + shift·w = rhs（内部），w = 0（边界）

    Linear 算子直接做稀疏求解，Pucci / Bellman 用策略迭代。

    Raises:
        ConvergenceError: 迭代失败（携带最后迭代值）
    """
    opts = opts or SolveOptions()
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (grid.size,))
    system = _OperatorSystem(op, grid, rhs, shift)
    if isinstance(op, LinearSpec):
        _, jacobian, _ = system.evaluate(np.zeros(grid.size))
        lu, scale = _factorize(jacobian)
        if lu is None or _singularity_indicator(lu, grid.size) <= opts.singular_tol:
            raise SingularJacobianError("线性算子方程奇异", indicator=0.0 if lu is None else _singularity_indicator(lu, grid.size))
        w = lu.solve(scale * np.where(grid.interior_mask, rhs, 0.0))
        w[grid.boundary_mask] = 0.0
        return w

    start = np.zeros(grid.size) if initial is None else np.array(initial, dtype=float)
    result = newton_iterate(system, start[None, :], 0.0, opts)
    if not result["converged"]:
        raise ConvergenceError(
            f"算子方程求解失败: {result['message']}",
            residual=result["residual_norm"],
            last_iterate=result["state"][0],
        )
    w = result["state"][0].copy()
    w[grid.boundary_mask] = 0.0
    return w


def fixed_point_map(p: ProblemSpec, u: VectorField, opts: Optional[SolveOptions] = None) -> VectorField:
    """
    不动点映射 𝒯_λ：U 解 −F_i[U_i] = λ(𝒞u)_i + ⟨M_i Du_i, Du_i⟩ + γh_i，U = 0 于边界
    """
    if u.grid != p.grid or u.n != p.n:
        raise ConvergenceError("场与问题的网格或分量数不一致")
    grid = p.grid
    coupled = p.coupling.apply(u.values)
    result = np.empty_like(u.values)
    for i, op in enumerate(p.operators):
        d1, _ = grid.derivatives(u.values[i])
        rhs = p.lam * coupled[i] + p.gradient.quadratic(i, d1) + p.gamma * p.rhs[i]
        result[i] = solve_operator_equation(op, grid, rhs, 0.0, initial=u.values[i], opts=opts)
    return VectorField(grid, result)


def picard_iterate(
    p: ProblemSpec,
    initial: Optional[VectorField] = None,
    tol: float = 1e-11,
    max_iters: int = 500,
    opts: Optional[SolveOptions] = None,
) -> Solution:
    """Picard 迭代 u ← 𝒯_λ(u) 直到相邻迭代差 ≤ tol"""
    U = initial or VectorField.zeros(p.grid, p.n)
    change = np.inf
    k = 0
    for k in range(1, max_iters + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                nxt = fixed_point_map(p, U, opts)
            except (ConvergenceError, OperatorError) as e:
                logger.warning(f"⚠️ Picard 迭代第 {k} 步失败: {e}")
                break
        change = nxt.distance(U)
        U = nxt
        if change <= tol:
            break
    norm = float(np.max(np.abs(residual(p, U).values)))
    converged = change <= tol
    logger.info(f"{'✅' if converged else '⚠️'} Picard 迭代 {k} 次, 步差 {change:.2e}, 残差 {norm:.2e}")
    return Solution(
        u=U, residual_norm=norm, converged=converged, iterations=k,
        jacobian_singularity_indicator=np.nan, lam=p.lam, gamma=p.gamma,
        message="收敛" if converged else "未收敛", metadata={"method": "picard"},
    )


# ----------------------------------------------------------------------
# 上下解与序
# ----------------------------------------------------------------------
def check_subsolution(
    p: ProblemSpec,
    w: VectorField,
    side: str = "sub",
    tol: Optional[float] = None,
) -> Tuple[bool, float]:
    """
    下解：内部残差 ≤ tol 且边界 w ≤ 0；上解反之

    Returns:
        (是否通过, 裕量)；严格下/上解的裕量为正
    """
    if side not in ("sub", "super"):
        raise ConvergenceError(f"side 必须为 sub/super，收到 {side}")
    tol = SolveOptions().newton_tol if tol is None else tol
    r = residual(p, w).values
    interior = p.grid.interior_mask
    boundary = p.grid.boundary_mask
    r_int = r[:, interior]
    if side == "sub":
        margin = float(-np.max(r_int))
        passed = margin >= -tol and bool(np.all(w.values[:, boundary] <= 0.0))
    else:
        margin = float(np.min(r_int))
        passed = margin >= -tol and bool(np.all(w.values[:, boundary] >= 0.0))
    return passed, margin


@functools.lru_cache(maxsize=32)
def _inward_pairs(grid: Grid) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    nodes, inner, dist = [], [], []
    for node in grid.boundary_index:
        target, distance = grid.inward_neighbor(int(node))
        nodes.append(int(node))
        inner.append(target)
        dist.append(distance)
    return np.asarray(nodes), np.asarray(inner), np.asarray(dist)


def _strict_component(w: np.ndarray, grid: Grid, tol: float, tol_normal: float) -> Tuple[bool, float, float]:
    """w = v − u 的单分量严格正性：内部 w > 0，边界 w > tol 或内法向差商 > tol_normal"""
    interior_margin = float(np.min(w[grid.interior_mask]))
    nodes, inner, dist = _inward_pairs(grid)
    quotient = (w[inner] - w[nodes]) / dist
    boundary_values = w[nodes]
    touching = np.abs(boundary_values) <= tol
    ok_boundary = np.where(touching, quotient > tol_normal, boundary_values > tol)
    boundary_margin = float(np.min(np.where(touching, quotient, np.inf))) if np.any(touching) else np.inf
    strict = interior_margin > 0 and bool(np.all(ok_boundary))
    return strict, interior_margin, boundary_margin


def compare_order(
    u: VectorField,
    v: VectorField,
    form: Optional[BlockForm] = None,
    tol: float = 1e-10,
    tol_normal: float = 1e-8,
) -> OrderReport:
    """
    离散序比较（≤、≪ 及按块的严格性）

    Args:
        u, v: 同网格同分量数的场
        form: 块三角形；None 时视全部分量为一个块
        tol: 非严格比较容差
        tol_normal: 边界内法向差商的严格阈值

    Returns:
        OrderReport
    """
    if u.grid != v.grid or u.n != v.n:
        raise ConvergenceError("比较的两个场网格或分量数不一致")
    grid = u.grid
    diff = v.values - u.values
    leq = bool(np.all(diff >= -tol))
    geq = bool(np.all(diff <= tol))

    ll, gg, margins, boundary_margins = [], [], [], []
    for i in range(u.n):
        strict, margin, bmargin = _strict_component(diff[i], grid, tol, tol_normal)
        ll.append(strict)
        margins.append(margin)
        boundary_margins.append(bmargin)
        gg.append(_strict_component(-diff[i], grid, tol, tol_normal)[0])

    blocks = form.blocks if form is not None else [tuple(range(u.n))]
    block_ll = [all(ll[i] for i in members) for members in blocks]
    block_gg = [all(gg[i] for i in members) for members in blocks]
    strict_ll = leq and all(ll)
    strict_gg = geq and all(gg)
    if strict_ll:
        relation = "strict_ll"
    elif strict_gg:
        relation = "strict_gg"
    elif leq:
        relation = "leq"
    elif geq:
        relation = "geq"
    else:
        relation = "incomparable"
    return OrderReport(
        relation=relation, leq=leq, geq=geq, strict_ll=strict_ll, strict_gg=strict_gg,
        margins=np.asarray(margins), boundary_margins=np.asarray(boundary_margins),
        component_strict_ll=ll, component_strict_gg=gg,
        block_strict_ll=block_ll, block_strict_gg=block_gg,
    )


def truncate_Ra(u: VectorField, a: float) -> VectorField:
    """R_a：逐分量 max(u_j, a)"""
    return VectorField(u.grid, np.maximum(u.values, a))


# ----------------------------------------------------------------------
# 单调迭代与严格下解屏障
# ----------------------------------------------------------------------
def coercivity_shift(p: ProblemSpec, fields: Sequence[VectorField]) -> float:
    """K = λ·max 行和 + 2μ₂·max|Du| + 1"""
    grad_max = 0.0
    for f in fields:
        for i in range(f.n):
            d1, _ = p.grid.derivatives(f.values[i])
            grad_max = max(grad_max, float(np.max(np.sqrt(np.sum(d1**2, axis=0)))))
    return max(p.lam, 0.0) * p.coupling.max_row_sum() + 2.0 * p.gradient.mu2 * grad_max + 1.0


def monotone_iterate(
    p: ProblemSpec,
    xi: VectorField,
    eta: VectorField,
    start: str = "sub",
    K: Optional[float] = None,
    max_iters: int = 500,
    tol: float = 1e-8,
    truncate_below: Optional[float] = None,
    opts: Optional[SolveOptions] = None,
) -> Solution:
    """
    上下解单调迭代：−F[u^{k+1}] + K u^{k+1} = λ𝒞u^k + ⟨M Du^k, Du^k⟩ + γh + K u^k

    从下解出发迭代逐点不减，收敛到 [xi, eta] 中的最小解；从上解出发逐点不增，收敛到最大解。

    Raises:
        MonotonicityError: 单调性被破坏（K 太小）
        ConvergenceError: 括号无效或内层求解失败
    """
    if start not in ("sub", "super"):
        raise ConvergenceError(f"start 必须为 sub/super，收到 {start}")
    opts = opts or SolveOptions()
    if not xi.leq(eta, tol=1e-12):
        raise ConvergenceError("monotone_iterate 要求 xi ≤ eta")
    check_tol = 10.0 * opts.newton_tol
    if not check_subsolution(p, xi, "sub", check_tol)[0]:
        raise ConvergenceError("xi 不是离散下解")
    if not check_subsolution(p, eta, "super", check_tol)[0]:
        raise ConvergenceError("eta 不是离散上解")

    K = coercivity_shift(p, [xi, eta]) if K is None else float(K)
    grid = p.grid
    direction = 1.0 if start == "sub" else -1.0
    U = (xi if start == "sub" else eta).values.copy()
    change = np.inf
    k = 0
    for k in range(1, max_iters + 1):
        source = U if truncate_below is None else truncate_Ra(VectorField(grid, U), truncate_below).values
        coupled = p.coupling.apply(source)
        nxt = np.empty_like(U)
        for i, op in enumerate(p.operators):
            d1, _ = grid.derivatives(U[i])
            rhs = p.lam * coupled[i] + p.gradient.quadratic(i, d1) + p.gamma * p.rhs[i] + K * U[i]
            nxt[i] = solve_operator_equation(op, grid, rhs, K, initial=U[i], opts=opts)
        step = direction * (nxt - U)
        slack = 1e-9 * max(1.0, float(np.max(np.abs(U))))
        if np.min(step) < -slack:
            comp, node = (int(v) for v in np.unravel_index(np.argmin(step), step.shape))
            raise MonotonicityError(
                f"单调迭代第 {k} 步破坏单调性，请增大 K（当前 K={K:.4g}）",
                iteration=k, component=comp, node=node, K=K,
            )
        change = float(np.max(np.abs(nxt - U)))
        U = nxt
        if change <= tol:
            break

    field_u = VectorField(grid, U)
    norm = float(np.max(np.abs(residual(p, field_u).values)))
    converged = change <= tol
    logger.info(f"{'✅' if converged else '⚠️'} 单调迭代({start}) {k} 次, K={K:.4g}, 残差 {norm:.2e}")
    return Solution(
        u=field_u, residual_norm=norm, converged=converged, iterations=k,
        jacobian_singularity_indicator=np.nan, lam=p.lam, gamma=p.gamma,
        message="收敛" if converged else "达到最大迭代次数",
        metadata={"K": K, "start": start, "truncate_below": truncate_below},
    )


def strict_subsolution_barrier(
    p: ProblemSpec,
    K: Optional[float] = None,
    max_rounds: int = 60,
    opts: Optional[SolveOptions] = None,
) -> Tuple[VectorField, float]:
    """
    严格下解屏障 ξ：ℒ⁻_i[ξ_i] = λK(Σ_j c_ij) + h_i⁻ + 1，ξ = 0 于边界

    K 做不动点提升直到 ξ ≥ −K，此时 ξ 是 (P_λ) 的严格下解。

    Returns:
        (ξ, K)

    Raises:
        ConvergenceError: 给定轮数内找不到合适的 K
    """
    grid = p.grid
    row_sums = p.coupling.row_sums()
    h_minus = np.maximum(-p.gamma * p.rhs, 0.0)
    K = 1.0 if K is None else float(K)
    for round_index in range(max_rounds):
        values = []
        for i, op in enumerate(p.operators):
            lam_p, Lam_p = op.ellipticity
            lower = extremal_operator(grid, -1, lam_p, Lam_p, op.max_drift)
            forcing = max(p.lam, 0.0) * K * row_sums[i] + h_minus[i] + 1.0
            values.append(solve_operator_equation(lower, grid, -forcing, 0.0, opts=opts))
        depth = float(-np.min(values))
        if depth <= K:
            logger.info(f"✅ 严格下解屏障: K={K:.4g}, min ξ={-depth:.4g}")
            return VectorField(grid, np.stack(values)), K
        K = 1.1 * max(K, depth)
        logger.debug(f"屏障第 {round_index + 1} 轮: 提升 K -> {K:.4g}")
    raise ConvergenceError("严格下解屏障的 K 不收敛（λ 可能过大）", K=K)
