#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
算子模块 - 椭圆算子 F_i、二次梯度项与离散残差 / 线性化

二维情形下 Linear 与 Pucci 算子只作用在离散 Hessian 的对角线上（轴向系数）。
所有网格量为展平数组：导数形状 (dim, size)，向量场形状 (n, size)。
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sparse

from src.core.coupling import CouplingMatrix
from src.core.exceptions import OperatorError
from src.core.grid import Grid, ScalarField, VectorField, check_node_interior

# 设置日志
logger = logging.getLogger(__name__)

Policy = Optional[np.ndarray]

SYMMETRY_TOL = 1e-12


# ----------------------------------------------------------------------
# 闭式 Pucci 极值算子
# ----------------------------------------------------------------------
def _symmetric_eigenvalues(X: Union[float, Sequence[Sequence[float]], np.ndarray]) -> np.ndarray:
    """维数 ≤ 2 的对称矩阵的闭式特征值"""
    matrix = np.atleast_2d(np.asarray(X, dtype=float))
    if matrix.shape not in ((1, 1), (2, 2)):
        raise OperatorError(f"只支持 1×1 或 2×2 矩阵，收到 {matrix.shape}")
    if matrix.shape == (1, 1):
        return matrix[0]
    scale = max(1.0, float(np.max(np.abs(matrix))))
    if abs(matrix[0, 1] - matrix[1, 0]) > SYMMETRY_TOL * scale:
        raise OperatorError("矩阵不对称", matrix=matrix.tolist())
    a, b, c = matrix[0, 0], 0.5 * (matrix[0, 1] + matrix[1, 0]), matrix[1, 1]
    center = 0.5 * (a + c)
    radius = float(np.hypot(0.5 * (a - c), b))
    return np.array([center - radius, center + radius])


def _check_ellipticity(lam_p: float, Lam_p: float) -> None:
    if not (0 < lam_p <= Lam_p) or not np.isfinite(Lam_p):
        raise OperatorError(f"椭圆常数需满足 0 < λ_P ≤ Λ_P，收到 ({lam_p}, {Lam_p})")


def pucci_plus(X: Union[float, Sequence[Sequence[float]], np.ndarray], lam_p: float, Lam_p: float) -> float:
    """ℳ⁺(X) = Λ_P·Σ(正特征值) + λ_P·Σ(负特征值)"""
    _check_ellipticity(lam_p, Lam_p)
    eig = _symmetric_eigenvalues(X)
    return float(Lam_p * np.sum(eig[eig > 0]) + lam_p * np.sum(eig[eig < 0]))


def pucci_minus(X: Union[float, Sequence[Sequence[float]], np.ndarray], lam_p: float, Lam_p: float) -> float:
    """ℳ⁻(X) = λ_P·Σ(正特征值) + Λ_P·Σ(负特征值)"""
    _check_ellipticity(lam_p, Lam_p)
    eig = _symmetric_eigenvalues(X)
    return float(lam_p * np.sum(eig[eig > 0]) + Lam_p * np.sum(eig[eig < 0]))


def gradient_quadratic(Du: Sequence[float], M: Sequence[Sequence[float]]) -> float:
    """二次型 ⟨M Du, Du⟩"""
    Du = np.atleast_1d(np.asarray(Du, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != (Du.size, Du.size):
        raise OperatorError(f"维数不匹配: Du {Du.shape}, M {M.shape}")
    return float(Du @ M @ Du)


# ----------------------------------------------------------------------
# 算子规格
# ----------------------------------------------------------------------
def _coefficient_array(grid: Grid, value: Any, name: str) -> np.ndarray:
    """把标量 / 每轴常数 / 每节点数组统一成 (dim, size)"""
    array = np.asarray(value, dtype=float)
    if array.ndim == 0:
        array = np.full((grid.dim, grid.size), float(array))
    elif array.ndim == 1 and array.size == grid.dim:
        array = np.repeat(array[:, None], grid.size, axis=1)
    elif array.ndim == 1 and array.size == grid.size and grid.dim == 1:
        array = array[None, :]
    if array.shape != (grid.dim, grid.size):
        raise OperatorError(f"{name} 的形状应为 ({grid.dim}, {grid.size})，收到 {array.shape}")
    if not np.all(np.isfinite(array)):
        raise OperatorError(f"{name} 含有非有限值")
    return array


@dataclass(frozen=True)
class LinearSpec:
    """线性算子 F[u] = Σ_k a_k ∂_kk u + Σ_k b_k ∂_k u"""

    a: np.ndarray
    b: np.ndarray
    kind: str = field(default="linear", init=False)

    def __post_init__(self):
        if self.a.shape != self.b.shape or self.a.ndim != 2:
            raise OperatorError("Linear 系数 a/b 形状必须同为 (dim, size)")
        if np.min(self.a) <= 0:
            axis, node = (int(v) for v in np.unravel_index(np.argmin(self.a), self.a.shape))
            raise OperatorError("Linear 扩散系数必须为正", axis=axis, node=node)

    @classmethod
    def build(cls, grid: Grid, a: Any = 1.0, b: Any = 0.0) -> "LinearSpec":
        return cls(_coefficient_array(grid, a, "a"), _coefficient_array(grid, b, "b"))

    @property
    def ellipticity(self) -> Tuple[float, float]:
        return float(np.min(self.a)), float(np.max(self.a))

    @property
    def max_drift(self) -> float:
        return float(np.max(np.sqrt(np.sum(self.b**2, axis=0))))

    def isotropic_constant(self) -> Optional[float]:
        """a 为各向同性常数且 b ≡ 0 时返回 a，否则 None"""
        if np.ptp(self.a) == 0 and not np.any(self.b):
            return float(self.a.flat[0])
        return None


@dataclass(frozen=True)
class PucciSpec:
    """Pucci 极值算子 ℳ±(D²u) + b·Du ± β|Du|"""

    sign: int
    lam_p: float
    Lam_p: float
    b: np.ndarray
    drift_bound: float = 0.0
    kind: str = field(default="pucci", init=False)

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise OperatorError(f"Pucci 符号必须为 ±1，收到 {self.sign}")
        _check_ellipticity(self.lam_p, self.Lam_p)
        if self.drift_bound < 0:
            raise OperatorError("漂移界 β 必须非负")
        if self.b.ndim != 2:
            raise OperatorError("Pucci 漂移 b 的形状必须为 (dim, size)")

    @classmethod
    def build(cls, grid: Grid, sign: int, lam_p: float, Lam_p: float, b: Any = 0.0, drift_bound: float = 0.0) -> "PucciSpec":
        return cls(int(sign), float(lam_p), float(Lam_p), _coefficient_array(grid, b, "b"), float(drift_bound))

    @property
    def ellipticity(self) -> Tuple[float, float]:
        return self.lam_p, self.Lam_p

    @property
    def max_drift(self) -> float:
        return float(np.max(np.sqrt(np.sum(self.b**2, axis=0)))) + self.drift_bound

    @property
    def label(self) -> str:
        return "pucci_plus" if self.sign > 0 else "pucci_minus"


@dataclass(frozen=True)
class BellmanSpec:
    """Bellman 算子：有限个 Linear 算子的逐点 min / max"""

    mode: str
    family: Tuple[LinearSpec, ...]
    kind: str = field(default="bellman", init=False)

    def __post_init__(self):
        if self.mode not in ("min", "max"):
            raise OperatorError(f"Bellman 模式必须为 min/max，收到 {self.mode}")
        if not self.family:
            raise OperatorError("Bellman 算子族不能为空")
        shapes = {member.a.shape for member in self.family}
        if len(shapes) != 1:
            raise OperatorError("Bellman 算子族成员的系数形状不一致")

    @property
    def ellipticity(self) -> Tuple[float, float]:
        bounds = [member.ellipticity for member in self.family]
        return min(b[0] for b in bounds), max(b[1] for b in bounds)

    @property
    def max_drift(self) -> float:
        return max(member.max_drift for member in self.family)


OperatorSpec = Union[LinearSpec, PucciSpec, BellmanSpec]


def operator_coefficient_shape(op: OperatorSpec) -> Tuple[int, int]:
    if isinstance(op, BellmanSpec):
        return op.family[0].a.shape
    if isinstance(op, LinearSpec):
        return op.a.shape
    return op.b.shape


def extremal_operator(grid: Grid, sign: int, lam_p: float, Lam_p: float, drift_bound: float = 0.0) -> PucciSpec:
    """ℒ± = ℳ± ± β|Du|"""
    return PucciSpec.build(grid, sign, lam_p, Lam_p, 0.0, drift_bound)


def dual_operator(op: OperatorSpec) -> OperatorSpec:
    """对偶算子 G(X) = −F(−X)：ℳ⁺ ↔ ℳ⁻，max ↔ min，Linear 不变"""
    if isinstance(op, LinearSpec):
        return op
    if isinstance(op, PucciSpec):
        return replace(op, sign=-op.sign)
    return replace(op, mode="min" if op.mode == "max" else "max")


# ----------------------------------------------------------------------
# 逐节点求值与线性化
# ----------------------------------------------------------------------
def operator_value_and_jacobian(
    op: OperatorSpec,
    d1: np.ndarray,
    d2: np.ndarray,
    policy: Policy = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, Policy]:
    """
    逐节点计算 F 的值以及对 (∂_k u, ∂_kk u) 的偏导

    Args:
        op: 算子规格
        d1: 一阶差分 (dim, size)
        d2: 二阶差分 (dim, size)
        policy: 冻结的活跃策略；None 时按当前 d2 重新选择

    Returns:
        (value, coef_d2, coef_d1, policy)
    """
    if isinstance(op, LinearSpec):
        value = np.sum(op.a * d2, axis=0) + np.sum(op.b * d1, axis=0)
        return value, op.a, op.b, None

    if isinstance(op, PucciSpec):
        if policy is None:
            # 零二阶差分取 λ_P
            policy = d2 > 0 if op.sign > 0 else d2 < 0
        coef_d2 = np.where(policy, op.Lam_p, op.lam_p)
        value = np.sum(coef_d2 * d2, axis=0) + np.sum(op.b * d1, axis=0)
        coef_d1 = op.b.copy()
        if op.drift_bound:
            norm = np.sqrt(np.sum(d1**2, axis=0))
            value = value + op.sign * op.drift_bound * norm
            safe = np.where(norm > 0, norm, 1.0)
            coef_d1 = coef_d1 + np.where(norm > 0, op.sign * op.drift_bound * d1 / safe, 0.0)
        return value, coef_d2, coef_d1, policy

    values = np.stack([
        np.sum(member.a * d2, axis=0) + np.sum(member.b * d1, axis=0) for member in op.family
    ])
    if policy is None:
        policy = np.argmax(values, axis=0) if op.mode == "max" else np.argmin(values, axis=0)
    nodes = np.arange(values.shape[1])
    value = values[policy, nodes]
    a_stack = np.stack([member.a for member in op.family])
    b_stack = np.stack([member.b for member in op.family])
    coef_d2 = a_stack[policy, :, nodes].T
    coef_d1 = b_stack[policy, :, nodes].T
    return value, coef_d2, coef_d1, policy


def apply_operator(op: OperatorSpec, grid: Grid, values: np.ndarray) -> np.ndarray:
    """F[u] 在所有节点上的值（边界为零）"""
    d1, d2 = grid.derivatives(np.asarray(values, dtype=float))
    return operator_value_and_jacobian(op, d1, d2)[0] * grid.interior_mask


def operator_matrix(grid: Grid, coef_d2: np.ndarray, coef_d1: np.ndarray) -> sparse.csr_matrix:
    """Σ_k diag(coef_d2_k) D2_k + diag(coef_d1_k) D1_k"""
    matrix = sparse.csr_matrix((grid.size, grid.size))
    for k in range(grid.dim):
        matrix = matrix + sparse.diags(coef_d2[k]) @ grid.second_difference(k)
        matrix = matrix + sparse.diags(coef_d1[k]) @ grid.first_difference(k)
    return matrix


def discrete_derivatives(u: ScalarField, node: int) -> Dict[str, np.ndarray]:
    """
    内部节点上的中心差分

    Returns:
        {"gradient": 各轴一阶差分, "second": 各轴二阶差分}
    """
    check_node_interior(u.grid, node)
    d1, d2 = u.grid.derivatives(u.values)
    return {"gradient": d1[:, node].copy(), "second": d2[:, node].copy()}


# ----------------------------------------------------------------------
# 梯度矩阵
# ----------------------------------------------------------------------
class GradientMatrixSpec:
    """各分量的梯度矩阵 M_i(x)，形状 (n, size, dim, dim)"""

    def __init__(self, matrices: np.ndarray):
        matrices = np.asarray(matrices, dtype=float)
        if matrices.ndim != 4 or matrices.shape[2] != matrices.shape[3]:
            raise OperatorError(f"梯度矩阵形状应为 (n, size, dim, dim)，收到 {matrices.shape}")
        if not np.all(np.isfinite(matrices)):
            raise OperatorError("梯度矩阵含有非有限值")
        asym = np.abs(matrices - np.swapaxes(matrices, 2, 3))
        if np.any(asym > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(matrices))))):
            comp, node = (int(v) for v in np.argwhere(asym > SYMMETRY_TOL)[0][:2])
            raise OperatorError("梯度矩阵不对称", component=comp, node=node)
        matrices = matrices.copy()
        matrices.setflags(write=False)
        self.matrices = matrices
        self._eigenvalues = np.linalg.eigvalsh(matrices)

    @classmethod
    def isotropic(cls, grid: Grid, mu: Union[float, Sequence[float]], n: int = 1) -> "GradientMatrixSpec":
        mus = np.broadcast_to(np.asarray(mu, dtype=float), (n,))
        eye = np.eye(grid.dim)
        matrices = np.stack([np.broadcast_to(m * eye, (grid.size, grid.dim, grid.dim)) for m in mus])
        return cls(matrices)

    @classmethod
    def diagonal(cls, grid: Grid, entries: np.ndarray) -> "GradientMatrixSpec":
        """entries 形状 (n, dim, size)"""
        entries = np.asarray(entries, dtype=float)
        n = entries.shape[0]
        matrices = np.zeros((n, grid.size, grid.dim, grid.dim))
        for k in range(grid.dim):
            matrices[:, :, k, k] = entries[:, k, :]
        return cls(matrices)

    @property
    def n(self) -> int:
        return int(self.matrices.shape[0])

    @property
    def mu1(self) -> float:
        return float(np.min(self._eigenvalues))

    @property
    def mu2(self) -> float:
        return float(np.max(self._eigenvalues))

    def check_bounds(self) -> Dict[str, Any]:
        """(M)：μ₁ I ≤ M_i ≤ μ₂ I 且 μ₁ > 0，失败时给出见证"""
        smallest = np.min(self._eigenvalues, axis=2)
        passed = bool(np.all(smallest > 0))
        witness = None
        if not passed:
            comp, node = (int(v) for v in np.unravel_index(np.argmin(smallest), smallest.shape))
            witness = {"component": comp, "node": node, "eigenvalue": float(smallest[comp, node])}
        return {"passed": passed, "mu1": self.mu1, "mu2": self.mu2, "witness": witness}

    def quadratic(self, i: int, d1: np.ndarray) -> np.ndarray:
        """⟨M_i Du, Du⟩ 逐节点"""
        return np.einsum("kn,nkl,ln->n", d1, self.matrices[i], d1)

    def gradient(self, i: int, d1: np.ndarray) -> np.ndarray:
        """二次项对 Du 的导数 2 M_i Du，形状 (dim, size)"""
        return 2.0 * np.einsum("nkl,ln->kn", self.matrices[i], d1)

    def isotropic_constants(self) -> Optional[np.ndarray]:
        """所有 M_i = μ_i I（常数）时返回 μ_i 数组"""
        dim = self.matrices.shape[2]
        mus = self.matrices[:, 0, 0, 0]
        expected = mus[:, None, None, None] * np.eye(dim)[None, None, :, :]
        if np.array_equal(self.matrices, np.broadcast_to(expected, self.matrices.shape)):
            return mus.copy()
        return None

    def sub_spec(self, indices: Sequence[int]) -> "GradientMatrixSpec":
        return GradientMatrixSpec(self.matrices[list(indices)])


# ----------------------------------------------------------------------
# 问题规格
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ProblemSpec:
    """离散问题 (P_λ) / (P_λ,γ) 的完整描述"""

    grid: Grid
    operators: Tuple[OperatorSpec, ...]
    gradient: GradientMatrixSpec
    coupling: CouplingMatrix
    rhs: np.ndarray
    lam: float = 0.0
    gamma: float = 1.0
    two_parameter: bool = False
    name: str = "problem"

    def __post_init__(self):
        n = len(self.operators)
        if n < 1:
            raise OperatorError("至少需要一个分量")
        rhs = np.asarray(self.rhs, dtype=float)
        if rhs.ndim == 1:
            rhs = rhs[None, :]
        object.__setattr__(self, "operators", tuple(self.operators))
        object.__setattr__(self, "rhs", rhs)
        if rhs.shape != (n, self.grid.size):
            raise OperatorError(f"右端项形状应为 ({n}, {self.grid.size})，收到 {rhs.shape}")
        if not np.all(np.isfinite(rhs)):
            raise OperatorError("右端项含有非有限值")
        if self.gradient.n != n or self.coupling.n != n:
            raise OperatorError("算子、梯度矩阵与耦合矩阵的分量数不一致", n=n)
        if self.coupling.grid != self.grid:
            raise OperatorError("耦合矩阵不在问题网格上")
        if self.gradient.matrices.shape[1:] != (self.grid.size, self.grid.dim, self.grid.dim):
            raise OperatorError("梯度矩阵与网格不匹配")
        for i, op in enumerate(self.operators):
            if operator_coefficient_shape(op) != (self.grid.dim, self.grid.size):
                raise OperatorError(f"第 {i + 1} 个算子的系数与网格不匹配", component=i)
        if self.two_parameter and self.gamma <= 0:
            raise OperatorError(f"双参数模式要求 γ > 0，收到 {self.gamma}")

    @property
    def n(self) -> int:
        return len(self.operators)

    def with_params(self, lam: Optional[float] = None, gamma: Optional[float] = None) -> "ProblemSpec":
        return replace(
            self,
            lam=self.lam if lam is None else float(lam),
            gamma=self.gamma if gamma is None else float(gamma),
        )

    def with_rhs(self, rhs: np.ndarray, gamma: Optional[float] = None) -> "ProblemSpec":
        return replace(self, rhs=np.asarray(rhs, dtype=float), gamma=self.gamma if gamma is None else gamma)

    def component_problem(self, i: int) -> "ProblemSpec":
        """第 i 个分量的标量问题（λ = 0 时系统解耦）"""
        return ProblemSpec(
            grid=self.grid,
            operators=(self.operators[i],),
            gradient=self.gradient.sub_spec([i]),
            coupling=self.coupling.sub_matrix([i]),
            rhs=self.rhs[i:i + 1],
            lam=self.lam,
            gamma=self.gamma,
            two_parameter=self.two_parameter,
            name=f"{self.name}[{i + 1}]",
        )

    def ellipticity(self) -> Tuple[float, float]:
        bounds = [op.ellipticity for op in self.operators]
        return min(b[0] for b in bounds), max(b[1] for b in bounds)

    def max_drift(self) -> float:
        return max(op.max_drift for op in self.operators)

    def rhs_field(self) -> VectorField:
        return VectorField(self.grid, self.rhs)


# ----------------------------------------------------------------------
# 残差与 Jacobian
# ----------------------------------------------------------------------
def evaluate_system(
    p: ProblemSpec,
    U: np.ndarray,
    lam: Optional[float] = None,
    policies: Optional[List[Policy]] = None,
    with_jacobian: bool = True,
) -> Tuple[np.ndarray, Optional[sparse.csc_matrix], List[Policy]]:
    """
    直接格式的残差与半光滑 Jacobian

    Args:
        p: 问题规格
        U: 形状 (n, size) 的场
        lam: 覆盖 p.lam
        policies: 每个分量冻结的策略
        with_jacobian: 是否组装 Jacobian

    Returns:
        (残差 (n, size), Jacobian 或 None, 实际使用的策略)
    """
    grid = p.grid
    lam = p.lam if lam is None else lam
    n = p.n
    interior = grid.interior_mask
    boundary = grid.boundary_mask
    coupled = p.coupling.apply(U)

    residual = np.empty_like(U)
    used: List[Policy] = []
    blocks: List[List[Any]] = [[None] * n for _ in range(n)]
    for i, op in enumerate(p.operators):
        d1, d2 = grid.derivatives(U[i])
        value, coef_d2, coef_d1, policy = operator_value_and_jacobian(
            op, d1, d2, None if policies is None else policies[i]
        )
        used.append(policy)
        r = -value - p.gradient.quadratic(i, d1) - lam * coupled[i] - p.gamma * p.rhs[i]
        residual[i] = np.where(interior, r, U[i])

        if with_jacobian:
            block = -operator_matrix(grid, coef_d2, coef_d1 + p.gradient.gradient(i, d1))
            block = block + sparse.diags(boundary.astype(float))
            blocks[i][i] = block
            for j in range(n):
                weights = -lam * p.coupling.entries[i, j] * interior
                if np.any(weights):
                    diag = sparse.diags(weights)
                    blocks[i][j] = diag if blocks[i][j] is None else blocks[i][j] + diag

    jacobian = sparse.bmat(blocks, format="csc") if with_jacobian else None
    return residual, jacobian, used


def residual(p: ProblemSpec, u: VectorField) -> VectorField:
    """
    离散残差 r_i = −F_i[u_i] − ⟨M_i Du_i, Du_i⟩ − λ(𝒞u)_i − γh_i（边界行为 u_i）
    """
    if u.grid != p.grid or u.n != p.n:
        raise OperatorError("场与问题的网格或分量数不一致")
    r, _, _ = evaluate_system(p, u.values, with_jacobian=False)
    return VectorField(p.grid, r)


def linearize(p: ProblemSpec, u: VectorField) -> sparse.csr_matrix:
    """残差在 u 处的线性化（冻结当前活跃系数），大小 n·size"""
    if u.grid != p.grid or u.n != p.n:
        raise OperatorError("场与问题的网格或分量数不一致")
    _, jacobian, _ = evaluate_system(p, u.values, with_jacobian=True)
    return jacobian.tocsr()
