#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
网格模块 - 区间 / 矩形上的均匀结构化离散

节点包含边界，每个轴有 count+2 个节点，按 C 顺序展平编号。
网格函数统一存储为展平后的 numpy 数组。
"""

import itertools
import logging
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sparse

from src.core.exceptions import GridError, OperatorError

# 设置日志
logger = logging.getLogger(__name__)

ExtentsLike = Sequence[Sequence[float]]


class Grid:
    """均匀结构化网格类（构造后不可变）"""

    def __init__(self, dim: int, extents: ExtentsLike, resolution: Sequence[int]):
        """
        初始化网格

        Args:
            dim: 维数，1 或 2
            extents: 每个轴的 (lower, upper)
            resolution: 每个轴的内部节点数
        """
        if dim not in (1, 2):
            raise GridError(f"只支持 1 维或 2 维网格，收到 dim={dim}")
        if len(extents) != dim or len(resolution) != dim:
            raise GridError("extents/resolution 的轴数与 dim 不一致", dim=dim)

        bounds = []
        counts = []
        for axis, ((lower, upper), count) in enumerate(zip(extents, resolution)):
            lower, upper = float(lower), float(upper)
            if not (np.isfinite(lower) and np.isfinite(upper)) or upper <= lower:
                raise GridError(f"第{axis}轴区间无效: ({lower}, {upper})", axis=axis)
            if int(count) != count or count < 3:
                raise GridError(f"第{axis}轴内部节点数至少为 3，收到 {count}", axis=axis)
            bounds.append((lower, upper))
            counts.append(int(count))

        self.dim = dim
        self.extents: Tuple[Tuple[float, float], ...] = tuple(bounds)
        self.resolution: Tuple[int, ...] = tuple(counts)
        self.spacing: Tuple[float, ...] = tuple(
            (upper - lower) / (count + 1) for (lower, upper), count in zip(bounds, counts)
        )
        self.shape: Tuple[int, ...] = tuple(count + 2 for count in counts)
        self.size = int(np.prod(self.shape))

        self.axes: List[np.ndarray] = [
            np.linspace(lower, upper, count + 2) for (lower, upper), count in zip(bounds, counts)
        ]
        mesh = np.meshgrid(*self.axes, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=1)
        self.points.setflags(write=False)

        interior = np.zeros(self.shape, dtype=bool)
        interior[tuple(slice(1, -1) for _ in range(dim))] = True
        self.interior_mask = interior.ravel()
        self.interior_mask.setflags(write=False)
        self.boundary_mask = ~self.interior_mask
        self.boundary_mask.setflags(write=False)
        self.interior_index = np.flatnonzero(self.interior_mask)
        self.boundary_index = np.flatnonzero(self.boundary_mask)

        self._stencils: Dict[Tuple[str, int], sparse.csr_matrix] = {}

    # ------------------------------------------------------------------
    # 坐标与编号
    # ------------------------------------------------------------------
    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> Optional[np.ndarray]:
        return self.points[:, 1] if self.dim == 2 else None

    @property
    def interior_count(self) -> int:
        return int(self.interior_index.size)

    def strides(self) -> Tuple[int, ...]:
        """各轴在展平编号中的步长"""
        if self.dim == 1:
            return (1,)
        return (self.shape[1], 1)

    def index(self, multi: Sequence[int]) -> int:
        """多重下标 -> 展平编号"""
        return int(np.ravel_multi_index(tuple(multi), self.shape))

    def multi_index(self, flat: int) -> Tuple[int, ...]:
        """展平编号 -> 多重下标"""
        return tuple(int(i) for i in np.unravel_index(int(flat), self.shape))

    def is_interior(self, flat: int) -> bool:
        return bool(self.interior_mask[int(flat)])

    def neighbors(self, flat: int) -> List[int]:
        """8 邻域（1 维时为左右两点）内的全部节点"""
        base = self.multi_index(flat)
        result = []
        for offset in itertools.product((-1, 0, 1), repeat=self.dim):
            if not any(offset):
                continue
            candidate = tuple(b + o for b, o in zip(base, offset))
            if all(0 <= c < s for c, s in zip(candidate, self.shape)):
                result.append(self.index(candidate))
        return result

    def inward_neighbor(self, flat: int) -> Tuple[int, float]:
        """
        边界节点沿内法向的最近内部节点

        Returns:
            (内部节点编号, 两点距离)；角点取对角方向
        """
        base = self.multi_index(flat)
        step = []
        for i, s in zip(base, self.shape):
            if i == 0:
                step.append(1)
            elif i == s - 1:
                step.append(-1)
            else:
                step.append(0)
        if not any(step):
            raise GridError("内部节点没有内法向", node=flat)
        target = tuple(b + d for b, d in zip(base, step))
        distance = float(np.sqrt(sum((d * h) ** 2 for d, h in zip(step, self.spacing))))
        return self.index(target), distance

    # ------------------------------------------------------------------
    # 差分模板
    # ------------------------------------------------------------------
    def _stencil(self, kind: str, axis: int) -> sparse.csr_matrix:
        key = (kind, axis)
        if key not in self._stencils:
            h = self.spacing[axis]
            stride = self.strides()[axis]
            rows = self.interior_index
            if kind == "d1":
                weights = (-1.0 / (2.0 * h), 1.0 / (2.0 * h))
                offsets = (-stride, stride)
            else:
                weights = (1.0 / h**2, -2.0 / h**2, 1.0 / h**2)
                offsets = (-stride, 0, stride)
            row_idx = np.concatenate([rows] * len(offsets))
            col_idx = np.concatenate([rows + o for o in offsets])
            data = np.concatenate([np.full(rows.size, w) for w in weights])
            matrix = sparse.csr_matrix((data, (row_idx, col_idx)), shape=(self.size, self.size))
            self._stencils[key] = matrix
        return self._stencils[key]

    def first_difference(self, axis: int) -> sparse.csr_matrix:
        """中心一阶差分矩阵（边界行为零）"""
        return self._stencil("d1", axis)

    def second_difference(self, axis: int) -> sparse.csr_matrix:
        """中心二阶差分矩阵（边界行为零）"""
        return self._stencil("d2", axis)

    def derivatives(self, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        所有节点上的离散导数

        Returns:
            (d1, d2)，形状均为 (dim, size)，边界列为零
        """
        d1 = np.stack([self.first_difference(k) @ values for k in range(self.dim)])
        d2 = np.stack([self.second_difference(k) @ values for k in range(self.dim)])
        return d1, d2

    def describe(self) -> str:
        ranges = " x ".join(f"({lo:g},{hi:g})" for lo, hi in self.extents)
        counts = "x".join(str(c) for c in self.resolution)
        return f"{self.dim}D {ranges}, 内部节点 {counts}"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.extents == other.extents
            and self.resolution == other.resolution
        )

    def __hash__(self) -> int:
        return hash((self.dim, self.extents, self.resolution))

    def __repr__(self) -> str:
        return f"Grid({self.describe()})"


class ScalarField:
    """标量网格函数"""

    def __init__(self, grid: Grid, values: Union[np.ndarray, Sequence[float], float]):
        try:
            values = np.broadcast_to(np.asarray(values, dtype=float), (grid.size,)).copy()
        except ValueError as e:
            raise GridError(f"网格函数长度应为 {grid.size}: {e}") from e
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise GridError("网格函数含有非有限值", node=bad, point=tuple(grid.points[bad]))
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def max(self) -> float:
        return float(np.max(self.values))

    def min(self) -> float:
        return float(np.min(self.values))

    def interior_values(self) -> np.ndarray:
        return self.values[self.grid.interior_mask]

    def __repr__(self) -> str:
        return f"ScalarField(min={self.min():.4g}, max={self.max():.4g})"


class VectorField:
    """n 分量网格函数，所有分量共享同一网格"""

    def __init__(self, grid: Grid, values: Union[np.ndarray, Sequence[np.ndarray]]):
        array = np.asarray(values, dtype=float)
        if array.ndim == 1:
            array = array[None, :]
        if array.ndim != 2 or array.shape[0] < 1 or array.shape[1] != grid.size:
            raise GridError(
                f"向量场形状应为 (n, {grid.size})，收到 {array.shape}"
            )
        if not np.all(np.isfinite(array)):
            comp, node = (int(i) for i in np.argwhere(~np.isfinite(array))[0])
            raise GridError("向量场含有非有限值", component=comp, node=node)
        array = array.copy()
        array.setflags(write=False)
        self.grid = grid
        self.values = array

    @classmethod
    def from_components(cls, components: Sequence[ScalarField]) -> "VectorField":
        if not components:
            raise GridError("向量场至少需要一个分量")
        grid = components[0].grid
        for comp in components[1:]:
            if comp.grid != grid:
                raise GridError("向量场的分量必须在同一网格上")
        return cls(grid, np.stack([c.values for c in components]))

    @classmethod
    def zeros(cls, grid: Grid, n: int) -> "VectorField":
        return cls(grid, np.zeros((n, grid.size)))

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.values[i])

    @property
    def components(self) -> List[ScalarField]:
        return [self.component(i) for i in range(self.n)]

    def sup_norms(self) -> np.ndarray:
        return np.max(np.abs(self.values), axis=1)

    def mins(self) -> np.ndarray:
        return np.min(self.values, axis=1)

    def maxs(self) -> np.ndarray:
        return np.max(self.values, axis=1)

    def negative_part_norms(self) -> np.ndarray:
        """各分量 ‖u_i⁻‖∞"""
        return np.max(np.maximum(-self.values, 0.0), axis=1)

    def leq(self, other: "VectorField", tol: float = 0.0) -> bool:
        return bool(np.all(self.values <= other.values + tol))

    def distance(self, other: "VectorField") -> float:
        return float(np.max(np.abs(self.values - other.values)))

    def __repr__(self) -> str:
        return f"VectorField(n={self.n}, sup={self.sup_norms().round(6).tolist()})"


def build_grid(
    dim: int,
    extents: ExtentsLike,
    resolution: Union[int, Sequence[int]],
) -> Grid:
    """
    构造均匀网格

    Args:
        dim: 维数
        extents: 每个轴的 (lower, upper)
        resolution: 每个轴的内部节点数（整数时各轴相同）

    Returns:
        Grid 对象
    """
    if isinstance(resolution, (int, np.integer)):
        resolution = [int(resolution)] * dim
    if extents and not isinstance(extents[0], (list, tuple, np.ndarray)):
        extents = [extents]
    grid = Grid(dim, extents, list(resolution))
    logger.debug(f"构造网格: {grid.describe()}")
    return grid


def boundary_distance(grid: Grid) -> ScalarField:
    """到矩形边界的精确欧氏距离，边界节点恰为零"""
    distances = []
    for axis, (lower, upper) in enumerate(grid.extents):
        coords = grid.points[:, axis]
        distances.append(np.minimum(coords - lower, upper - coords))
    d = np.min(np.stack(distances), axis=0)
    d[grid.boundary_mask] = 0.0
    return ScalarField(grid, d)


def inf_quotient(u: Union[ScalarField, np.ndarray], d: ScalarField) -> float:
    """
    边界商 inf u/d（仅内部节点）

    Args:
        u: 网格函数
        d: boundary_distance 给出的距离场

    Returns:
        内部节点上 u/d 的最小值
    """
    grid = d.grid
    values = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
    if isinstance(u, ScalarField) and u.grid != grid:
        raise GridError("u 与 d 不在同一网格上")
    if values.shape != (grid.size,):
        raise GridError("u 的长度与网格节点数不一致")
    mask = grid.interior_mask
    if not np.any(mask):
        raise GridError("网格没有内部节点")
    return float(np.min(values[mask] / d.values[mask]))


def check_node_interior(grid: Grid, node: int) -> None:
    """内部节点检查，离散导数只在内部节点定义"""
    if node < 0 or node >= grid.size:
        raise OperatorError(f"节点编号越界: {node}", node=node)
    if not grid.is_interior(node):
        raise OperatorError("边界节点上没有中心差分", node=node)
