#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
耦合矩阵分析模块 - 非零模式、块三角标准形与 (H3)/(H4) 检查

依赖图约定：c_ij 非零时连边 j -> i（第 i 个方程依赖第 j 个分量）。
强连通分量缩合后按拓扑序排列，使对角线以上的块恒为零。
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from src.core.exceptions import CouplingError
from src.core.grid import Grid, ScalarField, VectorField

# 设置日志
logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 1e-12


class CouplingMatrix:
    """零阶耦合矩阵 𝒞(x) = (c_ij(x))"""

    def __init__(self, grid: Grid, entries: np.ndarray, threshold: float = DEFAULT_THRESHOLD):
        """
        初始化耦合矩阵

        Args:
            grid: 共享网格
            entries: 形状 (n, n, size) 的系数数组
            threshold: 判定 c_ij ⪈ 0 的阈值 τ
        """
        entries = np.asarray(entries, dtype=float)
        if entries.ndim == 2:
            entries = np.broadcast_to(entries[:, :, None], entries.shape + (grid.size,))
        if entries.ndim != 3 or entries.shape[0] != entries.shape[1] or entries.shape[2] != grid.size:
            raise CouplingError(f"耦合系数形状应为 (n, n, {grid.size})，收到 {entries.shape}")
        if threshold < 0:
            raise CouplingError("阈值 τ 必须非负", threshold=threshold)
        if not np.all(np.isfinite(entries)):
            i, j, node = (int(v) for v in np.argwhere(~np.isfinite(entries))[0])
            raise CouplingError("耦合系数含有非有限值", entry=(i, j), node=node)
        negative = entries < -threshold
        if np.any(negative):
            i, j, node = (int(v) for v in np.argwhere(negative)[0])
            raise CouplingError(
                f"耦合系数 c_{i + 1}{j + 1} 为负: {entries[i, j, node]:.3e}",
                entry=(i, j),
                node=node,
                point=tuple(grid.points[node]),
            )
        entries = np.array(entries, copy=True)
        entries.setflags(write=False)
        self.grid = grid
        self.entries = entries
        self.threshold = float(threshold)

    @classmethod
    def constant(cls, grid: Grid, matrix: Sequence[Sequence[float]], threshold: float = DEFAULT_THRESHOLD) -> "CouplingMatrix":
        return cls(grid, np.asarray(matrix, dtype=float), threshold)

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])

    def entry(self, i: int, j: int) -> ScalarField:
        return ScalarField(self.grid, self.entries[i, j])

    def apply(self, values: np.ndarray) -> np.ndarray:
        """矩阵-向量场乘积 (𝒞u)_i = Σ_j c_ij u_j，逐节点"""
        values = values.values if isinstance(values, VectorField) else np.asarray(values)
        return np.einsum("ijk,jk->ik", self.entries, values)

    def row_sums(self) -> np.ndarray:
        """各行和 Σ_j c_ij(x)，形状 (n, size)"""
        return np.sum(self.entries, axis=1)

    def max_row_sum(self) -> float:
        interior = self.grid.interior_mask
        return float(np.max(self.row_sums()[:, interior])) if self.n else 0.0

    def sub_matrix(self, indices: Sequence[int]) -> "CouplingMatrix":
        idx = np.asarray(indices, dtype=int)
        return CouplingMatrix(self.grid, self.entries[np.ix_(idx, idx)], self.threshold)


@dataclass(frozen=True)
class BlockForm:
    """块三角标准形"""

    permutation: Tuple[int, ...]
    sizes: Tuple[int, ...]

    @property
    def offsets(self) -> Tuple[int, ...]:
        """累计偏移 s_0 = 0, s_k = t_1 + ... + t_k"""
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.sizes)]))

    @property
    def n_blocks(self) -> int:
        return len(self.sizes)

    @property
    def blocks(self) -> List[Tuple[int, ...]]:
        """每个块包含的原始分量编号（从 0 开始）"""
        offsets = self.offsets
        return [self.permutation[offsets[k]:offsets[k + 1]] for k in range(self.n_blocks)]

    def block_of(self, component: int) -> int:
        for k, members in enumerate(self.blocks):
            if component in members:
                return k
        raise CouplingError(f"分量 {component} 不在任何块中")

    def summary(self) -> List[Dict[str, Any]]:
        return [
            {"block": k + 1, "size": len(members), "components": [i + 1 for i in members]}
            for k, members in enumerate(self.blocks)
        ]


def _as_pattern(C: Union[CouplingMatrix, np.ndarray]) -> np.ndarray:
    if isinstance(C, CouplingMatrix):
        return nonzero_pattern(C)[0]
    pattern = np.asarray(C, dtype=bool)
    if pattern.ndim != 2 or pattern.shape[0] != pattern.shape[1]:
        raise CouplingError("非零模式必须是方阵")
    return pattern


def nonzero_pattern(C: CouplingMatrix) -> Tuple[np.ndarray, np.ndarray]:
    """
    非零模式：c_ij 在至少一个节点超过阈值 τ

    Returns:
        (pattern, counts)，counts[i, j] 为超过阈值的节点数（正测度的离散替代）
    """
    above = C.entries > C.threshold
    counts = np.sum(above, axis=2)
    return counts > 0, counts


def dependency_graph(C: Union[CouplingMatrix, np.ndarray]) -> nx.DiGraph:
    """c_ij 非零时连边 j -> i"""
    pattern = _as_pattern(C)
    graph = nx.DiGraph()
    graph.add_nodes_from(range(pattern.shape[0]))
    rows, cols = np.nonzero(pattern)
    graph.add_edges_from((int(j), int(i)) for i, j in zip(rows, cols) if i != j)
    return graph


def block_triangular_form(C: Union[CouplingMatrix, np.ndarray]) -> BlockForm:
    """
    计算块三角标准形

    强连通分量缩合后做字典序拓扑排序，平局按块内最小原始编号打破。

    Args:
        C: 耦合矩阵或布尔非零模式

    Returns:
        BlockForm
    """
    graph = dependency_graph(C)
    condensed = nx.condensation(graph)
    members = {node: sorted(data["members"]) for node, data in condensed.nodes(data=True)}
    order = nx.lexicographical_topological_sort(condensed, key=lambda node: members[node][0])

    permutation: List[int] = []
    sizes: List[int] = []
    for node in order:
        permutation.extend(members[node])
        sizes.append(len(members[node]))
    form = BlockForm(tuple(permutation), tuple(sizes))
    logger.debug(f"块三角形: 置换={form.permutation}, 块大小={form.sizes}")
    return form


def is_irreducible(pattern: np.ndarray) -> bool:
    """直接按二分定义判定不可约（仅用于小规模核对）"""
    pattern = np.asarray(pattern, dtype=bool)
    n = pattern.shape[0]
    if n == 1:
        return True
    for mask in range(1, 2**n - 1):
        first = [i for i in range(n) if mask >> i & 1]
        second = [j for j in range(n) if not mask >> j & 1]
        if not any(pattern[i, j] for i in first for j in second):
            return False
    return True


def check_H3(form: BlockForm, C: Union[CouplingMatrix, np.ndarray]) -> Dict[str, Any]:
    """
    (H3)：不存在对角系数为零的 1×1 块

    Returns:
        {"passed", "offending_blocks"}，块编号从 0 开始
    """
    pattern = _as_pattern(C)
    offending = [
        k for k, members in enumerate(form.blocks)
        if len(members) == 1 and not pattern[members[0], members[0]]
    ]
    if offending:
        logger.warning(f"⚠️ (H3) 不满足，零系数的 1×1 块: {[k + 1 for k in offending]}")
    return {"passed": not offending, "offending_blocks": offending}


def check_H4(C: CouplingMatrix, u0: VectorField, form: BlockForm) -> Dict[str, Any]:
    """
    (H4)：每个块内至少一个分量使 (𝒞u₀)_i ≢ 0

    Returns:
        {"passed", "witnesses": 每块的见证分量（无则 None）, "failed_blocks"}
    """
    if u0.grid != C.grid or u0.n != C.n:
        raise CouplingError("u₀ 与耦合矩阵的网格或分量数不一致")
    product = C.apply(u0.values)
    witnesses: List[Optional[int]] = []
    for members in form.blocks:
        witness = None
        for i in members:
            if np.max(np.abs(product[i])) > C.threshold:
                witness = int(i)
                break
        witnesses.append(witness)
    failed = [k for k, w in enumerate(witnesses) if w is None]
    return {"passed": not failed, "witnesses": witnesses, "failed_blocks": failed}


def is_fully_coupled(C: Union[CouplingMatrix, np.ndarray]) -> bool:
    """系统完全耦合当且仅当块三角形只有一个块"""
    return block_triangular_form(C).n_blocks == 1
