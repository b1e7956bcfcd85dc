#!/usr/bin/env python3
"""
结果格式化工具
将求解结果转换为表格与带头部的结构化文本
"""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Tuple, Union

import numpy as np
import pandas as pd

from src.core.grid import Grid, VectorField

# 设置日志
logger = logging.getLogger(__name__)

HEADER_PREFIX = "# "


def solution_table(u: VectorField) -> pd.DataFrame:
    """
    解场转换为逐节点表格

    Returns:
        pandas DataFrame with columns: index, x[, y], u_1..u_n
    """
    grid = u.grid
    data: Dict[str, Any] = {"index": np.arange(grid.size), "x": grid.x}
    if grid.dim == 2:
        data["y"] = grid.y
    for i in range(u.n):
        data[f"u_{i + 1}"] = u.values[i]
    return pd.DataFrame(data)


def _header(grid: Grid, n: int) -> str:
    extents = [list(e) for e in grid.extents]
    lines = [
        f"dim: {grid.dim}",
        f"extents: {extents}",
        f"resolution: {list(grid.resolution)}",
        f"n: {n}",
    ]
    return "".join(f"{HEADER_PREFIX}{line}\n" for line in lines)


def write_solution(u: VectorField, destination: Union[str, Path]) -> Path:
    """
    写出解场：头部块（dim, extents, resolution, n）后接逐节点 CSV 行

    Args:
        u: 解场
        destination: 输出文件

    Returns:
        写出的路径
    """
    path = Path(destination)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(_header(u.grid, u.n))
        solution_table(u).to_csv(f, index=False)
    logger.info(f"解已写出: {path}")
    return path


def read_solution(source: Union[str, Path]) -> Tuple[Dict[str, str], pd.DataFrame]:
    """读取 write_solution 的输出，返回 (头部字典, 表格)"""
    header: Dict[str, str] = {}
    with open(source, "r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith(HEADER_PREFIX):
                break
            key, _, value = line[len(HEADER_PREFIX):].partition(":")
            header[key.strip()] = value.strip()
    table = pd.read_csv(source, comment="#")
    return header, table


def write_table(table: pd.DataFrame, destination: Union[str, Path]) -> Path:
    """写出 CSV 表格"""
    path = Path(destination)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False)
    logger.info(f"表格已写出: {path}")
    return path


def get_status_indicator(passed: bool) -> str:
    """根据结论返回指示符"""
    return "✅" if passed else "❌"


def format_report(title: str, items: Iterable[Tuple[str, Any]]) -> str:
    """
    渲染结构化文本报告

    Args:
        title: 标题
        items: (名称, 值) 序列

    Returns:
        多行字符串
    """
    lines = [f"=== {title} ==="]
    for name, value in items:
        if isinstance(value, bool):
            value = get_status_indicator(value)
        elif isinstance(value, float):
            value = f"{value:.10g}"
        lines.append(f"{name}: {value}")
    return "\n".join(lines)
