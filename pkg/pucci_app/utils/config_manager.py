"""
问题文件管理模块
负责 YAML 问题文件的解析、校验、导出以及 ProblemSpec 的组装
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from src.core.coupling import CouplingMatrix
from src.core.exceptions import ConfigError, CouplingError, GridError, OperatorError
from src.core.grid import Grid, build_grid
from src.core.operators import BellmanSpec, GradientMatrixSpec, LinearSpec, ProblemSpec, PucciSpec
from src.core.utils.expression import Expression, parse_expression
from pucci_app.utils.path_utils import resolve_relative

# 设置日志
logger = logging.getLogger(__name__)

SECTIONS = ("name", "domain", "operators", "gradient", "coupling", "rhs", "run")
OPERATOR_KINDS = ("linear", "pucci_plus", "pucci_minus", "bellman_min", "bellman_max")
RUN_KEYS = {
    "lambda": float,
    "gamma": float,
    "two_parameter": bool,
    "formulation": str,
    "newton_tol": float,
    "max_newton_iters": int,
    "policy_freeze": bool,
    "lambda_grid": list,
    "gamma_grid": list,
    "seed_ladder": list,
    "continuation_step": float,
    "max_arclength": float,
    "output_dir": str,
}

Path_ = Tuple[Union[str, int], ...]


@dataclass(frozen=True)
class ValuesFile:
    """原始数组逃生口：每个节点一个值"""

    path: str
    values: np.ndarray = field(compare=False, repr=False)

    @property
    def text(self) -> Dict[str, str]:
        return {"values_file": self.path}

    def evaluate_on(self, points: np.ndarray, where: str = "") -> np.ndarray:
        if self.values.size != points.shape[0]:
            raise ConfigError(
                f"values_file 含 {self.values.size} 个值，网格有 {points.shape[0]} 个节点",
                key=where or None,
            )
        return self.values


Coefficient = Union[Expression, ValuesFile]


@dataclass(frozen=True)
class OperatorEntry:
    kind: str
    a: Tuple[Coefficient, ...] = ()
    b: Tuple[Coefficient, ...] = ()
    lam: float = 1.0
    Lam: float = 1.0
    drift_bound: float = 0.0
    family: Tuple[Tuple[Tuple[Coefficient, ...], Tuple[Coefficient, ...]], ...] = ()


@dataclass(frozen=True)
class GradientEntry:
    kind: str
    entries: Tuple[Coefficient, ...]


@dataclass(frozen=True)
class ConfigDocument:
    """已校验的问题文件"""

    name: str
    dim: int
    extents: Tuple[Tuple[float, float], ...]
    resolution: Tuple[int, ...]
    operators: Tuple[OperatorEntry, ...]
    gradient: Tuple[GradientEntry, ...]
    coupling: Tuple[Tuple[Coefficient, ...], ...]
    rhs: Tuple[Coefficient, ...]
    run: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return len(self.operators)

    def grid(self) -> Grid:
        return build_grid(self.dim, [list(e) for e in self.extents], list(self.resolution))

    def to_dict(self) -> Dict[str, Any]:
        """导出为可再次解析的字典"""

        def text(c: Coefficient):
            return c.text

        def axes(values: Tuple[Coefficient, ...]):
            return [text(v) for v in values]

        operators = []
        for op in self.operators:
            entry: Dict[str, Any] = {"kind": op.kind}
            if op.kind == "linear":
                entry.update({"a": axes(op.a), "b": axes(op.b)})
            elif op.kind.startswith("pucci"):
                entry.update({"lam": op.lam, "Lam": op.Lam, "b": axes(op.b), "drift_bound": op.drift_bound})
            else:
                entry["family"] = [{"a": axes(a), "b": axes(b)} for a, b in op.family]
            operators.append(entry)
        return {
            "name": self.name,
            "domain": {
                "dim": self.dim,
                "extents": [list(e) for e in self.extents],
                "resolution": list(self.resolution),
            },
            "operators": operators,
            "gradient": [
                {"mu": text(g.entries[0])} if g.kind == "mu" else {"diagonal": axes(g.entries)}
                for g in self.gradient
            ],
            "coupling": [[text(c) for c in row] for row in self.coupling],
            "rhs": [text(c) for c in self.rhs],
            "run": dict(self.run),
        }


# ----------------------------------------------------------------------
# 位置信息
# ----------------------------------------------------------------------
def _positions(node: yaml.Node, path: Path_ = (), table: Optional[Dict[Path_, Tuple[int, int, int]]] = None):
    """路径 -> (行, 列, 引号偏移)，行列从 1 开始"""
    table = {} if table is None else table
    quote = 1 if isinstance(node, yaml.ScalarNode) and node.style in ("'", '"') else 0
    table[path] = (node.start_mark.line + 1, node.start_mark.column + 1, quote)
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            _positions(value, path + (key.value,), table)
    elif isinstance(node, yaml.SequenceNode):
        for index, value in enumerate(node.value):
            _positions(value, path + (index,), table)
    return table


class _Context:
    def __init__(self, positions: Dict[Path_, Tuple[int, int, int]], base_dir: Optional[Path]):
        self.positions = positions
        self.base_dir = base_dir

    def where(self, path: Path_) -> Tuple[Optional[int], Optional[int], int]:
        while path and path not in self.positions:
            path = path[:-1]
        return self.positions.get(path, (None, None, 0))

    def error(self, message: str, path: Path_, witness: Any = None) -> ConfigError:
        line, column, _ = self.where(path)
        return ConfigError(message, line=line, column=column, key=_key(path), witness=witness)

    def coefficient(self, value: Any, path: Path_) -> Coefficient:
        if isinstance(value, dict):
            if set(value) != {"values_file"}:
                raise self.error("系数映射只支持 values_file", path)
            file_path = resolve_relative(str(value["values_file"]), self.base_dir)
            try:
                values = np.loadtxt(file_path, dtype=float, ndmin=1).ravel()
            except (OSError, ValueError) as e:
                raise self.error(f"无法读取 values_file: {e}", path)
            return ValuesFile(str(value["values_file"]), values)
        line, column, quote = self.where(path)
        offset = (column - 1 + quote) if column is not None else 0
        try:
            return parse_expression(value, line=line, column_offset=offset)
        except ConfigError as e:
            raise ConfigError(e.message, line=e.line, column=e.column, key=_key(path), witness=e.witness)


def _key(path: Path_) -> str:
    parts = []
    for p in path:
        parts.append(f"[{p + 1}]" if isinstance(p, int) else (f".{p}" if parts else str(p)))
    return "".join(parts)


# ----------------------------------------------------------------------
# 解析
# ----------------------------------------------------------------------
def _axes(ctx: _Context, value: Any, dim: int, path: Path_) -> Tuple[Coefficient, ...]:
    if isinstance(value, list):
        if len(value) != dim:
            raise ctx.error(f"需要 {dim} 个轴向系数，收到 {len(value)} 个", path)
        return tuple(ctx.coefficient(v, path + (k,)) for k, v in enumerate(value))
    coefficient = ctx.coefficient(value, path)
    return tuple(coefficient for _ in range(dim))


def _number(ctx: _Context, value: Any, path: Path_, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ctx.error(f"需要数值，收到 {value!r}", path)
    return kind(value)


def _parse_operator(ctx: _Context, entry: Any, dim: int, path: Path_) -> OperatorEntry:
    if not isinstance(entry, dict) or "kind" not in entry:
        raise ctx.error("算子条目必须是含 kind 的映射", path)
    kind = entry["kind"]
    if kind not in OPERATOR_KINDS:
        raise ctx.error(f"未知的算子类型 '{kind}'，可选 {OPERATOR_KINDS}", path + ("kind",))
    if kind == "linear":
        return OperatorEntry(
            kind,
            a=_axes(ctx, entry.get("a", 1), dim, path + ("a",)),
            b=_axes(ctx, entry.get("b", 0), dim, path + ("b",)),
        )
    if kind.startswith("pucci"):
        lam = _number(ctx, entry.get("lam", 1.0), path + ("lam",))
        Lam = _number(ctx, entry.get("Lam", 1.0), path + ("Lam",))
        if not (0 < lam <= Lam):
            raise ctx.error(f"椭圆常数需满足 0 < lam ≤ Lam，收到 ({lam}, {Lam})", path)
        return OperatorEntry(
            kind,
            b=_axes(ctx, entry.get("b", 0), dim, path + ("b",)),
            lam=lam,
            Lam=Lam,
            drift_bound=_number(ctx, entry.get("drift_bound", 0.0), path + ("drift_bound",)),
        )
    family = entry.get("family")
    if not isinstance(family, list) or not family:
        raise ctx.error("Bellman 算子需要非空的 family 列表", path + ("family",))
    members = []
    for k, member in enumerate(family):
        member_path = path + ("family", k)
        if not isinstance(member, dict):
            raise ctx.error("family 成员必须是映射", member_path)
        members.append((
            _axes(ctx, member.get("a", 1), dim, member_path + ("a",)),
            _axes(ctx, member.get("b", 0), dim, member_path + ("b",)),
        ))
    return OperatorEntry(kind, family=tuple(members))


def _parse_gradient(ctx: _Context, entry: Any, dim: int, path: Path_) -> GradientEntry:
    if isinstance(entry, dict) and len(entry) == 1 and "mu" in entry:
        return GradientEntry("mu", (ctx.coefficient(entry["mu"], path + ("mu",)),))
    if isinstance(entry, dict) and len(entry) == 1 and "diagonal" in entry:
        return GradientEntry("diagonal", _axes(ctx, entry["diagonal"], dim, path + ("diagonal",)))
    raise ctx.error("梯度条目必须是 {mu: 表达式} 或 {diagonal: [...]}", path)


def _component_list(ctx: _Context, value: Any, n: int, section: str) -> List[Any]:
    if not isinstance(value, list):
        if n == 1:
            return [value]
        raise ctx.error(f"{section} 必须是长度 {n} 的列表", (section,))
    if len(value) != n:
        raise ctx.error(f"{section} 需要 {n} 个条目，收到 {len(value)} 个", (section,))
    return value


def parse_config(text: str, base_dir: Optional[Union[str, Path]] = None) -> ConfigDocument:
    """
    解析并校验问题文件（YAML）

    Args:
        text: 文件内容
        base_dir: values_file 相对路径的基准目录

    Returns:
        ConfigDocument

    Raises:
        ConfigError: 语法错误（行列号）、语义错误（section.key）或不变量违背（见证节点）
    """
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        problem = getattr(e, "problem", None) or str(e)
        raise ConfigError(
            f"YAML 语法错误: {problem}",
            line=mark.line + 1 if mark else None,
            column=mark.column + 1 if mark else None,
        )
    if root is None or not isinstance(data, dict):
        raise ConfigError("问题文件必须是 YAML 映射")
    ctx = _Context(_positions(root), Path(base_dir) if base_dir is not None else None)

    for key in data:
        if key not in SECTIONS:
            raise ctx.error(f"未知的配置段 '{key}'", (key,))
    for key in ("domain", "operators", "coupling", "rhs"):
        if key not in data:
            raise ConfigError(f"缺少配置段 '{key}'", key=key)

    domain = data["domain"]
    if not isinstance(domain, dict):
        raise ctx.error("domain 必须是映射", ("domain",))
    dim = domain.get("dim")
    if dim not in (1, 2):
        raise ctx.error(f"dim 必须为 1 或 2，收到 {dim!r}", ("domain", "dim"))
    extents = domain.get("extents", [[0.0, 1.0]] * dim)
    if isinstance(extents, list) and len(extents) == 2 and all(isinstance(v, (int, float)) for v in extents):
        extents = [extents]
    resolution = domain.get("resolution")
    if isinstance(resolution, int) and not isinstance(resolution, bool):
        resolution = [resolution] * dim
    try:
        grid = build_grid(dim, extents, resolution)
    except (GridError, TypeError, ValueError) as e:
        raise ctx.error(f"网格定义无效: {e}", ("domain",))

    operators_raw = data["operators"]
    if not isinstance(operators_raw, list) or not operators_raw:
        raise ctx.error("operators 必须是非空列表", ("operators",))
    n = len(operators_raw)
    operators = tuple(_parse_operator(ctx, entry, dim, ("operators", i)) for i, entry in enumerate(operators_raw))

    gradient_raw = _component_list(ctx, data.get("gradient", [{"mu": 0}] * n), n, "gradient")
    gradient = tuple(_parse_gradient(ctx, entry, dim, ("gradient", i)) for i, entry in enumerate(gradient_raw))

    coupling_raw = data["coupling"]
    if n == 1 and not isinstance(coupling_raw, list):
        coupling_raw = [[coupling_raw]]
    if not isinstance(coupling_raw, list) or len(coupling_raw) != n:
        raise ctx.error(f"coupling 必须是 {n}×{n} 矩阵", ("coupling",))
    rows = []
    for i, row in enumerate(coupling_raw):
        if n == 1 and not isinstance(row, list):
            row = [row]
            rows.append((ctx.coefficient(row[0], ("coupling", i)),))
            continue
        if not isinstance(row, list) or len(row) != n:
            raise ctx.error(f"coupling 第 {i + 1} 行需要 {n} 个条目", ("coupling", i))
        rows.append(tuple(ctx.coefficient(v, ("coupling", i, j)) for j, v in enumerate(row)))

    rhs_raw = _component_list(ctx, data["rhs"], n, "rhs")
    rhs = tuple(ctx.coefficient(v, ("rhs", i) if isinstance(data["rhs"], list) else ("rhs",)) for i, v in enumerate(rhs_raw))

    run = data.get("run") or {}
    if not isinstance(run, dict):
        raise ctx.error("run 必须是映射", ("run",))
    for key, value in run.items():
        if key not in RUN_KEYS:
            raise ctx.error(f"未知的 run 参数 '{key}'", ("run", key))
        expected = RUN_KEYS[key]
        ok = isinstance(value, expected) if expected is not float else isinstance(value, (int, float)) and not isinstance(value, bool)
        if not ok:
            raise ctx.error(f"run.{key} 类型应为 {expected.__name__}", ("run", key))

    document = ConfigDocument(
        name=str(data.get("name", "problem")),
        dim=dim,
        extents=tuple(tuple(float(v) for v in e) for e in grid.extents),
        resolution=tuple(int(r) for r in grid.resolution),
        operators=operators,
        gradient=gradient,
        coupling=tuple(rows),
        rhs=rhs,
        run=dict(run),
    )
    # 预先构造一次，确保下游不变量（c_ij ≥ 0、a > 0 等）成立
    _assemble(document, grid, ctx)
    logger.info(f"✅ 问题文件解析成功: {document.name}（n={n}, {grid.describe()}）")
    return document


def load_config(path: Union[str, Path]) -> ConfigDocument:
    """从文件读取并解析问题定义"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        logger.error(f"❌ 问题文件读取失败: {path}")
        raise ConfigError(f"无法读取问题文件 {path}: {e}")
    return parse_config(text, base_dir=path.parent)


def export_config(document: ConfigDocument) -> str:
    """导出为 YAML 文本，可被 parse_config 重新解析"""
    return yaml.safe_dump(document.to_dict(), sort_keys=False, allow_unicode=True)


# ----------------------------------------------------------------------
# 组装 ProblemSpec
# ----------------------------------------------------------------------
def _values(ctx: Optional[_Context], coefficient: Coefficient, grid: Grid, path: Path_) -> np.ndarray:
    try:
        return coefficient.evaluate_on(grid.points, _key(path))
    except ConfigError as e:
        if ctx is None:
            raise
        line, column, _ = ctx.where(path)
        raise ConfigError(e.message, line=line, column=column, key=_key(path), witness=e.witness)


def _axis_values(ctx, coefficients, grid, path) -> np.ndarray:
    return np.stack([_values(ctx, c, grid, path + (k,)) for k, c in enumerate(coefficients)])


def _assemble(document: ConfigDocument, grid: Grid, ctx: Optional[_Context] = None, lam: float = 0.0, gamma: float = 1.0, two_parameter: bool = False) -> ProblemSpec:
    n = document.n
    operators = []
    for i, entry in enumerate(document.operators):
        path = ("operators", i)
        try:
            if entry.kind == "linear":
                operators.append(LinearSpec(_axis_values(ctx, entry.a, grid, path + ("a",)), _axis_values(ctx, entry.b, grid, path + ("b",))))
            elif entry.kind.startswith("pucci"):
                sign = 1 if entry.kind == "pucci_plus" else -1
                operators.append(PucciSpec(sign, entry.lam, entry.Lam, _axis_values(ctx, entry.b, grid, path + ("b",)), entry.drift_bound))
            else:
                family = tuple(
                    LinearSpec(_axis_values(ctx, a, grid, path + ("family", k, "a")), _axis_values(ctx, b, grid, path + ("family", k, "b")))
                    for k, (a, b) in enumerate(entry.family)
                )
                operators.append(BellmanSpec("min" if entry.kind == "bellman_min" else "max", family))
        except OperatorError as e:
            if ctx is None:
                raise ConfigError(e.message, key=_key(path), witness=e.context or None)
            raise ctx.error(e.message, path, witness=e.context or None)

    entries = np.zeros((n, grid.dim, grid.size))
    for i, g in enumerate(document.gradient):
        path = ("gradient", i, g.kind)
        if g.kind == "mu":
            entries[i] = _values(ctx, g.entries[0], grid, path)[None, :]
        else:
            entries[i] = _axis_values(ctx, g.entries, grid, path)
    gradient = GradientMatrixSpec.diagonal(grid, entries)

    c = np.zeros((n, n, grid.size))
    for i, row in enumerate(document.coupling):
        for j, coefficient in enumerate(row):
            path = ("coupling", i, j)
            c[i, j] = _values(ctx, coefficient, grid, path)
            if np.min(c[i, j]) < 0:
                node = int(np.argmin(c[i, j]))
                witness = {"node": node, "point": grid.points[node].tolist(), "value": float(c[i, j, node])}
                message = f"耦合系数 c_{i + 1}{j + 1} 为负"
                if ctx is None:
                    raise ConfigError(message, key=_key(path), witness=witness)
                raise ctx.error(message, path, witness=witness)
    try:
        coupling = CouplingMatrix(grid, c)
    except CouplingError as e:
        raise ConfigError(e.message, key="coupling", witness=e.context or None)

    rhs = np.stack([_values(ctx, h, grid, ("rhs", i)) for i, h in enumerate(document.rhs)])
    return ProblemSpec(
        grid=grid,
        operators=tuple(operators),
        gradient=gradient,
        coupling=coupling,
        rhs=rhs,
        lam=lam,
        gamma=gamma,
        two_parameter=two_parameter,
        name=document.name,
    )


def build_problem(document: ConfigDocument, lam: Optional[float] = None, gamma: Optional[float] = None) -> ProblemSpec:
    """
    在网格上求值所有系数并构造 ProblemSpec

    Args:
        document: 已解析的问题文件
        lam: 覆盖 run.lambda
        gamma: 覆盖 run.gamma
    """
    run = document.run
    lam = float(run.get("lambda", 0.0) if lam is None else lam)
    gamma = float(run.get("gamma", 1.0) if gamma is None else gamma)
    two_parameter = bool(run.get("two_parameter", False))
    try:
        return _assemble(document, document.grid(), None, lam, gamma, two_parameter)
    except OperatorError as e:
        raise ConfigError(f"问题组装失败: {e.message}", witness=e.context or None)
