#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
命令行入口 - 子命令分发与输出

退出码：0 成功，2 检测到假设违背，3 求解不收敛，4 配置或用法错误
"""

import argparse
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from pucci_app.config.config import get_config
from pucci_app.config.solver_config import SolverConfig
from pucci_app.utils.config_manager import ConfigDocument, build_problem, load_config
from pucci_app.utils.path_utils import ensure_path_exists, resolve_relative
from pucci_app.utils.result_formatter import format_report, write_solution, write_table
from src.core.continuation import (
    arclength_continue,
    export_branch,
    locate_fold,
    natural_continue,
    two_parameter_scan,
)
from src.core.coupling import nonzero_pattern
from src.core.eigen import eigenpair_table, principal_eigenpair
from src.core.exceptions import (
    ConfigError,
    ContinuationError,
    ConvergenceError,
    EigenError,
    PucciLabError,
    VerificationError,
)
from src.core.grid import ScalarField, VectorField
from src.core.solver import newton_solve, solve_P0
from src.core.verify import check_hypotheses, estimate_constants, nonexistence_search_Pk

# 设置日志
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_HYPOTHESIS = 2
EXIT_CONVERGENCE = 3
EXIT_CONFIG = 4


class UsageError(ConfigError):
    """命令行用法错误"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage()
        raise UsageError(message)


def _value_grid(text: str) -> List[float]:
    """'a:b:n' 为等距网格，否则为逗号分隔列表"""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            return list(np.linspace(float(start), float(stop), int(count)))
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"无法解析数值网格 '{text}'")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pucci-lab", description="二次梯度增长的全非线性椭圆系统：有限差分求解与延拓")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("coupling", help="耦合结构与 (H3)/(H4) 检查")
    p.add_argument("config")

    p = sub.add_parser("solve", help="在给定 λ 处求解")
    p.add_argument("config")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--gamma", type=float)
    p.add_argument("--formulation", choices=("direct", "exponential"))
    p.add_argument("--output")

    p = sub.add_parser("eigen", help="主特征值")
    p.add_argument("config")
    p.add_argument("--component", type=int, default=1)
    p.add_argument("--sign", choices=("+", "-"), default="+")
    p.add_argument("--output")

    p = sub.add_parser("continue", help="分支延拓")
    p.add_argument("config")
    p.add_argument("--from", dest="lam_from", type=float, required=True)
    p.add_argument("--to", dest="lam_to", type=float, required=True)
    p.add_argument("--arclength", action="store_true")
    p.add_argument("--gamma", type=float)
    p.add_argument("--formulation", choices=("direct", "exponential"))
    p.add_argument("--output")

    p = sub.add_parser("scan", help="(λ,γ) 双参数扫描")
    p.add_argument("config")
    p.add_argument("--lambda-grid", dest="lambda_grid")
    p.add_argument("--gamma-grid", dest="gamma_grid")
    p.add_argument("--output")

    p = sub.add_parser("verify", help="假设检查与不存在性搜索")
    p.add_argument("config")
    p.add_argument("--search-k", dest="search_k", type=int)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--formulation", choices=("direct", "exponential"))
    return parser


# ----------------------------------------------------------------------
# 辅助
# ----------------------------------------------------------------------
def _document(path: str) -> ConfigDocument:
    return load_config(path)


def _output_dir(document: ConfigDocument, config_path: str) -> Path:
    configured = document.run.get("output_dir")
    directory = resolve_relative(configured, Path(config_path).parent) if configured else Path(get_config()["output_dir"])
    if not ensure_path_exists(directory):
        raise ConfigError(f"无法创建输出目录 {directory}", key="run.output_dir")
    return directory


def _solve_options(document: ConfigDocument, formulation: Optional[str] = None):
    run = document.run
    return SolverConfig.solve_options(
        newton_tol=run.get("newton_tol"),
        max_newton_iters=run.get("max_newton_iters"),
        policy_freeze=run.get("policy_freeze"),
        formulation=formulation or run.get("formulation"),
    )


def _continuation_options(document: ConfigDocument, solve):
    return SolverConfig.continuation_options(solve=solve, step=document.run.get("continuation_step"))


def _check_solver_config() -> None:
    """启动时校验 SolverConfig（含环境变量覆盖）"""
    failed = [name for name, ok in SolverConfig.validate_config().items() if not ok]
    if failed:
        raise ConfigError(f"求解器配置校验失败: {', '.join(failed)}")


# ----------------------------------------------------------------------
# 子命令
# ----------------------------------------------------------------------
def cmd_coupling(args) -> int:
    document = _document(args.config)
    p = build_problem(document)
    pattern, _ = nonzero_pattern(p.coupling)
    report = check_hypotheses(p, _solve_options(document))
    items = [
        ("components", p.n),
        ("pattern", pattern.astype(int).tolist()),
        ("blocks", [s["components"] for s in report.block_summary]),
        ("fully_coupled", report.fully_coupled),
        ("H3", report.H3["passed"]),
    ]
    if not report.H3["passed"]:
        items.append(("H3_offending_blocks", [k + 1 for k in report.H3["offending_blocks"]]))
    if report.H0["passed"]:
        items.append(("H4", report.H4["passed"]))
        if report.H4_vacuous:
            items.append(("H4_vacuous", True))
    else:
        items.append(("H0", False))
    print(format_report(f"耦合结构: {document.name}", items))
    structural = [v for v in report.violations if v in ("H3", "H4")]
    if structural:
        return EXIT_HYPOTHESIS
    return EXIT_OK if report.H0["passed"] else EXIT_CONVERGENCE


def cmd_solve(args) -> int:
    document = _document(args.config)
    p = build_problem(document, lam=args.lam, gamma=args.gamma)
    opts = _solve_options(document, args.formulation)
    u0 = solve_P0(p, opts)
    initial = u0.u if u0.converged else VectorField.zeros(p.grid, p.n)
    solution = newton_solve(p, initial, opts)
    print(format_report(f"求解: {document.name}", [
        ("lambda", p.lam),
        ("gamma", p.gamma),
        ("converged", solution.converged),
        ("iterations", solution.iterations),
        ("residual", solution.residual_norm),
        ("sup_norms", solution.sup_norms.tolist()),
        ("singularity_indicator", solution.jacobian_singularity_indicator),
    ]))
    if not solution.converged:
        return EXIT_CONVERGENCE
    destination = args.output or _output_dir(document, args.config) / f"{document.name}_lambda{p.lam:g}.txt"
    write_solution(solution.u, destination)
    return EXIT_OK


def cmd_eigen(args) -> int:
    document = _document(args.config)
    p = build_problem(document)
    if not 1 <= args.component <= p.n:
        raise UsageError(f"--component 必须在 1..{p.n} 之内")
    i = args.component - 1
    sign = 1 if args.sign == "+" else -1
    weight = ScalarField(p.grid, p.coupling.row_sums()[i])
    result = principal_eigenpair(
        p.operators[i], weight, sign,
        tol=SolverConfig.EIGEN_TOL, max_iters=SolverConfig.EIGEN_MAX_ITERS,
        opts=_solve_options(document),
    )
    print(format_report(f"主特征值: {document.name}", [
        ("component", args.component),
        ("sign", args.sign),
        ("lambda1", result.lambda1),
        ("iterations", result.iterations),
        ("residual", result.residual),
    ]))
    if args.output:
        write_table(eigenpair_table(result, p.grid), args.output)
    return EXIT_OK


def cmd_continue(args) -> int:
    document = _document(args.config)
    p = build_problem(document, gamma=args.gamma)
    opts = _solve_options(document, args.formulation)
    options = _continuation_options(document, opts)
    u0 = solve_P0(p, opts)
    if not u0.converged:
        raise ConvergenceError("(P₀) 不收敛，无法开始延拓")
    start = newton_solve(p.with_params(lam=args.lam_from), u0.u, opts)
    if not start.converged:
        raise ContinuationError(f"λ={args.lam_from} 处起点不收敛")

    if args.arclength:
        low, high = sorted((args.lam_from, args.lam_to))
        branch = arclength_continue(
            p, start, 1 if args.lam_to >= args.lam_from else -1,
            max_arclength=float(document.run.get("max_arclength", 10.0)),
            options=options, lam_bounds=(min(low, 0.0), high), branch_id=document.name,
        )
        folds = [locate_fold(p, branch, fold, options) for fold in branch.folds]
    else:
        branch = natural_continue(p, args.lam_from, args.lam_to, start, options, branch_id=document.name)
        folds = branch.folds

    items = [
        ("points", len(branch)),
        ("stop_reason", branch.stop_reason),
        ("lambda_range", [float(branch.lambdas.min()), float(branch.lambdas.max())]),
    ]
    for k, fold in enumerate(folds, start=1):
        items.append((f"fold_{k}", f"λ̄ ≈ {fold['lambda_bar']:.10g} 括号 {fold['bracket']} 宽度 {fold['width']:.2e}"))
    if branch.stop_reason == "fold_suspected":
        items.append(("fold_suspected_at", float(branch.lambdas[-1])))
    print(format_report(f"延拓: {document.name}", items))
    destination = args.output or _output_dir(document, args.config) / f"{document.name}_branch.csv"
    export_branch(branch, destination)
    return EXIT_OK


def cmd_scan(args) -> int:
    document = _document(args.config)
    run = document.run
    lam_grid = _value_grid(args.lambda_grid) if args.lambda_grid else [float(v) for v in run.get("lambda_grid", [])]
    gamma_grid = _value_grid(args.gamma_grid) if args.gamma_grid else [float(v) for v in run.get("gamma_grid", [])]
    if not lam_grid or not gamma_grid:
        raise UsageError("scan 需要 --lambda-grid 与 --gamma-grid（或 run.lambda_grid / run.gamma_grid）")
    p = build_problem(document)
    opts = _solve_options(document)
    ladder = run.get("seed_ladder")
    kwargs = {"seed_ladder": tuple(float(v) for v in ladder)} if ladder else {}
    result = two_parameter_scan(
        p, lam_grid, gamma_grid, _continuation_options(document, opts),
        progress=get_config()["progress"], **kwargs,
    )
    directory = Path(args.output) if args.output else _output_dir(document, args.config)
    write_table(result["cells"], directory / f"{document.name}_scan_cells.csv")
    write_table(result["curves"], directory / f"{document.name}_scan_curves.csv")
    print(format_report(f"双参数扫描: {document.name}", [
        ("cells", len(result["cells"])),
        ("curves", result["curves"].to_dict(orient="records")),
    ]))
    return EXIT_OK


def cmd_verify(args) -> int:
    document = _document(args.config)
    lam = args.lam if args.lam is not None else document.run.get("lambda", 0.0)
    p = build_problem(document, lam=lam)
    opts = _solve_options(document, args.formulation)
    report = check_hypotheses(p, opts)
    items = [
        ("M", report.M_bounds["passed"]),
        ("H0", report.H0["passed"]),
        ("H3", report.H3["passed"]),
        ("H4", report.H4["passed"] or report.H4_vacuous),
        ("fully_coupled", report.fully_coupled),
        ("blocks", [s["components"] for s in report.block_summary]),
    ]
    if report.M_bounds["witness"]:
        items.append(("M_witness", report.M_bounds["witness"]))
    if args.search_k is not None and report.passed:
        options = _continuation_options(document, opts)
        branches = []
        if lam > 0:
            branches.append(natural_continue(p, 0.0, lam, report.u0, options, branch_id="lower"))
        constants = estimate_constants(p, branches, report.u0.u, opts)
        search = nonexistence_search_Pk(
            p, args.search_k, constants, report.u0.u, ladder=SolverConfig.SEED_LADDER, opts=opts
        )
        items.extend([
            ("constants", constants.summary()),
            (f"search_k{args.search_k}", search["status"]),
        ])
        print(format_report(f"验证: {document.name}", items))
        if search["status"] == "counterexample-found":
            raise VerificationError("(P_λ,k) 搜索找到反例")
        return EXIT_OK
    print(format_report(f"验证: {document.name}", items))
    if not report.passed:
        return EXIT_CONVERGENCE if report.violations == ["H0"] else EXIT_HYPOTHESIS
    return EXIT_OK


COMMANDS = {
    "coupling": cmd_coupling,
    "solve": cmd_solve,
    "eigen": cmd_eigen,
    "continue": cmd_continue,
    "scan": cmd_scan,
    "verify": cmd_verify,
}


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """
    解析参数并执行子命令

    Returns:
        退出码
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return EXIT_CONFIG
        _check_solver_config()
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"❌ 配置错误: {e}")
        print(f"❌ 配置错误: {e}")
        return EXIT_CONFIG
    except (ConvergenceError, EigenError, ContinuationError) as e:
        logger.error(f"❌ 求解失败: {e}")
        print(f"❌ 求解失败: {e}")
        return EXIT_CONVERGENCE
    except VerificationError as e:
        logger.error(f"❌ 验证失败: {e}")
        print(f"❌ 验证失败: {e}")
        return EXIT_HYPOTHESIS
    except PucciLabError as e:
        logger.error(f"❌ 运行失败: {e}")
        print(f"❌ 运行失败: {e}")
        return EXIT_CONVERGENCE


def main() -> int:
    from pucci_app.config.config import setup_logging

    setup_logging()
    return run_command()


if __name__ == "__main__":
    raise SystemExit(main())
