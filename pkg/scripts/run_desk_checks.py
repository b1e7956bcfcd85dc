#!/usr/bin/env python3
"""
示例问题桌面检查脚本
逐个加载 config/ 下的问题文件，做假设检查并在 run.lambda 处求解
"""

import os
import sys
from pathlib import Path

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pucci_app.config.config import get_config, setup_logging  # noqa: E402
from pucci_app.config.solver_config import SolverConfig  # noqa: E402
from pucci_app.utils.config_manager import build_problem, load_config  # noqa: E402
from src.core.exceptions import PucciLabError  # noqa: E402
from src.core.solver import newton_solve  # noqa: E402
from src.core.verify import check_hypotheses  # noqa: E402


def run_desk_checks() -> int:
    """检查所有示例问题，返回失败个数"""
    print("🧪 开始桌面检查...")
    config_dir = Path(get_config()["problem_config_dir"])
    failures = 0

    for path in sorted(config_dir.glob("*.yml")):
        try:
            document = load_config(path)
            p = build_problem(document)
            opts = SolverConfig.solve_options(formulation=document.run.get("formulation"))
            report = check_hypotheses(p, opts)
            if not report.H0["passed"]:
                print(f"❌ {path.name}: (P₀) 不收敛")
                failures += 1
                continue
            solution = newton_solve(p, report.u0.u, opts)
        except PucciLabError as e:
            print(f"❌ {path.name}: {e}")
            failures += 1
            continue

        violations = ", ".join(report.violations) or "无"
        status = "✅" if solution.converged else "⚠️"
        print(
            f"{status} {path.name}: n={p.n}, λ={p.lam:g}, 假设违背: {violations}, "
            f"sup={max(solution.sup_norms):.6g}, 残差={solution.residual_norm:.2e}"
        )
        if not solution.converged:
            failures += 1

    print(f"🎯 桌面检查完成！失败 {failures} 项")
    return failures


if __name__ == "__main__":
    setup_logging()
    sys.exit(1 if run_desk_checks() else 0)
