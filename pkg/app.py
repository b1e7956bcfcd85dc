"""
Pucci 系统实验台 - 主入口

启动方式: python app.py <子命令> <问题文件> [选项]
示例:     python app.py solve config/lap.yml --lambda 0.1
"""

import os
import sys

# 确保项目根目录在导入路径中
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from pucci_app.cli import main  # noqa: E402

if __name__ == "__main__":
    sys.exit(main())
