import os
from dotenv import load_dotenv
import logging
from pathlib import Path

# 加载环境变量
load_dotenv()

# 项目根目录
ROOT_DIR = Path(__file__).parent.parent.parent

# 示例问题文件目录
PROBLEM_CONFIG_DIR = os.path.join(ROOT_DIR, "config")

# 默认输出目录
DEFAULT_OUTPUT_DIR = os.path.join(ROOT_DIR, "data", "output")

# 日志级别：DEBUG=true 时强制 DEBUG
DEBUG_MODE = os.getenv("DEBUG", "False").lower() == "true"
LOG_LEVEL = "DEBUG" if DEBUG_MODE else os.getenv("PUCCI_LOG_LEVEL", "INFO").upper()

# 详细日志设置
log_file_path = os.getenv("PUCCI_LOG_FILE", os.path.join(ROOT_DIR, 'pucci_lab.log'))


def setup_logging(level: str = LOG_LEVEL, log_file: str = log_file_path) -> logging.Logger:
    """配置根日志：文件 + 控制台"""
    # 清理旧的处理器，避免重复添加
    root_logger = logging.getLogger()
    if root_logger.handlers:
        for handler in list(root_logger.handlers):
            root_logger.removeHandler(handler)

    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_file, mode='w', encoding='utf-8'), # 写入文件
            logging.StreamHandler() # 输出到控制台
        ]
    )
    logger = logging.getLogger(__name__)
    logger.info(f"日志将记录到: {log_file}")
    return logger


def get_config():
    """获取运行环境配置"""
    return {
        "root_dir": str(ROOT_DIR),
        "problem_config_dir": PROBLEM_CONFIG_DIR,
        "output_dir": os.getenv("PUCCI_OUTPUT_DIR", DEFAULT_OUTPUT_DIR),
        "log_file": log_file_path,
        "log_level": LOG_LEVEL,
        "debug_mode": DEBUG_MODE,
        "progress": os.getenv("PUCCI_PROGRESS", "true").lower() == "true",
    }
