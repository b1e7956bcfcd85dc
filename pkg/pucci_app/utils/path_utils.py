"""
路径工具模块
问题文件中的相对路径按文件所在目录解析
"""

from pathlib import Path
from typing import Optional, Union


def resolve_relative(path: Union[str, Path], base: Optional[Union[str, Path]] = None) -> Path:
    """相对路径按问题文件所在目录解析，base 为空时按当前工作目录

    Args:
        path: 原始路径
        base: 问题文件所在目录

    Returns:
        Path: 解析后的路径
    """
    path = Path(path)
    if path.is_absolute() or base is None:
        return path
    return Path(base) / path


def ensure_path_exists(path: Path) -> bool:
    """确保路径存在，如果不存在则创建"""
    try:
        path.mkdir(parents=True, exist_ok=True)
        return True
    except OSError:
        return False
