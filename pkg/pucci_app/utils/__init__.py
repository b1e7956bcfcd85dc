"""
命令行层工具：问题文件解析、路径解析与结果输出。
"""
