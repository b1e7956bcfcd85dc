"""
pucci-lab 命令行层：配置、问题文件解析与子命令分发。
"""
