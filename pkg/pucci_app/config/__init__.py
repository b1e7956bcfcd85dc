# 配置模块初始化文件
