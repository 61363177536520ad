"""
异常定义模块
所有模块抛出的具名异常都继承自 WaveletonError

两大分支:
    ValidationError   前置条件不满足 (命令行退出码 1)
    ComputationError  计算过程失败   (命令行退出码 2)
"""


class WaveletonError(Exception):
    """工具包异常基类"""
    exit_code = 2


class ValidationError(WaveletonError):
    """输入/参数校验失败"""
    exit_code = 1


class ComputationError(WaveletonError):
    """数值计算失败"""
    exit_code = 2


# ==================== 小波与多分辨率 ====================

class UnsupportedOrder(ValidationError):
    """滤波器族不支持该阶数"""


class BadLength(ValidationError):
    """信号长度不是 2 的幂或短于滤波器支撑"""


class TooManyLevels(ValidationError):
    """分解层数超过信号允许的最大层数"""


class ShapeMismatch(ValidationError):
    """数组形状与分解/算子不一致"""


class LevelOutOfRange(ValidationError):
    """请求的层号不在分解中"""


class BadParams(ValidationError):
    """演示信号参数非法"""


# ==================== 算子 ====================

class InsufficientRegularity(ValidationError):
    """滤波器正则性不足以计算该阶导数的连接系数"""


class SingularSystem(ComputationError):
    """两尺度线性方程组秩亏超过一维"""


# ==================== 二维与相空间 ====================

class BadShape(ValidationError):
    """二维网格尺寸不是 2 的幂或层数不合法"""


class IndexOutOfRange(ValidationError):
    """基函数的层号/平移超出网格"""


class NotNormalized(ValidationError):
    """波函数未归一化"""


class CflViolation(ValidationError):
    """显式积分步长违反 CFL 条件"""


class SolverDivergence(ComputationError):
    """隐式求解器未收敛到要求残差"""


class UnsupportedNonlinearity(ValidationError):
    """非线性算子不在 Galerkin 约化范围内"""


# ==================== 图样 ====================

class BadSpec(ValidationError):
    """系数矩阵生成规格非法"""


class ZeroField(ValidationError):
    """全零场无法计算局域化指标"""


# ==================== 配置与文件 ====================

class ConfigError(ValidationError):
    """配置文件含未知键或非法值"""


class UsageError(ValidationError):
    """命令行用法错误，usage 为出错的 (子) 命令用法文本"""

    def __init__(self, message: str = "", usage: str = ""):
        super().__init__(message)
        self.usage = usage


class FormatError(ValidationError):
    """文件格式损坏或版本不符"""
