#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
异常定义模块
降阶计算中各类数值失败的统一异常层次
"""


class LqoError(Exception):
    """所有LQO计算异常的基类"""


class DimensionError(LqoError, ValueError):
    """矩阵维度不一致"""


class UnstableSystemError(LqoError):
    """系统不是渐近稳定的（存在实部 >= 0 的特征值）"""

    def __init__(self, message, abscissa=None):
        super().__init__(message)
        self.abscissa = abscissa


class SpectralOverlapError(LqoError):
    """Sylvester方程系数矩阵谱重叠，解不唯一"""


class ResidualError(LqoError):
    """求解结果残差超过认证阈值"""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class ProjectionError(LqoError):
    """Petrov-Galerkin投影失败（W^T V 奇异或病态）"""


class RankDeficiencyError(ProjectionError):
    """正交化后数值秩不足"""


class SingularityError(LqoError):
    """矩阵求逆时奇异或条件数过大"""


class QuadratureError(LqoError):
    """核函数数值积分不收敛"""


class BundleFormatError(LqoError, ValueError):
    """系统文件包格式错误"""


class SimulationError(LqoError):
    """时域仿真出现非有限值"""
