#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
LQO 平衡截断模块（对比基线）
平衡可达性 Gramian P 与二次输出可观性 Gramian Q 的平方根法
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.exceptions import RankDeficiencyError, UnstableSystemError
from core.h2_metrics import gramians
from core.lqo_system import LqoSystem, ProjectionPair, project
from core.math_utils import spectral_abscissa, symmetric_part
from core.mateq import RESIDUAL_TOL

logger = logging.getLogger(__name__)

# 负特征值截断阈值（相对最大特征值）
CLIP_RTOL = 1e-12
# 数值秩阈值（相对最大奇异值）
RANK_RTOL = 1e-12


def psd_factor(gram):
    """对称半正定矩阵的因子 F，满足 gram ≈ F F^T

    使用对称特征分解而非 Cholesky，负特征值截断为零。
    """
    w, vecs = np.linalg.eigh(symmetric_part(gram))
    lam_max = max(float(np.max(np.abs(w))), np.finfo(float).tiny)
    if w.min() < -CLIP_RTOL * lam_max:
        logger.warning(f"Gramian 存在明显负特征值 {w.min():.3e}（最大 {lam_max:.3e}），已截断为零")
    w = np.clip(w, 0.0, None)
    return vecs * np.sqrt(w)


@dataclass(frozen=True, eq=False)
class BalancedFactorization:
    """平方根法的因子与 SVD，可被多个截断阶数共享

    U^T L = Z diag(s) Y^T，其中 P = L L^T, Q = U U^T
    """
    fom: LqoSystem
    l_fac: np.ndarray
    u_fac: np.ndarray
    left_sv: np.ndarray
    values: np.ndarray
    right_sv: np.ndarray

    @property
    def numerical_rank(self) -> int:
        if self.values.size == 0 or self.values[0] <= 0:
            return 0
        return int(np.sum(self.values > RANK_RTOL * self.values[0]))


def balanced_factorization(fom: LqoSystem, tol=RESIDUAL_TOL) -> BalancedFactorization:
    """计算 P、Q 的因子及 U^T L 的奇异值分解"""
    abscissa = spectral_abscissa(fom.a)
    if not abscissa < 0.0:
        raise UnstableSystemError(f"全阶模型不稳定: 最大特征值实部 {abscissa:.3e}", abscissa)
    gram = gramians(fom, tol=tol)
    l_fac = psd_factor(gram.p_gram)
    u_fac = psd_factor(gram.q_gram)
    left_sv, values, right_t = np.linalg.svd(u_fac.T @ l_fac)
    return BalancedFactorization(fom, l_fac, u_fac, left_sv, values, right_t.T)


@dataclass(frozen=True, eq=False)
class BalancedReduction:
    """平衡截断结果"""
    rom: LqoSystem
    hankel_like_values: np.ndarray
    projectors: ProjectionPair
    rom_stable: bool


def lqo_bt(fom: LqoSystem, r, factorization: Optional[BalancedFactorization] = None) -> BalancedReduction:
    """LQO 平衡截断

    Args:
        fom: 稳定的全阶模型
        r: 截断阶数，不超过 P Q 的数值秩
        factorization: 预先计算的因子（对 r 扫描时共享）

    Returns:
        BalancedReduction: 降阶模型、全部类 Hankel 奇异值与投影基
    """
    if factorization is None:
        factorization = balanced_factorization(fom)
    fac = factorization
    if not 1 <= r <= fac.numerical_rank:
        raise RankDeficiencyError(f"截断阶数 r={r} 超出 PQ 的数值秩 {fac.numerical_rank}")

    scale = 1.0 / np.sqrt(fac.values[:r])
    v = fac.l_fac @ fac.right_sv[:, :r] * scale
    w = fac.u_fac @ fac.left_sv[:, :r] * scale
    proj = ProjectionPair(v, w)
    rom = project(fom, proj)
    rom = rom.with_matrices(name=f"{fom.name}_bt{r}" if fom.name else f"bt{r}")

    stable = spectral_abscissa(rom.a) < 0.0
    if not stable:
        logger.warning(f"平衡截断 r={r} 得到的降阶模型不稳定")
    tail = fac.values[r] if r < fac.values.size else 0.0
    logger.debug(f"平衡截断 r={r}: 保留 σ_r={fac.values[r - 1]:.3e}, 截断 σ_r+1={tail:.3e}")
    return BalancedReduction(rom, fac.values.copy(), proj, stable)
