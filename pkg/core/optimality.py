#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
H2 最优性条件模块
误差系统耦合方程求解、误差平方 J 对降阶矩阵的梯度、
一阶必要条件 (FONC) 残差、最优投影基以及有限差分梯度校验
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from core.exceptions import LqoError, SingularityError, UnstableSystemError
from core.h2_metrics import cross_solutions, h2_error, h2_norm_sq
from core.lqo_system import LqoSystem, ProjectionPair
from core.math_utils import checked_inverse, fro, spectral_abscissa
from core.mateq import RESIDUAL_TOL, solve_lyapunov, solve_lyapunov_reach

logger = logging.getLogger(__name__)

# FONC 综合相对度量的分母保护
FONC_EPS = 1e-300


@dataclass(frozen=True, eq=False)
class CouplingSolutions:
    """误差系统耦合方程的解

    x   : A X + X A_r^T + B B_r^T = 0
    z   : A^T Z + Z A_r - sum_k M_k X M_kr - C^T C_r = 0
    z1  : A^T Z1 + Z1 A_r - C^T C_r = 0
    p_r : A_r P_r + P_r A_r^T + B_r B_r^T = 0
    q_r : A_r^T Q_r + Q_r A_r + sum_k M_kr P_r M_kr + C_r^T C_r = 0
    q1_r: A_r^T Q1_r + Q1_r A_r + C_r^T C_r = 0
    """
    x: np.ndarray
    z: np.ndarray
    z1: np.ndarray
    p_r: np.ndarray
    q_r: np.ndarray
    q1_r: np.ndarray

    @property
    def z_hat(self):
        """TSIA 左投影方程的解 2Z - Z1"""
        return 2.0 * self.z - self.z1


def reduced_gramians(rom: LqoSystem, require_stable=True, tol=RESIDUAL_TOL):
    """降阶模型的 P_r, Q_r, Q1_r"""
    p_r, _ = solve_lyapunov_reach(rom.a, rom.b, require_stable=require_stable, tol=tol)
    lin = rom.c.T @ rom.c
    quad = sum((mkr @ p_r @ mkr for mkr in rom.m_quad), np.zeros_like(p_r))
    q1_r, _ = solve_lyapunov(rom.a, lin, transpose=True, require_stable=require_stable, tol=tol)
    q_r, _ = solve_lyapunov(rom.a, lin + quad, transpose=True, require_stable=require_stable, tol=tol)
    return p_r, q_r, q1_r


def coupling_solutions(fom: LqoSystem, rom: LqoSystem, tol=RESIDUAL_TOL,
                       cross=None) -> CouplingSolutions:
    """求解六个耦合方程（X → Z，P_r → Q_r）

    Args:
        fom: 稳定的全阶模型
        rom: 稳定的降阶模型
        tol: 残差认证阈值
        cross: 已求得的 (X, Z1, Z2)，TSIA 内部复用

    Returns:
        CouplingSolutions: 耦合解
    """
    abscissa = spectral_abscissa(fom.a)
    if not abscissa < 0.0:
        raise UnstableSystemError(f"全阶模型不稳定: 最大特征值实部 {abscissa:.3e}", abscissa)
    if cross is None:
        cross = cross_solutions(fom, rom, tol)
    x, z1, z2 = cross
    abscissa_r = spectral_abscissa(rom.a)
    if not abscissa_r < 0.0:
        # 与谱重叠区分开，TSIA 据此只做尾项监控
        raise UnstableSystemError(f"降阶模型不稳定: 最大特征值实部 {abscissa_r:.3e}", abscissa_r)
    p_r, q_r, q1_r = reduced_gramians(rom, tol=tol)
    return CouplingSolutions(x, z1 + z2, z1, p_r, q_r, q1_r)


@dataclass(frozen=True, eq=False)
class GradientSet:
    """J 对 A_r, B_r, C_r, M_kr 的梯度"""
    grad_a: np.ndarray
    grad_b: np.ndarray
    grad_c: np.ndarray
    grad_m: List[np.ndarray]

    @property
    def norms(self) -> Dict[str, float]:
        return {
            'a': fro(self.grad_a),
            'b': fro(self.grad_b),
            'c': fro(self.grad_c),
            'm': float(np.sqrt(sum(fro(g) ** 2 for g in self.grad_m))),
        }


def gradients(fom: LqoSystem, rom: LqoSystem, coupling: Optional[CouplingSolutions] = None) -> GradientSet:
    """误差平方 J 的梯度

    grad_A = 2((2Q_r - Q1_r) P_r + (2Z - Z1)^T X)
    grad_B = 2((2Q_r - Q1_r) B_r + (2Z - Z1)^T B)
    grad_C = 2(C_r P_r - C X)
    grad_Mk = 2(P_r M_kr P_r - X^T M_k X)
    """
    if coupling is None:
        coupling = coupling_solutions(fom, rom)
    cs = coupling
    q_hat = 2.0 * cs.q_r - cs.q1_r
    z_hat = cs.z_hat
    grad_a = 2.0 * (q_hat @ cs.p_r + z_hat.T @ cs.x)
    grad_b = 2.0 * (q_hat @ rom.b + z_hat.T @ fom.b)
    grad_c = 2.0 * (rom.c @ cs.p_r - fom.c @ cs.x)
    grad_m = []
    for mk, mkr in zip(fom.m_quad, rom.m_quad):
        g = 2.0 * (cs.p_r @ mkr @ cs.p_r - cs.x.T @ mk @ cs.x)
        # 两项本身对称，消除舍入
        grad_m.append(0.5 * (g + g.T))
    return GradientSet(grad_a, grad_b, grad_c, grad_m)


def wilson_gradients(fom: LqoSystem, rom: LqoSystem, tol=RESIDUAL_TOL) -> GradientSet:
    """线性系统 (M = 0) 的 Wilson 梯度，仅由 Q1_r 与 Z1 计算

    grad_A = 2(Q1_r P_r + Z1^T X), grad_B = 2(Q1_r B_r + Z1^T B), grad_C = 2(C_r P_r - C X)
    """
    x, z1, _ = cross_solutions(fom, rom, tol)
    p_r, _ = solve_lyapunov_reach(rom.a, rom.b, tol=tol)
    q1_r, _ = solve_lyapunov(rom.a, rom.c.T @ rom.c, transpose=True, tol=tol)
    grad_a = 2.0 * (q1_r @ p_r + z1.T @ x)
    grad_b = 2.0 * (q1_r @ rom.b + z1.T @ fom.b)
    grad_c = 2.0 * (rom.c @ p_r - fom.c @ x)
    grad_m = [np.zeros((rom.n, rom.n)) for _ in range(rom.p)]
    return GradientSet(grad_a, grad_b, grad_c, grad_m)


def pure_qo_gradients(fom: LqoSystem, rom: LqoSystem, coupling: Optional[CouplingSolutions] = None) -> GradientSet:
    """无线性输出 (C = 0) 时的梯度形式

    grad_A = 4(Q_r P_r + Z^T X), grad_B = 4(Q_r B_r + Z^T B)
    """
    if coupling is None:
        coupling = coupling_solutions(fom, rom)
    cs = coupling
    grad_a = 4.0 * (cs.q_r @ cs.p_r + cs.z.T @ cs.x)
    grad_b = 4.0 * (cs.q_r @ rom.b + cs.z.T @ fom.b)
    grad_c = np.zeros((rom.p, rom.n))
    grad_m = [2.0 * (cs.p_r @ mkr @ cs.p_r - cs.x.T @ mk @ cs.x)
              for mk, mkr in zip(fom.m_quad, rom.m_quad)]
    return GradientSet(grad_a, grad_b, grad_c, grad_m)


@dataclass(frozen=True, eq=False)
class FoncResiduals:
    """一阶必要条件左端项及其相对度量"""
    res_a: np.ndarray
    res_b: np.ndarray
    res_c: np.ndarray
    res_m: List[np.ndarray]
    relative: Dict[str, float] = field(default_factory=dict)

    @property
    def norms(self) -> Dict[str, float]:
        return {
            'a': fro(self.res_a),
            'b': fro(self.res_b),
            'c': fro(self.res_c),
            'm': float(np.sqrt(sum(fro(r) ** 2 for r in self.res_m))),
        }

    @property
    def combined(self) -> float:
        """四个条件相对残差的最大值"""
        return max(self.relative.values()) if self.relative else 0.0


def fonc_residuals(fom: LqoSystem, rom: LqoSystem, coupling: Optional[CouplingSolutions] = None) -> FoncResiduals:
    """一阶必要条件残差（等于梯度的一半）

    参考量: A 用 ||Q_r|| ||P_r||，B 用 ||Q_r|| ||B_r||，C 用 ||C|| ||X||，M_k 用 ||X^T M_k X||
    """
    if coupling is None:
        coupling = coupling_solutions(fom, rom)
    cs = coupling
    grads = gradients(fom, rom, cs)
    res_a = 0.5 * grads.grad_a
    res_b = 0.5 * grads.grad_b
    res_c = 0.5 * grads.grad_c
    res_m = [0.5 * g for g in grads.grad_m]

    q_norm = fro(cs.q_r)
    relative = {
        'a': fro(res_a) / (q_norm * fro(cs.p_r) + FONC_EPS),
        'b': fro(res_b) / (q_norm * fro(rom.b) + FONC_EPS),
        'c': fro(res_c) / (fro(fom.c) * fro(cs.x) + FONC_EPS),
    }
    m_rel = [fro(rk) / (fro(cs.x.T @ mk @ cs.x) + FONC_EPS)
             for rk, mk in zip(res_m, fom.m_quad)]
    relative['m'] = max(m_rel) if m_rel else 0.0
    return FoncResiduals(res_a, res_b, res_c, res_m, relative)


def optimal_projectors(fom: LqoSystem, rom: LqoSystem, coupling: Optional[CouplingSolutions] = None,
                       cond_cap=1e12) -> ProjectionPair:
    """最优 Petrov-Galerkin 投影基

    V_r = X P_r^{-1},  W_r = -(2Z - Z1)(2Q_r - Q1_r)^{-1}
    """
    if coupling is None:
        coupling = coupling_solutions(fom, rom)
    cs = coupling
    try:
        p_inv = checked_inverse(cs.p_r, cond_cap, "P_r")
        q_inv = checked_inverse(2.0 * cs.q_r - cs.q1_r, cond_cap, "2Q_r - Q1_r")
    except SingularityError:
        logger.warning("最优投影基无法构造: P_r 或 2Q_r - Q1_r 奇异")
        raise
    return ProjectionPair(cs.x @ p_inv, -cs.z_hat @ q_inv)


@dataclass
class FdCheckReport:
    """有限差分梯度校验结果"""
    step: float
    max_rel_dev: Dict[str, float]
    max_abs_dev: Dict[str, float]
    skipped: List[str]

    def worst(self) -> float:
        return max(self.max_rel_dev.values()) if self.max_rel_dev else 0.0

    def passed(self, rtol=1e-5, atol=1e-8) -> bool:
        return all(self.max_rel_dev[key] <= rtol or self.max_abs_dev[key] <= atol
                   for key in self.max_rel_dev)


def _perturbed(rom, key, index, delta):
    a, b, c = np.array(rom.a), np.array(rom.b), np.array(rom.c)
    m_quad = [np.array(mk) for mk in rom.m_quad]
    if key == 'a':
        a[index] += delta
    elif key == 'b':
        b[index] += delta
    elif key == 'c':
        c[index] += delta
    else:
        k, i, j = index
        if i == j:
            m_quad[k][i, j] += delta
        else:
            # 对称扰动：(i,j) 与 (j,i) 各加 delta/2
            m_quad[k][i, j] += 0.5 * delta
            m_quad[k][j, i] += 0.5 * delta
    return LqoSystem(a, b, c, tuple(m_quad), rom.name)


def gradient_fd_check(fom: LqoSystem, rom: LqoSystem, step=1e-6, fom_h2_sq=None) -> FdCheckReport:
    """用中心差分校验梯度公式

    Args:
        fom: 全阶模型
        rom: 降阶模型
        step: 差分步长，推荐 [1e-8, 1e-4]
        fom_h2_sq: 预先计算的 ||S||^2

    Returns:
        FdCheckReport: 各参数块的最大相对/绝对偏差及跳过的条目
    """
    if not 0.0 < step <= 1e-1:
        raise ValueError(f"差分步长必须在 (0, 0.1] 内，实际 {step}")
    if not 1e-8 <= step <= 1e-4:
        warnings.warn(f"差分步长 {step:g} 超出推荐范围 [1e-8, 1e-4]", RuntimeWarning)

    if fom_h2_sq is None:
        fom_h2_sq = h2_norm_sq(fom)
    grads = gradients(fom, rom)
    targets = {
        'a': [(idx, grads.grad_a[idx]) for idx in np.ndindex(*rom.a.shape)],
        'b': [(idx, grads.grad_b[idx]) for idx in np.ndindex(*rom.b.shape)],
        'c': [(idx, grads.grad_c[idx]) for idx in np.ndindex(*rom.c.shape)],
        'm': [((k, i, j), grads.grad_m[k][i, j])
              for k in range(rom.p) for i in range(rom.n) for j in range(i, rom.n)],
    }

    max_rel, max_abs, skipped = {}, {}, []
    for key, entries in targets.items():
        analytic, numeric = [], []
        for index, value in entries:
            try:
                j_plus = h2_error(fom, _perturbed(rom, key, index, step), fom_h2_sq)
                j_minus = h2_error(fom, _perturbed(rom, key, index, -step), fom_h2_sq)
            except LqoError as e:
                skipped.append(f"{key}{index}: {e}")
                continue
            analytic.append(value)
            numeric.append((j_plus - j_minus) / (2.0 * step))
        if not analytic:
            continue
        analytic, numeric = np.array(analytic), np.array(numeric)
        dev = float(np.max(np.abs(analytic - numeric)))
        scale = float(np.max(np.abs(analytic)))
        max_abs[key] = dev
        max_rel[key] = dev / scale if scale > 0 else dev

    if skipped:
        logger.info(f"有限差分校验跳过 {len(skipped)} 个条目（扰动后降阶模型不稳定或求解失败）")
    return FdCheckReport(step, max_rel, max_abs, skipped)
