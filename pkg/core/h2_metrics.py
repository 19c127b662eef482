#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
H2 度量模块
Volterra 核、Gramian、H2 内积与范数（Q 形式 / P 形式）、
核函数数值积分校验以及 L∞ 输出误差上界
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.linalg as spla

from core.exceptions import DimensionError, QuadratureError, UnstableSystemError
from core.lqo_system import LqoSystem, assemble_error_system
from core.math_utils import spectral_abscissa
from core.mateq import (RESIDUAL_TOL, ShiftedSylvesterSolver, solve_lyapunov,
                        solve_lyapunov_qo_obsv, solve_lyapunov_reach)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GramianSet:
    """可达性 Gramian P、二次输出可观性 Gramian Q 及其分量"""
    p_gram: np.ndarray
    q_gram: np.ndarray
    q1_gram: Optional[np.ndarray] = None
    q2_parts: Optional[List[np.ndarray]] = None

    def split_error(self) -> float:
        """||Q - (Q1 + sum Q2^(k))||_F / ||Q||_F"""
        if self.q1_gram is None or self.q2_parts is None:
            raise ValueError("未计算 Q1/Q2 分量")
        total = self.q1_gram + sum(self.q2_parts)
        scale = max(np.linalg.norm(self.q_gram, 'fro'), np.finfo(float).tiny)
        return float(np.linalg.norm(self.q_gram - total, 'fro') / scale)


def gramians(sys: LqoSystem, with_parts=False, tol=RESIDUAL_TOL) -> GramianSet:
    """计算系统 Gramian

    Args:
        sys: 稳定的 LQO 系统
        with_parts: 是否单独求解 Q1 与各 Q2^(k)
        tol: 残差认证阈值

    Returns:
        GramianSet: Gramian 集合
    """
    p_gram, _ = solve_lyapunov_reach(sys.a, sys.b, tol=tol)
    q_gram, _ = solve_lyapunov_qo_obsv(sys, p_gram, tol=tol)
    if not with_parts:
        return GramianSet(p_gram, q_gram)

    q1_gram, _ = solve_lyapunov(sys.a, sys.c.T @ sys.c, transpose=True, tol=tol)
    q2_parts = [solve_lyapunov(sys.a, mk @ p_gram @ mk, transpose=True, tol=tol)[0]
                for mk in sys.m_quad]
    return GramianSet(p_gram, q_gram, q1_gram, q2_parts)


def _check_pair(s, s_r):
    if s.m != s_r.m or s.p != s_r.p:
        raise DimensionError(
            f"两个系统的输入/输出个数不一致: (m={s.m}, p={s.p}) vs (m={s_r.m}, p={s_r.p})")


def _require_stable(sys, what):
    abscissa = spectral_abscissa(sys.a)
    if not abscissa < 0.0:
        raise UnstableSystemError(f"{what}不稳定: 最大特征值实部 {abscissa:.3e}", abscissa)


def cross_solutions(s: LqoSystem, s_r: LqoSystem, tol=RESIDUAL_TOL):
    """交叉 Sylvester 解 X, Z1, Z2（Z = Z1 + Z2）

    A X + X A_r^T + B B_r^T = 0
    A^T Z1 + Z1 A_r - C^T C_r = 0
    A^T Z2 + Z2 A_r - sum_k M_k X M_kr = 0

    Returns:
        Tuple: (X, Z1, Z2)
    """
    _check_pair(s, s_r)
    x, _ = ShiftedSylvesterSolver(s.a, s_r.a, "ax").solve(s.b @ s_r.b.T, tol)
    z_solver = ShiftedSylvesterSolver(s.a, s_r.a, "atx")
    z1, _ = z_solver.solve(-(s.c.T @ s_r.c), tol)
    quad = np.zeros((s.n, s_r.n))
    for mk, mkr in zip(s.m_quad, s_r.m_quad):
        quad += mk @ x @ mkr
    z2, _ = z_solver.solve(-quad, tol)
    return x, z1, z2


def h2_inner_product(s: LqoSystem, s_r: LqoSystem, tol=RESIDUAL_TOL) -> float:
    """H2 内积 <S, S_r> = -trace(B^T Z B_r)"""
    _check_pair(s, s_r)
    _require_stable(s, "系统S")
    _require_stable(s_r, "系统S_r")
    _, z1, z2 = cross_solutions(s, s_r, tol)
    return float(-np.trace(s.b.T @ (z1 + z2) @ s_r.b))


def h2_inner_product_pform(s: LqoSystem, s_r: LqoSystem, tol=RESIDUAL_TOL) -> float:
    """H2 内积的 P 形式: trace(C X C_r^T) + sum_k trace(X^T M_k X M_kr)"""
    _check_pair(s, s_r)
    x, _ = ShiftedSylvesterSolver(s.a, s_r.a, "ax").solve(s.b @ s_r.b.T, tol)
    value = np.trace(s.c @ x @ s_r.c.T)
    for mk, mkr in zip(s.m_quad, s_r.m_quad):
        value += np.trace(x.T @ mk @ x @ mkr)
    return float(value)


def h2_norm_sq(sys: LqoSystem, gram: Optional[GramianSet] = None, tol=RESIDUAL_TOL) -> float:
    """H2 范数平方 trace(B^T Q B)"""
    if gram is None:
        gram = gramians(sys, tol=tol)
    return float(np.trace(sys.b.T @ gram.q_gram @ sys.b))


def h2_norm_sq_pform(sys: LqoSystem, gram: Optional[GramianSet] = None, tol=RESIDUAL_TOL) -> float:
    """H2 范数平方的 P 形式: trace(C P C^T) + sum_k trace(P M_k P M_k)"""
    if gram is None:
        p_gram, _ = solve_lyapunov_reach(sys.a, sys.b, tol=tol)
    else:
        p_gram = gram.p_gram
    value = np.trace(sys.c @ p_gram @ sys.c.T)
    for mk in sys.m_quad:
        value += np.trace(p_gram @ mk @ p_gram @ mk)
    return float(value)


def h2_error(fom: LqoSystem, rom: LqoSystem, fom_h2_sq: Optional[float] = None,
             tol=RESIDUAL_TOL) -> float:
    """误差平方 J = trace(B^T Q B + 2 B^T Z B_r + B_r^T Q_r B_r)

    Args:
        fom: 全阶模型
        rom: 降阶模型
        fom_h2_sq: 预先计算的 ||S||^2（可选）

    Returns:
        float: ||S - S_r||_H2^2
    """
    _check_pair(fom, rom)
    _require_stable(fom, "全阶模型")
    _require_stable(rom, "降阶模型")
    if fom_h2_sq is None:
        fom_h2_sq = h2_norm_sq(fom, tol=tol)
    _, z1, z2 = cross_solutions(fom, rom, tol)
    cross = np.trace(fom.b.T @ (z1 + z2) @ rom.b)
    return float(fom_h2_sq + 2.0 * cross + h2_norm_sq(rom, tol=tol))


def h2_error_pform(fom: LqoSystem, rom: LqoSystem, tol=RESIDUAL_TOL) -> float:
    """误差平方的 P 形式（可达性型迹公式）"""
    _check_pair(fom, rom)
    p_gram, _ = solve_lyapunov_reach(fom.a, fom.b, tol=tol)
    p_r, _ = solve_lyapunov_reach(rom.a, rom.b, tol=tol)
    x, _ = ShiftedSylvesterSolver(fom.a, rom.a, "ax").solve(fom.b @ rom.b.T, tol)
    value = np.trace(fom.c @ p_gram @ fom.c.T - 2.0 * fom.c @ x @ rom.c.T + rom.c @ p_r @ rom.c.T)
    for mk, mkr in zip(fom.m_quad, rom.m_quad):
        # n×n、r×r 两类乘积分别求迹
        value += (np.trace(p_gram @ mk @ p_gram @ mk)
                  - 2.0 * np.trace(x.T @ mk @ x @ mkr)
                  + np.trace(p_r @ mkr @ p_r @ mkr))
    return float(value)


def h2_error_via_error_system(fom: LqoSystem, rom: LqoSystem, tol=RESIDUAL_TOL) -> float:
    """通过组装误差系统计算 ||S - S_r||^2（校验用）"""
    err = assemble_error_system(fom, rom)
    return h2_norm_sq(err.system, tol=tol)


def error_gramians(fom: LqoSystem, rom: LqoSystem, tol=RESIDUAL_TOL):
    """误差系统 Gramian 的分块结构

    P_e = [[P, X], [X^T, P_r]],  Q_e = [[Q, Z], [Z^T, Q_r]]

    Returns:
        Tuple: (P_e, Q_e)
    """
    gram = gramians(fom, tol=tol)
    gram_r = gramians(rom, tol=tol)
    x, z1, z2 = cross_solutions(fom, rom, tol)
    z = z1 + z2
    p_e = np.block([[gram.p_gram, x], [x.T, gram_r.p_gram]])
    q_e = np.block([[gram.q_gram, z], [z.T, gram_r.q_gram]])
    return p_e, q_e


def linf_bound_rhs(fom: LqoSystem, rom: LqoSystem, input_l2, input_kron_l2,
                   h2_err_sq: Optional[float] = None) -> float:
    """L∞ 输出误差上界右端 ||S - S_r||^2 (||u||^2 + ||u⊗u||^2)

    Args:
        input_l2: ||u||_L2^2
        input_kron_l2: ||u⊗u||_L2^2
        h2_err_sq: 预先计算的误差平方（可选）
    """
    if not (np.isfinite(input_l2) and np.isfinite(input_kron_l2)):
        raise ValueError("输入范数必须为有限值")
    if h2_err_sq is None:
        h2_err_sq = h2_error(fom, rom)
    # 舍入可能使误差平方略小于零
    return float(max(h2_err_sq, 0.0) * (input_l2 + input_kron_l2))


class KernelEvaluator:
    """Volterra 核 h1(t) = C e^{At} B, h2(t1,t2) = M (e^{At1}B ⊗ e^{At2}B)"""

    def __init__(self, sys: LqoSystem):
        self.sys = sys

    def state_impulse(self, t):
        return spla.expm(self.sys.a * t) @ self.sys.b

    def h1(self, t):
        return self.sys.c @ self.state_impulse(t)

    def h2(self, t1, t2):
        """返回 p×m² 矩阵，第k行为 vec(B^T e^{A^T t1} M_k e^{A t2} B)^T"""
        f1 = self.state_impulse(t1)
        f2 = self.state_impulse(t2)
        rows = [(f1.T @ mk @ f2).reshape(-1) for mk in self.sys.m_quad]
        return np.vstack(rows)


def _graded_panels(horizon, levels):
    edges = [0.0] + [horizon * 2.0 ** (-k) for k in range(levels, -1, -1)]
    return np.array(edges)


def _gauss_nodes(edges, order):
    ref_x, ref_w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (ref_x + 1.0))
        weights.append(half * ref_w)
    return np.concatenate(nodes), np.concatenate(weights)


def _kernel_integrals(sys, nodes, weights):
    # e^{A t} B 在全部节点上
    states = np.stack([spla.expm(sys.a * t) @ sys.b for t in nodes])  # (N, n, m)
    lin = np.einsum('pn,tnm->tpm', sys.c, states)
    lin_part = float(np.sum(weights * np.sum(lin ** 2, axis=(1, 2))))
    # 张量积求积下二重和可分解: sum_ij w_i w_j ||F_i^T M F_j||^2 = trace(M S M S)
    s_acc = np.einsum('t,tnm,tkm->nk', weights, states, states)
    quad_part = float(sum(np.trace(mk @ s_acc @ mk @ s_acc) for mk in sys.m_quad))
    return lin_part, quad_part


def kernel_quadrature_h2(sys: LqoSystem, rtol=1e-8, max_refinements=5) -> float:
    """对核函数直接数值积分得到 H2 范数平方（独立校验用）

    在 [0, T] 上用几何分级的复合 Gauss-Legendre 求积，逐次加倍节点直至
    相邻两次结果的相对差小于 rtol。截断时间 T 由谱横坐标衰减估计，
    使截断误差小于 rtol/10。

    Args:
        sys: 稳定系统
        rtol: 相对精度（>= 1e-8）
        max_refinements: 最大加倍次数

    Returns:
        float: ∫||h1||_F^2 + ∫∫||h2||_F^2
    """
    if rtol < 1e-8:
        raise ValueError(f"rtol 不能小于 1e-8，实际 {rtol}")
    abscissa = spectral_abscissa(sys.a)
    if not abscissa < 0.0:
        raise UnstableSystemError(f"系统不稳定: 最大特征值实部 {abscissa:.3e}", abscissa)
    decay = -abscissa
    if decay < 1e-6:
        raise QuadratureError(f"衰减过慢 (谱横坐标 {abscissa:.3e})，积分无法收敛")

    # 非正规性放大系数
    _, vecs = np.linalg.eig(sys.a)
    kappa = max(float(np.linalg.cond(vecs)), 1.0)
    if not np.isfinite(kappa):
        kappa = 1e8
    horizon = np.log(10.0 * kappa ** 4 / rtol) / decay
    # 最快模态决定分级层数
    fastest = float(np.max(np.abs(np.linalg.eigvals(sys.a))))
    levels = int(np.clip(np.ceil(np.log2(max(horizon * fastest, 1.0))) + 2, 2, 40))
    edges = _graded_panels(horizon, levels)

    order = 8
    previous = None
    for _ in range(max_refinements + 1):
        nodes, weights = _gauss_nodes(edges, order)
        lin_part, quad_part = _kernel_integrals(sys, nodes, weights)
        value = lin_part + quad_part
        if previous is not None and abs(value - previous) <= rtol * max(abs(value), np.finfo(float).tiny):
            logger.debug(f"核积分收敛: 阶数 {order}, T={horizon:.3f}, 值 {value:.12e}")
            return value
        previous = value
        order *= 2
    raise QuadratureError(f"核积分在 {max_refinements} 次加倍后仍未收敛 (最后值 {previous:.12e})")
