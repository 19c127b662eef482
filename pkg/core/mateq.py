#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
矩阵方程求解模块
稠密 Lyapunov / Sylvester 方程求解与残差认证

Sylvester 方程两种约定:
    "ax"  :  A X + X A_r^T + F = 0
    "atx" :  A^T X + X A_r + F = 0
n×r 问题只对 r×r 的 A_r 做实 Schur 分解，再按列（或 2×2 块）
对 A 做移位线性求解；同一 A_r 的多个右端项共用分解与 LU。
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
import scipy.linalg as spla

from core.exceptions import ResidualError, SpectralOverlapError, UnstableSystemError
from core.math_utils import spectral_abscissa, symmetric_part

logger = logging.getLogger(__name__)

# 残差认证阈值（相对）
RESIDUAL_TOL = 1e-8
# 判定谱重叠的主元阈值（乘以问题尺度）
PIVOT_TOL = 1e-14

CONVENTIONS = ("ax", "atx")


@dataclass(frozen=True)
class SolveCertificate:
    """求解残差证书"""
    residual_fro: float
    relative_residual: float

    @property
    def ok(self) -> bool:
        return self.relative_residual <= RESIDUAL_TOL


@dataclass(frozen=True, eq=False)
class SylvesterProblem:
    """Sylvester 方程 (a_left, a_right, rhs) 及符号约定"""
    a_left: np.ndarray
    a_right: np.ndarray
    rhs: np.ndarray
    side_convention: str = "ax"

    def __post_init__(self):
        if self.side_convention not in CONVENTIONS:
            raise ValueError(f"未知的Sylvester约定: {self.side_convention}")


def certify(a_left, a_right, x, rhs, convention="ax", tol=RESIDUAL_TOL) -> SolveCertificate:
    """计算 Sylvester/Lyapunov 方程的残差证书

    Args:
        a_left: n×n 左系数
        a_right: r×r 右系数
        x: 解 n×r
        rhs: 右端项 F
        convention: "ax" 或 "atx"
        tol: 相对残差阈值

    Returns:
        SolveCertificate: 残差证书，超过阈值时抛出 ResidualError
    """
    if convention == "ax":
        res = a_left @ x + x @ a_right.T + rhs
    else:
        res = a_left.T @ x + x @ a_right + rhs
    res_fro = float(np.linalg.norm(res, 'fro'))
    x_fro = np.linalg.norm(x, 'fro')
    scale = (np.linalg.norm(a_left, 'fro') * x_fro
             + x_fro * np.linalg.norm(a_right, 'fro')
             + np.linalg.norm(rhs, 'fro'))
    rel = res_fro / scale if scale > 0 else res_fro
    cert = SolveCertificate(res_fro, float(rel))
    if not rel <= tol:
        raise ResidualError(f"方程残差过大: 相对残差 {rel:.3e} > {tol:.1e}", cert)
    return cert


class ShiftedSylvesterSolver:
    """固定 (A, A_r, 约定) 的 Sylvester 求解器

    对 A_r 做一次实 Schur 分解，对每个 1×1 / 2×2 对角块缓存移位矩阵的 LU，
    之后可对任意多个右端项求解。对象构造后不再修改，可在线程间共享。

    主元恰为零时判定谱重叠；主元低于 pivot_tol·尺度 时只标记为近奇异，
    由残差认证决定解是否可用。近奇异且认证失败时报告为谱重叠。
    """

    def __init__(self, a, a_r, convention="ax", pivot_tol=PIVOT_TOL):
        if convention not in CONVENTIONS:
            raise ValueError(f"未知的Sylvester约定: {convention}")
        self.a = np.asarray(a, dtype=float)
        self.a_r = np.asarray(a_r, dtype=float)
        self.convention = convention
        self.pivot_tol = pivot_tol

        # 统一成 L Y + Y H + G = 0 的形式
        self._left = self.a if convention == "ax" else self.a.T
        h = self.a_r.T if convention == "ax" else self.a_r
        self._t, self._u = spla.schur(h, output='real')
        self._blocks = schur_blocks(self._t)
        self._scale = max(np.linalg.norm(self.a, 'fro') + np.linalg.norm(self.a_r, 'fro'), 1.0)
        self._lu: Dict[int, Tuple] = {}
        self.min_pivot = np.inf
        for start, size in self._blocks:
            self._lu[start] = self._factor_block(start, size)
        self.near_singular = self.min_pivot <= self.pivot_tol * self._scale
        if self.near_singular:
            logger.debug(f"移位矩阵近奇异 (最小主元 {self.min_pivot:.3e})，以残差认证为准")

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def r(self) -> int:
        return self.a_r.shape[0]

    def _factor_block(self, start, size):
        n = self.n
        if size == 1:
            shifted = self._left + self._t[start, start] * np.eye(n)
        else:
            # 2×2 块: [L + t00 I, t10 I; t01 I, L + t11 I] 作用于 [y_j; y_j+1]
            t = self._t[start:start + 2, start:start + 2]
            shifted = np.kron(np.eye(2), self._left) + np.kron(t.T, np.eye(n))
        with warnings.catch_warnings():
            # 奇异性由下面的主元检查处理
            warnings.simplefilter("ignore", spla.LinAlgWarning)
            lu, piv = spla.lu_factor(shifted, check_finite=False)
        smallest = float(np.abs(np.diag(lu)).min())
        if not smallest > 0.0:
            raise SpectralOverlapError(f"λ(A) 与 -λ(A_r) 相交 (最小主元 {smallest:.3e})")
        self.min_pivot = min(self.min_pivot, smallest)
        return lu, piv

    def solve(self, rhs, tol=RESIDUAL_TOL):
        """求解 L X + X H + F = 0（按构造时的约定）

        Args:
            rhs: n×r 右端项 F
            tol: 相对残差阈值

        Returns:
            Tuple: (X, SolveCertificate)
        """
        rhs = np.asarray(rhs, dtype=float)
        n, r = self.n, self.r
        if rhs.shape != (n, r):
            raise ValueError(f"右端项形状应为 ({n}, {r})，实际 {rhs.shape}")
        g = rhs @ self._u
        y = np.zeros((n, r))
        t = self._t
        for start, size in self._blocks:
            stop = start + size
            # 已求出的列对当前列的贡献
            acc = -g[:, start:stop] - y[:, :start] @ t[:start, start:stop]
            lu = self._lu[start]
            if size == 1:
                y[:, start] = spla.lu_solve(lu, acc[:, 0], check_finite=False)
            else:
                sol = spla.lu_solve(lu, acc.T.reshape(-1), check_finite=False)
                y[:, start:stop] = sol.reshape(2, n).T
        x = y @ self._u.T
        if not np.all(np.isfinite(x)):
            raise SpectralOverlapError(f"移位求解溢出 (最小主元 {self.min_pivot:.3e})")
        try:
            cert = certify(self.a, self.a_r, x, rhs, self.convention, tol)
        except ResidualError as e:
            if self.near_singular:
                raise SpectralOverlapError(
                    f"λ(A) 与 -λ(A_r) 数值上相交 (最小主元 {self.min_pivot:.3e}, "
                    f"相对残差 {e.certificate.relative_residual:.3e})") from e
            raise
        return x, cert


def schur_blocks(t):
    """准上三角矩阵的对角块划分 [(起始下标, 块大小)]"""
    r = t.shape[0]
    blocks = []
    i = 0
    while i < r:
        if i + 1 < r and t[i + 1, i] != 0.0:
            blocks.append((i, 2))
            i += 2
        else:
            blocks.append((i, 1))
            i += 1
    return blocks


def solve_sylvester(problem: SylvesterProblem, tol=RESIDUAL_TOL, pivot_tol=PIVOT_TOL):
    """求解 Sylvester 方程

    Args:
        problem: 方程数据与约定
        tol: 相对残差阈值
        pivot_tol: 谱重叠判定阈值

    Returns:
        Tuple: (X, SolveCertificate)
    """
    solver = ShiftedSylvesterSolver(problem.a_left, problem.a_right,
                                    problem.side_convention, pivot_tol)
    return solver.solve(problem.rhs, tol)


def _require_stable(a, what="A"):
    abscissa = spectral_abscissa(a)
    if not abscissa < 0.0:
        raise UnstableSystemError(f"{what} 不稳定: 最大特征值实部 {abscissa:.3e} >= 0", abscissa)
    return abscissa


def solve_lyapunov(a, rhs, transpose=False, require_stable=True, tol=RESIDUAL_TOL):
    """求解 A P + P A^T + F = 0（transpose=True 时为 A^T Q + Q A + F = 0）

    采用 Bartels-Stewart（scipy 实 Schur 实现），结果对称化。
    """
    a = np.asarray(a, dtype=float)
    rhs = symmetric_part(rhs)
    if require_stable:
        _require_stable(a)
    coeff = a.T if transpose else a
    sol = spla.solve_continuous_lyapunov(coeff, -rhs)
    sol = symmetric_part(sol)
    if not np.all(np.isfinite(sol)):
        raise SpectralOverlapError("Lyapunov方程无唯一解 (λ_i + λ_j = 0)")
    cert = certify(a, a, sol, rhs, "atx" if transpose else "ax", tol)
    return sol, cert


def solve_lyapunov_reach(a, b, require_stable=True, tol=RESIDUAL_TOL):
    """可达性 Gramian: A P + P A^T + B B^T = 0

    Args:
        a: 稳定的 n×n 状态矩阵
        b: n×m 输入矩阵

    Returns:
        Tuple: (P, SolveCertificate)
    """
    b = np.asarray(b, dtype=float)
    return solve_lyapunov(a, b @ b.T, transpose=False, require_stable=require_stable, tol=tol)


def solve_lyapunov_qo_obsv(sys, p_gram, require_stable=True, tol=RESIDUAL_TOL):
    """二次输出可观性 Gramian: A^T Q + Q A + C^T C + sum_k M_k P M_k = 0

    Args:
        sys: LqoSystem
        p_gram: 可达性 Gramian P

    Returns:
        Tuple: (Q, SolveCertificate)
    """
    rhs = sys.c.T @ sys.c
    for mk in sys.m_quad:
        rhs = rhs + mk @ p_gram @ mk
    return solve_lyapunov(sys.a, rhs, transpose=True, require_stable=require_stable, tol=tol)
