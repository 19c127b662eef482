#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
基准模型构造模块
一维对流扩散方程的有限差分半离散（二次代价输出）以及随机稳定 LQO 系统
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from core.lqo_system import LqoSystem

logger = logging.getLogger(__name__)

ADVECTION_SCHEMES = ("central", "upwind")


@dataclass(frozen=True)
class AdvectionDiffusionConfig:
    """对流扩散模型参数

    v_t - alpha v_xx + beta v_x = 0, v(t,0) = u0(t), alpha v_x(t,1) = u1(t)
    scheme: 对流项差分格式，"central"（二阶中心）或 "upwind"（一阶迎风）
    """
    n: int = 300
    alpha: float = 0.01
    beta: float = 1.0
    scheme: str = "central"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"网格数 n 必须为 >= 3 的整数，实际 {self.n}")
        if not self.alpha > 0:
            raise ValueError(f"扩散系数 alpha 必须为正，实际 {self.alpha}")
        if not self.beta >= 0:
            raise ValueError(f"对流系数 beta 必须非负，实际 {self.beta}")
        if self.scheme not in ADVECTION_SCHEMES:
            raise ValueError(f"未知的对流格式: {self.scheme}，可选 {ADVECTION_SCHEMES}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def cell_peclet(self) -> float:
        """网格 Péclet 数 beta h / (2 alpha)"""
        return self.beta * self.h / (2.0 * self.alpha)


def build_advection_diffusion(cfg: AdvectionDiffusionConfig):
    """构造对流扩散 LQO 模型

    网格 x_i = i h (i = 0..n)，状态为 v(x_1..x_n)。扩散用二阶中心差分，
    对流按 cfg.scheme 离散；x=0 处 Dirichlet 边界并入输入列，x=1 处
    Neumann 通量用镜像点 v_{n+1} = v_{n-1} + 2h u1/alpha 消去。
    输出 y = -h 1^T x + (h/2) x^T x，代价 (h/2)||x - 1||^2 = y + 0.5。

    Returns:
        Tuple: (LqoSystem, 代价偏移量 0.5)
    """
    n, h = int(cfg.n), cfg.h
    diff = cfg.alpha / h ** 2
    adv = cfg.beta / h

    b = np.zeros((n, 2))
    if cfg.scheme == "central":
        if cfg.cell_peclet > 1.0:
            logger.warning(f"网格 Péclet 数 {cfg.cell_peclet:.3g} > 1，中心格式可能产生振荡")
        lower = np.full(n - 1, diff + 0.5 * adv)
        upper = np.full(n - 1, diff - 0.5 * adv)
        main = np.full(n, -2.0 * diff)
        # 镜像点上的中心对流差分只剩输入项 -beta u1/alpha
        lower[-1] = 2.0 * diff
        b[0, 0] = diff + 0.5 * adv
        b[-1, 1] = 2.0 / h - cfg.beta / cfg.alpha
    else:
        lower = np.full(n - 1, diff + adv)
        upper = np.full(n - 1, diff)
        main = np.full(n, -2.0 * diff - adv)
        lower[-1] = 2.0 * diff + adv
        b[0, 0] = diff + adv
        b[-1, 1] = 2.0 / h
    a = sp.diags([lower, main, upper], [-1, 0, 1], format='csr').toarray()

    c = -h * np.ones((1, n))
    m_quad = (0.5 * h * np.eye(n),)
    cost_offset = 0.5 * h * n

    sys = LqoSystem(a, b, c, m_quad, f"advdiff_n{n}")
    logger.debug(f"对流扩散模型: n={n}, alpha={cfg.alpha}, beta={cfg.beta}, 格式={cfg.scheme}")
    return sys, cost_offset


def random_stable_lqo(n, m=1, p=1, seed=0, spectral_gap=1.0, name="") -> LqoSystem:
    """随机稳定 LQO 系统

    A = R - (spectral_gap + ρ(R)) I，保证最大特征值实部 <= -spectral_gap；
    B, C 为标准正态随机矩阵，M_k 为随机对称矩阵。相同 seed 结果相同。
    """
    if not spectral_gap > 0:
        raise ValueError(f"spectral_gap 必须为正，实际 {spectral_gap}")
    rng = np.random.default_rng(seed)
    r_mat = rng.standard_normal((n, n)) / np.sqrt(n)
    rho = float(np.max(np.abs(np.linalg.eigvals(r_mat))))
    a = r_mat - (spectral_gap + rho) * np.eye(n)
    b = rng.standard_normal((n, m))
    c = rng.standard_normal((p, n))
    m_quad = []
    for _ in range(p):
        g = rng.standard_normal((n, n)) / np.sqrt(n)
        m_quad.append(0.5 * (g + g.T))
    return LqoSystem(a, b, c, tuple(m_quad), name or f"random_n{n}_s{seed}")
