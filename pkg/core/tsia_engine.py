#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
LQO-TSIA 双边迭代引擎
以 Sylvester 方程解 X 与 Ẑ = 2Z - Z1 为投影基的不动点迭代，
每步正交化、Petrov-Galerkin 投影，并用 η / τ 或极点变化监控收敛。
投影得到不稳定模型时记录该次迭代，并以反射极点后的模型继续迭代
"""

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
import scipy.linalg as spla

from core.exceptions import (LqoError, RankDeficiencyError, SpectralOverlapError,
                             UnstableSystemError)
from core.h2_metrics import cross_solutions, h2_norm_sq
from core.lqo_system import PROJECTION_COND_CAP, LqoSystem, ProjectionPair, project
from core.math_utils import spectral_abscissa
from core.mateq import RESIDUAL_TOL, schur_blocks, solve_lyapunov, solve_lyapunov_reach
from core.optimality import coupling_solutions, fonc_residuals

logger = logging.getLogger(__name__)

MONITORS = ("eta", "tau", "both", "poles")

REASON_CONVERGED = "converged"
REASON_MAX_ITERS = "max_iters"
REASON_SOLVER_FAILURE = "solver_failure"

# 谱重叠时对 A_r 对角线的相对扰动量
OVERLAP_SHIFT = 1e-8
# 不稳定迭代反射极点后额外左移的相对量
REFLECT_MARGIN = 1e-8

HISTORY_COLUMNS = ["iter", "eta", "tau", "delta_eta", "delta_tau", "delta_poles",
                   "rom_stable", "fonc_measure", "seconds"]


@dataclass
class TsiaConfig:
    """TSIA 运行参数"""
    r: int
    tol: float = 1e-10
    max_iters: int = 500
    monitor: str = "eta"
    init: Optional[LqoSystem] = None
    use_fom_norm: bool = True
    track_fonc: bool = False
    unstable_patience: int = 10
    reflect_unstable: bool = True
    rank_tol: float = 1e-12
    residual_tol: float = RESIDUAL_TOL
    cond_cap: float = PROJECTION_COND_CAP

    def check(self, fom: LqoSystem):
        if not 1 <= self.r <= fom.n:
            raise ValueError(f"降阶阶数 r 必须满足 1 <= r <= n={fom.n}，实际 {self.r}")
        if self.r == fom.n:
            logger.warning(f"r = n = {fom.n}：等阶恢复模式")
        if not self.tol > 0:
            raise ValueError(f"收敛容差必须为正，实际 {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"最大迭代次数必须 >= 1，实际 {self.max_iters}")
        if self.monitor not in MONITORS:
            raise ValueError(f"未知的监控量: {self.monitor}，可选 {MONITORS}")
        if self.init is not None:
            if self.init.n != self.r or self.init.m != fom.m or self.init.p != fom.p:
                raise ValueError(
                    f"初始降阶模型维度 {self.init.dims} 与 (r={self.r}, m={fom.m}, p={fom.p}) 不符")


@dataclass
class IterationRecord:
    """单次迭代记录"""
    iter: int
    eta: Optional[float]
    tau: Optional[float]
    delta_eta: Optional[float]
    delta_tau: Optional[float]
    rom_stable: bool
    fonc_measure: Optional[float] = None
    seconds: float = 0.0
    delta_poles: Optional[float] = None

    def as_row(self):
        return {name: getattr(self, name) for name in HISTORY_COLUMNS}


@dataclass
class TsiaRun:
    """TSIA 运行结果"""
    rom: LqoSystem
    projectors: Optional[ProjectionPair]
    history: List[IterationRecord] = field(default_factory=list)
    converged: bool = False
    reason: str = REASON_MAX_ITERS
    message: str = ""
    fom_h2_sq: Optional[float] = None

    @property
    def iterations(self) -> int:
        return len(self.history)

    @property
    def final_eta(self) -> Optional[float]:
        for record in reversed(self.history):
            if record.eta is not None:
                return record.eta
        return None

    def history_table(self) -> pd.DataFrame:
        """历史记录表（列见 HISTORY_COLUMNS）"""
        return pd.DataFrame([rec.as_row() for rec in self.history], columns=HISTORY_COLUMNS)


def default_init(n, m, p, r, fill="leading") -> LqoSystem:
    """默认初始降阶模型

    A_r = diag(-logspace(0, 4, r)), B_r 取 I 的前 m 列, C_r 取 I 的前 p 行, M_kr = I_r。
    m 或 p 大于 r 时取单位阵图样的 r×m / p×r 切片（多余部分为零）。

    fill="cyclic" 时 B_r 第 j 行取 e_(j mod m)，C_r 第 j 列取 e_(j mod p)，
    使 (A_r, B_r) 可控、(C_r, A_r) 可观。
    """
    if not 1 <= r <= n:
        raise ValueError(f"降阶阶数 r 必须满足 1 <= r <= n={n}，实际 {r}")
    if fill not in ("leading", "cyclic"):
        raise ValueError(f"未知的填充方式: {fill}")
    a_r = np.diag(-np.logspace(0.0, 4.0, r))
    if fill == "leading":
        b_r = np.eye(r, m)
        c_r = np.eye(p, r)
    else:
        b_r = np.zeros((r, m))
        b_r[np.arange(r), np.arange(r) % m] = 1.0
        c_r = np.zeros((p, r))
        c_r[np.arange(r) % p, np.arange(r)] = 1.0
    m_r = tuple(np.eye(r) for _ in range(p))
    return LqoSystem(a_r, b_r, c_r, m_r, "tsia_init")


def orth(mat, rank_tol=1e-12):
    """列主元薄 QR 正交化

    先把各列缩放为单位长度（列空间不变），数值秩与列的量级无关。

    Args:
        mat: n×r 矩阵
        rank_tol: 数值秩阈值（相对 R 的首个对角元）

    Returns:
        np.ndarray: 列正交的 n×r 基
    """
    norms = np.linalg.norm(mat, axis=0)
    scaled = mat / np.where(norms > 0.0, norms, 1.0)
    q, r_fac, _ = spla.qr(scaled, mode='economic', pivoting=True)
    diag = np.abs(np.diag(r_fac))
    lead = diag[0] if diag.size else 0.0
    rank = int(np.sum(diag > rank_tol * lead)) if lead > 0 else 0
    if rank < mat.shape[1]:
        raise RankDeficiencyError(f"正交化后数值秩 {rank} < {mat.shape[1]}")
    return q[:, :mat.shape[1]]


def reflect_unstable_poles(rom: LqoSystem, margin=REFLECT_MARGIN) -> LqoSystem:
    """把 A_r 实部非负的极点关于虚轴反射，B_r、C_r、M_kr 不变

    在实 Schur 形式 A_r = U T U^T 上，对实部 ρ >= 0 的 1×1 / 2×2 对角块
    减去 (2ρ + margin·||A_r||_F) I：虚部保持，实部变为 -ρ - margin·||A_r||_F。
    """
    t, u = spla.schur(np.asarray(rom.a), output='real')
    shift = margin * max(np.linalg.norm(rom.a, 'fro'), 1.0)
    reflected = 0
    for start, size in schur_blocks(t):
        block = slice(start, start + size)
        real = np.trace(t[block, block]) / size
        if real >= 0.0:
            t[block, block] -= (2.0 * real + shift) * np.eye(size)
            reflected += size
    logger.debug(f"反射 {reflected} 个不稳定极点")
    return rom.with_matrices(a=u @ t @ u.T)


def sorted_poles(a) -> np.ndarray:
    """A_r 的特征值，按 (实部, 虚部) 排序"""
    return np.sort(np.linalg.eigvals(a))


def pole_change(poles, prev_poles) -> float:
    """相邻迭代极点的相对变化 ||σ - σ_prev||_∞ / ||σ_prev||_∞"""
    scale = max(np.max(np.abs(prev_poles)), np.finfo(float).tiny)
    return float(np.max(np.abs(poles - prev_poles)) / scale)


def _projection_pair(cross, rank_tol):
    x, z1, z2 = cross
    # Ẑ = 2Z - Z1 = Z1 + 2 Z2
    return ProjectionPair(orth(x, rank_tol), orth(z1 + 2.0 * z2, rank_tol))


def tsia_step(fom: LqoSystem, rom: LqoSystem, cross=None, rank_tol=1e-12,
              cond_cap=PROJECTION_COND_CAP, tol=RESIDUAL_TOL):
    """TSIA 单步: 求解 X, Ẑ → 正交化 → 投影

    Args:
        fom: 全阶模型
        rom: 当前降阶模型
        cross: 已求得的 (X, Z1, Z2)

    Returns:
        Tuple: (下一步降阶模型, 投影基)
    """
    if cross is None:
        cross = cross_solutions(fom, rom, tol)
    proj = _projection_pair(cross, rank_tol)
    rom_next = project(fom, proj, cond_cap)
    return rom_next, proj


def _tail_terms(fom, rom, cross, tol):
    """返回 (||S_r||^2, trace(B^T Z B_r))"""
    _, z1, z2 = cross
    p_r, _ = solve_lyapunov_reach(rom.a, rom.b, tol=tol)
    rhs = rom.c.T @ rom.c
    for mkr in rom.m_quad:
        rhs = rhs + mkr @ p_r @ mkr
    q_r, _ = solve_lyapunov(rom.a, rhs, transpose=True, tol=tol)
    rom_sq = float(np.trace(rom.b.T @ q_r @ rom.b))
    cross_tr = float(np.trace(fom.b.T @ (z1 + z2) @ rom.b))
    return rom_sq, cross_tr


def tau(fom: LqoSystem, rom: LqoSystem, cross=None, tol=RESIDUAL_TOL) -> float:
    """尾项监控量 τ = ||S_r||^2 + 2 trace(B^T Z B_r)"""
    abscissa = spectral_abscissa(rom.a)
    if not abscissa < 0.0:
        raise UnstableSystemError(f"降阶模型不稳定，τ 不可计算 (谱横坐标 {abscissa:.3e})", abscissa)
    if cross is None:
        cross = cross_solutions(fom, rom, tol)
    rom_sq, cross_tr = _tail_terms(fom, rom, cross, tol)
    return rom_sq + 2.0 * cross_tr


def eta(fom: LqoSystem, rom: LqoSystem, fom_h2_sq: Optional[float] = None, cross=None,
        tol=RESIDUAL_TOL) -> float:
    """相对误差平方 η = (||S||^2 + ||S_r||^2 + 2 trace(B^T Z B_r)) / ||S||^2"""
    if fom_h2_sq is None:
        fom_h2_sq = h2_norm_sq(fom, tol=tol)
    return (fom_h2_sq + tau(fom, rom, cross, tol)) / fom_h2_sq


class TsiaEngine:
    """TSIA 迭代状态机

    当前降阶模型的交叉解同时用于监控量与下一步投影。
    """

    def __init__(self, fom: LqoSystem, config: TsiaConfig, fom_h2_sq: Optional[float] = None):
        config.check(fom)
        self.fom = fom
        self.config = config
        self.fom_h2_sq = None
        if config.use_fom_norm:
            self.fom_h2_sq = fom_h2_sq if fom_h2_sq is not None else h2_norm_sq(fom, tol=config.residual_tol)
        elif config.monitor != "tau":
            logger.warning("未计算 ||S||^2，η 不可用，改用 τ 监控")

    def _cross(self, rom):
        """求交叉解，谱重叠时扰动 A_r 对角线重试一次"""
        cfg = self.config
        try:
            return rom, cross_solutions(self.fom, rom, cfg.residual_tol)
        except SpectralOverlapError as e:
            shift = OVERLAP_SHIFT * max(np.linalg.norm(rom.a, 'fro'), 1.0)
            logger.warning(f"谱重叠 ({e})，A_r 对角线平移 {-shift:.3e} 后重试")
            rom = rom.with_matrices(a=rom.a - shift * np.eye(rom.n))
            return rom, cross_solutions(self.fom, rom, cfg.residual_tol)

    def _full_rank_start(self, rom, cross):
        """默认初值下 m < r 或 p < r 时 X、Ẑ 只有 m、p 个非零列，改用循环填充"""
        try:
            _projection_pair(cross, self.config.rank_tol)
            return rom, cross
        except RankDeficiencyError as e:
            fom = self.fom
            logger.warning(f"默认初值的投影基秩不足 ({e})，B_r/C_r 改为循环填充")
            return self._cross(default_init(fom.n, fom.m, fom.p, self.config.r, fill="cyclic"))

    def _monitors(self, rom, cross):
        """稳定降阶模型的 (eta, tau)"""
        try:
            rom_sq, cross_tr = _tail_terms(self.fom, rom, cross, self.config.residual_tol)
        except LqoError as e:
            logger.debug(f"尾项不可计算: {e}")
            return None, None
        tau_val = rom_sq + 2.0 * cross_tr
        eta_val = None
        if self.fom_h2_sq is not None:
            eta_val = (self.fom_h2_sq + tau_val) / self.fom_h2_sq
        return eta_val, tau_val

    def _converged(self, record):
        if not record.rom_stable:
            return False
        tol = self.config.tol
        monitor = self.config.monitor
        if monitor == "poles":
            return record.delta_poles is not None and record.delta_poles <= tol
        eta_ok = record.eta is not None and (
            record.eta <= tol or (record.delta_eta is not None and record.delta_eta <= tol))
        tau_ok = record.delta_tau is not None and record.delta_tau <= tol
        if monitor == "eta" and record.eta is None:
            monitor = "tau"
        if monitor == "eta":
            return eta_ok
        if monitor == "tau":
            return tau_ok or (record.eta is not None and record.eta <= tol)
        return eta_ok and tau_ok

    def _next_start(self, rom_next, stable):
        """下一步使用的降阶模型: 不稳定时反射极点"""
        if stable or not self.config.reflect_unstable:
            return rom_next
        return reflect_unstable_poles(rom_next)

    def run(self) -> TsiaRun:
        cfg = self.config
        fom = self.fom
        rom = cfg.init if cfg.init is not None else default_init(fom.n, fom.m, fom.p, cfg.r)
        result = TsiaRun(rom=rom, projectors=None, fom_h2_sq=self.fom_h2_sq)
        start = time.perf_counter()

        try:
            rom = self._next_start(rom, spectral_abscissa(rom.a) < 0.0)
            rom, cross = self._cross(rom)
            if cfg.init is None:
                rom, cross = self._full_rank_start(rom, cross)
            result.rom = rom
        except LqoError as e:
            logger.error(f"初始降阶模型求解失败: {e}")
            result.reason, result.message = REASON_SOLVER_FAILURE, str(e)
            return result

        eta_ref = tau_ref = None
        prev_eta = prev_tau = prev_poles = None
        unstable_streak = 0
        for j in range(1, cfg.max_iters + 1):
            try:
                rom_next, proj = tsia_step(fom, rom, cross, cfg.rank_tol, cfg.cond_cap, cfg.residual_tol)
                stable = spectral_abscissa(rom_next.a) < 0.0
                rom_start, cross_next = self._cross(self._next_start(rom_next, stable))
            except LqoError as e:
                logger.error(f"第 {j} 次迭代失败: {e}")
                result.reason, result.message = REASON_SOLVER_FAILURE, str(e)
                break

            eta_val = tau_val = poles = None
            if stable:
                # 谱重叠重试时 rom_start 为平移后的模型
                rom_next = rom_start
                eta_val, tau_val = self._monitors(rom_next, cross_next)
                poles = sorted_poles(rom_next.a)
            if eta_ref is None and eta_val is not None:
                eta_ref = eta_val
            if tau_ref is None and tau_val is not None:
                tau_ref = tau_val
            delta_eta = delta_tau = delta_poles = None
            if eta_val is not None and prev_eta is not None:
                delta_eta = abs(eta_val - prev_eta) / max(abs(eta_ref), np.finfo(float).tiny)
            if tau_val is not None and prev_tau is not None:
                delta_tau = abs(tau_val - prev_tau) / max(abs(tau_ref), np.finfo(float).tiny)
            if poles is not None and prev_poles is not None:
                delta_poles = pole_change(poles, prev_poles)

            fonc_measure = None
            if cfg.track_fonc and stable:
                try:
                    coupling = coupling_solutions(fom, rom_next, cfg.residual_tol, cross=cross_next)
                    fonc_measure = fonc_residuals(fom, rom_next, coupling).combined
                except LqoError as e:
                    logger.debug(f"FONC 残差不可计算: {e}")

            record = IterationRecord(j, eta_val, tau_val, delta_eta, delta_tau, stable,
                                     fonc_measure, time.perf_counter() - start, delta_poles)
            result.history.append(record)
            result.rom, result.projectors = rom_next, proj
            rom, cross = rom_start, cross_next
            prev_eta, prev_tau, prev_poles = eta_val, tau_val, poles

            logger.debug(f"TSIA 迭代 {j}: eta={eta_val}, tau={tau_val}, "
                         f"Δη={delta_eta}, Δτ={delta_tau}, Δσ={delta_poles}, 稳定={stable}")
            if j % 10 == 0:
                logger.info(f"TSIA 迭代 {j}: eta={eta_val}, Δη={delta_eta}, Δτ={delta_tau}")

            if not stable:
                unstable_streak += 1
                logger.warning(f"TSIA 迭代 {j}: 降阶模型不稳定 (连续 {unstable_streak} 次)")
                if unstable_streak >= cfg.unstable_patience:
                    result.reason = REASON_SOLVER_FAILURE
                    result.message = f"降阶模型连续 {unstable_streak} 次迭代不稳定"
                    logger.error(result.message)
                    break
                continue
            unstable_streak = 0

            if self._converged(record):
                result.converged, result.reason = True, REASON_CONVERGED
                break

        logger.info(f"TSIA 结束: r={cfg.r}, 迭代 {result.iterations} 次, 原因 {result.reason}, "
                    f"最终 eta={result.final_eta}")
        return result


def run(fom: LqoSystem, config: TsiaConfig, fom_h2_sq: Optional[float] = None) -> TsiaRun:
    """运行 LQO-TSIA 直至收敛或达到最大迭代次数

    Args:
        fom: 稳定的全阶模型
        config: 运行参数
        fom_h2_sq: 预先计算的 ||S||^2（扫描时共享）
    """
    return TsiaEngine(fom, config, fom_h2_sq).run()
