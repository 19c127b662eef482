#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
时域仿真模块
梯形（Crank-Nicolson）格式积分 x' = Ax + Bu，x(0) = 0，
输出线性部分 y1 = Cx 与二次部分 y2_k = x^T M_k x
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as spla
from scipy.integrate import trapezoid

from core.exceptions import SimulationError
from core.lqo_system import LqoSystem

logger = logging.getLogger(__name__)

SIGNAL_KINDS = ("zero", "step", "sinusoid", "damped_poly", "exp", "custom")


@dataclass(frozen=True, eq=False)
class InputSignal:
    """输入信号描述

    kind:
        zero        u = 0
        step        u = amplitude
        sinusoid    u = amplitude cos(omega t) + offset
        damped_poly u = amplitude t^2 e^{-t/decay}
        exp         u = amplitude e^{-t/decay}
        custom      对 (sample_times, samples) 线性插值
    channels 为信号作用的输入通道，None 表示全部通道。
    """
    kind: str = "zero"
    amplitude: float = 1.0
    omega: float = np.pi
    offset: float = 0.0
    decay: float = 1.0
    channels: Optional[Sequence[int]] = None
    sample_times: Optional[np.ndarray] = None
    samples: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"未知的输入类型: {self.kind}，可选 {SIGNAL_KINDS}")
        if self.kind == "custom" and (self.sample_times is None or self.samples is None):
            raise ValueError("custom 输入需要 sample_times 与 samples")

    @classmethod
    def sinusoid(cls, amplitude=0.5, omega=np.pi, offset=1.0, channels=None):
        return cls("sinusoid", amplitude=amplitude, omega=omega, offset=offset, channels=channels)

    @classmethod
    def damped_poly(cls, amplitude=1.0, decay=5.0, channels=None):
        return cls("damped_poly", amplitude=amplitude, decay=decay, channels=channels)

    @classmethod
    def step(cls, amplitude=1.0, channels=None):
        return cls("step", amplitude=amplitude, channels=channels)

    def _scalar(self, times):
        t = np.asarray(times, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "step":
            return np.full_like(t, self.amplitude)
        if self.kind == "sinusoid":
            return self.amplitude * np.cos(self.omega * t) + self.offset
        if self.kind == "damped_poly":
            return self.amplitude * t ** 2 * np.exp(-t / self.decay)
        if self.kind == "exp":
            return self.amplitude * np.exp(-t / self.decay)
        return None

    def evaluate(self, times, m) -> np.ndarray:
        """返回 m×len(times) 的输入矩阵"""
        times = np.asarray(times, dtype=float)
        u = np.zeros((m, times.size))
        channels = range(m) if self.channels is None else list(self.channels)
        if self.kind == "custom":
            samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
            if samples.shape[0] == 1:
                for ch in channels:
                    u[ch] = np.interp(times, self.sample_times, samples[0])
            else:
                if samples.shape[0] != m:
                    raise ValueError(f"custom 输入通道数 {samples.shape[0]} 与 m={m} 不一致")
                for ch in range(m):
                    u[ch] = np.interp(times, self.sample_times, samples[ch])
            return u
        values = self._scalar(times)
        for ch in channels:
            u[ch] = values
        return u


@dataclass(frozen=True, eq=False)
class SimResult:
    """仿真结果，y = y1 + y2"""
    times: np.ndarray
    y: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    x_norm_history: Optional[np.ndarray] = field(default=None)

    def cost(self, offset) -> np.ndarray:
        """对流扩散模型的代价序列 y + offset"""
        return self.y + offset


def time_grid(t_final, dt):
    if not dt > 0:
        raise ValueError(f"时间步长必须为正，实际 {dt}")
    if not t_final > 0:
        raise ValueError(f"仿真时长必须为正，实际 {t_final}")
    steps = int(round(t_final / dt))
    return np.linspace(0.0, steps * dt, steps + 1)


def simulate(sys: LqoSystem, signal: InputSignal, t_final, dt=1e-3, keep_state_norm=False) -> SimResult:
    """零初值时域仿真

    (I - dt/2 A) x_{k+1} = (I + dt/2 A) x_k + dt/2 B (u_k + u_{k+1})

    Args:
        sys: LQO 系统
        signal: 输入信号
        t_final: 仿真时长
        dt: 时间步长
        keep_state_norm: 是否记录 ||x(t)||_2

    Returns:
        SimResult: 仿真结果
    """
    times = time_grid(t_final, dt)
    u = signal.evaluate(times, sys.m)
    n = sys.n
    eye = np.eye(n)
    lu = spla.lu_factor(eye - 0.5 * dt * sys.a)
    explicit = eye + 0.5 * dt * sys.a
    bu = sys.b @ u

    states = np.zeros((n, times.size))
    x = np.zeros(n)
    for k in range(times.size - 1):
        rhs = explicit @ x + 0.5 * dt * (bu[:, k] + bu[:, k + 1])
        x = spla.lu_solve(lu, rhs, check_finite=False)
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"仿真在 t={times[k + 1]:.4g} 出现非有限值")
        states[:, k + 1] = x

    y1, y2 = sys.output(states)
    norms = np.linalg.norm(states, axis=0) if keep_state_norm else None
    return SimResult(times, y1 + y2, y1, y2, norms)


@dataclass(frozen=True, eq=False)
class OutputErrorMetrics:
    """输出误差: sup_t ||y - y_r||_∞ 及逐点绝对/相对误差序列"""
    sup_error: float
    abs_series: np.ndarray
    rel_series: np.ndarray


def output_error_metrics(full: SimResult, reduced: SimResult) -> OutputErrorMetrics:
    if full.times.shape != reduced.times.shape or not np.array_equal(full.times, reduced.times):
        raise ValueError("全阶与降阶仿真的时间网格不一致")
    if full.y.shape != reduced.y.shape:
        raise ValueError(f"输出维度不一致: {full.y.shape} vs {reduced.y.shape}")
    abs_series = np.max(np.abs(full.y - reduced.y), axis=0)
    ref = np.max(np.abs(full.y), axis=0)
    rel_series = np.divide(abs_series, ref, out=np.zeros_like(abs_series), where=ref > 0)
    return OutputErrorMetrics(float(abs_series.max()), abs_series, rel_series)


def input_l2_norms(signal: InputSignal, m, t_final, dt=1e-3):
    """有限时域上的 (||u||_L2^2, ||u⊗u||_L2^2)"""
    times = time_grid(t_final, dt)
    u = signal.evaluate(times, m)
    sq = np.sum(u ** 2, axis=0)
    # ||u ⊗ u||_2 = ||u||_2^2
    return float(trapezoid(sq, times)), float(trapezoid(sq ** 2, times))
