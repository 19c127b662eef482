#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
LQO系统模块
线性二次输出系统 (A, B, C, M_1..M_p) 的实现、校验、对称化、
Kronecker输出形式、Petrov-Galerkin投影以及误差系统组装
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as spla

from core.exceptions import DimensionError, ProjectionError
from core.math_utils import spectral_abscissa, symmetric_part

logger = logging.getLogger(__name__)

# 对称性判定阈值（相对 ||M_k||_F）
SYMMETRY_RTOL = 1e-12
# W^T V 条件数上限
PROJECTION_COND_CAP = 1e12


def _frozen(mat):
    arr = np.array(mat, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def symmetrize_quadratic(m_raw):
    """返回二次输出矩阵的对称部分

    x^T M x = x^T ((M + M^T)/2) x

    Args:
        m_raw: n×n 方阵

    Returns:
        np.ndarray: (M + M^T)/2
    """
    m_raw = np.asarray(m_raw, dtype=float)
    if m_raw.ndim != 2 or m_raw.shape[0] != m_raw.shape[1]:
        raise DimensionError(f"二次输出矩阵必须为方阵，实际形状 {m_raw.shape}")
    return symmetric_part(m_raw)


def _asymmetry(mk) -> float:
    """||M - M^T||_F，相对 ||M||_F 的阈值内记为 0"""
    if mk.ndim != 2 or mk.shape[0] != mk.shape[1]:
        return 0.0
    skew = float(np.linalg.norm(mk - mk.T, 'fro'))
    return 0.0 if skew <= SYMMETRY_RTOL * np.linalg.norm(mk, 'fro') else skew


@dataclass(frozen=True, eq=False)
class LqoSystem:
    """线性二次输出系统 x' = Ax + Bu, y = Cx + [x^T M_k x]_k

    构造后所有矩阵只读，M_k 已替换为对称部分，
    替换前的非对称量保存在 input_asymmetry 中。
    """
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    m_quad: Tuple[np.ndarray, ...]
    name: str = ""

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.asarray(self.b, dtype=float)
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        c = np.asarray(self.c, dtype=float)
        if c.ndim == 1:
            c = c.reshape(1, -1)
        m_quad = [np.atleast_2d(np.asarray(mk, dtype=float)) for mk in self.m_quad]

        problems = _dimension_problems(a, b, c, m_quad)
        if problems:
            raise DimensionError("; ".join(problems))

        object.__setattr__(self, "input_asymmetry", tuple(_asymmetry(mk) for mk in m_quad))
        object.__setattr__(self, "a", _frozen(a))
        object.__setattr__(self, "b", _frozen(b))
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "m_quad", tuple(_frozen(symmetrize_quadratic(mk)) for mk in m_quad))

    @classmethod
    def from_matrices(cls, a, b, c=None, m_quad=None, p=None, name=""):
        """由矩阵构造系统，C 或 M 缺省时补零

        Args:
            a, b: 状态矩阵与输入矩阵
            c: 线性输出矩阵，None 表示全零
            m_quad: 二次输出矩阵列表，None 表示全零（LTI系统）
            p: 输出个数，C 与 M 都缺省时使用
        """
        a = np.atleast_2d(np.asarray(a, dtype=float))
        n = a.shape[0]
        if p is None:
            if c is not None:
                p = np.atleast_2d(np.asarray(c)).shape[0]
            elif m_quad is not None:
                p = len(m_quad)
            else:
                p = 1
        if c is None:
            c = np.zeros((p, n))
        if m_quad is None:
            m_quad = [np.zeros((n, n)) for _ in range(p)]
        return cls(a, b, c, tuple(m_quad), name)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def p(self) -> int:
        return self.c.shape[0]

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.n, self.m, self.p

    @property
    def is_lti(self) -> bool:
        """所有 M_k 为零时退化为线性系统"""
        return all(not np.any(mk) for mk in self.m_quad)

    def with_matrices(self, **changes) -> "LqoSystem":
        """返回替换部分矩阵后的新系统"""
        if "m_quad" in changes:
            changes["m_quad"] = tuple(changes["m_quad"])
        return replace(self, **changes)

    def output(self, x):
        """对状态轨迹计算输出 (y1, y2)

        Args:
            x: n×steps 状态矩阵或 n 维向量

        Returns:
            Tuple: 线性部分 y1 与二次部分 y2，形状 p×steps
        """
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        y1 = self.c @ x
        y2 = np.vstack([np.einsum('it,ij,jt->t', x, mk, x) for mk in self.m_quad])
        return y1, y2


def _dimension_problems(a, b, c, m_quad) -> List[str]:
    problems = []
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        problems.append(f"A 必须为方阵，实际形状 {a.shape}")
        return problems
    n = a.shape[0]
    if n < 1:
        problems.append("状态维数 n 必须 >= 1")
    if b.ndim != 2 or b.shape[0] != n:
        problems.append(f"B 形状应为 ({n}, m)，实际 {b.shape}")
    elif b.shape[1] < 1:
        problems.append("输入个数 m 必须 >= 1")
    if c.ndim != 2 or c.shape[1] != n:
        problems.append(f"C 形状应为 (p, {n})，实际 {c.shape}")
        return problems
    p = c.shape[0]
    if p < 1:
        problems.append("输出个数 p 必须 >= 1")
    if len(m_quad) != p:
        problems.append(f"二次输出矩阵个数应为 p={p}，实际 {len(m_quad)}")
    for k, mk in enumerate(m_quad):
        if mk.shape != (n, n):
            problems.append(f"M_{k + 1} 形状应为 ({n}, {n})，实际 {mk.shape}")
    return problems


@dataclass(frozen=True)
class ValidationReport:
    """系统校验报告（只报告，不抛异常）"""
    dimension_violations: List[str] = field(default_factory=list)
    asymmetry: List[float] = field(default_factory=list)
    abscissa: Optional[float] = None
    stable: Optional[bool] = None

    @property
    def symmetric(self) -> bool:
        return all(v == 0.0 for v in self.asymmetry)

    @property
    def ok(self) -> bool:
        return not self.dimension_violations and self.stable is not False


def validate(sys: LqoSystem, check_stability=True) -> ValidationReport:
    """校验系统：维度、M_k 的非对称量、（可选）稳定性

    非对称量取自构造时传入的原始 M_k（对称化之前）。

    Args:
        sys: 待校验系统
        check_stability: 是否计算最大特征值实部

    Returns:
        ValidationReport: 校验报告
    """
    problems = _dimension_problems(sys.a, sys.b, sys.c, list(sys.m_quad))
    asymmetry = list(sys.input_asymmetry)

    abscissa = None
    stable = None
    if check_stability:
        abscissa = spectral_abscissa(sys.a)
        stable = abscissa < 0.0
    return ValidationReport(problems, asymmetry, abscissa, stable)


@dataclass(frozen=True, eq=False)
class KroneckerOutputMatrix:
    """p×n² 矩阵，第k行为 M_k 的行向量化"""
    m_flat: np.ndarray

    @property
    def n(self) -> int:
        return int(round(np.sqrt(self.m_flat.shape[1])))

    def evaluate(self, x):
        """返回 M (x ⊗ x)，即 [x^T M_1 x, ..., x^T M_p x]"""
        x = np.asarray(x, dtype=float).ravel()
        return self.m_flat @ np.kron(x, x)

    def matrices(self) -> List[np.ndarray]:
        n = self.n
        return [row.reshape(n, n) for row in self.m_flat]


def kronecker_output(sys: LqoSystem) -> KroneckerOutputMatrix:
    """将二次输出写成 Kronecker 形式 y2 = M (x ⊗ x)"""
    m_flat = np.vstack([mk.reshape(1, -1) for mk in sys.m_quad])
    return KroneckerOutputMatrix(_frozen(m_flat))


@dataclass(frozen=True, eq=False)
class ProjectionPair:
    """Petrov-Galerkin 投影基 (V_r, W_r)"""
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.v, dtype=float))
        w = np.atleast_2d(np.asarray(self.w, dtype=float))
        if v.shape != w.shape:
            raise DimensionError(f"V 与 W 形状不一致: {v.shape} vs {w.shape}")
        object.__setattr__(self, "v", _frozen(v))
        object.__setattr__(self, "w", _frozen(w))

    @property
    def r(self) -> int:
        return self.v.shape[1]

    def biorthogonality_error(self) -> float:
        """||W^T V - I||_F"""
        return float(np.linalg.norm(self.w.T @ self.v - np.eye(self.r), 'fro'))


def project(sys: LqoSystem, proj: ProjectionPair, cond_cap=PROJECTION_COND_CAP) -> LqoSystem:
    """Petrov-Galerkin 投影得到 r 阶降阶模型

    A_r=(W^T V)^-1 W^T A V, B_r=(W^T V)^-1 W^T B, C_r=C V, M_kr=V^T M_k V

    Args:
        sys: 全阶系统
        proj: 投影基
        cond_cap: W^T V 条件数上限

    Returns:
        LqoSystem: 降阶系统（M_kr 重新对称化）
    """
    v, w = proj.v, proj.w
    if v.shape[0] != sys.n:
        raise DimensionError(f"投影基行数 {v.shape[0]} 与系统阶数 {sys.n} 不一致")
    gram = w.T @ v
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > cond_cap:
        raise ProjectionError(f"W^T V 奇异或病态 (条件数 {cond:.3e})")

    lu = spla.lu_factor(gram)
    a_r = spla.lu_solve(lu, w.T @ sys.a @ v)
    b_r = spla.lu_solve(lu, w.T @ sys.b)
    c_r = sys.c @ v
    m_r = [v.T @ mk @ v for mk in sys.m_quad]
    logger.debug(f"投影降阶: n={sys.n} -> r={proj.r}, cond(W^T V)={cond:.3e}")
    return LqoSystem(a_r, b_r, c_r, tuple(m_r), sys.name)


@dataclass(frozen=True, eq=False)
class ErrorSystem:
    """误差系统 S - S_r 的状态空间实现（n+r 阶）"""
    system: LqoSystem
    fom_order: int
    rom_order: int

    @property
    def fom_block(self):
        return self.system.a[:self.fom_order, :self.fom_order]

    @property
    def rom_block(self):
        return self.system.a[self.fom_order:, self.fom_order:]


def assemble_error_system(fom: LqoSystem, rom: LqoSystem) -> ErrorSystem:
    """组装误差系统

    A_e = diag(A, A_r), B_e = [B; B_r], C_e = [C, -C_r], M_k,e = diag(M_k, -M_kr)
    """
    if fom.m != rom.m or fom.p != rom.p:
        raise DimensionError(
            f"输入/输出个数不一致: 全阶 (m={fom.m}, p={fom.p}) vs 降阶 (m={rom.m}, p={rom.p})")
    a_e = spla.block_diag(fom.a, rom.a)
    b_e = np.vstack([fom.b, rom.b])
    c_e = np.hstack([fom.c, -rom.c])
    m_e = [spla.block_diag(mk, -mkr) for mk, mkr in zip(fom.m_quad, rom.m_quad)]
    return ErrorSystem(LqoSystem(a_e, b_e, c_e, tuple(m_e), "error"), fom.n, rom.n)


def copy_system(sys: LqoSystem, name: Optional[str] = None) -> LqoSystem:
    return LqoSystem(sys.a, sys.b, sys.c, sys.m_quad, sys.name if name is None else name)
