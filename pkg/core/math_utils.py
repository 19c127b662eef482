import numpy as np
import scipy.linalg as spla

from core.exceptions import SingularityError


def symmetric_part(mat):
    """返回矩阵的对称部分 (M + M^T)/2"""
    mat = np.asarray(mat, dtype=float)
    return 0.5 * (mat + mat.T)


def spectral_abscissa(a):
    """最大特征值实部"""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(a).real))


def fro(mat):
    return float(np.linalg.norm(mat, 'fro')) if np.size(mat) else 0.0


def checked_inverse(mat, cond_cap=1e12, what="矩阵"):
    """带条件数检查的求逆

    Args:
        mat: 方阵
        cond_cap: 条件数上限
        what: 报错时使用的矩阵名称

    Returns:
        np.ndarray: 逆矩阵
    """
    mat = np.asarray(mat, dtype=float)
    cond = np.linalg.cond(mat) if mat.size else 1.0
    if not np.isfinite(cond) or cond > cond_cap:
        raise SingularityError(f"{what}奇异或病态 (条件数 {cond:.3e} > {cond_cap:.1e})")
    return spla.inv(mat)


def min_symmetric_eig(mat):
    """对称矩阵的最小特征值及谱范数"""
    mat = symmetric_part(mat)
    w = np.linalg.eigvalsh(mat)
    return float(w[0]), float(np.max(np.abs(w)))


def is_psd(mat, tol=1e-10):
    """半正定检查，允许 -tol*||M||_2 的舍入误差"""
    lam_min, norm2 = min_symmetric_eig(mat)
    return lam_min >= -tol * max(norm2, np.finfo(float).tiny)
