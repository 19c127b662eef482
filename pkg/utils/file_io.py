"""
系统文件包读写
一个文件包是一个目录: manifest.json 描述维度与文件角色，
A、B、C、M_1..M_p 各存为一个 Matrix Market 文件（17 位有效数字）
"""

import json
import logging
import os

import numpy as np
import pandas as pd
import scipy.io as sio
import scipy.sparse as sp

from core.exceptions import BundleFormatError
from core.lqo_system import LqoSystem
from utils.config import config as app_config

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
BUNDLE_FORMAT = "lqo-bundle"
BUNDLE_VERSION = 1
MM_PRECISION = 17


def _manifest_path(path):
    path = os.fspath(path)
    if os.path.isdir(path):
        return os.path.join(path, MANIFEST_NAME)
    return path


def save_bundle(sys: LqoSystem, path, metadata=None) -> str:
    """将系统写为文件包

    Args:
        sys: LQO 系统
        path: 目标目录（不存在时创建）
        metadata: 附加元数据（写入 manifest）

    Returns:
        str: manifest 文件路径
    """
    path = os.fspath(path)
    os.makedirs(path, exist_ok=True)
    files = {"A": "A.mtx", "B": "B.mtx", "C": "C.mtx",
             "M": [f"M{k + 1}.mtx" for k in range(sys.p)]}

    sio.mmwrite(os.path.join(path, files["A"]), np.asarray(sys.a), precision=MM_PRECISION)
    sio.mmwrite(os.path.join(path, files["B"]), np.asarray(sys.b), precision=MM_PRECISION)
    sio.mmwrite(os.path.join(path, files["C"]), np.asarray(sys.c), precision=MM_PRECISION)
    for name, mk in zip(files["M"], sys.m_quad):
        sio.mmwrite(os.path.join(path, name), np.asarray(mk), precision=MM_PRECISION,
                    symmetry='symmetric')

    manifest = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "name": sys.name,
        "dims": {"n": sys.n, "m": sys.m, "p": sys.p},
        "files": files,
        "metadata": metadata or {},
    }
    manifest_file = os.path.join(path, MANIFEST_NAME)
    with open(manifest_file, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=4, ensure_ascii=False)
    logger.info(f"系统文件包已保存: {path} (n={sys.n}, m={sys.m}, p={sys.p})")
    return manifest_file


def read_manifest(path):
    manifest_file = _manifest_path(path)
    try:
        with open(manifest_file, 'r', encoding='utf-8') as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise BundleFormatError(f"找不到 manifest: {manifest_file}")
    except json.JSONDecodeError as e:
        raise BundleFormatError(f"manifest 不是合法 JSON: {manifest_file} ({e})")
    for key in ("dims", "files"):
        if key not in manifest:
            raise BundleFormatError(f"manifest 缺少字段 '{key}': {manifest_file}")
    return manifest, os.path.dirname(os.path.abspath(manifest_file))


def _read_matrix(folder, name, shape, role):
    file_path = os.path.join(folder, name)
    try:
        info = sio.mminfo(file_path)
        mat = sio.mmread(file_path)
    except FileNotFoundError:
        raise BundleFormatError(f"{role} 文件不存在: {file_path}")
    except (ValueError, IndexError, OSError) as e:
        raise BundleFormatError(f"{role} 文件不是合法的 Matrix Market 格式: {file_path} ({e})")
    if sp.issparse(mat):
        mat = mat.toarray()
    mat = np.asarray(mat, dtype=float)
    if mat.ndim == 1:
        mat = mat.reshape(-1, 1)
    if mat.shape != tuple(shape):
        raise BundleFormatError(f"{role} 维度 {mat.shape} 与 manifest 声明 {tuple(shape)} 不一致")
    return mat, info[5]


def load_bundle(path) -> LqoSystem:
    """读取文件包并严格核对维度

    未标记 symmetric 的非对称 M_k 文件给出警告并取对称部分。
    """
    manifest, folder = read_manifest(path)
    try:
        n, m, p = (int(manifest["dims"][key]) for key in ("n", "m", "p"))
    except (KeyError, TypeError, ValueError):
        raise BundleFormatError(f"manifest dims 字段不完整: {manifest['dims']}")
    files = manifest["files"]
    m_files = files.get("M", [])
    if len(m_files) != p:
        raise BundleFormatError(f"manifest 声明 p={p}，但列出 {len(m_files)} 个 M 文件")

    a, _ = _read_matrix(folder, files["A"], (n, n), "A")
    b, _ = _read_matrix(folder, files["B"], (n, m), "B")
    c, _ = _read_matrix(folder, files["C"], (p, n), "C")
    m_quad = []
    for k, name in enumerate(m_files):
        mk, symmetry = _read_matrix(folder, name, (n, n), f"M_{k + 1}")
        if symmetry == "general" and not np.array_equal(mk, mk.T):
            logger.warning(f"M_{k + 1} 文件未标记 symmetric 且矩阵不对称，已取对称部分")
        m_quad.append(mk)
    return LqoSystem(a, b, c, tuple(m_quad), manifest.get("name", ""))


def bundle_metadata(path):
    manifest, _ = read_manifest(path)
    return manifest.get("metadata", {})


def export_table(df: pd.DataFrame, file_path) -> str:
    """将表格导出为 CSV 或 XLSX（按扩展名）

    Returns:
        str: 实际写入的文件路径
    """
    file_path = os.fspath(file_path)
    folder = os.path.dirname(file_path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    if file_path.lower().endswith('.xlsx'):
        df.to_excel(file_path, index=False)
    else:
        if not file_path.lower().endswith('.csv'):
            file_path += '.csv'
        df.to_csv(file_path, index=False, float_format=app_config.get("csv_float_format"))
    logger.info(f"表格已导出: {file_path}")
    return file_path


def write_json(data, file_path) -> str:
    file_path = os.fspath(file_path)
    folder = os.path.dirname(file_path)
    if folder:
        os.makedirs(folder, exist_ok=True)
    with open(file_path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=4, ensure_ascii=False)
    return file_path
