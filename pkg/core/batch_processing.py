"""
批量降阶模块
对一组降阶阶数 r 并行运行 TSIA 与平衡截断，汇总相对 H2 误差
"""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas as pd

from core.balanced_truncation import balanced_factorization, lqo_bt
from core.exceptions import LqoError
from core.h2_metrics import h2_error, h2_norm_sq
from core.lqo_system import LqoSystem
from core.math_utils import spectral_abscissa
from core.tsia_engine import TsiaConfig, run
from utils.config import config as app_config

logger = logging.getLogger(__name__)

METHODS = ("tsia", "bt")


def parse_order_range(text: str) -> List[int]:
    """解析降阶阶数表达式

    示例:
    "30"      -> [30]
    "2:2:30"  -> [2, 4, ..., 30]（起:步长:止，含端点）
    "2:6"     -> [2, 3, 4, 5, 6]
    "2,5,8"   -> [2, 5, 8]
    """
    text = text.strip()
    match = re.match(r'^(\d+):(?:(\d+):)?(\d+)$', text)
    if match:
        start = int(match.group(1))
        step = int(match.group(2)) if match.group(2) else 1
        stop = int(match.group(3))
        if step < 1 or start > stop:
            raise ValueError(f"非法的阶数范围: {text}")
        return list(range(start, stop + 1, step))
    if re.match(r'^\d+(,\d+)*$', text):
        return [int(item) for item in text.split(',')]
    raise ValueError(f"无法解析的阶数表达式: {text}")


@dataclass
class SweepEntry:
    """单个 (方法, r) 的降阶结果"""
    r: int
    method: str
    rel_h2_error: float
    converged: bool
    reason: str
    iterations: int
    rom_stable: bool
    message: str = ""


def _relative_error(fom, rom, fom_h2_sq):
    if not spectral_abscissa(rom.a) < 0.0:
        return float('nan'), False
    return h2_error(fom, rom, fom_h2_sq) / fom_h2_sq, True


def reduce_once(fom: LqoSystem, method: str, r: int, fom_h2_sq: float,
                tsia_options: Optional[Dict] = None, factorization=None):
    """单次降阶

    Returns:
        Tuple: (降阶模型或 None, SweepEntry, 方法相关的附加结果)
    """
    try:
        if method == "tsia":
            tsia_run = run(fom, TsiaConfig(r=r, **(tsia_options or {})), fom_h2_sq)
            rel, stable = _relative_error(fom, tsia_run.rom, fom_h2_sq)
            entry = SweepEntry(r, method, rel, tsia_run.converged, tsia_run.reason,
                               tsia_run.iterations, stable, tsia_run.message)
            return tsia_run.rom, entry, tsia_run
        if method == "bt":
            reduction = lqo_bt(fom, r, factorization)
            rel, stable = _relative_error(fom, reduction.rom, fom_h2_sq)
            entry = SweepEntry(r, method, rel, True, "converged", 0, stable)
            return reduction.rom, entry, reduction
    except LqoError as e:
        logger.error(f"{method} r={r} 降阶失败: {e}")
        return None, SweepEntry(r, method, float('nan'), False, "solver_failure", 0, False, str(e)), None
    raise ValueError(f"未知的降阶方法: {method}")


def sweep_orders(fom: LqoSystem, orders: Iterable[int], methods=METHODS,
                 tsia_options: Optional[Dict] = None, threads: Optional[int] = None) -> pd.DataFrame:
    """对多个阶数并行降阶

    ||S||^2 与平衡截断的因子只计算一次，由所有任务共享。

    Args:
        fom: 全阶模型
        orders: 降阶阶数列表
        methods: 方法列表 ("tsia", "bt")
        tsia_options: TsiaConfig 的其余参数
        threads: 线程数，None 时读取 LQOMOR_THREADS

    Returns:
        pd.DataFrame: 每行一个 (r, method) 结果，按 r、方法排序
    """
    orders = sorted(set(int(r) for r in orders))
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"未知的降阶方法: {method}")
    fom_h2_sq = h2_norm_sq(fom)
    factorization = balanced_factorization(fom) if "bt" in methods else None
    threads = threads or app_config.get_threads()

    tasks = [(method, r) for r in orders for method in methods]
    logger.info(f"批量降阶: {len(tasks)} 个任务, {threads} 线程")
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(reduce_once, fom, method, r, fom_h2_sq, tsia_options, factorization)
                   for method, r in tasks]
        entries = [future.result()[1] for future in futures]

    df = pd.DataFrame([asdict(entry) for entry in entries])
    order = {name: i for i, name in enumerate(METHODS)}
    df = df.sort_values(by=["r", "method"], key=lambda col: col.map(order) if col.name == "method" else col)
    return df.reset_index(drop=True)


def wide_error_table(df: pd.DataFrame) -> pd.DataFrame:
    """转换为 r × 方法 的相对误差表（列: r, tsia, bt）"""
    table = df.pivot(index="r", columns="method", values="rel_h2_error").reset_index()
    table.columns.name = None
    return table[["r"] + [name for name in METHODS if name in table.columns]]


def count_non_monotone(values) -> int:
    """误差序列中上升的步数"""
    values = np.asarray(values, dtype=float)
    return int(np.sum(np.diff(values) > 0))
