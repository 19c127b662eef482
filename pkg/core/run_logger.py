#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
降阶运行日志模块
为每次降阶生成逐字段记录的 CSV 日志，并导出 TSIA 迭代历史
"""

import csv
import logging
import os
from datetime import datetime
from typing import Any, Dict, Optional

from core.tsia_engine import TsiaRun
from utils.file_io import export_table

logger = logging.getLogger(__name__)


class RunLogger:
    """降阶运行日志记录器"""

    def __init__(self):
        # 日志字段 (字段名, 说明)
        self.log_fields = [
            ("Date", "当前日期"),
            ("Time", "当前时间"),
            ("Method", "降阶方法 tsia / bt"),
            ("System", "全阶模型名称"),
            ("n", "全阶阶数"),
            ("m", "输入个数"),
            ("p", "输出个数"),
            ("r", "降阶阶数"),
            ("Tol", "TSIA 收敛容差"),
            ("Monitor", "TSIA 收敛监控量"),
            ("Iterations", "TSIA 迭代次数"),
            ("Converged", "是否收敛"),
            ("Reason", "结束原因"),
            ("Relative_H2_error", "相对 H2 误差平方 η"),
            ("FONC_measure", "一阶必要条件综合相对残差"),
            ("ROM_stable", "降阶模型是否稳定"),
            ("Elapsed(s)", "计算耗时"),
        ]

    @property
    def field_names(self):
        return [name for name, _ in self.log_fields]

    def _prepare_log_data(self, run_data: Dict[str, Any]) -> Dict[str, str]:
        now = datetime.now()

        def format_value(value):
            if value is None:
                return ""
            if isinstance(value, bool):
                return str(value)
            if isinstance(value, float):
                return f"{value:.17g}"
            return str(value)

        log_data = {"Date": now.strftime("%Y%m%d"), "Time": now.strftime("%H:%M:%S")}
        for name in self.field_names[2:]:
            log_data[name] = format_value(run_data.get(name))
        return log_data

    def generate_run_log(self, output_directory: str, run_data: Dict[str, Any],
                         file_stem: str = "reduction") -> str:
        """生成运行日志 CSV 文件（每行一个字段: 字段名, 值）

        Args:
            output_directory: 输出目录
            run_data: 以日志字段名为键的数据
            file_stem: 文件名前缀

        Returns:
            str: 日志文件路径
        """
        os.makedirs(output_directory, exist_ok=True)
        log_file_path = os.path.join(output_directory, f"{file_stem}_run_log.csv")
        log_data = self._prepare_log_data(run_data)
        try:
            with open(log_file_path, 'w', newline='', encoding='utf-8') as csvfile:
                writer = csv.writer(csvfile)
                for field_name, field_value in log_data.items():
                    writer.writerow([field_name, field_value])
        except OSError as e:
            logger.error(f"写入运行日志失败: {e}")
            raise
        logger.info(f"运行日志已生成: {log_file_path}")
        return log_file_path

    def read_run_log(self, log_file_path: str) -> Dict[str, str]:
        with open(log_file_path, 'r', newline='', encoding='utf-8') as csvfile:
            return {row[0]: (row[1] if len(row) > 1 else "") for row in csv.reader(csvfile) if row}

    def tsia_run_data(self, run: TsiaRun, fom, r, tol, monitor, fonc_measure: Optional[float] = None,
                      elapsed: Optional[float] = None) -> Dict[str, Any]:
        """由 TsiaRun 整理日志数据"""
        stable = run.history[-1].rom_stable if run.history else None
        return {
            "Method": "tsia",
            "System": fom.name,
            "n": fom.n, "m": fom.m, "p": fom.p, "r": r,
            "Tol": tol,
            "Monitor": monitor,
            "Iterations": run.iterations,
            "Converged": run.converged,
            "Reason": run.reason,
            "Relative_H2_error": run.final_eta,
            "FONC_measure": fonc_measure,
            "ROM_stable": stable,
            "Elapsed(s)": elapsed,
        }

    def write_history(self, run: TsiaRun, file_path: str) -> str:
        """导出迭代历史 CSV"""
        return export_table(run.history_table(), file_path)
