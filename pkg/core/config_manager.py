#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
配置文件管理模块
管理降阶计算的默认参数（收敛容差、残差阈值、仿真步长、输出目录等）
"""

import json
import logging
import os
import shutil
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)


class ConfigManager:
    """配置管理器"""

    def __init__(self, config_dir: Optional[str] = None):
        # 配置文件路径
        self.config_dir = config_dir or os.path.join("Data", "Config")
        self.config_file = os.path.join(self.config_dir, "lqo_config.json")

        # 默认配置
        self.default_config = {
            "tsia_tol": 1e-10,
            "tsia_max_iters": 500,
            "tsia_monitor": "eta",
            "residual_tol": 1e-8,
            "cond_cap": 1e12,
            "unstable_patience": 10,
            "rank_tol": 1e-12,
            "sim_dt": 1e-3,
            "output_dir": os.path.join("Data", "Reduction"),
        }

        self._config = {}
        self.load_config()

    def _ensure_config_dir(self):
        os.makedirs(self.config_dir, exist_ok=True)

    def load_config(self) -> Dict[str, Any]:
        """加载配置文件，缺失的键用默认值补齐

        Returns:
            Dict: 配置字典
        """
        try:
            if os.path.exists(self.config_file):
                with open(self.config_file, 'r', encoding='utf-8') as f:
                    loaded_config = json.load(f)
                self._config = {**self.default_config, **loaded_config}
                logger.debug(f"配置文件加载成功: {self.config_file}")
            else:
                self._config = self.default_config.copy()
        except (json.JSONDecodeError, IOError) as e:
            logger.warning(f"加载配置文件失败，使用默认配置: {e}")
            self._config = self.default_config.copy()
        return self._config

    def save_config(self) -> bool:
        """保存配置到文件（已有文件先备份为 .backup）

        Returns:
            bool: 保存是否成功
        """
        try:
            self._ensure_config_dir()
            if os.path.exists(self.config_file):
                try:
                    shutil.copy2(self.config_file, self.config_file + ".backup")
                except OSError as e:
                    logger.warning(f"创建配置文件备份失败: {e}")
            with open(self.config_file, 'w', encoding='utf-8') as f:
                json.dump(self._config, f, indent=4, ensure_ascii=False)
            logger.info(f"配置文件保存成功: {self.config_file}")
            return True
        except IOError as e:
            logger.error(f"保存配置文件失败: {e}")
            return False

    def get(self, key: str) -> Any:
        return self._config.get(key, self.default_config.get(key))

    def get_float(self, key: str) -> float:
        return float(self.get(key))

    def get_int(self, key: str) -> int:
        return int(self.get(key))

    def set(self, key: str, value: Any) -> bool:
        """设置单个配置项并保存

        Returns:
            bool: 设置是否成功
        """
        if key not in self.default_config:
            logger.error(f"未知的配置项: {key}")
            return False
        try:
            # 按默认值的类型转换
            kind = type(self.default_config[key])
            self._config[key] = kind(value)
        except (ValueError, TypeError) as e:
            logger.error(f"设置配置项 {key} 失败: {e}")
            return False
        return self.save_config()

    def get_tsia_tol(self) -> float:
        return self.get_float("tsia_tol")

    def get_tsia_max_iters(self) -> int:
        return self.get_int("tsia_max_iters")

    def get_tsia_monitor(self) -> str:
        return str(self.get("tsia_monitor"))

    def get_residual_tol(self) -> float:
        return self.get_float("residual_tol")

    def get_sim_dt(self) -> float:
        return self.get_float("sim_dt")

    def get_output_dir(self) -> str:
        return str(self.get("output_dir"))

    def tsia_options(self) -> Dict[str, Any]:
        """TsiaConfig 的关键字参数（不含 r）"""
        return {
            "tol": self.get_tsia_tol(),
            "max_iters": self.get_tsia_max_iters(),
            "monitor": self.get_tsia_monitor(),
            "unstable_patience": self.get_int("unstable_patience"),
            "rank_tol": self.get_float("rank_tol"),
            "residual_tol": self.get_residual_tol(),
            "cond_cap": self.get_float("cond_cap"),
        }

    def get_all_config(self) -> Dict[str, Any]:
        return self._config.copy()

    def update_config(self, new_config: Dict[str, Any]) -> bool:
        """更新多个配置项

        Args:
            new_config: 新的配置字典

        Returns:
            bool: 更新是否成功
        """
        unknown = [key for key in new_config if key not in self.default_config]
        if unknown:
            logger.error(f"未知的配置项: {unknown}")
            return False
        self._config.update(new_config)
        return self.save_config()

    def reset_to_default(self) -> bool:
        self._config = self.default_config.copy()
        return self.save_config()

    def get_config_path(self) -> str:
        return self.config_file

    def is_config_exist(self) -> bool:
        return os.path.exists(self.config_file)

