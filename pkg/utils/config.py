import os


class AppConfig:
    """运行环境配置（环境变量优先，其次默认值）"""

    ENV_THREADS = "LQOMOR_THREADS"

    def __init__(self, environ=None):
        self.environ = os.environ if environ is None else environ
        self.defaults = {
            "threads": os.cpu_count() or 1,
            "csv_float_format": "%.17g",
        }

    def get(self, key):
        """获取配置值，如果没有则使用默认值"""
        if key == "threads":
            return self.get_threads()
        return self.defaults[key]

    def get_threads(self):
        """扫描任务的线程数，LQOMOR_THREADS 非法时回退到默认值"""
        raw = self.environ.get(self.ENV_THREADS)
        if raw is None or raw == "":
            return self.defaults["threads"]
        try:
            value = int(raw)
        except ValueError:
            return self.defaults["threads"]
        return max(value, 1)


config = AppConfig()
