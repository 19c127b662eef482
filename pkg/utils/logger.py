import logging
import sys

LOG_FORMAT = "[%(asctime)s] %(message)s"
DATE_FORMAT = "%H:%M:%S"


def setup_logging(level=logging.INFO, stream=None):
    """安装根日志处理器，输出格式 [HH:MM:SS] 消息

    重复调用只更新级别，不重复添加处理器。
    """
    root = logging.getLogger()
    root.setLevel(level)
    for handler in root.handlers:
        if getattr(handler, "_lqo_handler", False):
            handler.setLevel(level)
            return root
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, DATE_FORMAT))
    handler.setLevel(level)
    handler._lqo_handler = True
    root.addHandler(handler)
    return root


def level_from_flags(verbose=False, quiet=False):
    if verbose:
        return logging.DEBUG
    if quiet:
        return logging.WARNING
    return logging.INFO
