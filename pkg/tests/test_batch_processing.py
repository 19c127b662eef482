import logging

import numpy as np
import pandas as pd
import pytest

from core.batch_processing import (count_non_monotone, parse_order_range, reduce_once,
                                   sweep_orders, wide_error_table)
from core.h2_metrics import h2_norm_sq
from core.models import random_stable_lqo
from utils.config import AppConfig
from utils.logger import level_from_flags, setup_logging


@pytest.mark.parametrize("text, expected", [
    ("30", [30]),
    ("2:2:10", [2, 4, 6, 8, 10]),
    ("2:5", [2, 3, 4, 5]),
    ("2,5,8", [2, 5, 8]),
    (" 3 ", [3]),
])
def test_parse_order_range(text, expected):
    assert parse_order_range(text) == expected


@pytest.mark.parametrize("text", ["", "a:b", "5:2", "2:0:8", "1,,2"])
def test_parse_order_range_rejects(text):
    with pytest.raises(ValueError):
        parse_order_range(text)


@pytest.fixture(scope="module")
def sweep_fom():
    return random_stable_lqo(8, 1, 1, seed=6)


def test_sweep_table(sweep_fom):
    df = sweep_orders(sweep_fom, [3, 1, 2], tsia_options={"max_iters": 50}, threads=2)
    assert len(df) == 6
    assert df["r"].tolist() == [1, 1, 2, 2, 3, 3]
    assert df["method"].tolist() == ["tsia", "bt"] * 3
    bt = df[df["method"] == "bt"]
    assert bt["converged"].all()
    assert (bt["rel_h2_error"] >= 0.0).all()

    wide = wide_error_table(df)
    assert list(wide.columns) == ["r", "tsia", "bt"]
    assert wide["r"].tolist() == [1, 2, 3]


def test_sweep_rejects_unknown_method(sweep_fom):
    with pytest.raises(ValueError):
        sweep_orders(sweep_fom, [1], methods=("irka",))


def test_reduce_once_reports_failure(sweep_fom):
    # r 超出数值秩时平衡截断失败，记录为 solver_failure
    rom, entry, extra = reduce_once(sweep_fom, "bt", 50, h2_norm_sq(sweep_fom))
    assert rom is None and extra is None
    assert entry.reason == "solver_failure"
    assert np.isnan(entry.rel_h2_error)
    assert entry.message


def test_reduce_once_unknown_method(sweep_fom):
    with pytest.raises(ValueError):
        reduce_once(sweep_fom, "irka", 2, 1.0)


def test_count_non_monotone():
    assert count_non_monotone([1.0, 0.5, 0.6, 0.1, 0.2]) == 2
    assert count_non_monotone(pd.Series([3.0, 2.0, 1.0])) == 0


@pytest.mark.parametrize("raw, expected", [("3", 3), ("0", 1), ("-2", 1)])
def test_thread_count_from_environment(raw, expected):
    assert AppConfig({"LQOMOR_THREADS": raw}).get_threads() == expected


def test_invalid_thread_count_falls_back():
    default = AppConfig({}).get_threads()
    assert default >= 1
    assert AppConfig({"LQOMOR_THREADS": "many"}).get_threads() == default
    assert AppConfig({"LQOMOR_THREADS": ""}).get_threads() == default


def test_setup_logging_is_idempotent():
    root = setup_logging(logging.INFO)
    count = len(root.handlers)
    setup_logging(logging.DEBUG)
    assert len(root.handlers) == count
    assert root.level == logging.DEBUG
    assert level_from_flags(quiet=True) == logging.WARNING
    assert level_from_flags(verbose=True, quiet=True) == logging.DEBUG
    setup_logging(logging.WARNING)
