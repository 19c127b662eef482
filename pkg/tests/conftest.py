import numpy as np
import pytest

from core.lqo_system import LqoSystem
from core.models import random_stable_lqo


def _scalar(a, b=1.0, c=1.0, m=1.0, name=""):
    return LqoSystem(np.array([[a]]), np.array([[b]]), np.array([[c]]), (np.array([[m]]),), name)


@pytest.fixture
def make_scalar():
    """标量 LQO 系统工厂 (a, b, c, m)"""
    return _scalar


@pytest.fixture
def scalar_fom():
    # P = 1/2, Q1 = 1/2, Q2 = 1/4, Q = 3/4
    return _scalar(-1.0, name="scalar_fom")


@pytest.fixture
def scalar_rom():
    # 与 scalar_fom 配对: X = 1/3, Z = -4/9, P_r = 1/4
    return _scalar(-2.0, name="scalar_rom")


@pytest.fixture
def random_fom():
    return random_stable_lqo(10, 2, 2, seed=3)


@pytest.fixture
def random_rom():
    return random_stable_lqo(3, 2, 2, seed=11)
