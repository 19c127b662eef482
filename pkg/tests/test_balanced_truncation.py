import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from core.balanced_truncation import balanced_factorization, lqo_bt, psd_factor
from core.exceptions import RankDeficiencyError, UnstableSystemError
from core.h2_metrics import gramians, h2_error, h2_norm_sq
from core.lqo_system import LqoSystem
from core.models import random_stable_lqo


def test_scalar_value(scalar_fom):
    reduction = lqo_bt(scalar_fom, 1)
    # sqrt(P Q) = sqrt(1/2 * 3/4)
    assert reduction.hankel_like_values[0] == pytest.approx(np.sqrt(0.375))
    assert reduction.rom_stable
    assert abs(h2_error(scalar_fom, reduction.rom)) <= 1e-14


def test_full_order_truncation_is_exact():
    fom = random_stable_lqo(6, 2, 2, seed=4)
    reduction = lqo_bt(fom, 6)
    norm_sq = h2_norm_sq(fom)
    assert abs(h2_error(fom, reduction.rom, norm_sq)) <= 1e-10 * norm_sq


def test_projectors_are_biorthogonal(random_fom):
    reduction = lqo_bt(random_fom, 3)
    assert reduction.projectors.biorthogonality_error() <= 1e-8
    assert reduction.rom.dims == (3, random_fom.m, random_fom.p)


def test_values_sorted_and_nonnegative(random_fom):
    values = lqo_bt(random_fom, 2).hankel_like_values
    assert values.size == random_fom.n
    assert np.all(values >= 0.0)
    assert np.all(np.diff(values) <= 0.0)


def test_full_order_rom_is_balanced():
    fom = random_stable_lqo(6, 2, 2, seed=4)
    reduction = lqo_bt(fom, 6)
    gram = gramians(reduction.rom)
    s = reduction.hankel_like_values
    assert_allclose(gram.p_gram, np.diag(s), atol=1e-7 * s[0])
    assert_allclose(gram.q_gram, np.diag(s), atol=1e-7 * s[0])


def test_order_above_numerical_rank():
    # 只有第一个状态可达，P 的秩为 1
    a = np.diag([-1.0, -2.0, -3.0, -4.0])
    b = np.eye(4)[:, :1]
    sys = LqoSystem(a, b, np.ones((1, 4)), (np.eye(4),))
    fac = balanced_factorization(sys)
    assert fac.numerical_rank == 1
    with pytest.raises(RankDeficiencyError):
        lqo_bt(sys, 2, fac)
    with pytest.raises(RankDeficiencyError):
        lqo_bt(sys, 0, fac)


def test_unstable_fom_rejected(make_scalar):
    with pytest.raises(UnstableSystemError):
        lqo_bt(make_scalar(0.5), 1)


def test_negative_eigenvalues_clipped_with_warning(caplog):
    gram = np.diag([1.0, -0.1])
    with caplog.at_level(logging.WARNING, logger="core.balanced_truncation"):
        fac = psd_factor(gram)
    assert "截断" in caplog.text
    assert_allclose(fac @ fac.T, np.diag([1.0, 0.0]), atol=1e-15)


def test_psd_factor_reconstructs(random_fom):
    p_gram = gramians(random_fom).p_gram
    fac = psd_factor(p_gram)
    assert_allclose(fac @ fac.T, p_gram, atol=1e-12 * np.abs(p_gram).max())


def test_shared_factorization_reused(random_fom):
    fac = balanced_factorization(random_fom)
    shared = lqo_bt(random_fom, 3, fac)
    fresh = lqo_bt(random_fom, 3)
    assert_allclose(shared.rom.a, fresh.rom.a)
    assert_allclose(shared.rom.b, fresh.rom.b)


def test_rom_name(random_fom):
    assert lqo_bt(random_fom, 2).rom.name == f"{random_fom.name}_bt2"
