import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from core.exceptions import RankDeficiencyError, SpectralOverlapError, UnstableSystemError
from core.h2_metrics import cross_solutions, h2_error, h2_norm_sq
from core.lqo_system import copy_system
from core.math_utils import spectral_abscissa
from core.models import random_stable_lqo
from core.optimality import fonc_residuals, optimal_projectors
from core.tsia_engine import (HISTORY_COLUMNS, REASON_CONVERGED, REASON_MAX_ITERS, REFLECT_MARGIN,
                              TsiaConfig, TsiaEngine, default_init, eta, orth, pole_change,
                              reflect_unstable_poles, run, sorted_poles, tau, tsia_step)


def test_default_init_logspace_diagonal():
    rom = default_init(300, 2, 1, 30)
    diag = np.diag(rom.a)
    assert_allclose(diag, -np.logspace(0.0, 4.0, 30))
    assert diag[0] == pytest.approx(-1.0)
    assert diag[-1] == pytest.approx(-1e4)
    assert not np.any(rom.a - np.diag(diag))
    assert_allclose(rom.m_quad[0], np.eye(30))


def test_default_init_small_order():
    rom = default_init(5, 1, 1, 2)
    assert_allclose(rom.a, np.diag([-1.0, -1e4]))
    assert_allclose(rom.b, [[1.0], [0.0]])
    assert_allclose(rom.c, [[1.0, 0.0]])
    assert_allclose(rom.m_quad[0], np.eye(2))


def test_default_init_pads_wide_input():
    rom = default_init(5, 3, 1, 2)
    assert_allclose(rom.b, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def test_default_init_cyclic_fill():
    rom = default_init(6, 2, 1, 3, fill="cyclic")
    assert_allclose(rom.b, [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert_allclose(rom.c, [[1.0, 1.0, 1.0]])
    with pytest.raises(ValueError):
        default_init(6, 2, 1, 3, fill="random")
    with pytest.raises(ValueError):
        default_init(6, 2, 1, 7)


def test_orth_returns_orthonormal_basis():
    mat = np.random.default_rng(0).standard_normal((8, 3))
    q = orth(mat)
    assert_allclose(q.T @ q, np.eye(3), atol=1e-13)
    # 列空间不变
    coeff = np.linalg.lstsq(q, mat, rcond=None)[0]
    assert_allclose(q @ coeff, mat, atol=1e-12)


def test_orth_detects_rank_deficiency():
    col = np.arange(1.0, 7.0).reshape(-1, 1)
    with pytest.raises(RankDeficiencyError):
        orth(np.hstack([col, 2.0 * col]))


def test_step_from_full_order_copy_is_exact():
    fom = random_stable_lqo(4, 2, 2, seed=5)
    rom_next, proj = tsia_step(fom, copy_system(fom))
    assert rom_next.n == fom.n
    assert_allclose(proj.v.T @ proj.v, np.eye(fom.n), atol=1e-13)
    assert_allclose(proj.w.T @ proj.w, np.eye(fom.n), atol=1e-13)
    norm_sq = h2_norm_sq(fom)
    assert abs(h2_error(fom, rom_next, norm_sq)) <= 1e-10 * norm_sq


def test_scalar_step_recovers_system(scalar_fom, make_scalar):
    rom_next, _ = tsia_step(scalar_fom, make_scalar(-3.0, 2.0, 0.5, 0.1))
    assert abs(h2_error(scalar_fom, rom_next)) <= 1e-12
    assert rom_next.a[0, 0] == pytest.approx(-1.0)


def test_step_with_mirrored_spectrum_fails(make_scalar):
    with pytest.raises(SpectralOverlapError):
        tsia_step(make_scalar(-1.0), make_scalar(1.0))


def test_monitors_on_special_roms(random_fom, random_rom):
    norm_sq = h2_norm_sq(random_fom)
    assert tau(random_fom, copy_system(random_fom)) == pytest.approx(-norm_sq, rel=1e-10)
    assert abs(eta(random_fom, copy_system(random_fom), norm_sq)) <= 1e-12

    silent = random_rom.with_matrices(b=np.zeros_like(random_rom.b))
    assert tau(random_fom, silent) == 0.0
    assert eta(random_fom, silent, norm_sq) == pytest.approx(1.0, rel=1e-14)


def test_scalar_monitors(scalar_fom, scalar_rom):
    # ||S_r||^2 = 5/16，交叉项 -2 * 4/9
    assert tau(scalar_fom, scalar_rom) == pytest.approx(5.0 / 16.0 - 8.0 / 9.0)
    assert eta(scalar_fom, scalar_rom) == pytest.approx((0.75 + 5.0 / 16.0 - 8.0 / 9.0) / 0.75)


def test_tau_requires_stable_rom(scalar_fom, make_scalar):
    with pytest.raises(UnstableSystemError):
        tau(scalar_fom, make_scalar(0.5))


def test_tau_eta_identity(random_fom, random_rom):
    norm_sq = h2_norm_sq(random_fom)
    assert tau(random_fom, random_rom) == pytest.approx(
        eta(random_fom, random_rom, norm_sq) * norm_sq - norm_sq, rel=1e-12, abs=1e-12 * norm_sq)


@pytest.mark.parametrize("changes", [
    {"r": 0}, {"r": 11}, {"tol": 0.0}, {"max_iters": 0}, {"monitor": "delta"},
])
def test_invalid_config(random_fom, changes):
    options = {"r": 3, **changes}
    with pytest.raises(ValueError):
        run(random_fom, TsiaConfig(**options))


def test_config_rejects_mismatched_init(random_fom, scalar_fom):
    with pytest.raises(ValueError):
        run(random_fom, TsiaConfig(r=1, init=scalar_fom))


def test_scalar_run_converges_immediately(scalar_fom, make_scalar):
    config = TsiaConfig(r=1, tol=1e-12, init=make_scalar(-3.0, 2.0, 0.5, 0.1))
    result = run(scalar_fom, config)
    assert result.converged
    assert result.reason == REASON_CONVERGED
    assert result.iterations <= 5
    assert abs(h2_error(scalar_fom, result.rom)) <= 1e-12


@pytest.mark.parametrize("seed", range(3))
def test_exact_order_recovery(seed):
    fom = random_stable_lqo(4, 2, 2, seed=seed)
    result = run(fom, TsiaConfig(r=4, tol=1e-10))
    assert result.converged
    norm_sq = h2_norm_sq(fom)
    assert abs(h2_error(fom, result.rom, norm_sq)) / norm_sq <= 1e-10


def test_monitor_identity_along_history(random_fom):
    result = run(random_fom, TsiaConfig(r=3, tol=1e-8, max_iters=30))
    norm_sq = result.fom_h2_sq
    assert norm_sq == pytest.approx(h2_norm_sq(random_fom))
    checked = 0
    for record in result.history:
        if record.eta is None or record.tau is None:
            continue
        assert record.tau == pytest.approx(record.eta * norm_sq - norm_sq, rel=1e-12, abs=1e-12 * norm_sq)
        assert record.eta >= -1e-12
        checked += 1
    assert checked > 0


def test_history_table_columns(random_fom):
    result = run(random_fom, TsiaConfig(r=2, max_iters=5))
    table = result.history_table()
    assert list(table.columns) == HISTORY_COLUMNS
    assert len(table) == result.iterations
    assert list(table["iter"]) == list(range(1, result.iterations + 1))
    assert result.history[0].delta_eta is None


def test_max_iters_reason(random_fom):
    result = run(random_fom, TsiaConfig(r=3, tol=1e-300, max_iters=2))
    assert not result.converged
    assert result.reason == REASON_MAX_ITERS
    assert result.iterations == 2


def test_runs_are_deterministic(random_fom):
    config = TsiaConfig(r=3, tol=1e-10, max_iters=40)
    first = run(random_fom, config)
    second = run(random_fom, config)
    assert [rec.eta for rec in first.history] == [rec.eta for rec in second.history]
    assert [rec.tau for rec in first.history] == [rec.tau for rec in second.history]
    assert np.array_equal(first.rom.a, second.rom.a)


def test_run_without_fom_norm_monitors_tau(random_fom):
    result = run(random_fom, TsiaConfig(r=3, tol=1e-8, max_iters=60, use_fom_norm=False))
    assert result.fom_h2_sq is None
    assert all(rec.eta is None for rec in result.history)
    assert any(rec.tau is not None for rec in result.history)


def test_track_fonc_records_measure(random_fom):
    result = run(random_fom, TsiaConfig(r=2, max_iters=4, track_fonc=True))
    stable = [rec for rec in result.history if rec.rom_stable]
    assert stable
    assert all(rec.fonc_measure is not None for rec in stable)


def test_default_start_with_rank_deficient_bases(random_fom, caplog):
    # m = p = 2 < r: 默认初值下 X 只有两列非零
    x, _, _ = cross_solutions(random_fom, default_init(10, 2, 2, 4))
    assert np.linalg.matrix_rank(x) == 2
    x, z1, z2 = cross_solutions(random_fom, default_init(10, 2, 2, 4, fill="cyclic"))
    assert np.linalg.matrix_rank(x) == 4
    assert np.linalg.matrix_rank(z1 + 2.0 * z2) == 4

    with caplog.at_level(logging.WARNING, logger="core.tsia_engine"):
        result = TsiaEngine(random_fom, TsiaConfig(r=4, max_iters=3)).run()
    assert any("循环填充" in rec.getMessage() for rec in caplog.records)
    assert result.iterations == 3 or result.converged
    assert result.rom.n == 4
    assert np.linalg.matrix_rank(result.projectors.v) == 4
    assert np.linalg.matrix_rank(result.projectors.w) == 4


@pytest.mark.parametrize("seed", range(3))
def test_converged_run_satisfies_optimality_conditions(seed):
    fom = random_stable_lqo(30, 2, 2, seed=seed)
    result = run(fom, TsiaConfig(r=5, tol=1e-12, monitor="poles", max_iters=1000))
    assert result.converged
    assert result.history[-1].delta_poles <= 1e-12
    assert fonc_residuals(fom, result.rom).combined <= 1e-8
    proj = optimal_projectors(fom, result.rom)
    assert proj.biorthogonality_error() <= 1e-8


def test_orth_ignores_column_scaling():
    mat = np.random.default_rng(1).standard_normal((8, 3)) * np.array([1.0, 1e-9, 1e9])
    q = orth(mat)
    assert_allclose(q.T @ q, np.eye(3), atol=1e-12)
    coeff = np.linalg.lstsq(q, mat, rcond=None)[0]
    assert_allclose(q @ coeff, mat, rtol=1e-10, atol=1e-20)


def test_sorted_poles_and_pole_change():
    poles = sorted_poles(np.diag([-3.0, -1.0, -2.0]))
    assert_allclose(poles, [-3.0, -2.0, -1.0])
    assert pole_change(poles, poles) == 0.0
    moved = np.array([-3.0, -2.0, -1.3])
    assert pole_change(moved, poles) == pytest.approx(0.1)
    pair = sorted_poles(np.array([[-1.0, 2.0], [-2.0, -1.0]]))
    assert_allclose(pair, [-1.0 - 2.0j, -1.0 + 2.0j])


def test_reflect_real_unstable_pole(random_rom):
    rom = random_rom.with_matrices(a=np.diag([1.0, -2.0, -3.0]))
    reflected = reflect_unstable_poles(rom)
    shift = REFLECT_MARGIN * np.linalg.norm(rom.a, 'fro')
    assert_allclose(sorted_poles(reflected.a), [-3.0, -2.0, -1.0 - shift], atol=1e-12)
    assert np.array_equal(reflected.b, rom.b)
    assert np.array_equal(reflected.c, rom.c)
    assert np.array_equal(reflected.m_quad[0], rom.m_quad[0])


def test_reflect_complex_unstable_pair(random_rom):
    a = np.zeros((3, 3))
    a[:2, :2] = [[0.5, 2.0], [-2.0, 0.5]]
    a[2, 2] = -1.0
    reflected = reflect_unstable_poles(random_rom.with_matrices(a=a))
    shift = REFLECT_MARGIN * np.linalg.norm(a, 'fro')
    expected = np.sort(np.array([-0.5 - shift - 2.0j, -0.5 - shift + 2.0j, -1.0]))
    assert_allclose(sorted_poles(reflected.a), expected, atol=1e-12)


def test_reflect_keeps_stable_rom(random_rom):
    reflected = reflect_unstable_poles(random_rom)
    assert_allclose(sorted_poles(reflected.a), sorted_poles(random_rom.a), rtol=1e-12)


def test_unstable_iterate_restarts_from_reflected_rom(random_fom, random_rom):
    unstable = random_rom.with_matrices(a=np.diag([0.5, -2.0, -3.0]))
    engine = TsiaEngine(random_fom, TsiaConfig(r=3))
    restart = engine._next_start(unstable, stable=False)
    assert spectral_abscissa(restart.a) < 0.0
    assert engine._next_start(random_rom, stable=True) is random_rom

    keep = TsiaEngine(random_fom, TsiaConfig(r=3, reflect_unstable=False))
    assert keep._next_start(unstable, stable=False) is unstable


def test_unstable_explicit_init_is_recovered(scalar_fom, make_scalar):
    result = run(scalar_fom, TsiaConfig(r=1, tol=1e-12, init=make_scalar(1.0, 2.0, 0.5, 0.1)))
    assert result.converged
    assert all(rec.rom_stable for rec in result.history)
    assert abs(h2_error(scalar_fom, result.rom)) <= 1e-12


def test_pole_monitor_converges_on_repeated_poles(scalar_fom, make_scalar):
    config = TsiaConfig(r=1, tol=1e-12, monitor="poles", init=make_scalar(-3.0, 2.0, 0.5, 0.1))
    result = run(scalar_fom, config)
    assert result.converged
    assert result.history[0].delta_poles is None
    assert result.history[-1].delta_poles <= 1e-12
    assert result.rom.a[0, 0] == pytest.approx(-1.0)
