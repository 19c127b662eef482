import json
import os

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_array_equal

from cli.commands import EXIT_MAX_ITERS, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from core.models import random_stable_lqo
from utils.file_io import bundle_metadata, load_bundle, save_bundle


@pytest.fixture
def cli(tmp_path):
    config_dir = str(tmp_path / "config")

    def invoke(*args):
        return main(["--config-dir", config_dir, "-q", *[str(arg) for arg in args]])
    return invoke


@pytest.fixture
def fom_bundle(cli, tmp_path):
    path = tmp_path / "fom"
    assert cli("generate", "random", "--n", 8, "--seed", 4, "--out", path) == EXIT_OK
    return path


def test_generate_is_deterministic(cli, tmp_path):
    for name in ("a", "b"):
        assert cli("generate", "random", "--n", 6, "--m", 2, "--p", 2, "--seed", 9,
                   "--out", tmp_path / name) == EXIT_OK
    first, second = load_bundle(tmp_path / "a"), load_bundle(tmp_path / "b")
    assert_array_equal(first.a, second.a)
    assert_array_equal(first.m_quad[1], second.m_quad[1])
    assert bundle_metadata(tmp_path / "a")["seed"] == 9


def test_generate_advection_diffusion(cli, tmp_path):
    assert cli("generate", "advdiff", "--n", 20, "--out", tmp_path / "ad") == EXIT_OK
    sys = load_bundle(tmp_path / "ad")
    assert sys.dims == (20, 2, 1)
    meta = bundle_metadata(tmp_path / "ad")
    assert meta["cost_offset"] == pytest.approx(0.5)
    assert meta["signal_channels"] == [1]
    assert meta["scheme"] == "central"


def test_generate_upwind_advection_diffusion(cli, tmp_path):
    assert cli("generate", "advdiff", "--n", 20, "--scheme", "upwind", "--out", tmp_path / "up") == EXIT_OK
    assert bundle_metadata(tmp_path / "up")["scheme"] == "upwind"
    assert cli("generate", "advdiff", "--n", 20, "--out", tmp_path / "ad") == EXIT_OK
    assert not np.allclose(load_bundle(tmp_path / "up").a, load_bundle(tmp_path / "ad").a)


def test_generate_rejects_bad_alpha(cli, tmp_path):
    assert cli("generate", "advdiff", "--alpha", 0, "--out", tmp_path / "bad") == EXIT_USAGE


def test_unknown_subcommand_exits_with_usage(cli):
    with pytest.raises(SystemExit) as info:
        cli("shrink")
    assert info.value.code == 2


def test_reduce_order_must_be_below_n(cli, fom_bundle, tmp_path):
    assert cli("reduce", fom_bundle, "--r", 8, "--out", tmp_path / "r8") == EXIT_USAGE
    assert cli("reduce", fom_bundle, "--r", 0, "--out", tmp_path / "r0") == EXIT_USAGE


def test_reduce_bt(cli, fom_bundle, tmp_path):
    out = tmp_path / "bt"
    assert cli("reduce", fom_bundle, "--method", "bt", "--r", 3, "--out", out) == EXIT_OK
    assert load_bundle(out / "rom").n == 3
    assert bundle_metadata(out / "rom")["method"] == "bt"
    values = pd.read_csv(out / "hankel_values.csv")
    assert len(values) == 8
    assert os.path.exists(out / "bt_run_log.csv")


def test_reduce_tsia_writes_history(cli, fom_bundle, tmp_path):
    out = tmp_path / "tsia"
    code = cli("reduce", fom_bundle, "--r", 2, "--max-iters", 200, "--track-fonc", "--out", out)
    assert code in (EXIT_OK, EXIT_MAX_ITERS)
    history = pd.read_csv(out / "history.csv")
    assert "fonc_measure" in history.columns
    assert os.path.exists(out / "tsia_run_log.csv")
    assert bundle_metadata(out / "rom")["method"] == "tsia"


def test_reduce_tsia_max_iters_exit_code(cli, fom_bundle, tmp_path):
    code = cli("reduce", fom_bundle, "--r", 2, "--max-iters", 1, "--tol", 1e-300,
               "--out", tmp_path / "short")
    assert code == EXIT_MAX_ITERS


def test_evaluate_identical_rom(cli, fom_bundle, tmp_path):
    out = tmp_path / "eval"
    code = cli("evaluate", fom_bundle, fom_bundle, "--labels", "copy", "--input", "step",
               "--horizon", 2, "--dt", 0.01, "--out", out)
    assert code == EXIT_OK
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    entry = report["roms"][0]
    assert entry["label"] == "copy"
    assert abs(entry["rel_h2_error"]) <= 1e-12
    assert entry["sup_error"] == 0.0
    assert entry["bound_ok"]
    table = pd.read_csv(out / "simulation.csv")
    assert list(table.columns) == ["t", "y", "y_copy", "relerr_copy"]
    assert len(table) == 201


def test_evaluate_labels_from_metadata(cli, fom_bundle, tmp_path):
    assert cli("reduce", fom_bundle, "--method", "bt", "--r", 3, "--out", tmp_path / "bt") == EXIT_OK
    out = tmp_path / "eval"
    assert cli("evaluate", fom_bundle, tmp_path / "bt" / "rom", "--horizon", 1, "--dt", 0.01,
               "--out", out) == EXIT_OK
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["roms"][0]["label"] == "bt"
    assert report["roms"][0]["r"] == 3


def test_evaluate_rejects_mismatched_io(cli, fom_bundle, tmp_path):
    save_bundle(random_stable_lqo(3, 2, 1, seed=1), tmp_path / "wide")
    assert cli("evaluate", fom_bundle, tmp_path / "wide", "--out", tmp_path / "e") == EXIT_USAGE


def test_sweep(cli, fom_bundle, tmp_path):
    out = tmp_path / "sweep"
    assert cli("sweep", fom_bundle, "--r", "1:3", "--max-iters", 50, "--threads", 2,
               "--out", out) == EXIT_OK
    wide = pd.read_csv(out / "sweep_errors.csv")
    assert wide["r"].tolist() == [1, 2, 3]
    assert list(wide.columns) == ["r", "tsia", "bt"]
    long = pd.read_csv(out / "sweep_long.csv")
    assert len(long) == 6


def test_sweep_rejects_bad_orders(cli, fom_bundle, tmp_path):
    assert cli("sweep", fom_bundle, "--r", "2:20", "--out", tmp_path / "s") == EXIT_USAGE
    assert cli("sweep", fom_bundle, "--r", "x", "--out", tmp_path / "s") == EXIT_USAGE
    assert cli("sweep", fom_bundle, "--r", "2", "--methods", "irka", "--out", tmp_path / "s") == EXIT_USAGE


def test_unstable_bundle_is_numerical_failure(cli, tmp_path):
    unstable = random_stable_lqo(4, seed=0)
    save_bundle(unstable.with_matrices(a=np.asarray(unstable.a) + 10.0 * np.eye(4)), tmp_path / "u")
    assert cli("reduce", tmp_path / "u", "--r", 2, "--out", tmp_path / "out") == EXIT_NUMERICAL


def test_missing_bundle_is_usage_error(cli, tmp_path):
    assert cli("reduce", tmp_path / "nowhere", "--r", 2, "--out", tmp_path / "out") == EXIT_USAGE
