import json
import os

import pytest

from core.config_manager import ConfigManager


@pytest.fixture
def manager(tmp_path):
    return ConfigManager(str(tmp_path / "config"))


def test_defaults_without_file(manager):
    assert not manager.is_config_exist()
    assert manager.get_tsia_tol() == 1e-10
    assert manager.get_tsia_max_iters() == 500
    assert manager.get_tsia_monitor() == "eta"
    assert manager.get_sim_dt() == 1e-3


def test_set_saves_and_reloads(manager):
    assert manager.set("tsia_tol", "1e-8")
    assert manager.is_config_exist()
    reloaded = ConfigManager(manager.config_dir)
    assert reloaded.get_tsia_tol() == 1e-8
    # 未改动的键仍为默认值
    assert reloaded.get_residual_tol() == 1e-8
    assert reloaded.get_int("unstable_patience") == 10


def test_set_rejects_unknown_key_and_bad_value(manager):
    assert not manager.set("no_such_key", 1)
    assert not manager.set("tsia_max_iters", "many")
    assert manager.get_tsia_max_iters() == 500


def test_update_and_reset(manager):
    assert manager.update_config({"tsia_monitor": "tau", "sim_dt": 0.01})
    assert manager.tsia_options()["monitor"] == "tau"
    assert not manager.update_config({"bogus": 1})
    assert manager.reset_to_default()
    assert manager.get_all_config() == manager.default_config


def test_backup_written_on_second_save(manager):
    manager.set("tsia_tol", 1e-9)
    manager.set("tsia_tol", 1e-11)
    backup = manager.get_config_path() + ".backup"
    assert os.path.exists(backup)
    with open(backup, encoding="utf-8") as f:
        assert json.load(f)["tsia_tol"] == 1e-9


def test_corrupted_file_falls_back_to_defaults(tmp_path):
    folder = tmp_path / "config"
    folder.mkdir()
    (folder / "lqo_config.json").write_text("{not json", encoding="utf-8")
    manager = ConfigManager(str(folder))
    assert manager.get_all_config() == manager.default_config


def test_tsia_options_keys(manager):
    options = manager.tsia_options()
    assert set(options) == {"tol", "max_iters", "monitor", "unstable_patience", "rank_tol",
                            "residual_tol", "cond_cap"}
