"""
設定：環境變數、TOML 執行設定與覆寫
"""
import json
from pathlib import Path

import pytest

from config import RunConfig, Settings, TrainingDefaults, get_settings, load_run_config, reset_settings
from config.run_config import RESOLVED_CONFIG_FILE, parse_value
from errors import ConfigurationError


def test_settings_read_environment(isolated_env, monkeypatch):
    monkeypatch.setenv("SENTKIT_LOG_LEVEL", "debug")
    reset_settings()
    settings = get_settings()
    assert settings.store_root == isolated_env / "store"
    assert settings.results_root == isolated_env / "results"
    assert settings.profile == "tiny"
    assert settings.log_level == "DEBUG"
    assert settings.dapt_dir("reviews") == isolated_env / "store" / "dapt" / "reviews"
    assert settings.adapter_dir("sept-shared") == isolated_env / "store" / "adapters" / "sept-shared"
    assert get_settings() is settings


def test_cached_settings_refresh_only_after_reset(isolated_env, monkeypatch):
    cached = get_settings()
    monkeypatch.setenv("SENTKIT_PROFILE", "full")
    assert get_settings().profile == "tiny"
    reset_settings()
    assert get_settings() is not cached
    assert get_settings().profile == "full"


def test_settings_defaults(monkeypatch):
    for key in ("SENTKIT_STORE", "SENTKIT_RESULTS", "SENTKIT_PROFILE", "SENTKIT_LOG_LEVEL"):
        monkeypatch.delenv(key, raising=False)
    settings = Settings()
    assert settings.store_root == Path("store")
    assert settings.profile == "tiny"
    assert settings.composed_dir("adasent", "reviews") == Path("store/composed/adasent-reviews")


def test_training_defaults():
    defaults = TrainingDefaults()
    assert defaults.dapt_steps == 2344
    assert defaults.dapt_batch_size == 256
    assert defaults.sept_batch_size == 64
    assert defaults.shots_per_class == 8
    assert defaults.seeds == (0, 1, 2, 3, 4)


def test_run_config_defaults():
    cfg = RunConfig()
    assert cfg.dapt.objective == "mlm"
    assert cfg.sept.peft == "parallel"
    assert cfg.setfit.shots == 8
    assert cfg.eval.seeds == [0, 1, 2, 3, 4]


def test_unknown_sections_and_keys():
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"training": {}})
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"dapt": {"stepz": 3}})
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"dapt": 3})


def test_overrides():
    cfg = RunConfig()
    cfg.apply_overrides(["dapt.steps=100", "sept.peft=\"lora\"", "eval.seeds=[0, 1]", "setfit.scope=adapter"])
    assert cfg.dapt.steps == 100
    assert cfg.sept.peft == "lora"
    assert cfg.eval.seeds == [0, 1]
    assert cfg.setfit.scope == "adapter"

    with pytest.raises(ConfigurationError):
        cfg.apply_overrides(["dapt.steps"])
    with pytest.raises(ConfigurationError):
        cfg.apply_overrides(["dapt=3"])
    with pytest.raises(ConfigurationError):
        cfg.apply_overrides(["dapt.nope=3"])


@pytest.mark.parametrize("raw, expected", [
    ("3", 3),
    ("2.5e-5", 2.5e-5),
    ("true", True),
    ("[1, 2]", [1, 2]),
    ('"mlm"', "mlm"),
    ("tsdae", "tsdae"),
])
def test_parse_value(raw, expected):
    assert parse_value(raw) == expected


def test_config_hash_ignores_key_order():
    a = RunConfig.from_dict({"dapt": {"steps": 5, "batch_size": 8}, "sept": {"scale": 20.0}})
    b = RunConfig.from_dict({"sept": {"scale": 20.0}, "dapt": {"batch_size": 8, "steps": 5}})
    c = RunConfig.from_dict({"dapt": {"steps": 6, "batch_size": 8}, "sept": {"scale": 20.0}})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert a.config_hash(["sept"]) == c.config_hash(["sept"])


def test_write_resolved(tmp_path):
    cfg = RunConfig.from_dict({"dapt": {"steps": 7}})
    path = cfg.write_resolved(tmp_path / "out")
    assert path.name == RESOLVED_CONFIG_FILE
    body = json.loads(path.read_text(encoding="utf-8"))
    assert body["config_hash"] == cfg.config_hash()
    assert body["dapt"]["steps"] == 7


def test_load_run_config_from_toml(tmp_path):
    path = tmp_path / "matrix.toml"
    path.write_text(
        '[dapt]\nobjective = "tsdae"\nsteps = 50\n\n[eval]\nstrategies = ["base", "adasent"]\nseeds = [0, 1]\n',
        encoding="utf-8",
    )
    cfg = load_run_config(path, overrides=["dapt.steps=10"])
    assert cfg.dapt.objective == "tsdae"
    assert cfg.dapt.steps == 10
    assert cfg.eval.strategies == ["base", "adasent"]


def test_load_run_config_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_run_config(tmp_path / "missing.toml")
    broken = tmp_path / "broken.toml"
    broken.write_text("[dapt\nsteps = ", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_run_config(broken)
    assert load_run_config().dapt.steps == 2344
