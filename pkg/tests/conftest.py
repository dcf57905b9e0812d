"""
共用 fixtures：tiny 編碼器、合成語料與隔離的環境變數
"""
import os

os.environ.setdefault("MPLBACKEND", "Agg")

import pytest

from config.settings import reset_settings
from data import SynthSpec, synth_corpus
from encoder import TINY_PROFILE, new_encoder, tokenize
from pipelines import StageConfig

ENV_KEYS = ("SENTKIT_STORE", "SENTKIT_RESULTS", "SENTKIT_PROFILE", "SENTKIT_LOG_LEVEL")


@pytest.fixture
def tiny_encoder():
    return new_encoder(TINY_PROFILE, seed=0)


@pytest.fixture
def token_batch(tiny_encoder):
    return tokenize(tiny_encoder, ["tok1 tok2 tok3 tok4", "tok5 tok6", "tok7 tok8 tok9"])


@pytest.fixture(scope="session")
def synth():
    return synth_corpus(SynthSpec(seed=0))


@pytest.fixture(scope="session")
def small_synth():
    return synth_corpus(SynthSpec(items_per_class=12, test_items_per_class=6, seed=1, name="small"))


@pytest.fixture
def quick_dapt():
    return StageConfig.dapt_defaults(steps=2, batch_size=8, log_every=0)


@pytest.fixture
def quick_sept():
    return StageConfig.sept_defaults(steps=2, batch_size=8, log_every=0)


@pytest.fixture
def isolated_env(tmp_path, monkeypatch):
    """store / results 指到暫存目錄，結束後清掉設定快取"""
    for key in ENV_KEYS:
        monkeypatch.delenv(key, raising=False)
    monkeypatch.setenv("SENTKIT_STORE", str(tmp_path / "store"))
    monkeypatch.setenv("SENTKIT_RESULTS", str(tmp_path / "results"))
    monkeypatch.setenv("SENTKIT_PROFILE", "tiny")
    reset_settings()
    yield tmp_path
    reset_settings()
