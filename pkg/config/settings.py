"""
Settings configuration for the sentence-encoder toolkit
載入環境變數與預設設定
"""
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple
from dotenv import load_dotenv

# SENTKIT_* 可以寫在專案根目錄的 .env
load_dotenv()


@dataclass
class TrainingDefaults:
    """
    完整 DistilRoBERTa 規模的訓練預設值
    """
    dapt_steps: int = 2344            # 固定步數，約等於最大訓練集 3 個 epoch
    dapt_batch_size: int = 256
    dapt_peft_learning_rate: float = 1e-4
    dapt_full_learning_rate: float = 5e-5   # 函式庫預設
    sept_epochs: int = 1
    sept_batch_size: int = 64
    sept_full_learning_rate: float = 2e-5
    sept_peft_learning_rate: float = 1e-4
    shots_per_class: int = 8
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    max_seq_len: int = 512


@dataclass
class Settings:
    """產物目錄、架構設定與訓練預設值 (SENTKIT_* 環境變數優先)"""
    # 產物與結果目錄
    store_root: Path = Path("store")
    results_root: Path = Path("results")

    # 執行環境
    profile: str = "tiny"         # tiny / full
    log_level: str = "INFO"

    defaults: TrainingDefaults = field(default_factory=TrainingDefaults)

    def __post_init__(self):
        """以 SENTKIT_* 覆寫欄位"""
        self.store_root = Path(os.getenv('SENTKIT_STORE', str(self.store_root)))
        self.results_root = Path(os.getenv('SENTKIT_RESULTS', str(self.results_root)))
        self.profile = os.getenv('SENTKIT_PROFILE', self.profile)
        self.log_level = os.getenv('SENTKIT_LOG_LEVEL', self.log_level).upper()

    @property
    def base_dir(self) -> Path:
        return self.store_root / "base"

    def dapt_dir(self, dataset: str) -> Path:
        return self.store_root / "dapt" / dataset

    def sept_dir(self, name: str) -> Path:
        return self.store_root / "sept" / name

    def adapter_dir(self, name: str) -> Path:
        return self.store_root / "adapters" / name

    def composed_dir(self, strategy: str, dataset: str) -> Path:
        return self.store_root / "composed" / f"{strategy}-{dataset}"


# 行程內共用一份，測試以 reset_settings() 重新讀取環境變數
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """回傳快取的 Settings，第一次呼叫時才讀取環境變數"""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reset_settings() -> None:
    """清除快取的設定 (環境變數改變後使用)"""
    global _settings
    _settings = None
