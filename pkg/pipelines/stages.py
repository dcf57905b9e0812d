"""
Stage Configuration
DAPT / SEPT 訓練階段的設定
"""
import hashlib
import json
import math
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Any, Dict, Optional

from adapters.config import AdapterConfig
from config.settings import TrainingDefaults
from errors import ConfigurationError


class Objective(Enum):
    """DAPT 目標函數"""
    MLM = "MLM"
    TSDAE = "TSDAE"
    SIMCSE = "SIMCSE"

    @classmethod
    def parse(cls, value) -> "Objective":
        if isinstance(value, cls):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ConfigurationError(f"unknown DAPT objective {value!r}; use one of {[o.value for o in cls]}") from None


class StageKind(Enum):
    DAPT = "DAPT"
    SEPT = "SEPT"


@dataclass(frozen=True)
class StageConfig:
    """
    單一訓練階段的設定

    steps 與 epochs 必須恰好設定一個；learning_rate 為 None 時依階段與是否 PEFT 取預設值
    """
    objective: Objective = Objective.MLM
    steps: Optional[int] = None
    epochs: Optional[int] = None
    batch_size: int = 64
    learning_rate: Optional[float] = None
    peft: Optional[AdapterConfig] = None
    rng_seed: int = 0
    warmup_ratio: float = 0.1
    weight_decay: float = 0.01
    mask_prob: float = 0.15
    deletion_ratio: float = 0.6
    dropout: float = 0.1
    mnrl_scale: float = 1.0
    log_every: int = 50

    def __post_init__(self):
        if (self.steps is None) == (self.epochs is None):
            raise ConfigurationError("exactly one of steps / epochs must be set")
        if (self.steps is not None and self.steps < 0) or (self.epochs is not None and self.epochs < 0):
            raise ConfigurationError("steps / epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise ConfigurationError(f"warmup_ratio must lie in [0, 1), got {self.warmup_ratio}")
        if self.mnrl_scale <= 0:
            raise ConfigurationError("mnrl_scale must be > 0")

    @classmethod
    def dapt_defaults(cls, defaults: Optional[TrainingDefaults] = None, **overrides: Any) -> "StageConfig":
        """MLM、固定 2344 步、batch 256"""
        defaults = defaults or TrainingDefaults()
        base = {'objective': Objective.MLM, 'steps': defaults.dapt_steps, 'batch_size': defaults.dapt_batch_size}
        if 'epochs' in overrides and overrides['epochs'] is not None:
            base['steps'] = None
        return cls(**{**base, **overrides})

    @classmethod
    def sept_defaults(cls, defaults: Optional[TrainingDefaults] = None, **overrides: Any) -> "StageConfig":
        """1 個 epoch、batch 64"""
        defaults = defaults or TrainingDefaults()
        base = {'epochs': defaults.sept_epochs, 'batch_size': defaults.sept_batch_size}
        if 'steps' in overrides and overrides['steps'] is not None:
            base['epochs'] = None
        return cls(**{**base, **overrides})

    def with_peft(self, peft: Optional[AdapterConfig]) -> "StageConfig":
        return replace(self, peft=peft)

    def total_steps(self, n_items: int) -> int:
        """steps，或 epochs × ceil(n / batch_size)"""
        if self.steps is not None:
            return self.steps
        return self.epochs * math.ceil(n_items / self.batch_size)

    def resolved_learning_rate(self, kind: StageKind, defaults: Optional[TrainingDefaults] = None) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        defaults = defaults or TrainingDefaults()
        if kind is StageKind.DAPT:
            return defaults.dapt_peft_learning_rate if self.peft else defaults.dapt_full_learning_rate
        return defaults.sept_peft_learning_rate if self.peft else defaults.sept_full_learning_rate

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['objective'] = self.objective.value
        data['peft'] = self.peft.to_dict() if self.peft else None
        return data

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]
