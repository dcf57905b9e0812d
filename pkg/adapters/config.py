"""
Adapter Configuration
PEFT 模組設定與張量形狀表
"""
import hashlib
import json
import math
from dataclasses import dataclass, asdict, replace
from enum import Enum
from typing import Dict, Any, Optional, Tuple

from errors import ConfigurationError


class AdapterKind(Enum):
    """四種參數高效模組"""
    PARALLEL = "PARALLEL"
    BOTTLENECK = "BOTTLENECK"
    LORA = "LORA"
    PREFIX = "PREFIX"


class InitMode(Enum):
    """初始化方式：ZERO_OUT_PROJ 讓插入後的輸出與原本完全相同"""
    ZERO_OUT_PROJ = "ZERO_OUT_PROJ"
    RANDOM = "RANDOM"


# 各種模組的預設值 (平行 adapter: reduction 2, scaling 4)
KIND_DEFAULTS: Dict[AdapterKind, Dict[str, Any]] = {
    AdapterKind.PARALLEL: {'reduction_factor': 2, 'scaling': 4.0},
    AdapterKind.BOTTLENECK: {'reduction_factor': 16, 'scaling': 1.0},
    AdapterKind.LORA: {'rank': 8, 'scaling': 8.0},
    AdapterKind.PREFIX: {'prefix_len': 16, 'scaling': 1.0},
}

_KIND_FIELDS = {
    AdapterKind.PARALLEL: 'reduction_factor',
    AdapterKind.BOTTLENECK: 'reduction_factor',
    AdapterKind.LORA: 'rank',
    AdapterKind.PREFIX: 'prefix_len',
}


@dataclass(frozen=True)
class AdapterConfig:
    """
    Adapter 設定

    只有與 kind 相關的欄位可以設定：
        PARALLEL / BOTTLENECK -> reduction_factor
        LORA -> rank
        PREFIX -> prefix_len
    """
    kind: AdapterKind
    reduction_factor: Optional[int] = None
    rank: Optional[int] = None
    prefix_len: Optional[int] = None
    scaling: float = 1.0
    init_mode: InitMode = InitMode.ZERO_OUT_PROJ

    def __post_init__(self):
        required = _KIND_FIELDS[self.kind]
        for name in ('reduction_factor', 'rank', 'prefix_len'):
            value = getattr(self, name)
            if name == required:
                if value is None or int(value) < 1:
                    raise ConfigurationError(f"{self.kind.value} adapter needs a positive {name}")
            elif value is not None:
                raise ConfigurationError(f"{name} is not a {self.kind.value} adapter field")
        if not math.isfinite(self.scaling) or self.scaling <= 0:
            raise ConfigurationError(f"adapter scaling must be finite and > 0, got {self.scaling}")

    @classmethod
    def for_kind(cls, kind, **overrides: Any) -> "AdapterConfig":
        """以預設值建立設定，overrides 中的 None 會被忽略"""
        if isinstance(kind, str):
            try:
                kind = AdapterKind(kind.strip().upper())
            except ValueError:
                raise ConfigurationError(
                    f"unknown adapter kind {kind!r}; use one of {[k.value.lower() for k in AdapterKind]}"
                ) from None
        values = dict(KIND_DEFAULTS[kind])
        values.update({k: v for k, v in overrides.items() if v is not None})
        if isinstance(values.get('init_mode'), str):
            values['init_mode'] = InitMode(values['init_mode'].upper())
        return cls(kind=kind, **values)

    def with_init(self, init_mode: InitMode) -> "AdapterConfig":
        return replace(self, init_mode=init_mode)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['kind'] = self.kind.value
        data['init_mode'] = self.init_mode.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AdapterConfig":
        data = dict(data)
        return cls(
            kind=AdapterKind(data.pop('kind')),
            init_mode=InitMode(data.pop('init_mode', InitMode.ZERO_OUT_PROJ.value)),
            **data,
        )

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]

    def bottleneck_dim(self, hidden_dim: int) -> int:
        dim = hidden_dim // self.reduction_factor
        if dim < 1:
            raise ConfigurationError(
                f"reduction_factor {self.reduction_factor} too large for hidden_dim {hidden_dim}"
            )
        return dim


def adapter_tensor_shapes(cfg: AdapterConfig, hidden_dim: int, num_layers: int) -> Dict[str, Tuple[int, ...]]:
    """
    張量形狀完全由 (設定, hidden_dim, num_layers) 決定

    LORA 的名稱沿用 peft 注入後的 state_dict 名稱 (query / value 投影底下的 lora_A / lora_B)

    Returns:
        {state_dict 名稱: 形狀}
    """
    d = hidden_dim
    shapes = {}
    for layer in range(num_layers):
        if cfg.kind in (AdapterKind.PARALLEL, AdapterKind.BOTTLENECK):
            m = cfg.bottleneck_dim(d)
            slot = f"layers.{layer}.adapters.{cfg.kind.value.lower()}"
            shapes.update({
                f"{slot}.down.weight": (m, d),
                f"{slot}.down.bias": (m,),
                f"{slot}.up.weight": (d, m),
                f"{slot}.up.bias": (d,),
            })
        elif cfg.kind is AdapterKind.LORA:
            for proj in ('query', 'value'):
                shapes[f"layers.{layer}.{proj}.lora_A.default.weight"] = (cfg.rank, d)
                shapes[f"layers.{layer}.{proj}.lora_B.default.weight"] = (d, cfg.rank)
        else:
            shapes[f"layers.{layer}.adapters.prefix.encoder.embedding.weight"] = (cfg.prefix_len, 2 * d)
    return shapes


def adapter_parameter_count(cfg: AdapterConfig, hidden_dim: int, num_layers: int) -> int:
    return sum(math.prod(shape) for shape in adapter_tensor_shapes(cfg, hidden_dim, num_layers).values())
