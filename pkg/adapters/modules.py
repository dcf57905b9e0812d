"""
Adapter Modules
四種 PEFT 模組：LORA / PREFIX 由 peft 建立，PARALLEL / BOTTLENECK 是自訂的殘差分支
"""
import math
from typing import Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from peft import LoraConfig, PrefixEncoder, PrefixTuningConfig, inject_adapter_in_model

from .config import AdapterConfig, AdapterKind, InitMode

LORA_TARGETS = ('query', 'value')
LORA_ADAPTER_NAME = "default"


class BottleneckBranch(nn.Module):
    """
    down-project -> ReLU -> up-project，輸出乘上 scaling

    平行 adapter 接在 FFN 旁邊；bottleneck adapter 接在 FFN 之後
    """

    def __init__(self, hidden_dim: int, cfg: AdapterConfig):
        super().__init__()
        m = cfg.bottleneck_dim(hidden_dim)
        self.scaling = cfg.scaling
        self.down = nn.Linear(hidden_dim, m)
        self.up = nn.Linear(m, hidden_dim)
        nn.init.kaiming_uniform_(self.down.weight, a=math.sqrt(5))
        nn.init.zeros_(self.down.bias)
        if cfg.init_mode is InitMode.ZERO_OUT_PROJ:
            nn.init.zeros_(self.up.weight)
        else:
            nn.init.normal_(self.up.weight, std=0.02)
        nn.init.zeros_(self.up.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.scaling * self.up(F.relu(self.down(x)))


def lora_config(cfg: AdapterConfig) -> LoraConfig:
    """
    peft LoRA 設定：增量 (lora_alpha / r) · B · A 加在 query / value 投影上

    ZERO_OUT_PROJ 對應 peft 的預設初始化 (B = 0)；RANDOM 則 A、B 都保留 nn.Linear 的隨機初始化
    """
    return LoraConfig(
        r=cfg.rank,
        lora_alpha=cfg.scaling,
        lora_dropout=0.0,
        bias="none",
        target_modules=list(LORA_TARGETS),
        init_lora_weights=cfg.init_mode is InitMode.ZERO_OUT_PROJ,
    )


def inject_lora(model: nn.Module, cfg: AdapterConfig) -> nn.Module:
    """把 LoRA 注入 model 的注意力投影，不改動其他參數的 requires_grad"""
    flags = {name: p.requires_grad for name, p in model.named_parameters()}
    inject_adapter_in_model(lora_config(cfg), model, adapter_name=LORA_ADAPTER_NAME)
    for name, param in model.named_parameters():
        param.requires_grad_(flags.get(name.replace(".base_layer", ""), True))
    return model


def prefix_config(cfg: AdapterConfig, hidden_dim: int) -> PrefixTuningConfig:
    """單層的 prefix 設定 (每層各自一個 PrefixEncoder)"""
    return PrefixTuningConfig(
        num_virtual_tokens=cfg.prefix_len,
        token_dim=hidden_dim,
        num_layers=1,
        encoder_hidden_size=hidden_dim,
        prefix_projection=False,
    )


class PrefixSlot(nn.Module):
    """
    每層 prefix_len 個可學習的 key/value 向量

    embedding 的每一列是 [key | value]，與 peft past_key_values 的排列相同；
    前綴會改變注意力正規化，無法零初始化
    """

    def __init__(self, hidden_dim: int, cfg: AdapterConfig):
        super().__init__()
        self.prefix_len = cfg.prefix_len
        self.encoder = PrefixEncoder(prefix_config(cfg, hidden_dim))
        nn.init.normal_(self.encoder.embedding.weight, std=0.02)

    def forward(self, batch_size: int) -> Tuple[torch.Tensor, torch.Tensor]:
        weight = self.encoder.embedding.weight
        virtual_tokens = torch.arange(self.prefix_len, device=weight.device).expand(batch_size, -1)
        keys, values = self.encoder(virtual_tokens).chunk(2, dim=-1)
        return keys, values


def build_slot_modules(cfg: AdapterConfig, hidden_dim: int) -> nn.ModuleDict:
    """建立單層 adapters 插槽的模組 (LORA 由 inject_lora 直接包住投影層，不使用插槽)"""
    if cfg.kind is AdapterKind.PARALLEL:
        return nn.ModuleDict({'parallel': BottleneckBranch(hidden_dim, cfg)})
    if cfg.kind is AdapterKind.BOTTLENECK:
        return nn.ModuleDict({'bottleneck': BottleneckBranch(hidden_dim, cfg)})
    if cfg.kind is AdapterKind.PREFIX:
        return nn.ModuleDict({'prefix': PrefixSlot(hidden_dim, cfg)})
    return nn.ModuleDict()
