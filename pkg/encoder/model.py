"""
Transformer Encoder Module
RoBERTa 結構的句子編碼器 (post-LN)，每層保留 adapter 插槽
"""
import math
from typing import Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .profiles import ArchitectureProfile


class Embeddings(nn.Module):
    """詞嵌入 + 位置嵌入 + 單一 token type 向量"""

    def __init__(self, profile: ArchitectureProfile):
        super().__init__()
        self.pad_token_id = profile.pad_token_id
        self.word_embeddings = nn.Embedding(profile.vocab_size, profile.hidden_dim, padding_idx=profile.pad_token_id)
        self.position_embeddings = nn.Embedding(profile.max_positions, profile.hidden_dim, padding_idx=profile.pad_token_id)
        self.token_type_embedding = nn.Parameter(torch.zeros(profile.hidden_dim))
        self.layer_norm = nn.LayerNorm(profile.hidden_dim, eps=profile.layer_norm_eps)
        self.dropout = nn.Dropout(profile.dropout)

    def forward(self, token_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        # RoBERTa 位置編號：非 padding 位置從 pad_token_id + 1 開始
        mask = attention_mask.long()
        positions = torch.cumsum(mask, dim=1) * mask + self.pad_token_id
        x = self.word_embeddings(token_ids) + self.position_embeddings(positions) + self.token_type_embedding
        return self.dropout(self.layer_norm(x))


class EncoderLayer(nn.Module):
    """
    單層 Transformer

    adapters 插槽 (由 adapters 模組填入):
        prefix: 每層的 key/value 前綴
        parallel: 與 FFN 平行的殘差分支
        bottleneck: FFN 之後的串接瓶頸層

    LoRA 不使用插槽：peft 直接包住 query / value 投影層
    """

    def __init__(self, profile: ArchitectureProfile):
        super().__init__()
        d = profile.hidden_dim
        self.num_heads = profile.num_heads
        self.head_dim = d // profile.num_heads

        self.query = nn.Linear(d, d)
        self.key = nn.Linear(d, d)
        self.value = nn.Linear(d, d)
        self.attention_output = nn.Linear(d, d)
        self.attention_norm = nn.LayerNorm(d, eps=profile.layer_norm_eps)

        self.intermediate = nn.Linear(d, profile.intermediate_dim)
        self.output = nn.Linear(profile.intermediate_dim, d)
        self.output_norm = nn.LayerNorm(d, eps=profile.layer_norm_eps)

        self.attention_dropout = nn.Dropout(profile.dropout)
        self.dropout = nn.Dropout(profile.dropout)

        self.adapters = nn.ModuleDict()

    def _split_heads(self, x: torch.Tensor) -> torch.Tensor:
        b, s, _ = x.shape
        return x.view(b, s, self.num_heads, self.head_dim).transpose(1, 2)

    def _attention(self, x: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        q = self.query(x)
        k = self.key(x)
        v = self.value(x)

        mask = attention_mask
        if "prefix" in self.adapters:
            prefix_k, prefix_v = self.adapters["prefix"](x.shape[0])
            k = torch.cat([prefix_k, k], dim=1)
            v = torch.cat([prefix_v, v], dim=1)
            mask = torch.cat([mask.new_ones(mask.shape[0], prefix_k.shape[1]), mask], dim=1)

        q, k, v = self._split_heads(q), self._split_heads(k), self._split_heads(v)
        scores = torch.matmul(q, k.transpose(-1, -2)) / math.sqrt(self.head_dim)
        blocked = (1.0 - mask[:, None, None, :].to(scores.dtype)) * torch.finfo(scores.dtype).min
        probs = self.attention_dropout(F.softmax(scores + blocked, dim=-1))

        context = torch.matmul(probs, v).transpose(1, 2).reshape(x.shape)
        return self.dropout(self.attention_output(context))

    def forward(self, x: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        h = self.attention_norm(x + self._attention(x, attention_mask))

        ffn = self.dropout(self.output(F.gelu(self.intermediate(h))))
        if "parallel" in self.adapters:
            ffn = ffn + self.adapters["parallel"](h)
        if "bottleneck" in self.adapters:
            ffn = ffn + self.adapters["bottleneck"](ffn)
        return self.output_norm(h + ffn)


class SentenceEncoder(nn.Module):
    """Transformer 主幹：輸出每個 token 的最終隱藏狀態"""

    def __init__(self, profile: ArchitectureProfile):
        super().__init__()
        self.profile = profile
        self.embeddings = Embeddings(profile)
        self.layers = nn.ModuleList([EncoderLayer(profile) for _ in range(profile.num_layers)])

    def forward(self, token_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        x = self.embeddings(token_ids, attention_mask)
        for layer in self.layers:
            x = layer(x, attention_mask)
        return x

    @property
    def word_embeddings(self) -> nn.Embedding:
        return self.embeddings.word_embeddings

    def set_dropout(self, p: float) -> None:
        """調整所有 dropout 機率 (SimCSE 用)"""
        for module in self.modules():
            if isinstance(module, nn.Dropout):
                module.p = p

    def dropout_rate(self) -> float:
        return self.embeddings.dropout.p

    def init_weights(self) -> None:
        """RoBERTa 初始化：常態分佈 std 0.02，bias 為 0"""
        for module in self.modules():
            if isinstance(module, nn.Linear):
                nn.init.normal_(module.weight, mean=0.0, std=0.02)
                nn.init.zeros_(module.bias)
            elif isinstance(module, nn.Embedding):
                nn.init.normal_(module.weight, mean=0.0, std=0.02)
                with torch.no_grad():
                    module.weight[module.padding_idx].zero_()
            elif isinstance(module, nn.LayerNorm):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)


def hf_key_map(num_layers: int) -> Tuple[Tuple[str, str], ...]:
    """
    transformers RobertaModel 權重名稱 -> 本模組權重名稱
    """
    pairs = [
        ("embeddings.word_embeddings.weight", "embeddings.word_embeddings.weight"),
        ("embeddings.position_embeddings.weight", "embeddings.position_embeddings.weight"),
        ("embeddings.LayerNorm.weight", "embeddings.layer_norm.weight"),
        ("embeddings.LayerNorm.bias", "embeddings.layer_norm.bias"),
    ]
    per_layer = [
        ("attention.self.query", "query"),
        ("attention.self.key", "key"),
        ("attention.self.value", "value"),
        ("attention.output.dense", "attention_output"),
        ("attention.output.LayerNorm", "attention_norm"),
        ("intermediate.dense", "intermediate"),
        ("output.dense", "output"),
        ("output.LayerNorm", "output_norm"),
    ]
    for i in range(num_layers):
        for hf_name, own_name in per_layer:
            for suffix in ("weight", "bias"):
                pairs.append((f"encoder.layer.{i}.{hf_name}.{suffix}", f"layers.{i}.{own_name}.{suffix}"))
    return tuple(pairs)


def load_hf_state(model: SentenceEncoder, hf_state: dict, prefix: str = "") -> None:
    """把 transformers 的權重複製進本模組 (token type 只取第 0 列)"""
    own = model.state_dict()
    with torch.no_grad():
        for hf_name, own_name in hf_key_map(model.profile.num_layers):
            own[own_name].copy_(hf_state[prefix + hf_name])
        model.embeddings.token_type_embedding.copy_(hf_state[prefix + "embeddings.token_type_embeddings.weight"][0])


def to_hf_state(own_state: dict, num_layers: int) -> dict:
    """load_hf_state 的反向：本模組主幹權重 -> transformers RobertaModel 權重名稱"""
    hf_state = {hf_name: own_state[own_name] for hf_name, own_name in hf_key_map(num_layers)}
    hf_state["embeddings.token_type_embeddings.weight"] = own_state["embeddings.token_type_embedding"].unsqueeze(0)
    return hf_state
