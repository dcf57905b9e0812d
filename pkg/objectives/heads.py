"""
Auxiliary Heads
DAPT 用的輔助頭：MLM head 與 TSDAE 的 tied decoder (訓練完即丟棄，不屬於編碼器)

預訓練架構只訓練主幹時，TSDAE 改用 objectives.denoising (sentence_transformers)；
這裡的 decoder 用於 tiny 架構與只訓練 adapter 的 TSDAE
"""
import torch
import torch.nn as nn
import torch.nn.functional as F

from encoder.profiles import ArchitectureProfile


class MLMHead(nn.Module):
    """dense -> GELU -> LayerNorm -> 與詞嵌入共用權重的 decoder"""

    def __init__(self, profile: ArchitectureProfile):
        super().__init__()
        self.dense = nn.Linear(profile.hidden_dim, profile.hidden_dim)
        self.layer_norm = nn.LayerNorm(profile.hidden_dim, eps=profile.layer_norm_eps)
        self.bias = nn.Parameter(torch.zeros(profile.vocab_size))
        nn.init.normal_(self.dense.weight, std=0.02)
        nn.init.zeros_(self.dense.bias)

    def forward(self, hidden: torch.Tensor, embedding_weight: torch.Tensor) -> torch.Tensor:
        x = self.layer_norm(F.gelu(self.dense(hidden)))
        return F.linear(x, embedding_weight, self.bias)

    def load_hf_lm_head(self, hf_state: dict, prefix: str = "lm_head.") -> None:
        """載入 RobertaForMaskedLM 的 lm_head (decoder 權重本來就與詞嵌入共用)"""
        with torch.no_grad():
            self.dense.weight.copy_(hf_state[prefix + "dense.weight"])
            self.dense.bias.copy_(hf_state[prefix + "dense.bias"])
            self.layer_norm.weight.copy_(hf_state[prefix + "layer_norm.weight"])
            self.layer_norm.bias.copy_(hf_state[prefix + "layer_norm.bias"])
            self.bias.copy_(hf_state[prefix + "bias"])


class TiedDenoisingDecoder(nn.Module):
    """
    TSDAE decoder

    token 嵌入與輸出投影都使用編碼器的詞嵌入矩陣；
    cross-attention 只看得到單一句向量
    """

    def __init__(self, profile: ArchitectureProfile, num_layers: int = 0):
        super().__init__()
        layer = nn.TransformerDecoderLayer(
            d_model=profile.hidden_dim,
            nhead=profile.num_heads,
            dim_feedforward=profile.intermediate_dim,
            dropout=profile.dropout,
            activation="gelu",
            batch_first=True,
            layer_norm_eps=profile.layer_norm_eps,
        )
        self.decoder = nn.TransformerDecoder(layer, num_layers=num_layers or profile.num_layers)
        self.position_embeddings = nn.Embedding(profile.max_positions, profile.hidden_dim)
        self.layer_norm = nn.LayerNorm(profile.hidden_dim, eps=profile.layer_norm_eps)
        nn.init.normal_(self.position_embeddings.weight, std=0.02)

    def forward(
        self,
        target_ids: torch.Tensor,
        target_mask: torch.Tensor,
        sentence_vector: torch.Tensor,
        embedding_weight: torch.Tensor,
    ) -> torch.Tensor:
        seq_len = target_ids.shape[1]
        positions = torch.arange(seq_len, device=target_ids.device)
        x = self.layer_norm(F.embedding(target_ids, embedding_weight) + self.position_embeddings(positions))
        causal = torch.triu(torch.ones(seq_len, seq_len, dtype=torch.bool, device=target_ids.device), diagonal=1)
        h = self.decoder(
            x,
            memory=sentence_vector.unsqueeze(1),
            tgt_mask=causal,
            tgt_key_padding_mask=target_mask == 0,
            tgt_is_causal=True,
        )
        return F.linear(h, embedding_weight)
