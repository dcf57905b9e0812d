"""
Loss Functions
SetFit 句對餘弦損失、MNRL (in-batch negatives) 與 MLM 交叉熵
"""
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn.functional as F

from encoder.state import cos_sim, cos_sim_matrix
from errors import ConfigurationError, SkipBatch, StructuralError

IGNORE_INDEX = -100


@dataclass
class PairBatch:
    """
    K 組句向量 (x_i, y_i)，labels 為選用的 0/1 標籤
    """
    left: torch.Tensor
    right: torch.Tensor
    labels: Optional[torch.Tensor] = None

    def __post_init__(self):
        if self.left.dim() != 2 or self.left.shape != self.right.shape or self.left.shape[0] < 1:
            raise StructuralError(
                f"pair batch needs matching [K, D] tensors with K >= 1, got "
                f"{tuple(self.left.shape)} and {tuple(self.right.shape)}"
            )
        if self.labels is not None:
            if self.labels.shape != (self.left.shape[0],):
                raise StructuralError("labels must hold one value per pair")
            if not torch.all((self.labels == 0) | (self.labels == 1)):
                raise StructuralError("pair labels must be exactly 0 or 1")

    def __len__(self) -> int:
        return self.left.shape[0]


def cosine_pair_loss(batch: PairBatch, reduction: str = "squared") -> torch.Tensor:
    """
    SetFit 的餘弦相似度損失

    r_i = y_i - cos(u_i, v_i)
    reduction="squared" -> mean(r_i^2) (預設)；"absolute" -> mean(|r_i|)
    """
    if batch.labels is None:
        raise StructuralError("cosine pair loss needs pair labels")
    residual = batch.labels.to(batch.left.dtype) - cos_sim(batch.left, batch.right)
    if reduction == "squared":
        return (residual ** 2).mean()
    if reduction == "absolute":
        return residual.abs().mean()
    raise ConfigurationError(f"unknown reduction: {reduction}")


def mnrl_loss(batch: PairBatch, scale: float = 1.0) -> torch.Tensor:
    """
    Multiple-Negatives Ranking Loss

    第 i 列的 K 個 scale·cos(x_i, y_j) 做 softmax，正確答案在對角線
    """
    if scale <= 0:
        raise ConfigurationError("MNRL scale must be > 0")
    scores = cos_sim_matrix(batch.left, batch.right) * scale
    targets = torch.arange(len(batch), device=scores.device)
    return F.cross_entropy(scores, targets)


def mlm_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """
    只在有標記的位置計算 token 交叉熵平均

    Args:
        logits: [..., vocab]
        labels: 與 logits 前幾維相同，未標記位置為 IGNORE_INDEX
    """
    flat_labels = labels.reshape(-1)
    if not torch.any(flat_labels != IGNORE_INDEX):
        raise SkipBatch("no labeled positions in MLM batch")
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), flat_labels, ignore_index=IGNORE_INDEX)
