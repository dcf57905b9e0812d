"""
MLM Masking Module
MLM 遮罩規劃：每個可選位置以 mask_prob 被選中，再依 80/10/10 決定動作
"""
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence, Tuple

import torch

from encoder.state import TokenBatch
from errors import ConfigurationError
from .losses import IGNORE_INDEX


class MaskAction(IntEnum):
    """被選中位置的處理方式"""
    MASK_TOKEN = 0
    RANDOM_TOKEN = 1
    KEEP = 2


DEFAULT_ACTION_PROBS = (0.8, 0.1, 0.1)


@dataclass
class MaskingPlan:
    """
    positions: [N, 2] 的 (row, col)
    actions: [N] 的 MaskAction 值
    """
    positions: torch.Tensor
    actions: torch.Tensor
    rng_seed: int

    def __len__(self) -> int:
        return self.positions.shape[0]

    def action_fractions(self) -> Tuple[float, float, float]:
        if len(self) == 0:
            return (0.0, 0.0, 0.0)
        counts = torch.bincount(self.actions, minlength=3).double() / len(self)
        return tuple(float(c) for c in counts)


def plan_mlm_mask(
    batch: TokenBatch,
    mask_prob: float,
    rng_seed: int,
    mask_token_id: int,
    vocab_size: int,
    special_ids: Sequence[int],
    action_probs: Tuple[float, float, float] = DEFAULT_ACTION_PROBS,
) -> Tuple[MaskingPlan, TokenBatch, torch.Tensor]:
    """
    產生 MLM 遮罩

    Args:
        batch: 原始 token
        mask_prob: 每個可選位置被選中的機率
        rng_seed: 亂數種子 (同種子同結果)
        mask_token_id: <mask> 的 id
        vocab_size: 隨機替換用的詞表大小
        special_ids: 特殊符號 id，永遠不選
        action_probs: (MASK, RANDOM, KEEP) 的比例

    Returns:
        (遮罩規劃, 損壞後的 batch, labels)，labels 未選位置為 IGNORE_INDEX
    """
    if not 0.0 <= mask_prob <= 1.0:
        raise ConfigurationError(f"mask_prob must lie in [0, 1], got {mask_prob}")
    generator = torch.Generator().manual_seed(rng_seed)
    ids = batch.token_ids
    eligible = batch.attention_mask.bool() & ~torch.isin(ids, torch.tensor(list(special_ids), dtype=ids.dtype))

    draws = torch.rand(ids.shape, generator=generator)
    selected = eligible & (draws < mask_prob)

    positions = selected.nonzero()
    branch = torch.rand(positions.shape[0], generator=generator)
    p_mask, p_random, _ = action_probs
    actions = torch.full((positions.shape[0],), int(MaskAction.KEEP), dtype=torch.long)
    actions[branch < p_mask + p_random] = int(MaskAction.RANDOM_TOKEN)
    actions[branch < p_mask] = int(MaskAction.MASK_TOKEN)
    random_ids = torch.randint(vocab_size, (positions.shape[0],), generator=generator, dtype=ids.dtype)

    corrupted = ids.clone()
    rows, cols = positions[:, 0], positions[:, 1]
    is_mask = actions == int(MaskAction.MASK_TOKEN)
    is_random = actions == int(MaskAction.RANDOM_TOKEN)
    corrupted[rows[is_mask], cols[is_mask]] = mask_token_id
    corrupted[rows[is_random], cols[is_random]] = random_ids[is_random]

    labels = torch.full_like(ids, IGNORE_INDEX)
    labels[selected] = ids[selected]

    plan = MaskingPlan(positions=positions, actions=actions, rng_seed=rng_seed)
    return plan, TokenBatch(corrupted, batch.attention_mask.clone()), labels
