"""
Unsupervised Sentence Objectives
TSDAE (刪字去噪重建) 與 SimCSE (dropout 兩個視角) 的單步損失
"""
import logging
import math
from typing import Sequence, Tuple

import torch
import torch.nn.functional as F

from encoder.state import EncoderState, TokenBatch, forward_embeddings
from errors import ConfigurationError, SkipBatch
from .heads import TiedDenoisingDecoder
from .losses import IGNORE_INDEX, PairBatch, mnrl_loss

logger = logging.getLogger(__name__)


def kept_length(n_tokens: int, deletion_ratio: float) -> int:
    """刪字後保留的 token 數：round((1 - ratio) * n)，四捨五入且至少 1"""
    if n_tokens == 0:
        return 0
    return max(1, math.floor((1.0 - deletion_ratio) * n_tokens + 0.5))


def delete_tokens(
    batch: TokenBatch,
    deletion_ratio: float,
    rng_seed: int,
    special_ids: Sequence[int],
    pad_token_id: int,
) -> Tuple[TokenBatch, torch.Tensor]:
    """
    每一列隨機刪除 deletion_ratio 的內容 token (特殊符號保留在原位置)

    Returns:
        (刪字後的 batch, 每列保留的內容 token 數)
    """
    if not 0.0 <= deletion_ratio < 1.0:
        raise ConfigurationError(f"deletion_ratio must lie in [0, 1), got {deletion_ratio}")
    generator = torch.Generator().manual_seed(rng_seed)
    specials = torch.tensor(list(special_ids), dtype=batch.token_ids.dtype)

    rows = []
    kept = []
    for ids, mask in zip(batch.token_ids, batch.attention_mask):
        ids = ids[mask.bool()]
        content = (~torch.isin(ids, specials)).nonzero().squeeze(-1)
        keep_n = kept_length(content.numel(), deletion_ratio)
        chosen = content[torch.randperm(content.numel(), generator=generator)[:keep_n]]
        keep = torch.isin(ids, specials)
        keep[chosen] = True
        rows.append(ids[keep])
        kept.append(keep_n)

    width = max(row.numel() for row in rows)
    token_ids = torch.full((len(rows), width), pad_token_id, dtype=batch.token_ids.dtype)
    attention = torch.zeros((len(rows), width), dtype=batch.attention_mask.dtype)
    for i, row in enumerate(rows):
        token_ids[i, :row.numel()] = row
        attention[i, :row.numel()] = 1
    return TokenBatch(token_ids, attention), torch.tensor(kept)


def tsdae_step(
    state: EncoderState,
    batch: TokenBatch,
    decoder: TiedDenoisingDecoder,
    deletion_ratio: float = 0.6,
    rng_seed: int = 0,
) -> torch.Tensor:
    """
    TSDAE：編碼刪字後的句子成單一向量，再由 decoder 重建原句

    保留內容少於 2 個 token 的列不參與損失；整個 batch 都不足時發出 SkipBatch
    """
    tokenizer = state.tokenizer
    noisy, kept = delete_tokens(batch, deletion_ratio, rng_seed, tokenizer.all_special_ids, state.profile.pad_token_id)
    usable = kept >= 2
    if not torch.any(usable):
        raise SkipBatch("every sequence is shorter than 2 tokens after deletion")

    noisy = noisy.rows(usable)
    original = batch.rows(usable)
    sentence = forward_embeddings(state, noisy)

    inputs = original.token_ids[:, :-1]
    input_mask = original.attention_mask[:, :-1]
    targets = original.token_ids[:, 1:].masked_fill(original.attention_mask[:, 1:] == 0, IGNORE_INDEX)
    logits = decoder(inputs, input_mask, sentence, state.model.word_embeddings.weight)
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), ignore_index=IGNORE_INDEX)


def simcse_step(state: EncoderState, batch: TokenBatch, dropout_p: float = 0.1, scale: float = 1.0) -> torch.Tensor:
    """
    SimCSE：同一批句子以不同 dropout 編碼兩次，第二個視角是正例，其餘句子是負例
    """
    if dropout_p == 0:
        logger.warning("SimCSE with dropout_p=0: both views are identical and the loss degenerates")
    previous = state.model.dropout_rate()
    was_training = state.model.training
    state.model.set_dropout(dropout_p)
    state.model.train()
    try:
        first = forward_embeddings(state, batch)
        second = forward_embeddings(state, batch)
    finally:
        state.model.set_dropout(previous)
        state.model.train(was_training)
    return mnrl_loss(PairBatch(first, second), scale=scale)
