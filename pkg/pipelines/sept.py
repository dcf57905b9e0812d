"""
Sentence-Embedding Pre-Training
以 MNRL 在正例句對上訓練句子編碼器 (整個主幹或只訓練 adapter)
"""
import logging
import math
from typing import Iterable, List, Tuple, Union

import numpy as np
import torch

from adapters.portability import AdapterWeights, attach, export_adapter, record_adapter_stage
from encoder.state import EncoderState, Scope, Stage, apply_manifest, forward_embeddings, select_trainable, tokenize
from errors import ConfigurationError
from objectives.losses import PairBatch, mnrl_loss
from .stages import StageConfig, StageKind
from .training import TrainingReport, run_steps

logger = logging.getLogger(__name__)


def _epoch_batches(pairs: List[Tuple[str, str]], cfg: StageConfig, total_steps: int) -> List[List[Tuple[str, str]]]:
    """依 epoch 打亂後切 batch，直到湊滿 total_steps"""
    per_epoch = math.ceil(len(pairs) / cfg.batch_size)
    batches: List[List[Tuple[str, str]]] = []
    epoch = 0
    while len(batches) < total_steps:
        order = np.random.default_rng(cfg.rng_seed + epoch).permutation(len(pairs))
        for b in range(per_epoch):
            batches.append([pairs[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]])
        epoch += 1
    return batches[:total_steps]


def train_sept(
    base: EncoderState,
    pair_data: Iterable[Tuple[str, str]],
    cfg: StageConfig,
) -> Tuple[EncoderState, TrainingReport]:
    """
    SEPT 主流程，回傳 (訓練後的編碼器, 訓練紀錄)

    cfg.peft 有設定時插入 adapter 並凍結主幹 (主幹張量逐位元不變)
    """
    pairs = [(a, p) for a, p in pair_data if a and p]
    if not pairs:
        raise ConfigurationError("SEPT needs a nonempty positive-pair stream")

    state = base.clone()
    if cfg.peft is not None:
        attach(state, cfg.peft, rng_seed=cfg.rng_seed)
        scope = Scope.ADAPTER
    else:
        scope = Scope.TRANSFORMER
    manifest = select_trainable(state, scope)
    apply_manifest(state, manifest)

    total_steps = cfg.total_steps(len(pairs))
    batches = _epoch_batches(pairs, cfg, total_steps) if total_steps else []

    def loss_fn(step: int) -> torch.Tensor:
        anchors, positives = zip(*batches[step])
        left = forward_embeddings(state, tokenize(state, anchors))
        right = forward_embeddings(state, tokenize(state, positives))
        return mnrl_loss(PairBatch(left, right), scale=cfg.mnrl_scale)

    state.model.train()
    try:
        report = run_steps(
            manifest.parameters,
            loss_fn,
            total_steps,
            learning_rate=cfg.resolved_learning_rate(StageKind.SEPT),
            weight_decay=cfg.weight_decay,
            warmup_ratio=cfg.warmup_ratio,
            rng_seed=cfg.rng_seed,
            log_every=cfg.log_every,
            label="sept-adapter" if cfg.peft else "sept",
        )
    finally:
        state.model.eval()
        for param in state.model.parameters():
            param.requires_grad_(True)

    detail = {'loss': 'MNRL', 'pairs': len(pairs), 'steps': total_steps}
    if cfg.peft is not None:
        state.adapter_meta['training_hash'] = cfg.config_hash()
        record_adapter_stage(state, Stage.SEPT, **detail)
    else:
        state.record_stage(Stage.SEPT, **detail)
    logger.info("SEPT finished: %d pairs, %d steps in %.1fs", len(pairs), report.optimizer_steps, report.seconds)
    return state, report


def run_sept(
    base: EncoderState,
    pair_data: Iterable[Tuple[str, str]],
    cfg: StageConfig,
) -> Union[EncoderState, AdapterWeights]:
    """
    SEPT

    Returns:
        完整 SEPT 回傳編碼器；adapter 模式回傳匯出的 AdapterWeights
    """
    state, _ = train_sept(base, pair_data, cfg)
    if cfg.peft is not None:
        return export_adapter(state, training_hash=cfg.config_hash())
    return state
