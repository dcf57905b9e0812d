"""
Domain-Adaptive Pre-Training
在目標任務的無標記文字上繼續訓練 (MLM / TSDAE / SimCSE)
"""
import logging
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
from transformers import AutoModelForMaskedLM

from adapters.portability import attach, record_adapter_stage
from encoder.state import (
    EncoderState,
    Scope,
    Stage,
    apply_manifest,
    select_trainable,
    tokenize,
)
from errors import ConfigurationError
from objectives.denoising import DenoisingAutoEncoderObjective
from objectives.heads import MLMHead, TiedDenoisingDecoder
from objectives.losses import mlm_loss
from objectives.masking import plan_mlm_mask
from objectives.unsupervised import simcse_step, tsdae_step
from .stages import Objective, StageConfig, StageKind
from .training import TrainingReport, batch_stream, run_steps

logger = logging.getLogger(__name__)


def uses_sentence_transformers(state: EncoderState, cfg: StageConfig) -> bool:
    """預訓練架構上只訓練主幹的 TSDAE 交給 sentence_transformers"""
    return (
        cfg.objective is Objective.TSDAE
        and bool(state.profile.pretrained_name)
        and cfg.peft is None
        and not state.has_adapter
    )


def _build_head(state: EncoderState, objective: Objective) -> Optional[nn.Module]:
    """輔助頭：MLM head 或 TSDAE decoder，SimCSE 不需要"""
    if objective is Objective.MLM:
        head = MLMHead(state.profile)
        if state.profile.pretrained_name:
            lm = AutoModelForMaskedLM.from_pretrained(state.profile.pretrained_name)
            head.load_hf_lm_head(lm.state_dict())
        return head
    if objective is Objective.TSDAE:
        return TiedDenoisingDecoder(state.profile)
    return None


def train_dapt(
    base: EncoderState,
    corpus: Sequence[str],
    cfg: StageConfig,
) -> Tuple[EncoderState, TrainingReport]:
    """
    DAPT 主流程，回傳 (新編碼器, 訓練紀錄)；輸入的編碼器不會被修改

    cfg.peft 有設定時插入新的 adapter 並只訓練 adapter，否則訓練整個主幹
    """
    texts: List[str] = [t for t in corpus if t]
    if not texts:
        raise ConfigurationError("DAPT needs a nonempty unlabeled corpus")

    state = base.clone()
    if cfg.peft is not None:
        attach(state, cfg.peft, rng_seed=cfg.rng_seed)
        scope = Scope.ADAPTER
    else:
        scope = Scope.TRANSFORMER
    manifest = select_trainable(state, scope)
    apply_manifest(state, manifest)

    objective = cfg.objective
    total_steps = cfg.total_steps(len(texts))
    if total_steps > 0 and uses_sentence_transformers(state, cfg):
        return _train_tsdae_sentence_transformers(state, texts, cfg, total_steps)

    head = _build_head(state, objective)
    parameters = list(manifest.parameters) + (list(head.parameters()) if head is not None else [])
    tokenizer = state.tokenizer
    batches = batch_stream(texts, cfg.batch_size, cfg.rng_seed)
    def step_seed(step: int) -> int:
        # 每一步的遮罩 / 刪字都用不同但可重現的種子
        return cfg.rng_seed * 1_000_003 + step

    def loss_fn(step: int) -> torch.Tensor:
        batch = tokenize(state, next(batches))
        if objective is Objective.MLM:
            _, corrupted, labels = plan_mlm_mask(
                batch,
                cfg.mask_prob,
                step_seed(step),
                mask_token_id=tokenizer.mask_token_id,
                vocab_size=state.profile.vocab_size,
                special_ids=tokenizer.all_special_ids,
            )
            hidden = state.model(corrupted.token_ids, corrupted.attention_mask)
            return mlm_loss(head(hidden, state.model.word_embeddings.weight), labels)
        if objective is Objective.TSDAE:
            return tsdae_step(state, batch, head, cfg.deletion_ratio, step_seed(step))
        return simcse_step(state, batch, cfg.dropout, cfg.mnrl_scale)

    state.model.train()
    if head is not None:
        head.train()
    try:
        report = run_steps(
            parameters,
            loss_fn,
            total_steps,
            learning_rate=cfg.resolved_learning_rate(StageKind.DAPT),
            weight_decay=cfg.weight_decay,
            warmup_ratio=cfg.warmup_ratio,
            rng_seed=cfg.rng_seed,
            log_every=cfg.log_every,
            label=f"dapt-{objective.value.lower()}",
        )
    finally:
        state.model.eval()
        for param in state.model.parameters():
            param.requires_grad_(True)

    return _finish(state, cfg, total_steps, report)


def _train_tsdae_sentence_transformers(
    state: EncoderState,
    texts: List[str],
    cfg: StageConfig,
    total_steps: int,
) -> Tuple[EncoderState, TrainingReport]:
    objective = DenoisingAutoEncoderObjective(state, texts, cfg.batch_size, cfg.deletion_ratio, cfg.rng_seed)
    objective.train()
    report = run_steps(
        objective.parameters(),
        objective,
        total_steps,
        learning_rate=cfg.resolved_learning_rate(StageKind.DAPT),
        weight_decay=cfg.weight_decay,
        warmup_ratio=cfg.warmup_ratio,
        rng_seed=cfg.rng_seed,
        log_every=cfg.log_every,
        label="dapt-tsdae-st",
    )
    objective.write_back()
    for param in state.model.parameters():
        param.requires_grad_(True)
    return _finish(state, cfg, total_steps, report)


def _finish(
    state: EncoderState,
    cfg: StageConfig,
    total_steps: int,
    report: TrainingReport,
) -> Tuple[EncoderState, TrainingReport]:
    detail = {'objective': cfg.objective.value, 'steps': total_steps, 'skipped': report.skipped}
    if cfg.peft is not None:
        record_adapter_stage(state, Stage.DAPT, **detail)
    else:
        state.record_stage(Stage.DAPT, **detail)
    logger.info("DAPT (%s) finished: %d steps in %.1fs", cfg.objective.value, report.optimizer_steps, report.seconds)
    return state, report


def run_dapt(base: EncoderState, corpus: Sequence[str], cfg: StageConfig) -> EncoderState:
    """在無標記語料上做 DAPT，provenance 加上 DAPT"""
    return train_dapt(base, corpus, cfg)[0]
