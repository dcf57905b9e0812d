"""
SetFit and Self-Training
少樣本分類：對比式微調編碼器 + logistic regression head，選用的自我訓練
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import joblib
import numpy as np
import torch
from sklearn.linear_model import LogisticRegression
from sklearn.semi_supervised import SelfTrainingClassifier

from encoder.checkpoint import load_checkpoint, save_checkpoint
from encoder.state import (
    EncoderState,
    Scope,
    Stage,
    apply_manifest,
    default_scope,
    encode_texts,
    forward_embeddings,
    select_trainable,
    tokenize,
)
from errors import ConfigurationError
from objectives.losses import PairBatch, cosine_pair_loss
from pairgen.generator import FewShotSet, LabeledSentencePair, PairStrategy, pairs_for_epoch
from .training import TrainingReport, run_steps

logger = logging.getLogger(__name__)

HEAD_FILE = "head.joblib"
CLASSIFIER_FILE = "classifier.json"
ENCODER_DIR = "encoder"


@dataclass(frozen=True)
class HeadConfig:
    """L2 正則化的多類別 logistic regression"""
    c: float = 1.0
    solver: str = "lbfgs"
    max_iter: int = 1000

    def build(self) -> LogisticRegression:
        return LogisticRegression(C=self.c, solver=self.solver, max_iter=self.max_iter)


@dataclass(frozen=True)
class SetFitConfig:
    """第一階段 (對比式微調) 的設定"""
    epochs: int = 1
    batch_size: int = 16
    learning_rate: float = 2e-5
    pair_strategy: PairStrategy = PairStrategy.BALANCED_SAMPLED
    loss_reduction: str = "squared"
    rng_seed: int = 0
    warmup_ratio: float = 0.1
    weight_decay: float = 0.01
    log_every: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("setfit epochs must be >= 0 and batch_size >= 1")


@dataclass
class Classifier:
    """
    編碼器 + 分類頭

    head 的類別索引對應 classes 的順序
    """
    encoder: EncoderState
    head: LogisticRegression
    classes: Tuple[str, ...]
    meta: Dict[str, Any] = field(default_factory=dict)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return encode_texts(self.encoder, list(texts))

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        return self.head.predict_proba(self.embed(texts))

    def predict_ids(self, embeddings: np.ndarray) -> np.ndarray:
        return self.head.predict(embeddings)

    def predict(self, texts: Sequence[str]) -> List[str]:
        return [self.classes[int(i)] for i in self.predict_ids(self.embed(texts))]

    def save(self, directory: Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_checkpoint(self.encoder, directory / ENCODER_DIR)
        joblib.dump(self.head, directory / HEAD_FILE)
        body = {'classes': list(self.classes), 'meta': self.meta}
        (directory / CLASSIFIER_FILE).write_text(json.dumps(body, indent=2, default=str), encoding="utf-8")
        return directory

    @classmethod
    def load(cls, directory: Path) -> "Classifier":
        directory = Path(directory)
        body = json.loads((directory / CLASSIFIER_FILE).read_text(encoding="utf-8"))
        return cls(
            encoder=load_checkpoint(directory / ENCODER_DIR),
            head=joblib.load(directory / HEAD_FILE),
            classes=tuple(body['classes']),
            meta=body.get('meta', {}),
        )


def fit_head(embeddings: np.ndarray, label_ids: np.ndarray, head_cfg: HeadConfig = HeadConfig()) -> LogisticRegression:
    """在固定的句向量上訓練分類頭"""
    head = head_cfg.build()
    head.fit(embeddings, label_ids)
    return head


def contrastive_finetune(
    state: EncoderState,
    fs: FewShotSet,
    scope: Scope,
    cfg: SetFitConfig,
) -> TrainingReport:
    """第一階段：在產生的句對上以餘弦損失微調 scope 內的參數 (就地修改 state)"""
    epoch_pairs: List[List[LabeledSentencePair]] = [
        pairs_for_epoch(fs, cfg.pair_strategy, cfg.rng_seed, epoch) for epoch in range(cfg.epochs)
    ]
    batches: List[List[LabeledSentencePair]] = []
    for pairs in epoch_pairs:
        for b in range(math.ceil(len(pairs) / cfg.batch_size)):
            batches.append(pairs[b * cfg.batch_size:(b + 1) * cfg.batch_size])

    manifest = select_trainable(state, scope)
    apply_manifest(state, manifest)

    def loss_fn(step: int) -> torch.Tensor:
        batch = batches[step]
        left = forward_embeddings(state, tokenize(state, [p.s1 for p in batch]))
        right = forward_embeddings(state, tokenize(state, [p.s2 for p in batch]))
        labels = torch.tensor([p.y for p in batch], dtype=left.dtype)
        return cosine_pair_loss(PairBatch(left, right, labels), reduction=cfg.loss_reduction)

    state.model.train()
    try:
        return run_steps(
            manifest.parameters,
            loss_fn,
            len(batches),
            learning_rate=cfg.learning_rate,
            weight_decay=cfg.weight_decay,
            warmup_ratio=cfg.warmup_ratio,
            rng_seed=cfg.rng_seed,
            log_every=cfg.log_every,
            label="setfit",
        )
    finally:
        state.model.eval()
        for param in state.model.parameters():
            param.requires_grad_(True)


def run_setfit(
    enc: EncoderState,
    fs: FewShotSet,
    scope: Optional[Scope] = None,
    head_cfg: HeadConfig = HeadConfig(),
    cfg: SetFitConfig = SetFitConfig(),
) -> Classifier:
    """
    SetFit 兩階段訓練

    1. 對比式微調 (scope 預設：有 adapter 時 ALL，否則 TRANSFORMER；NONE 則略過)
    2. 凍結編碼器，嵌入 k·|C| 筆樣本後訓練 logistic regression head

    Returns:
        Classifier (不修改輸入的編碼器)
    """
    scope = scope or default_scope(enc)
    if scope is Scope.NONE:
        state = enc
        steps = 0
    else:
        state = enc.clone()
        report = contrastive_finetune(state, fs, scope, cfg)
        steps = report.optimizer_steps
        state.record_stage(Stage.SETFIT, scope=scope.value, steps=steps, seed=cfg.rng_seed)

    embeddings = encode_texts(state, fs.texts)
    head = fit_head(embeddings, fs.label_ids(), head_cfg)
    logger.info("SetFit (%s scope) fitted on %d shots, %d contrastive steps", scope.value, len(fs.items), steps)
    return Classifier(
        encoder=state,
        head=head,
        classes=fs.classes,
        meta={'scope': scope.value, 'contrastive_steps': steps, 'shots': len(fs.items)},
    )


@dataclass
class SelfTrainingResult:
    """
    head: 在 gold + pseudo label 上重新訓練的分類頭
    labeled_iter: 每一筆 (gold 在前) 被加入的迭代次數，gold 為 0、從未加入為 -1
    """
    head: LogisticRegression
    labeled_iter: np.ndarray
    n_iter: int
    termination: str

    @property
    def pseudo_labeled(self) -> int:
        return int(np.sum(self.labeled_iter > 0))


def self_train_head(
    gold_x: np.ndarray,
    gold_y: np.ndarray,
    unlabeled_x: np.ndarray,
    threshold: float = 0.9,
    max_iter: int = 10,
    head_cfg: HeadConfig = HeadConfig(),
) -> SelfTrainingResult:
    """
    在預先計算的句向量上做自我訓練

    每一輪把最大類別機率 > threshold 的未標記樣本連同預測標籤加入訓練集，
    沒有新樣本時提前結束；gold 標籤永遠不會被改寫
    """
    if not 0 < threshold < math.inf:
        raise ConfigurationError(f"self-training threshold must lie in (0, inf), got {threshold}")
    n_gold = len(gold_y)
    if threshold >= 1.0 or len(unlabeled_x) == 0 or max_iter < 1:
        # 機率不可能超過 1：等同單純訓練
        reason = "threshold_unreachable" if threshold >= 1.0 else "no_unlabeled"
        return SelfTrainingResult(fit_head(gold_x, gold_y, head_cfg), np.zeros(n_gold, dtype=int), 0, reason)

    x = np.concatenate([gold_x, unlabeled_x], axis=0)
    y = np.concatenate([np.asarray(gold_y), np.full(len(unlabeled_x), -1, dtype=np.asarray(gold_y).dtype)])
    model = SelfTrainingClassifier(
        estimator=head_cfg.build(),
        threshold=threshold,
        criterion="threshold",
        max_iter=max_iter,
    )
    model.fit(x, y)
    result = SelfTrainingResult(
        head=model.estimator_,
        labeled_iter=np.asarray(model.labeled_iter_),
        n_iter=int(model.n_iter_),
        termination=str(model.termination_condition_),
    )
    logger.info(
        "self-training: %d pseudo-labels after %d iterations (%s)",
        result.pseudo_labeled, result.n_iter, result.termination,
    )
    return result


def run_self_training(
    clf: Classifier,
    enc: EncoderState,
    fs: FewShotSet,
    unlabeled: Sequence[str],
    threshold: float = 0.9,
    max_iter: int = 10,
    head_cfg: HeadConfig = HeadConfig(),
) -> Classifier:
    """
    以凍結的編碼器做自我訓練 (未標記文字只編碼一次)

    threshold >= 1 或沒有未標記資料時直接回傳原本的分類器
    """
    if not 0 < threshold < math.inf:
        raise ConfigurationError(f"self-training threshold must lie in (0, inf), got {threshold}")
    if threshold >= 1.0 or not unlabeled:
        return clf

    gold_x = encode_texts(enc, fs.texts)
    unlabeled_x = encode_texts(enc, list(unlabeled))
    result = self_train_head(gold_x, fs.label_ids(), unlabeled_x, threshold, max_iter, head_cfg)
    meta = {**clf.meta, 'pseudo_labeled': result.pseudo_labeled, 'self_training_iters': result.n_iter}
    return Classifier(encoder=enc, head=result.head, classes=clf.classes, meta=meta)
