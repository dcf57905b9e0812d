"""
Training Loop
AdamW + 線性 warmup；目標函數丟出 SkipBatch 時略過該步
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Sequence, TypeVar

import numpy as np
import torch
from transformers import get_linear_schedule_with_warmup

from errors import SkipBatch

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass
class TrainingReport:
    """訓練過程紀錄"""
    total_steps: int = 0
    optimizer_steps: int = 0
    skipped: int = 0
    losses: List[float] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def first_loss(self) -> float:
        return self.losses[0] if self.losses else float('nan')

    @property
    def last_loss(self) -> float:
        return self.losses[-1] if self.losses else float('nan')


def batch_stream(items: Sequence[T], batch_size: int, seed: int) -> Iterator[List[T]]:
    """無限循環的 mini-batch：每一輪以 seed + 輪次打亂"""
    if not items:
        return
    epoch = 0
    while True:
        order = np.random.default_rng(seed + epoch).permutation(len(items))
        for start in range(0, len(items), batch_size):
            yield [items[i] for i in order[start:start + batch_size]]
        epoch += 1


def run_steps(
    parameters: Sequence[torch.nn.Parameter],
    loss_fn: Callable[[int], torch.Tensor],
    total_steps: int,
    learning_rate: float,
    weight_decay: float = 0.01,
    warmup_ratio: float = 0.1,
    rng_seed: int = 0,
    log_every: int = 50,
    label: str = "train",
) -> TrainingReport:
    """
    執行固定步數的梯度訓練

    Args:
        parameters: 要更新的參數 (其餘參數應已凍結)
        loss_fn: step -> loss，自行取得該步的 batch
        total_steps: 總步數 (0 代表不訓練)
        learning_rate: 峰值學習率
        weight_decay: AdamW 權重衰減
        warmup_ratio: warmup 佔總步數的比例
        rng_seed: dropout 等隨機性的種子
    """
    report = TrainingReport(total_steps=total_steps)
    params = [p for p in parameters if p.requires_grad]
    if total_steps == 0 or not params:
        return report

    optimizer = torch.optim.AdamW(params, lr=learning_rate, weight_decay=weight_decay)
    scheduler = get_linear_schedule_with_warmup(
        optimizer,
        num_warmup_steps=int(warmup_ratio * total_steps),
        num_training_steps=total_steps,
    )
    started = time.perf_counter()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(rng_seed)
        for step in range(total_steps):
            try:
                loss = loss_fn(step)
            except SkipBatch as skip:
                report.skipped += 1
                logger.debug("[%s] step %d skipped: %s", label, step, skip.reason)
                continue
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            scheduler.step()
            report.optimizer_steps += 1
            report.losses.append(float(loss.detach()))
            if log_every and (step + 1) % log_every == 0:
                logger.info("[%s] step %d/%d loss=%.4f", label, step + 1, total_steps, report.losses[-1])
    report.seconds = time.perf_counter() - started
    if report.skipped:
        logger.warning("[%s] skipped %d of %d batches", label, report.skipped, total_steps)
    return report
