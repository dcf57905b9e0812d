"""
Few-shot Sampling Module
每個類別從訓練集不放回抽取 k 筆
"""
import logging
from typing import Dict, List, Tuple

import numpy as np

from errors import ConfigurationError
from pairgen.generator import FewShotSet
from .loader import LabeledDataset

logger = logging.getLogger(__name__)


def sample_few_shot(ds: LabeledDataset, k: int, seed: int) -> FewShotSet:
    """
    依類別均勻抽樣 min(k, n_c) 筆

    Args:
        ds: 資料集 (只從 train 抽)
        k: 每類筆數
        seed: 抽樣種子，不同種子對應不同的實驗重複

    Returns:
        FewShotSet，數量不足的類別記錄在 shortfall
    """
    if k < 1:
        raise ConfigurationError(f"shots per class must be >= 1, got {k}")

    rng = np.random.default_rng(seed)
    by_class: Dict[str, List[int]] = {c: [] for c in ds.classes}
    for index, (_, label) in enumerate(ds.train):
        by_class[label].append(index)

    items: List[Tuple[str, str]] = []
    indices: List[int] = []
    shortfall: Dict[str, int] = {}
    for label in ds.classes:
        pool = by_class[label]
        if not pool:
            continue
        take = min(k, len(pool))
        if take < k:
            shortfall[label] = take
        picked = rng.choice(len(pool), size=take, replace=False)
        for position in picked:
            index = pool[int(position)]
            indices.append(index)
            items.append(ds.train[index])

    if shortfall:
        logger.warning("few-shot shortfall in %s (k=%d): %s", ds.name, k, shortfall)

    present = tuple(c for c in ds.classes if by_class[c])
    return FewShotSet(
        items=items,
        classes=present,
        shots_per_class=k,
        sampling_seed=seed,
        source_indices=indices,
        shortfall=shortfall,
    )


def unlabeled_pool(ds: LabeledDataset, fs: FewShotSet) -> List[str]:
    """自我訓練用的未標記文字：訓練集去掉已抽中的樣本"""
    taken = set(fs.source_indices)
    return [text for index, (text, _) in enumerate(ds.train) if index not in taken]
