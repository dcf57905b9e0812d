"""
Pair Generator Module
由 few-shot 標記句子產生 SetFit 的對比訓練句對
"""
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Dict, List, Sequence, Tuple

import numpy as np

from errors import NoNegativesError, NoPositivesError, PairGenerationError


class PairStrategy(Enum):
    """句對產生策略"""
    EXHAUSTIVE = "EXHAUSTIVE"
    BALANCED_SAMPLED = "BALANCED_SAMPLED"


@dataclass
class FewShotSet:
    """
    每個類別 k 筆的標記句子

    Attributes:
        items: (text, label) 列表
        classes: 類別順序 (與資料集一致)
        shots_per_class: 要求的 k
        sampling_seed: 抽樣種子
        source_indices: 每筆在訓練集中的索引
        shortfall: 不足 k 筆的類別 -> 實際筆數
    """
    items: List[Tuple[str, str]]
    classes: Tuple[str, ...]
    shots_per_class: int
    sampling_seed: int
    source_indices: List[int] = field(default_factory=list)
    shortfall: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        labels = {label for _, label in self.items}
        unknown = labels - set(self.classes)
        if unknown:
            raise PairGenerationError(f"labels outside the class set: {sorted(unknown)}")
        empty = [c for c in self.classes if c not in labels]
        if empty:
            raise PairGenerationError(f"classes without any item: {empty}")

    @property
    def texts(self) -> List[str]:
        return [text for text, _ in self.items]

    @property
    def labels(self) -> List[str]:
        return [label for _, label in self.items]

    def label_ids(self) -> np.ndarray:
        index = {c: i for i, c in enumerate(self.classes)}
        return np.array([index[label] for label in self.labels], dtype=np.int64)

    def class_counts(self) -> Dict[str, int]:
        counts = {c: 0 for c in self.classes}
        for label in self.labels:
            counts[label] += 1
        return counts


@dataclass(frozen=True)
class LabeledSentencePair:
    """y=1 代表同類別；first/second 是 FewShotSet 內的位置"""
    s1: str
    s2: str
    y: int
    first: int
    second: int


def expected_counts(class_counts: Sequence[int]) -> Tuple[int, int]:
    """
    EXHAUSTIVE 的正負樣本數

    正例 = Σ C(n_c, 2)，負例 = (N² - Σ n_c²) / 2
    """
    n = sum(class_counts)
    positives = sum(c * (c - 1) // 2 for c in class_counts)
    negatives = (n * n - sum(c * c for c in class_counts)) // 2
    return positives, negatives


def generate_pairs(
    fs: FewShotSet,
    strategy: PairStrategy = PairStrategy.BALANCED_SAMPLED,
    rng_seed: int = 0,
) -> List[LabeledSentencePair]:
    """
    產生句對

    EXHAUSTIVE: 所有同類別無序對 (y=1) 與所有跨類別對 (y=0)
    BALANCED_SAMPLED: 全部正例 + 等量不放回抽樣的負例 (不足則全取)

    Raises:
        NoNegativesError: 只有一個類別
        NoPositivesError: 沒有任何同類別句對
    """
    if len(fs.classes) < 2:
        raise NoNegativesError("pair generation needs at least two classes")

    labels = fs.labels
    positives: List[Tuple[int, int]] = []
    negatives: List[Tuple[int, int]] = []
    for i, j in combinations(range(len(fs.items)), 2):
        (positives if labels[i] == labels[j] else negatives).append((i, j))

    if not positives:
        raise NoPositivesError("every class has a single shot, no positive pairs exist")

    rng = np.random.default_rng(rng_seed)
    if strategy is PairStrategy.BALANCED_SAMPLED and len(negatives) > len(positives):
        picked = rng.choice(len(negatives), size=len(positives), replace=False)
        negatives = [negatives[k] for k in sorted(picked)]

    indexed = [(i, j, 1) for i, j in positives] + [(i, j, 0) for i, j in negatives]
    order = rng.permutation(len(indexed))
    texts = fs.texts
    return [
        LabeledSentencePair(texts[i], texts[j], y, i, j)
        for i, j, y in (indexed[k] for k in order)
    ]


def pairs_for_epoch(
    fs: FewShotSet,
    strategy: PairStrategy,
    rng_seed: int,
    epoch: int,
) -> List[LabeledSentencePair]:
    """每個 epoch 以 seed + epoch 重新產生句對"""
    return generate_pairs(fs, strategy, rng_seed + epoch)
