"""
Synthetic Corpus Module
桌面規模的合成資料：類別專屬詞彙 + 共用填充詞的 bag-of-words 句子
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from errors import ConfigurationError
from .loader import LabeledDataset, PairStream


@dataclass
class SynthSpec:
    """
    合成語料設定

    Attributes:
        classes: 類別數
        words_per_class: 每個類別專屬的詞數
        filler_words: 所有類別共用的填充詞數
        items_per_class: 每類訓練句數
        test_items_per_class: 每類測試句數
        sentence_len: 每句詞數
        filler_ratio: 填充詞比例 (越高越難分)
        seed: 亂數種子
        partitions: 直接指定每類詞彙 (選用，覆蓋自動切分)
    """
    classes: int = 3
    words_per_class: int = 20
    filler_words: int = 100
    items_per_class: int = 50
    test_items_per_class: int = 20
    sentence_len: int = 12
    filler_ratio: float = 0.5
    seed: int = 0
    partitions: Optional[Dict[str, Sequence[str]]] = None
    name: str = "synth"

    def resolve_partitions(self) -> Tuple[Dict[str, List[str]], List[str]]:
        """回傳 (類別 -> 詞彙, 填充詞)；詞彙重疊時丟出 ConfigurationError"""
        if self.partitions is not None:
            partitions = {label: list(words) for label, words in self.partitions.items()}
            used = set().union(*partitions.values()) if partitions else set()
            start = 0
        else:
            partitions = {
                f"class_{c}": [f"tok{c * self.words_per_class + i}" for i in range(self.words_per_class)]
                for c in range(self.classes)
            }
            used = set().union(*partitions.values())
            start = self.classes * self.words_per_class

        seen: Dict[str, str] = {}
        for label, words in partitions.items():
            if not words:
                raise ConfigurationError(f"class {label} has an empty vocabulary partition")
            for word in words:
                if word in seen and seen[word] != label:
                    raise ConfigurationError(
                        f"vocabulary partitions overlap: {word!r} in {seen[word]} and {label}"
                    )
                seen[word] = label

        filler, index = [], start
        while len(filler) < self.filler_words:
            word = f"tok{index}"
            if word not in used:
                filler.append(word)
            index += 1
        return partitions, filler


@dataclass
class SynthCorpus:
    """合成語料：分類資料集、無標記語料與 paraphrase 句對"""
    dataset: LabeledDataset
    unlabeled: List[str]
    pairs: PairStream
    partitions: Dict[str, List[str]] = field(default_factory=dict)
    filler: List[str] = field(default_factory=list)


def _sentence(rng: np.random.Generator, vocab: List[str], filler: List[str], spec: SynthSpec) -> str:
    n_signal = max(1, int(round(spec.sentence_len * (1.0 - spec.filler_ratio))))
    n_filler = spec.sentence_len - n_signal if filler else 0
    words = list(rng.choice(vocab, size=n_signal)) + list(rng.choice(filler, size=n_filler) if n_filler else [])
    return " ".join(str(words[i]) for i in rng.permutation(len(words)))


def synth_corpus(spec: SynthSpec) -> SynthCorpus:
    """
    產生合成語料

    - 每句由該類詞彙抽出的訊號詞與共用填充詞混合後打亂
    - paraphrase 正例：同一類詞彙重新抽一句
    - 無標記語料 = 訓練集文字
    """
    if spec.sentence_len < 1 or spec.items_per_class < 1:
        raise ConfigurationError("sentence_len and items_per_class must be >= 1")
    if not 0.0 <= spec.filler_ratio < 1.0:
        raise ConfigurationError(f"filler_ratio must lie in [0, 1), got {spec.filler_ratio}")
    partitions, filler = spec.resolve_partitions()
    rng = np.random.default_rng(spec.seed)

    train: List[Tuple[str, str]] = []
    test: List[Tuple[str, str]] = []
    pairs: List[Tuple[str, str]] = []
    for label, vocab in partitions.items():
        for _ in range(spec.items_per_class):
            text = _sentence(rng, vocab, filler, spec)
            train.append((text, label))
            pairs.append((text, _sentence(rng, vocab, filler, spec)))
        for _ in range(spec.test_items_per_class):
            test.append((_sentence(rng, vocab, filler, spec), label))

    train = [train[i] for i in rng.permutation(len(train))]
    pairs = [pairs[i] for i in rng.permutation(len(pairs))]
    dataset = LabeledDataset(name=spec.name, train=train, test=test, classes=tuple(partitions))
    return SynthCorpus(
        dataset=dataset,
        unlabeled=dataset.train_texts,
        pairs=PairStream(source=f"{spec.name}-paraphrase", pairs=pairs),
        partitions=partitions,
        filler=filler,
    )


def bag_of_words_predict(partitions: Dict[str, Sequence[str]], text: str) -> str:
    """理想的 bag-of-words 分類器：數每類詞彙出現次數取最大"""
    words = text.split()
    scores = {label: sum(w in set(vocab) for w in words) for label, vocab in partitions.items()}
    return max(scores, key=scores.get)
