"""
Pairgen module: contrastive sentence pairs from few-shot data
"""
from .generator import (
    FewShotSet,
    LabeledSentencePair,
    PairStrategy,
    expected_counts,
    generate_pairs,
    pairs_for_epoch,
)

__all__ = [
    'FewShotSet', 'LabeledSentencePair', 'PairStrategy',
    'expected_counts', 'generate_pairs', 'pairs_for_epoch',
]
