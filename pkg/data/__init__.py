"""
Data module: dataset ingestion, few-shot sampling and synthetic corpora
"""
from .loader import (
    LabeledDataset,
    PairStream,
    load_dataset,
    load_pair_stream,
    mix_pair_streams,
    save_dataset,
    save_pair_stream,
    unlabeled_corpus,
)
from .sampling import sample_few_shot, unlabeled_pool
from .synthetic import SynthCorpus, SynthSpec, bag_of_words_predict, synth_corpus

__all__ = [
    'LabeledDataset', 'PairStream', 'load_dataset', 'load_pair_stream', 'mix_pair_streams',
    'save_dataset', 'save_pair_stream', 'unlabeled_corpus',
    'sample_few_shot', 'unlabeled_pool',
    'SynthCorpus', 'SynthSpec', 'bag_of_words_predict', 'synth_corpus',
]
