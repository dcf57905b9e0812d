"""
Encoder module: transformer sentence encoder, pooling and parameter scoping
"""
from .profiles import ArchitectureProfile, FULL_PROFILE, TINY_PROFILE, build_tokenizer, get_profile
from .state import (
    EncoderState,
    Pooling,
    ProvenanceEntry,
    Scope,
    Stage,
    TokenBatch,
    TrainableManifest,
    apply_manifest,
    cos_sim,
    cos_sim_matrix,
    default_scope,
    parse_scope,
    encode,
    encode_texts,
    forward_embeddings,
    load_pretrained_encoder,
    new_encoder,
    select_trainable,
    tokenize,
)
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    'ArchitectureProfile', 'FULL_PROFILE', 'TINY_PROFILE', 'build_tokenizer', 'get_profile',
    'EncoderState', 'Pooling', 'ProvenanceEntry', 'Scope', 'Stage', 'TokenBatch', 'TrainableManifest',
    'apply_manifest', 'cos_sim', 'cos_sim_matrix', 'default_scope', 'parse_scope', 'encode', 'encode_texts',
    'forward_embeddings', 'load_pretrained_encoder', 'new_encoder', 'select_trainable', 'tokenize',
    'load_checkpoint', 'save_checkpoint',
]
