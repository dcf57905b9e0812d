"""
Objectives module: training losses for SetFit, SEPT and DAPT
"""
from .losses import IGNORE_INDEX, PairBatch, cosine_pair_loss, mlm_loss, mnrl_loss
from .masking import MaskAction, MaskingPlan, plan_mlm_mask
from .heads import MLMHead, TiedDenoisingDecoder
from .unsupervised import delete_tokens, kept_length, simcse_step, tsdae_step
from .denoising import DenoisingAutoEncoderObjective, to_sentence_transformer, word_deletion_noise

__all__ = [
    'IGNORE_INDEX', 'PairBatch', 'cosine_pair_loss', 'mlm_loss', 'mnrl_loss',
    'MaskAction', 'MaskingPlan', 'plan_mlm_mask',
    'MLMHead', 'TiedDenoisingDecoder',
    'delete_tokens', 'kept_length', 'simcse_step', 'tsdae_step',
    'DenoisingAutoEncoderObjective', 'to_sentence_transformer', 'word_deletion_noise',
]
