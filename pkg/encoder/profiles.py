"""
Architecture profiles and tokenizers
架構設定：完整 DistilRoBERTa 與 CPU 可跑的 tiny 版本
"""
from dataclasses import dataclass, asdict
from functools import lru_cache
from typing import Dict, Any, List

from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace
from tokenizers.processors import TemplateProcessing
from transformers import AutoTokenizer, PreTrainedTokenizerBase, PreTrainedTokenizerFast


SPECIAL_TOKENS = ["<s>", "<pad>", "</s>", "<unk>", "<mask>"]


@dataclass(frozen=True)
class ArchitectureProfile:
    """Transformer 編碼器的結構參數 (同一個 architecture_id 共用同一個 tokenizer)"""
    architecture_id: str
    vocab_size: int
    hidden_dim: int
    num_layers: int
    num_heads: int
    intermediate_dim: int
    max_seq_len: int = 512
    max_positions: int = 514      # RoBERTa 位置表含 padding 偏移
    position_offset: int = 2      # padding_idx + 1
    pad_token_id: int = 1
    layer_norm_eps: float = 1e-5
    dropout: float = 0.1
    pretrained_name: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


FULL_PROFILE = ArchitectureProfile(
    architecture_id="distilroberta-base",
    vocab_size=50265,
    hidden_dim=768,
    num_layers=6,
    num_heads=12,
    intermediate_dim=3072,
    pretrained_name="distilroberta-base",
)

TINY_PROFILE = ArchitectureProfile(
    architecture_id="tiny-roberta",
    vocab_size=1000,
    hidden_dim=64,
    num_layers=2,
    num_heads=4,
    intermediate_dim=256,
)

PROFILES: Dict[str, ArchitectureProfile] = {
    "full": FULL_PROFILE,
    "tiny": TINY_PROFILE,
}


def get_profile(name_or_id: str) -> ArchitectureProfile:
    """以名稱 (tiny/full) 或 architecture_id 取得設定"""
    if name_or_id in PROFILES:
        return PROFILES[name_or_id]
    for profile in PROFILES.values():
        if profile.architecture_id == name_or_id:
            return profile
    raise KeyError(f"unknown architecture profile: {name_or_id}")


def tiny_vocabulary(profile: ArchitectureProfile = TINY_PROFILE) -> List[str]:
    """tiny 詞表：特殊符號 + tok0 ... tokN"""
    n_words = profile.vocab_size - len(SPECIAL_TOKENS)
    return SPECIAL_TOKENS + [f"tok{i}" for i in range(n_words)]


@lru_cache(maxsize=None)
def build_tokenizer(profile: ArchitectureProfile) -> PreTrainedTokenizerBase:
    """
    取得 architecture 固定的 tokenizer

    tokenizer 建好之後不會再修改，adapter 可攜性依賴這一點
    """
    if profile.pretrained_name:
        return AutoTokenizer.from_pretrained(profile.pretrained_name)

    vocab = {word: idx for idx, word in enumerate(tiny_vocabulary(profile))}
    backend = Tokenizer(WordLevel(vocab=vocab, unk_token="<unk>"))
    backend.pre_tokenizer = Whitespace()
    backend.post_processor = TemplateProcessing(
        single="<s> $A </s>",
        special_tokens=[("<s>", vocab["<s>"]), ("</s>", vocab["</s>"])],
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=backend,
        bos_token="<s>",
        eos_token="</s>",
        pad_token="<pad>",
        unk_token="<unk>",
        mask_token="<mask>",
        cls_token="<s>",
        sep_token="</s>",
        model_max_length=profile.max_seq_len,
    )
