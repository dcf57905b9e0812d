"""
Sentence-Transformers TSDAE
預訓練架構的 TSDAE：decoder 與重建損失使用 sentence_transformers 的 DenoisingAutoEncoderLoss

訓練在 SentenceTransformer 副本上進行 (decoder 與編碼器共用權重)，
結束後 write_back() 把主幹權重寫回原生編碼器
"""
import logging
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np
import torch
from sentence_transformers import SentenceTransformer, losses, models
from sentence_transformers.datasets import DenoisingAutoEncoderDataset
from torch.utils.data import DataLoader

from encoder.model import load_hf_state, to_hf_state
from encoder.state import EncoderState, Pooling
from errors import ConfigurationError, StructuralError
from .unsupervised import kept_length

logger = logging.getLogger(__name__)


def word_deletion_noise(deletion_ratio: float, rng_seed: int) -> Callable[[str], str]:
    """
    以空白切詞，隨機刪除 deletion_ratio 的詞 (保留數與 token 刪除相同，至少 1 個)

    取代 DenoisingAutoEncoderDataset 預設的 nltk 斷詞，雜訊可由 rng_seed 重現
    """
    if not 0.0 <= deletion_ratio < 1.0:
        raise ConfigurationError(f"deletion_ratio must lie in [0, 1), got {deletion_ratio}")
    rng = np.random.default_rng(rng_seed)

    def noise(text: str) -> str:
        words = text.split()
        if not words:
            return text
        keep = np.sort(rng.permutation(len(words))[:kept_length(len(words), deletion_ratio)])
        return " ".join(words[i] for i in keep)

    return noise


def to_sentence_transformer(state: EncoderState, model_dir: str) -> SentenceTransformer:
    """
    以 model_dir 的 transformers 設定建立 SentenceTransformer，再放入原生編碼器目前的主幹權重
    """
    if state.has_adapter:
        raise ConfigurationError("sentence-transformers TSDAE trains the backbone only; detach the adapter first")
    device = next(state.model.parameters()).device
    word = models.Transformer(model_dir, max_seq_length=state.max_seq_len)
    if word.get_word_embedding_dimension() != state.hidden_dim:
        raise StructuralError(
            f"{model_dir} has hidden size {word.get_word_embedding_dimension()}, encoder has {state.hidden_dim}"
        )
    _, unexpected = word.auto_model.load_state_dict(to_hf_state(state.backbone_state(), state.num_layers), strict=False)
    if unexpected:
        raise StructuralError(f"unexpected transformers weights: {unexpected}")
    mode = "cls" if state.pooling is Pooling.CLS else "mean"
    pooling = models.Pooling(word.get_word_embedding_dimension(), pooling_mode=mode)
    return SentenceTransformer(modules=[word, pooling], device=str(device))


class DenoisingAutoEncoderObjective:
    """
    可直接交給 run_steps 的 TSDAE 目標函數

    Args:
        state: 要訓練的編碼器 (不可帶 adapter)
        texts: 無標記句子
        batch_size: 每步的句子數
        deletion_ratio: 刪詞比例
        rng_seed: 資料順序、刪詞與 decoder cross-attention 初始化的種子
        model_dir: transformers 模型目錄或名稱，預設為 profile.pretrained_name
    """

    def __init__(
        self,
        state: EncoderState,
        texts: Sequence[str],
        batch_size: int,
        deletion_ratio: float = 0.6,
        rng_seed: int = 0,
        model_dir: Optional[str] = None,
    ):
        model_dir = model_dir or state.profile.pretrained_name
        if not model_dir:
            raise ConfigurationError(f"profile {state.architecture_id} has no transformers checkpoint for TSDAE")
        self.state = state
        self.device = next(state.model.parameters()).device
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(rng_seed)
            self.model = to_sentence_transformer(state, model_dir)
            self.loss = losses.DenoisingAutoEncoderLoss(self.model, decoder_name_or_path=model_dir, tie_encoder_decoder=True)
        self.loss.to(self.device)
        logger.info("TSDAE through sentence-transformers, decoder tied to %s", model_dir)

        dataset = DenoisingAutoEncoderDataset(list(texts), noise_fn=word_deletion_noise(deletion_ratio, rng_seed))
        self.loader = DataLoader(
            dataset,
            batch_size=batch_size,
            shuffle=True,
            collate_fn=self._collate,
            generator=torch.Generator().manual_seed(rng_seed),
        )
        self._batches = self._cycle()

    def _collate(self, examples) -> List[Dict[str, torch.Tensor]]:
        noisy = self.model.tokenize([example.texts[0] for example in examples])
        original = self.model.tokenize([example.texts[1] for example in examples])
        return [noisy, original]

    def _cycle(self) -> Iterator[List[Dict[str, torch.Tensor]]]:
        while True:
            yield from self.loader

    def parameters(self) -> List[torch.nn.Parameter]:
        """編碼器 + decoder 的參數 (共用的權重只出現一次)"""
        return list(self.loss.parameters())

    def train(self) -> None:
        self.loss.train()

    def __call__(self, step: int) -> torch.Tensor:
        features = [{k: v.to(self.device) for k, v in f.items()} for f in next(self._batches)]
        return self.loss(features, None)

    def write_back(self) -> EncoderState:
        """把訓練後的主幹權重複製回原生編碼器"""
        load_hf_state(self.state.model, self.model[0].auto_model.state_dict())
        return self.state
