"""
Encoder State Module
句子編碼器狀態：權重、pooling、adapter 插槽與訓練來歷 (provenance)
"""
import copy
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from transformers import AutoModel, PreTrainedTokenizerBase

from errors import ConfigurationError, DegenerateInputError, StructuralError
from .model import SentenceEncoder, load_hf_state
from .profiles import ArchitectureProfile, build_tokenizer

logger = logging.getLogger(__name__)


class Pooling(Enum):
    """句向量 pooling 方式"""
    MEAN = "MEAN"
    CLS = "CLS"


class Stage(Enum):
    """訓練階段標籤"""
    BASE = "BASE"
    DAPT = "DAPT"
    SEPT = "SEPT"
    SETFIT = "SETFIT"


class Scope(Enum):
    """可訓練參數範圍"""
    NONE = "NONE"
    ADAPTER = "ADAPTER"
    TRANSFORMER = "TRANSFORMER"
    ALL = "ALL"


@dataclass(frozen=True)
class ProvenanceEntry:
    """單一訓練階段紀錄"""
    stage: Stage
    detail: Tuple[Tuple[str, Any], ...] = ()

    @classmethod
    def of(cls, stage: Stage, **detail: Any) -> "ProvenanceEntry":
        return cls(stage, tuple(sorted(detail.items())))

    def to_dict(self) -> Dict[str, Any]:
        return {'stage': self.stage.value, **dict(self.detail)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ProvenanceEntry":
        data = dict(data)
        stage = Stage(data.pop('stage'))
        return cls.of(stage, **data)


@dataclass
class TokenBatch:
    """token id 與 attention mask，形狀皆為 [batch, seq]"""
    token_ids: torch.Tensor
    attention_mask: torch.Tensor

    def __post_init__(self):
        if self.token_ids.shape != self.attention_mask.shape or self.token_ids.dim() != 2:
            raise StructuralError(
                f"token_ids {tuple(self.token_ids.shape)} and attention_mask "
                f"{tuple(self.attention_mask.shape)} must be matching [batch, seq] matrices"
            )
        if not torch.all((self.attention_mask == 0) | (self.attention_mask == 1)):
            raise StructuralError("attention_mask must be 0/1")
        if self.token_ids.shape[0] > 0 and not torch.all(self.attention_mask.sum(dim=1) >= 1):
            raise StructuralError("every row needs at least one unmasked position")

    def __len__(self) -> int:
        return self.token_ids.shape[0]

    def rows(self, index) -> "TokenBatch":
        return TokenBatch(self.token_ids[index], self.attention_mask[index])


@dataclass
class EncoderState:
    """
    句子編碼器

    同一時間只允許一個訓練迴圈修改 (single-writer)；
    跨執行環境只能透過 checkpoint 傳遞
    """
    profile: ArchitectureProfile
    model: SentenceEncoder
    pooling: Pooling = Pooling.MEAN
    adapter_config: Optional[Any] = None     # adapters.AdapterConfig
    adapter_meta: Dict[str, Any] = field(default_factory=dict)
    provenance: List[ProvenanceEntry] = field(default_factory=lambda: [ProvenanceEntry.of(Stage.BASE)])

    @property
    def architecture_id(self) -> str:
        return self.profile.architecture_id

    @property
    def hidden_dim(self) -> int:
        return self.profile.hidden_dim

    @property
    def num_layers(self) -> int:
        return self.profile.num_layers

    @property
    def max_seq_len(self) -> int:
        return self.profile.max_seq_len

    @property
    def has_adapter(self) -> bool:
        return self.adapter_config is not None

    @property
    def tokenizer(self) -> PreTrainedTokenizerBase:
        return build_tokenizer(self.profile)

    @property
    def stages(self) -> List[Stage]:
        return [entry.stage for entry in self.provenance]

    def record_stage(self, stage: Stage, **detail: Any) -> None:
        """新增訓練來歷 (只能附加，不可重排)"""
        self.provenance.append(ProvenanceEntry.of(stage, **detail))

    def clone(self) -> "EncoderState":
        """深拷貝，訓練前先複製以免改到呼叫端的編碼器"""
        return copy.deepcopy(self)

    def backbone_state(self) -> Dict[str, torch.Tensor]:
        """主幹權重；peft 包住的投影層仍以原本的名稱輸出"""
        return {
            backbone_name(name): t for name, t in self.model.state_dict().items() if not is_adapter_param(name)
        }

    def adapter_state(self) -> Dict[str, torch.Tensor]:
        return {name: t for name, t in self.model.state_dict().items() if is_adapter_param(name)}


def is_adapter_param(name: str) -> bool:
    """adapters 插槽或 peft 注入的 LoRA 權重"""
    return ".adapters." in name or ".lora_" in name


def backbone_name(name: str) -> str:
    return name.replace(".base_layer", "")


def new_encoder(
    profile: ArchitectureProfile,
    pooling: Pooling = Pooling.MEAN,
    seed: int = 0,
) -> EncoderState:
    """建立隨機初始化的編碼器 (tiny 設定用於 CPU 測試)"""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = SentenceEncoder(profile)
        model.init_weights()
    model.eval()
    return EncoderState(profile=profile, model=model, pooling=pooling)


def load_pretrained_encoder(profile: ArchitectureProfile, pooling: Pooling = Pooling.MEAN) -> EncoderState:
    """載入 transformers 的預訓練權重 (例如 distilroberta-base)"""
    if not profile.pretrained_name:
        raise ConfigurationError(f"profile {profile.architecture_id} has no pretrained checkpoint")
    hf_model = AutoModel.from_pretrained(profile.pretrained_name)
    state = new_encoder(profile, pooling)
    load_hf_state(state.model, hf_model.state_dict())
    logger.info("loaded pretrained weights from %s", profile.pretrained_name)
    return state


def tokenize(state: EncoderState, texts: Sequence[str]) -> TokenBatch:
    """文字 -> TokenBatch，超過 max_seq_len 直接截斷"""
    encoded = state.tokenizer(
        list(texts),
        padding=True,
        truncation=True,
        max_length=state.max_seq_len,
        return_tensors="pt",
    )
    return TokenBatch(encoded["input_ids"], encoded["attention_mask"])


def pool(hidden: torch.Tensor, attention_mask: torch.Tensor, pooling: Pooling) -> torch.Tensor:
    """token 狀態 -> 句向量"""
    if pooling is Pooling.CLS:
        return hidden[:, 0]
    mask = attention_mask.unsqueeze(-1).to(hidden.dtype)
    return (hidden * mask).sum(dim=1) / mask.sum(dim=1)


def _check_batch(state: EncoderState, batch: TokenBatch) -> TokenBatch:
    if batch.token_ids.numel() and int(batch.token_ids.max()) >= state.profile.vocab_size:
        raise StructuralError(
            f"token id {int(batch.token_ids.max())} outside vocabulary of size {state.profile.vocab_size}"
        )
    if batch.token_ids.shape[1] > state.max_seq_len:
        batch = TokenBatch(batch.token_ids[:, :state.max_seq_len], batch.attention_mask[:, :state.max_seq_len])
    return batch


def forward_embeddings(state: EncoderState, batch: TokenBatch) -> torch.Tensor:
    """保留計算圖的句向量 (訓練用，dropout 由 model.train() 決定)"""
    batch = _check_batch(state, batch)
    hidden = state.model(batch.token_ids, batch.attention_mask)
    return pool(hidden, batch.attention_mask, state.pooling)


def encode(state: EncoderState, batch: TokenBatch) -> torch.Tensor:
    """
    推論模式編碼：每一列輸出一個長度 hidden_dim 的句向量

    Returns:
        Tensor [batch, hidden_dim]
    """
    was_training = state.model.training
    state.model.eval()
    try:
        with torch.no_grad():
            return forward_embeddings(state, batch)
    finally:
        state.model.train(was_training)


def encode_texts(state: EncoderState, texts: Sequence[str], batch_size: int = 64) -> np.ndarray:
    """批次編碼文字，回傳 numpy 陣列 (給 logistic regression head 用)"""
    if len(texts) == 0:
        return np.zeros((0, state.hidden_dim), dtype=np.float32)
    chunks = []
    for start in range(0, len(texts), batch_size):
        chunk = tokenize(state, texts[start:start + batch_size])
        chunks.append(encode(state, chunk).cpu().numpy())
    return np.concatenate(chunks, axis=0)


def cos_sim(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """
    餘弦相似度 u·v / (‖u‖‖v‖)，夾在 [-1, 1]

    支援單一向量或逐列 (最後一維為向量維度)
    """
    u_norm = torch.linalg.vector_norm(u, dim=-1)
    v_norm = torch.linalg.vector_norm(v, dim=-1)
    if torch.any(u_norm == 0) or torch.any(v_norm == 0):
        raise DegenerateInputError("cosine similarity of a zero-norm embedding")
    return ((u * v).sum(dim=-1) / (u_norm * v_norm)).clamp(-1.0, 1.0)


def cos_sim_matrix(left: torch.Tensor, right: torch.Tensor) -> torch.Tensor:
    """K×K 餘弦相似度矩陣 (MNRL 用)"""
    if torch.any(torch.linalg.vector_norm(left, dim=-1) == 0) or torch.any(torch.linalg.vector_norm(right, dim=-1) == 0):
        raise DegenerateInputError("cosine similarity of a zero-norm embedding")
    return (F.normalize(left, dim=-1) @ F.normalize(right, dim=-1).T).clamp(-1.0, 1.0)


@dataclass
class TrainableManifest:
    """可訓練參數清單"""
    scope: Scope
    names: Tuple[str, ...]
    parameters: Tuple[torch.nn.Parameter, ...]

    def __len__(self) -> int:
        return len(self.names)

    @property
    def numel(self) -> int:
        return sum(p.numel() for p in self.parameters)


def select_trainable(state: EncoderState, scope: Scope) -> TrainableManifest:
    """
    依範圍挑選可訓練參數

    NONE -> 空；ADAPTER -> 只有 adapter；TRANSFORMER -> 只有主幹；ALL -> 兩者聯集
    """
    if scope in (Scope.ADAPTER, Scope.ALL) and not state.has_adapter:
        raise ConfigurationError(f"scope {scope.value} requires an attached adapter")

    selected = []
    for name, param in state.model.named_parameters():
        adapter = is_adapter_param(name)
        if scope is Scope.ALL or (scope is Scope.ADAPTER and adapter) or (scope is Scope.TRANSFORMER and not adapter):
            selected.append((name, param))
    return TrainableManifest(
        scope=scope,
        names=tuple(name for name, _ in selected),
        parameters=tuple(param for _, param in selected),
    )


def apply_manifest(state: EncoderState, manifest: TrainableManifest) -> None:
    """只讓清單中的參數計算梯度，其餘凍結"""
    chosen = set(manifest.names)
    for name, param in state.model.named_parameters():
        param.requires_grad_(name in chosen)


def default_scope(state: EncoderState) -> Scope:
    return Scope.ALL if state.has_adapter else Scope.TRANSFORMER


def parse_scope(value) -> Optional[Scope]:
    """'auto' / None 代表依編碼器決定 (default_scope)"""
    if value is None or isinstance(value, Scope):
        return value
    text = str(value).strip().upper()
    if text in ("", "AUTO"):
        return None
    try:
        return Scope[text]
    except KeyError:
        raise ConfigurationError(f"unknown trainable scope {value!r}; use auto/none/adapter/transformer/all") from None
