"""
Adapter Portability Module
Adapter 的插入、匯出、匯入與檔案格式

同一個 adapter 可以插入任何相同架構 (同 tokenizer、同維度) 的編碼器
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import torch

from encoder.state import EncoderState, ProvenanceEntry, Stage, is_adapter_param
from errors import ConfigurationError, PortabilityError, StructuralError
from .config import AdapterConfig, AdapterKind, adapter_tensor_shapes
from .modules import build_slot_modules, inject_lora

logger = logging.getLogger(__name__)

ADAPTER_JSON = "adapter.json"
ADAPTER_TENSORS = "adapter.pt"


@dataclass
class AdapterWeights:
    """
    匯出後的 adapter (匯出後不再修改，可共用)
    """
    config: AdapterConfig
    tensors: Dict[str, torch.Tensor]
    source_architecture_id: str
    source_hidden_dim: int
    source_num_layers: int
    provenance: Tuple[ProvenanceEntry, ...] = ()
    training_hash: str = ""
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    def numel(self) -> int:
        return sum(t.numel() for t in self.tensors.values())


def _install(state: EncoderState, cfg: AdapterConfig) -> None:
    if cfg.kind is AdapterKind.LORA:
        inject_lora(state.model, cfg)
        state.adapter_config = cfg
        return
    reference = next(state.model.parameters())
    for layer in state.model.layers:
        for slot, module in build_slot_modules(cfg, state.hidden_dim).items():
            layer.adapters[slot] = module.to(dtype=reference.dtype, device=reference.device)
    state.adapter_config = cfg


def attach(state: EncoderState, cfg: AdapterConfig, rng_seed: int = 0) -> EncoderState:
    """
    在每一層插入新的 adapter

    ZERO_OUT_PROJ 初始化時 PARALLEL/BOTTLENECK/LORA 的輸出與插入前逐位元相同
    """
    if state.has_adapter:
        raise ConfigurationError("encoder already has an adapter attached")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(rng_seed)
        _install(state, cfg)
    state.adapter_meta = {'seed': rng_seed, 'provenance': []}
    logger.info("attached %s adapter (%d parameters)", cfg.kind.value, sum(t.numel() for t in state.adapter_state().values()))
    return state


def export_adapter(state: EncoderState, training_hash: str = "") -> AdapterWeights:
    """把 adapter 複製成獨立的產物"""
    if not state.has_adapter:
        raise ConfigurationError("no adapter attached to export")
    tensors = {name: t.detach().clone() for name, t in state.adapter_state().items()}
    return AdapterWeights(
        config=state.adapter_config,
        tensors=tensors,
        source_architecture_id=state.architecture_id,
        source_hidden_dim=state.hidden_dim,
        source_num_layers=state.num_layers,
        provenance=tuple(state.adapter_meta.get('provenance', [])),
        training_hash=training_hash or state.adapter_meta.get('training_hash', ""),
    )


def _validate_portability(state: EncoderState, w: AdapterWeights) -> None:
    if w.source_architecture_id != state.architecture_id:
        raise PortabilityError(
            "adapter architecture does not match encoder",
            source_id=w.source_architecture_id,
            target_id=state.architecture_id,
        )
    if w.source_hidden_dim != state.hidden_dim or w.source_num_layers != state.num_layers:
        raise PortabilityError(
            f"adapter dims (D={w.source_hidden_dim}, L={w.source_num_layers}) do not match "
            f"encoder dims (D={state.hidden_dim}, L={state.num_layers})",
            source_id=w.source_architecture_id,
            target_id=state.architecture_id,
        )
    expected = adapter_tensor_shapes(w.config, state.hidden_dim, state.num_layers)
    actual = {name: tuple(t.shape) for name, t in w.tensors.items()}
    if expected != actual:
        raise StructuralError("adapter tensors do not match the shapes implied by its config")


def install_adapter(state: EncoderState, w: AdapterWeights) -> EncoderState:
    """放入 adapter 權重但不更動 provenance (checkpoint 載入用)"""
    if state.has_adapter:
        raise ConfigurationError("encoder already has an adapter attached")
    _validate_portability(state, w)
    _install(state, w.config)
    own = state.model.state_dict()
    with torch.no_grad():
        for name, tensor in w.tensors.items():
            own[name].copy_(tensor)
    state.adapter_meta = {'provenance': list(w.provenance), 'training_hash': w.training_hash}
    return state


def import_adapter(state: EncoderState, w: AdapterWeights, expected_hash: Optional[str] = None) -> EncoderState:
    """
    把 adapter 插入另一個同架構的編碼器

    輸出只由 (主幹權重, adapter 權重) 決定，與 adapter 當初在哪個主幹上訓練無關

    Args:
        state: 尚未插入 adapter 的編碼器
        w: 匯出的 adapter
        expected_hash: 預期的訓練設定雜湊，不同時只發出警告
    """
    install_adapter(state, w)
    if expected_hash and w.training_hash and expected_hash != w.training_hash:
        logger.warning(
            "adapter training hash %s differs from expected %s; importing anyway",
            w.training_hash, expected_hash,
        )
    for entry in w.provenance:
        state.provenance.append(entry)
    return state


def adapter_fraction(state: EncoderState) -> float:
    """adapter 參數佔全部參數的比例"""
    total = 0
    adapter = 0
    for name, param in state.model.named_parameters():
        total += param.numel()
        if is_adapter_param(name):
            adapter += param.numel()
    return adapter / total if total else 0.0


def save_adapter(w: AdapterWeights, directory: Path) -> Path:
    """寫出 adapter/ 目錄：adapter.json + 張量檔"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        'config': w.config.to_dict(),
        'config_hash': w.config_hash,
        'training_hash': w.training_hash,
        'source_architecture_id': w.source_architecture_id,
        'source_hidden_dim': w.source_hidden_dim,
        'source_num_layers': w.source_num_layers,
        'provenance': [entry.to_dict() for entry in w.provenance],
        'metadata': w.metadata,
    }
    (directory / ADAPTER_JSON).write_text(json.dumps(meta, indent=2), encoding="utf-8")
    torch.save(w.tensors, directory / ADAPTER_TENSORS)
    return directory


def load_adapter(directory: Path) -> AdapterWeights:
    """讀取 adapter/ 目錄"""
    directory = Path(directory)
    meta_path = directory / ADAPTER_JSON
    if not meta_path.exists():
        raise ConfigurationError(f"no adapter found at {directory}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    config = AdapterConfig.from_dict(meta['config'])
    if meta.get('config_hash') and meta['config_hash'] != config.config_hash():
        logger.warning("adapter.json config hash mismatch in %s", directory)
    tensors = torch.load(directory / ADAPTER_TENSORS, map_location="cpu", weights_only=True)
    return AdapterWeights(
        config=config,
        tensors=tensors,
        source_architecture_id=meta['source_architecture_id'],
        source_hidden_dim=meta['source_hidden_dim'],
        source_num_layers=meta['source_num_layers'],
        provenance=tuple(ProvenanceEntry.from_dict(e) for e in meta.get('provenance', [])),
        training_hash=meta.get('training_hash', ""),
        metadata=meta.get('metadata', {}),
    )


def record_adapter_stage(state: EncoderState, stage: Stage, **detail) -> None:
    """訓練到 adapter 的階段同時記到編碼器與 adapter 自己的 provenance"""
    entry = ProvenanceEntry.of(stage, target="adapter", **detail)
    state.provenance.append(entry)
    state.adapter_meta.setdefault('provenance', []).append(entry)
