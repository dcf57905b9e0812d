"""
Checkpoint Module
編碼器 checkpoint 目錄：manifest.json + 主幹張量檔 + 選用的 adapter/ 子目錄
"""
import json
from pathlib import Path
from typing import Optional

import torch

from errors import ConfigurationError, StructuralError
from .profiles import get_profile
from .state import EncoderState, Pooling, ProvenanceEntry, new_encoder

MANIFEST_FILE = "manifest.json"
BACKBONE_FILE = "backbone.pt"
ADAPTER_DIR = "adapter"


def save_checkpoint(state: EncoderState, directory: Path, config_hash: str = "") -> Path:
    """
    儲存編碼器

    Args:
        state: 編碼器
        directory: 輸出目錄
        config_hash: 產生此 checkpoint 的設定雜湊
    """
    from adapters.portability import export_adapter, save_adapter

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        'architecture_id': state.architecture_id,
        'hidden_dim': state.hidden_dim,
        'num_layers': state.num_layers,
        'max_seq_len': state.max_seq_len,
        'vocab_size': state.profile.vocab_size,
        'pooling': state.pooling.value,
        'provenance': [entry.to_dict() for entry in state.provenance],
        'config_hash': config_hash,
        'has_adapter': state.has_adapter,
    }
    (directory / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    torch.save(state.backbone_state(), directory / BACKBONE_FILE)
    if state.has_adapter:
        save_adapter(export_adapter(state), directory / ADAPTER_DIR)
    return directory


def read_manifest(directory: Path) -> dict:
    path = Path(directory) / MANIFEST_FILE
    if not path.exists():
        raise ConfigurationError(f"找不到 checkpoint: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_checkpoint(directory: Path, with_adapter: bool = True) -> EncoderState:
    """
    讀取編碼器 checkpoint

    Args:
        directory: checkpoint 目錄
        with_adapter: 是否一併裝回 adapter/ 子目錄
    """
    from adapters.portability import install_adapter, load_adapter

    directory = Path(directory)
    manifest = read_manifest(directory)
    profile = get_profile(manifest['architecture_id'])
    if manifest['hidden_dim'] != profile.hidden_dim or manifest['num_layers'] != profile.num_layers:
        raise StructuralError(f"checkpoint dims do not match profile {profile.architecture_id}")

    state = new_encoder(profile, Pooling(manifest['pooling']))
    backbone = torch.load(directory / BACKBONE_FILE, map_location="cpu", weights_only=True)
    missing, unexpected = state.model.load_state_dict(backbone, strict=False)
    if missing or unexpected:
        raise StructuralError(f"backbone mismatch: missing={missing} unexpected={unexpected}")
    state.provenance = [ProvenanceEntry.from_dict(e) for e in manifest['provenance']]

    adapter_dir = directory / ADAPTER_DIR
    if with_adapter and adapter_dir.exists():
        install_adapter(state, load_adapter(adapter_dir))
    elif not with_adapter and adapter_dir.exists():
        # 只取主幹時，去掉 adapter 帶來的 provenance
        state.provenance = [e for e in state.provenance if dict(e.detail).get('target') != 'adapter']
    return state


def checkpoint_config_hash(directory: Path) -> Optional[str]:
    return read_manifest(directory).get('config_hash') or None
