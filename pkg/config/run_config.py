"""
Run configuration
讀取 TOML 執行設定檔，並套用命令列覆寫 (命令列優先)
"""
import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

from errors import ConfigurationError

RESOLVED_CONFIG_FILE = "resolved_config.json"


@dataclass
class StoreSection:
    """產物目錄與架構設定；None 代表使用 Settings (環境變數) 的值"""
    root: Optional[str] = None
    results: Optional[str] = None
    profile: Optional[str] = None
    pooling: str = "mean"
    base: Optional[str] = None          # 既有的 base checkpoint 目錄


@dataclass
class DaptSection:
    objective: str = "mlm"              # mlm / tsdae / simcse
    steps: Optional[int] = 2344
    epochs: Optional[int] = None
    batch_size: int = 256
    learning_rate: Optional[float] = None
    peft: Optional[str] = None
    mask_prob: float = 0.15
    deletion_ratio: float = 0.6
    dropout: float = 0.1
    warmup_ratio: float = 0.1
    weight_decay: float = 0.01
    rng_seed: int = 0


@dataclass
class SeptSection:
    steps: Optional[int] = None
    epochs: Optional[int] = 1
    batch_size: int = 64
    learning_rate: Optional[float] = None
    peft: Optional[str] = "parallel"
    scale: float = 1.0
    sources: List[str] = field(default_factory=list)   # anchor/positive JSONL
    per_source: Optional[int] = None
    warmup_ratio: float = 0.1
    weight_decay: float = 0.01
    rng_seed: int = 0
    name: str = "shared"


@dataclass
class SetfitSection:
    shots: int = 8
    scope: str = "auto"                 # auto / none / adapter / transformer / all
    pair_strategy: str = "balanced_sampled"
    epochs: int = 1
    batch_size: int = 16
    learning_rate: float = 2e-5
    loss_reduction: str = "squared"
    head_c: float = 1.0
    head_max_iter: int = 1000


@dataclass
class SelftrainSection:
    enabled: bool = False
    threshold: float = 0.9
    max_iter: int = 10


@dataclass
class EvalSection:
    strategies: List[str] = field(default_factory=lambda: ["base", "adasent"])
    datasets: List[str] = field(default_factory=list)
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    significance: str = "ttest"         # ttest / wilcoxon
    baseline: Optional[str] = None


@dataclass
class ReportSection:
    results: Optional[str] = None
    output: str = "report"
    plot: bool = True
    dapt_steps: Optional[int] = None


@dataclass
class SynthSection:
    classes: int = 3
    words_per_class: int = 20
    filler_words: int = 100
    items_per_class: int = 50
    test_items_per_class: int = 20
    sentence_len: int = 12
    filler_ratio: float = 0.5
    seed: int = 0
    name: str = "synth"


SECTIONS = {
    'store': StoreSection,
    'dapt': DaptSection,
    'sept': SeptSection,
    'setfit': SetfitSection,
    'selftrain': SelftrainSection,
    'eval': EvalSection,
    'report': ReportSection,
    'synth': SynthSection,
}


def _build_section(name: str, values: Mapping[str, Any]):
    cls = SECTIONS[name]
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigurationError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return cls(**values)


@dataclass
class RunConfig:
    """
    單次執行的完整設定

    每個輸出目錄都會寫入 resolved_config.json，
    config_hash() 對 key 的順序不敏感
    """
    store: StoreSection = field(default_factory=StoreSection)
    dapt: DaptSection = field(default_factory=DaptSection)
    sept: SeptSection = field(default_factory=SeptSection)
    setfit: SetfitSection = field(default_factory=SetfitSection)
    selftrain: SelftrainSection = field(default_factory=SelftrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    report: ReportSection = field(default_factory=ReportSection)
    synth: SynthSection = field(default_factory=SynthSection)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> 'RunConfig':
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
        sections = {}
        for name, values in raw.items():
            if not isinstance(values, Mapping):
                raise ConfigurationError(f"[{name}] must be a table")
            sections[name] = _build_section(name, values)
        return cls(**sections)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return asdict(self)

    def override(self, dotted: str, value: Any) -> None:
        """套用 section.key=value 覆寫"""
        section_name, _, key = dotted.partition('.')
        if section_name not in SECTIONS or not key:
            raise ConfigurationError(f"override must look like section.key, got {dotted!r}")
        section = getattr(self, section_name)
        if key not in {f.name for f in fields(section)}:
            raise ConfigurationError(f"unknown key {key!r} in [{section_name}]")
        setattr(section, key, value)

    def apply_overrides(self, assignments: Sequence[str]) -> None:
        for assignment in assignments:
            dotted, sep, raw = assignment.partition('=')
            if not sep:
                raise ConfigurationError(f"--set expects section.key=value, got {assignment!r}")
            self.override(dotted.strip(), parse_value(raw.strip()))

    def config_hash(self, sections: Optional[Sequence[str]] = None) -> str:
        """SHA-256 (前 16 碼) of the canonical JSON; sections 可限定參與的區段"""
        payload = self.to_dict()
        if sections is not None:
            payload = {name: payload[name] for name in sections}
        canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'), default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def write_resolved(self, directory: Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        target = directory / RESOLVED_CONFIG_FILE
        body = {'config_hash': self.config_hash(), **self.to_dict()}
        target.write_text(json.dumps(body, indent=2, sort_keys=True, default=str), encoding="utf-8")
        return target


def parse_value(raw: str) -> Any:
    """以 TOML 語法解析覆寫值，失敗時當作字串"""
    try:
        return tomllib.loads(f"value = {raw}")['value']
    except tomllib.TOMLDecodeError:
        return raw


def load_run_config(path: Optional[Path] = None, overrides: Sequence[str] = ()) -> RunConfig:
    """
    讀取設定檔並套用覆寫

    Args:
        path: TOML 檔案路徑 (None 則使用預設值)
        overrides: ["dapt.steps=100", ...]

    Raises:
        ConfigurationError: 檔案不存在、語法錯誤或有未知的 key
    """
    raw: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"invalid TOML in {path}: {exc}") from exc
    config = RunConfig.from_dict(raw)
    config.apply_overrides(overrides)
    return config
