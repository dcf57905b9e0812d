"""
Strategy Compositor
八種模型變體：由 base / DAPT / SEPT 產物依序組裝

產物 key 對應 store 目錄：
    base, dapt/<dataset>, sept/shared, adapters/sept-shared,
    dapt-sept/<dataset>, adapters/dapt-sept-<dataset>,
    sept-dapt/<dataset>, adapters/sept-dapt-<dataset>
"""
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

from adapters.config import AdapterConfig, AdapterKind
from adapters.portability import AdapterWeights, export_adapter, import_adapter, load_adapter, save_adapter
from encoder.checkpoint import load_checkpoint, save_checkpoint
from encoder.state import EncoderState, Scope, Stage, parse_scope
from errors import CompositionError, ConfigurationError
from .dapt import train_dapt
from .ledger import StageLedger, StageRun
from .sept import train_sept
from .stages import Objective, StageConfig

logger = logging.getLogger(__name__)

Artifact = Union[EncoderState, AdapterWeights]

BASE_KEY = "base"
ARTIFACT_FILE = "artifact.json"


class StrategyId(Enum):
    """模型變體"""
    BASE = "BASE"
    SEPT = "SEPT"
    DAPT = "DAPT"
    DAPT_THEN_SEPT = "DAPT_THEN_SEPT"
    ADASENT = "ADASENT"
    DAPT_THEN_SEPT_ADA = "DAPT_THEN_SEPT_ADA"
    SEPT_THEN_DAPT = "SEPT_THEN_DAPT"
    SEPT_THEN_DAPT_ADA = "SEPT_THEN_DAPT_ADA"

    @classmethod
    def parse(cls, value) -> "StrategyId":
        if isinstance(value, cls):
            return value
        try:
            return cls[str(value).strip().upper().replace('-', '_')]
        except KeyError:
            raise ConfigurationError(
                f"unknown strategy {value!r}; use one of {[s.value.lower() for s in cls]}"
            ) from None


@dataclass(frozen=True)
class PlannedStage:
    """
    策略中的一個訓練階段

    key / source 是產物 key 樣板，{dataset} 會換成資料集名稱
    """
    stage: Stage
    target: str            # backbone / adapter
    shared: bool           # True: 所有任務共用一次；False: 每個任務各跑一次
    key: str
    source: str = BASE_KEY

    def key_for(self, dataset: Optional[str]) -> str:
        return _fill(self.key, dataset)

    def source_for(self, dataset: Optional[str]) -> str:
        return _fill(self.source, dataset)


@dataclass(frozen=True)
class StrategyPlan:
    """策略 = 有序的訓練階段 + 最後組裝用的主幹與 adapter"""
    strategy: StrategyId
    stages: Tuple[PlannedStage, ...]
    backbone: str
    adapter: Optional[str] = None

    def stage_of(self, stage: Stage) -> Optional[PlannedStage]:
        return next((s for s in self.stages if s.stage is stage), None)

    def is_shared(self, stage: Stage) -> bool:
        planned = self.stage_of(stage)
        return planned is not None and planned.shared

    def producer_of(self, key_template: str) -> Optional[PlannedStage]:
        return next((s for s in self.stages if s.key == key_template), None)


_DAPT = PlannedStage(Stage.DAPT, "backbone", shared=False, key="dapt/{dataset}")
_SEPT = PlannedStage(Stage.SEPT, "backbone", shared=True, key="sept/shared")

STRATEGY_PLANS: Dict[StrategyId, StrategyPlan] = {
    StrategyId.BASE: StrategyPlan(StrategyId.BASE, (), backbone=BASE_KEY),
    StrategyId.SEPT: StrategyPlan(StrategyId.SEPT, (_SEPT,), backbone="sept/shared"),
    StrategyId.DAPT: StrategyPlan(StrategyId.DAPT, (_DAPT,), backbone="dapt/{dataset}"),
    StrategyId.DAPT_THEN_SEPT: StrategyPlan(
        StrategyId.DAPT_THEN_SEPT,
        (_DAPT, PlannedStage(Stage.SEPT, "backbone", False, "dapt-sept/{dataset}", "dapt/{dataset}")),
        backbone="dapt-sept/{dataset}",
    ),
    StrategyId.ADASENT: StrategyPlan(
        StrategyId.ADASENT,
        (_DAPT, PlannedStage(Stage.SEPT, "adapter", True, "adapters/sept-shared")),
        backbone="dapt/{dataset}",
        adapter="adapters/sept-shared",
    ),
    StrategyId.DAPT_THEN_SEPT_ADA: StrategyPlan(
        StrategyId.DAPT_THEN_SEPT_ADA,
        (_DAPT, PlannedStage(Stage.SEPT, "adapter", False, "adapters/dapt-sept-{dataset}", "dapt/{dataset}")),
        backbone="dapt/{dataset}",
        adapter="adapters/dapt-sept-{dataset}",
    ),
    StrategyId.SEPT_THEN_DAPT: StrategyPlan(
        StrategyId.SEPT_THEN_DAPT,
        (_SEPT, PlannedStage(Stage.DAPT, "backbone", False, "sept-dapt/{dataset}", "sept/shared")),
        backbone="sept-dapt/{dataset}",
    ),
    StrategyId.SEPT_THEN_DAPT_ADA: StrategyPlan(
        StrategyId.SEPT_THEN_DAPT_ADA,
        (_SEPT, PlannedStage(Stage.DAPT, "adapter", False, "adapters/sept-dapt-{dataset}", "sept/shared")),
        backbone="sept/shared",
        adapter="adapters/sept-dapt-{dataset}",
    ),
}


def _fill(template: str, dataset: Optional[str]) -> str:
    if "{dataset}" in template:
        if dataset is None:
            raise CompositionError(f"artifact {template} is per-dataset but no dataset was given")
        return template.format(dataset=dataset)
    return template


@dataclass
class ArtifactEntry:
    artifact: Artifact
    seconds: float = 0.0
    stage: Optional[str] = None
    config_hash: str = ""


class ArtifactRegistry:
    """
    產物登記簿

    root 有設定時，產物同時寫入 <root>/<key>/ (checkpoint 或 adapter 目錄 + artifact.json)，
    之後的執行可以直接讀回，不必重新訓練
    """

    def __init__(self, root: Optional[Path] = None):
        self.root = Path(root) if root is not None else None
        self._entries: Dict[str, ArtifactEntry] = {}

    def _meta_path(self, key: str) -> Optional[Path]:
        return self.root / key / ARTIFACT_FILE if self.root is not None else None

    def put(self, key: str, artifact: Artifact, seconds: float = 0.0,
            stage: Optional[str] = None, config_hash: str = "") -> None:
        self._entries[key] = ArtifactEntry(artifact, seconds, stage, config_hash)
        if self.root is None:
            return
        directory = self.root / key
        if isinstance(artifact, AdapterWeights):
            save_adapter(artifact, directory)
            kind = "adapter"
        else:
            save_checkpoint(artifact, directory, config_hash)
            kind = "encoder"
        meta = {'kind': kind, 'seconds': seconds, 'stage': stage, 'config_hash': config_hash}
        (directory / ARTIFACT_FILE).write_text(json.dumps(meta, indent=2), encoding="utf-8")

    def _load(self, key: str) -> Optional[ArtifactEntry]:
        meta_path = self._meta_path(key)
        if meta_path is None or not meta_path.exists():
            return None
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        directory = meta_path.parent
        artifact = load_adapter(directory) if meta['kind'] == "adapter" else load_checkpoint(directory)
        entry = ArtifactEntry(artifact, meta.get('seconds', 0.0), meta.get('stage'), meta.get('config_hash', ""))
        self._entries[key] = entry
        return entry

    def entry(self, key: str) -> Optional[ArtifactEntry]:
        return self._entries.get(key) or self._load(key)

    def has(self, key: str, config_hash: Optional[str] = None) -> bool:
        entry = self.entry(key)
        if entry is None:
            return False
        return config_hash is None or not entry.config_hash or entry.config_hash == config_hash

    def get(self, key: str) -> Artifact:
        entry = self.entry(key)
        if entry is None:
            raise CompositionError(f"artifact {key} is not in the registry", missing_stage=key)
        return entry.artifact

    def seconds(self, key: str) -> float:
        entry = self.entry(key)
        return entry.seconds if entry else 0.0

    def __contains__(self, key: str) -> bool:
        return self.has(key)


def _require(registry: ArtifactRegistry, plan: StrategyPlan, template: str, dataset: Optional[str]) -> Artifact:
    key = _fill(template, dataset)
    if key not in registry:
        producer = plan.producer_of(template)
        stage = producer.stage.value if producer else Stage.BASE.value
        raise CompositionError(
            f"{plan.strategy.value} needs artifact {key} ({stage}) which has not been built",
            missing_stage=stage,
        )
    return registry.get(key)


def compose(strategy: StrategyId, registry: ArtifactRegistry, dataset: Optional[str] = None) -> EncoderState:
    """
    依策略組裝最終編碼器

    ADASENT = DAPT 主幹 + 在 BASE 上訓練的 SEPT adapter；
    DAPT_THEN_SEPT_ADA = DAPT 主幹 + 在該 DAPT 主幹上訓練的 adapter；
    其餘依宣告順序逐段訓練的完整權重

    Raises:
        CompositionError: 缺少必要的產物 (missing_stage 為缺少的階段)
    """
    plan = STRATEGY_PLANS[StrategyId.parse(strategy)]
    backbone = _require(registry, plan, plan.backbone, dataset)
    if not isinstance(backbone, EncoderState):
        raise CompositionError(f"artifact {plan.backbone} is not an encoder", missing_stage=Stage.BASE.value)
    state = backbone.clone()
    if plan.adapter is not None:
        adapter = _require(registry, plan, plan.adapter, dataset)
        import_adapter(state, adapter)
    return state


@dataclass(frozen=True)
class Variant:
    """
    實驗變體：策略 + DAPT 目標函數 + PEFT 種類 + SetFit 可訓練範圍

    用來比較目標函數與順序、PEFT 方法、可訓練範圍等設定
    """
    name: str
    strategy: StrategyId
    dapt_objective: Objective = Objective.MLM
    peft_kind: AdapterKind = AdapterKind.PARALLEL
    setfit_scope: Optional[Scope] = None

    @classmethod
    def of(cls, strategy, **overrides) -> "Variant":
        strategy = StrategyId.parse(strategy)
        return cls(name=overrides.pop('name', strategy.value.lower()), strategy=strategy, **overrides)

    @classmethod
    def parse(cls, spec) -> "Variant":
        """'adasent' 或 {'name':..., 'strategy':..., 'objective':..., 'peft':..., 'scope':...}"""
        if isinstance(spec, Variant):
            return spec
        if isinstance(spec, str):
            return cls.of(spec)
        spec = dict(spec)
        strategy = StrategyId.parse(spec.pop('strategy'))
        kwargs = {'name': spec.pop('name', strategy.value.lower())}
        if 'objective' in spec:
            kwargs['dapt_objective'] = Objective.parse(spec.pop('objective'))
        if 'peft' in spec:
            kwargs['peft_kind'] = AdapterConfig.for_kind(str(spec.pop('peft'))).kind
        if 'scope' in spec:
            kwargs['setfit_scope'] = parse_scope(spec.pop('scope'))
        if spec:
            raise ConfigurationError(f"unknown variant keys: {sorted(spec)}")
        return cls(strategy=strategy, **kwargs)

    @property
    def recipe(self) -> Tuple[str, str]:
        """決定 DAPT / SEPT 產物能否共用的部分"""
        return self.dapt_objective.value, self.peft_kind.value


@dataclass
class BuildResult:
    state: EncoderState
    stage_seconds: Dict[str, float] = field(default_factory=dict)
    trained: int = 0


class StrategyBuilder:
    """
    訓練策略所需的產物並組裝

    共用產物 (例如 ADASENT 的 SEPT adapter) 只訓練一次，所有資料集重複使用；
    每次實際訓練都記在 StageLedger
    """

    def __init__(
        self,
        base: EncoderState,
        dapt_cfg: StageConfig,
        sept_cfg: StageConfig,
        adapter_cfg: AdapterConfig,
        corpora: Mapping[str, Sequence[str]],
        pairs: Sequence[Tuple[str, str]],
        registry: Optional[ArtifactRegistry] = None,
        ledger: Optional[StageLedger] = None,
    ):
        self.dapt_cfg = dapt_cfg
        self.sept_cfg = sept_cfg
        self.adapter_cfg = adapter_cfg
        self.corpora = corpora
        self.pairs = list(pairs)
        self.registry = registry or ArtifactRegistry()
        self.ledger = ledger or StageLedger()
        if BASE_KEY not in self.registry:
            self.registry.put(BASE_KEY, base, stage=Stage.BASE.value)

    def _stage_config(self, planned: PlannedStage) -> StageConfig:
        cfg = self.dapt_cfg if planned.stage is Stage.DAPT else self.sept_cfg
        return cfg.with_peft(self.adapter_cfg if planned.target == "adapter" else None)

    def _stage_hash(self, planned: PlannedStage, dataset: Optional[str]) -> str:
        payload = {
            'stage': self._stage_config(planned).to_dict(),
            'source': planned.source_for(dataset),
            'source_hash': self.registry.entry(planned.source_for(dataset)).config_hash
            if planned.source_for(dataset) in self.registry else "",
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:16]

    def _train(self, planned: PlannedStage, dataset: Optional[str]) -> Tuple[Artifact, int]:
        source = self.registry.get(planned.source_for(dataset))
        cfg = self._stage_config(planned)
        if planned.stage is Stage.DAPT:
            if dataset not in self.corpora:
                raise ConfigurationError(f"no unlabeled corpus registered for dataset {dataset!r}")
            state, report = train_dapt(source, self.corpora[dataset], cfg)
        else:
            state, report = train_sept(source, self.pairs, cfg)
        if planned.target == "adapter":
            return export_adapter(state, training_hash=cfg.config_hash()), report.total_steps
        return state, report.total_steps

    def ensure(self, planned: PlannedStage, dataset: Optional[str]) -> Tuple[float, bool]:
        """確保產物存在；回傳 (該產物的訓練秒數, 這次是否實際訓練)"""
        key = planned.key_for(dataset)
        expected = self._stage_hash(planned, dataset)
        if self.registry.has(key, expected):
            return self.registry.seconds(key), False

        started = time.perf_counter()
        artifact, steps = self._train(planned, dataset)
        seconds = time.perf_counter() - started
        self.registry.put(key, artifact, seconds, planned.stage.value, expected)
        self.ledger.record(StageRun(
            stage=planned.stage.value,
            artifact=key,
            target=planned.target,
            dataset=None if planned.shared else dataset,
            seconds=seconds,
            steps=steps,
            config_hash=expected,
        ))
        return seconds, True

    def build(self, strategy: StrategyId, dataset: Optional[str] = None) -> BuildResult:
        """訓練缺少的產物 (依宣告順序) 後組裝"""
        plan = STRATEGY_PLANS[StrategyId.parse(strategy)]
        seconds = {'dapt': 0.0, 'sept': 0.0}
        trained = 0
        for planned in plan.stages:
            spent, did_train = self.ensure(planned, dataset)
            seconds[planned.stage.value.lower()] += spent
            trained += int(did_train)
        return BuildResult(compose(plan.strategy, self.registry, dataset), seconds, trained)


def builder_for_variant(
    variant: Variant,
    base: EncoderState,
    dapt_cfg: StageConfig,
    sept_cfg: StageConfig,
    corpora: Mapping[str, Sequence[str]],
    pairs: Sequence[Tuple[str, str]],
    registry: Optional[ArtifactRegistry] = None,
    ledger: Optional[StageLedger] = None,
) -> StrategyBuilder:
    """依變體的目標函數與 PEFT 種類建立 builder"""
    return StrategyBuilder(
        base,
        replace(dapt_cfg, objective=variant.dapt_objective),
        sept_cfg,
        AdapterConfig.for_kind(variant.peft_kind),
        corpora,
        pairs,
        registry=registry,
        ledger=ledger,
    )
