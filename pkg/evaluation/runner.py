"""
Matrix Runner Module
執行 (策略 × 資料集 × 種子) 的完整實驗矩陣，可中斷後續跑
"""
import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from data.loader import LabeledDataset, unlabeled_corpus
from data.sampling import sample_few_shot, unlabeled_pool
from encoder.state import EncoderState
from pipelines.ledger import StageLedger
from pipelines.setfit import HeadConfig, SetFitConfig, run_self_training, run_setfit
from pipelines.stages import StageConfig
from pipelines.strategies import ArtifactRegistry, StrategyBuilder, Variant, builder_for_variant
from .metrics import ResultTable, RunRecord, aggregate, evaluate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SelfTrainingConfig:
    threshold: float = 0.9
    max_iter: int = 10


def _digest(payload) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:16]


class MatrixRunner:
    """
    實驗矩陣執行器

    - 已完成且設定雜湊相同的格子直接讀回，不重新訓練
    - 單一格子失敗只記錄，矩陣繼續
    - 同一個 (目標函數, PEFT 種類) 的變體共用 DAPT / SEPT 產物
    """

    def __init__(
        self,
        base: EncoderState,
        datasets: Mapping[str, LabeledDataset],
        pairs: Sequence[Tuple[str, str]],
        dapt_cfg: StageConfig,
        sept_cfg: StageConfig,
        results_root: Path,
        setfit_cfg: SetFitConfig = SetFitConfig(),
        head_cfg: HeadConfig = HeadConfig(),
        shots: int = 8,
        selftrain: Optional[SelfTrainingConfig] = None,
        store_root: Optional[Path] = None,
    ):
        """
        初始化

        Args:
            base: 基礎編碼器
            datasets: 資料集名稱 -> 資料集
            pairs: SEPT 句對
            dapt_cfg / sept_cfg: 階段設定
            results_root: RunRecord 輸出目錄
            shots: 每類樣本數
            selftrain: 有設定時在 SetFit 之後做自我訓練
            store_root: 產物快取目錄 (None 只存在記憶體)
        """
        self.base = base
        self.datasets = dict(datasets)
        self.pairs = list(pairs)
        self.dapt_cfg = dapt_cfg
        self.sept_cfg = sept_cfg
        self.results_root = Path(results_root)
        self.setfit_cfg = setfit_cfg
        self.head_cfg = head_cfg
        self.shots = shots
        self.selftrain = selftrain
        self.store_root = Path(store_root) if store_root is not None else None
        self.ledger = StageLedger(self.store_root / "ledger" if self.store_root else None)
        self._builders: Dict[Tuple[str, str], StrategyBuilder] = {}
        self.trained_cells = 0
        self.cached_cells = 0
        self.failed_cells = 0

    def _builder(self, variant: Variant) -> StrategyBuilder:
        recipe = variant.recipe
        if recipe not in self._builders:
            registry = None
            if self.store_root is not None:
                tag = _digest({'recipe': recipe, 'dapt': self.dapt_cfg.to_dict(), 'sept': self.sept_cfg.to_dict(),
                               'base': self.base.architecture_id})
                registry = ArtifactRegistry(self.store_root / "matrix" / tag)
            corpora = {name: unlabeled_corpus(ds) for name, ds in self.datasets.items()}
            self._builders[recipe] = builder_for_variant(
                variant, self.base, self.dapt_cfg, self.sept_cfg, corpora, self.pairs,
                registry=registry, ledger=self.ledger,
            )
        return self._builders[recipe]

    def cell_hash(self, variant: Variant, dataset: str, seed: int) -> str:
        """決定格子結果的所有設定"""
        return _digest({
            'variant': {**asdict(variant), 'strategy': variant.strategy.value},
            'dataset': self.datasets[dataset].manifest(),
            'seed': seed,
            'shots': self.shots,
            'dapt': self.dapt_cfg.to_dict(),
            'sept': self.sept_cfg.to_dict(),
            'setfit': asdict(self.setfit_cfg),
            'head': asdict(self.head_cfg),
            'selftrain': asdict(self.selftrain) if self.selftrain else None,
        })

    def _cached(self, variant: Variant, dataset: str, seed: int, cell_hash: str) -> Optional[RunRecord]:
        path = self.results_root / variant.name / dataset / f"{seed}.json"
        if not path.exists():
            return None
        record = RunRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))
        if record.ok and record.config_hash == cell_hash:
            return record
        return None

    def _run_cell(self, variant: Variant, dataset: str, seed: int, cell_hash: str) -> RunRecord:
        ds = self.datasets[dataset]
        build = self._builder(variant).build(variant.strategy, dataset)
        fs = sample_few_shot(ds, self.shots, seed)

        started = time.perf_counter()
        clf = run_setfit(build.state, fs, variant.setfit_scope, self.head_cfg, replace(self.setfit_cfg, rng_seed=seed))
        pseudo = 0
        if self.selftrain is not None:
            clf = run_self_training(
                clf, clf.encoder, fs, unlabeled_pool(ds, fs),
                threshold=self.selftrain.threshold, max_iter=self.selftrain.max_iter, head_cfg=self.head_cfg,
            )
            pseudo = int(clf.meta.get('pseudo_labeled', 0))
        setfit_seconds = time.perf_counter() - started

        return RunRecord(
            strategy=variant.strategy.value,
            dataset=dataset,
            seed=seed,
            accuracy=evaluate(clf, ds.test),
            stage_seconds={**build.stage_seconds, 'setfit': setfit_seconds},
            config_hash=cell_hash,
            variant=variant.name,
            pseudo_labeled=pseudo,
        )

    def run(
        self,
        variants: Sequence,
        seeds: Sequence[int],
        datasets: Optional[Sequence[str]] = None,
    ) -> ResultTable:
        """
        執行完整的交叉組合

        Returns:
            彙總後的 ResultTable (失敗的格子不列入)
        """
        variants = [Variant.parse(v) for v in variants]
        names = list(datasets or self.datasets)
        records: List[RunRecord] = []
        total = len(variants) * len(names) * len(seeds)
        print(f"🔄 執行實驗矩陣：{len(variants)} 策略 × {len(names)} 資料集 × {len(seeds)} 種子 = {total} 格")

        for variant in variants:
            for dataset in names:
                for seed in seeds:
                    cell_hash = self.cell_hash(variant, dataset, seed)
                    cached = self._cached(variant, dataset, seed, cell_hash)
                    if cached is not None:
                        self.cached_cells += 1
                        records.append(cached)
                        continue
                    try:
                        record = self._run_cell(variant, dataset, seed, cell_hash)
                        self.trained_cells += 1
                        logger.info("%s / %s / seed %d: acc=%.4f", variant.name, dataset, seed, record.accuracy)
                    except Exception as exc:
                        self.failed_cells += 1
                        logger.error("cell %s / %s / seed %d failed: %s", variant.name, dataset, seed, exc)
                        record = RunRecord(
                            strategy=variant.strategy.value, dataset=dataset, seed=seed,
                            config_hash=cell_hash, variant=variant.name, status="failed", error=str(exc),
                        )
                    record.save(self.results_root)
                    records.append(record)

        print(f"✅ 完成：訓練 {self.trained_cells} 格、快取 {self.cached_cells} 格、失敗 {self.failed_cells} 格")
        return aggregate(records, require_same_seeds=self.failed_cells == 0)


def run_matrix(
    runner: MatrixRunner,
    variants: Sequence,
    seeds: Sequence[int],
    datasets: Optional[Sequence[str]] = None,
) -> ResultTable:
    return runner.run(variants, seeds, datasets)
