"""
Evaluation Metrics Module
準確率、多種子彙總、顯著性檢定與訓練成本表
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from encoder.state import EncoderState, Stage, encode_texts
from errors import EvaluationError
from pipelines.setfit import Classifier
from pipelines.strategies import STRATEGY_PLANS, StrategyId, StrategyPlan

logger = logging.getLogger(__name__)

STAGE_TIMES = ("dapt", "sept", "setfit")
AGGREGATE_COLUMNS = ["strategy", "dataset", "mean", "std", "n_seeds"]
COST_COLUMNS = ["strategy", "dapt_steps", "sept_h", "dapt_h", "setfit_h", "total_h", "acc"]


def accuracy(predicted: Sequence, gold: Sequence) -> float:
    """預測正確的比例"""
    if len(gold) == 0:
        raise EvaluationError("cannot evaluate on an empty test split")
    if len(predicted) != len(gold):
        raise EvaluationError(f"{len(predicted)} predictions for {len(gold)} test items")
    return float(np.mean(np.asarray(predicted, dtype=object) == np.asarray(gold, dtype=object)))


def evaluate(clf: Classifier, test: Sequence, enc: Optional[EncoderState] = None) -> float:
    """
    以凍結的編碼器在測試集上計算準確率

    Args:
        clf: 已訓練的分類器
        test: (text, label) 列表
        enc: 用來嵌入的編碼器，預設為分類器自己的編碼器
    """
    if len(test) == 0:
        raise EvaluationError("cannot evaluate on an empty test split")
    texts = [text for text, _ in test]
    embeddings = encode_texts(enc or clf.encoder, texts)
    predicted = [clf.classes[int(i)] for i in clf.predict_ids(embeddings)]
    return accuracy(predicted, [label for _, label in test])


@dataclass
class RunRecord:
    """
    單一 (策略, 資料集, 種子) 的結果

    strategy 是計畫 (StrategyId)；variant 是輸出時的名稱 (預設等於 strategy 小寫)
    """
    strategy: str
    dataset: str
    seed: int
    accuracy: float = 0.0
    stage_seconds: Dict[str, float] = field(default_factory=lambda: {k: 0.0 for k in STAGE_TIMES})
    config_hash: str = ""
    variant: str = ""
    status: str = "ok"
    error: str = ""
    pseudo_labeled: int = 0

    def __post_init__(self):
        self.variant = self.variant or self.strategy.lower()
        self.stage_seconds = {k: float(self.stage_seconds.get(k, 0.0)) for k in STAGE_TIMES}
        if self.status == "ok" and not 0.0 <= self.accuracy <= 1.0:
            raise EvaluationError(f"accuracy must lie in [0, 1], got {self.accuracy}")
        if any(v < 0 for v in self.stage_seconds.values()):
            raise EvaluationError(f"stage times must be >= 0, got {self.stage_seconds}")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunRecord":
        return cls(**dict(data))

    def path(self, results_root: Path) -> Path:
        return Path(results_root) / self.variant / self.dataset / f"{self.seed}.json"

    def save(self, results_root: Path) -> Path:
        target = self.path(results_root)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        return target


def load_records(results_root: Path) -> List[RunRecord]:
    """讀取 results/<variant>/<dataset>/<seed>.json"""
    root = Path(results_root)
    if not root.exists():
        return []
    return [
        RunRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))
        for path in sorted(root.glob("*/*/*.json"))
    ]


@dataclass
class ResultTable:
    """
    彙總結果

    rows: 每一筆 RunRecord；cells: (strategy, dataset) -> mean, std, n_seeds
    """
    rows: List[RunRecord]
    cells: pd.DataFrame

    def pivot(self) -> pd.DataFrame:
        """策略 × 資料集的平均準確率 (%)，最後一欄為各資料集平均"""
        table = self.cells.pivot(index="strategy", columns="dataset", values="mean") * 100
        table["avg"] = table.mean(axis=1)
        return table

    def seeds_for(self, strategy: str, dataset: str) -> Dict[int, float]:
        return {r.seed: r.accuracy for r in self.rows if r.variant == strategy and r.dataset == dataset}

    def __str__(self) -> str:
        lines = [
            "=" * 60,
            "📊 分類準確率 (mean ± std over seeds)",
            "=" * 60,
        ]
        for row in self.cells.itertuples(index=False):
            lines.append(
                f"{row.strategy:<24} {row.dataset:<16} {row.mean * 100:6.2f} ± {row.std * 100:5.2f} (n={row.n_seeds})"
            )
        lines.append("=" * 60)
        return "\n".join(lines)


def aggregate(records: Iterable[RunRecord], require_same_seeds: bool = True) -> ResultTable:
    """
    依 (strategy, dataset) 彙總成功的 RunRecord

    平均值為各種子準確率的算術平均；std 為樣本標準差 (單一種子為 0)

    Raises:
        EvaluationError: require_same_seeds 時，各格的種子集合不一致
    """
    rows = [r for r in records if r.ok]
    if not rows:
        return ResultTable(rows=[], cells=pd.DataFrame(columns=AGGREGATE_COLUMNS))

    frame = pd.DataFrame([{'strategy': r.variant, 'dataset': r.dataset, 'seed': r.seed, 'accuracy': r.accuracy}
                          for r in rows])
    seed_sets = frame.groupby(['strategy', 'dataset'])['seed'].apply(frozenset)
    if seed_sets.nunique() > 1:
        message = f"cells aggregate different seed sets: {dict(seed_sets.map(sorted))}"
        if require_same_seeds:
            raise EvaluationError(message)
        logger.warning(message)

    cells = (
        frame.groupby(['strategy', 'dataset'], sort=False)['accuracy']
        .agg(mean='mean', std='std', n_seeds='count')
        .reset_index()
    )
    cells['std'] = cells['std'].fillna(0.0)
    return ResultTable(rows=rows, cells=cells[AGGREGATE_COLUMNS])


def significance(a: Sequence[float], b: Sequence[float], test: str = "ttest") -> float:
    """
    種子配對的雙尾檢定 p 值

    Args:
        a, b: 依種子對齊的準確率
        test: ttest (配對 t 檢定) 或 wilcoxon

    差值全為 0 -> 1.0；差值為非零常數 (變異數 0) -> 0.0
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise EvaluationError(f"seed-matched samples differ in length: {len(a)} vs {len(b)}")
    if len(a) < 2:
        raise EvaluationError("significance needs at least two seeds")

    diff = a - b
    if np.all(diff == 0):
        return 1.0
    if np.allclose(diff, diff[0], rtol=0.0, atol=1e-12):
        return 0.0
    if test == "ttest":
        return float(stats.ttest_rel(a, b).pvalue)
    if test == "wilcoxon":
        return float(stats.wilcoxon(a, b).pvalue)
    raise EvaluationError(f"unknown significance test {test!r}")


def _stage_hours(plan: StrategyPlan, stage: Stage, frame: pd.DataFrame, column: str) -> float:
    """共用階段只算一次；每個任務的階段先對種子取平均再加總各資料集"""
    planned = plan.stage_of(stage)
    if planned is None:
        return 0.0
    if planned.shared:
        return float(frame[column].mean()) / 3600
    return float(frame.groupby('dataset')[column].mean().sum()) / 3600


def cost_report(
    records: Iterable[RunRecord],
    plans: Mapping[StrategyId, StrategyPlan] = STRATEGY_PLANS,
    dapt_steps: Optional[int] = None,
) -> pd.DataFrame:
    """
    各策略的總訓練時間 (小時)

    ADASENT 之類共用 SEPT 的策略：total = 1·SEPT + T·DAPT + T·SetFit；
    DAPT_THEN_SEPT：total = T·SEPT + T·DAPT + T·SetFit
    """
    rows = [r for r in records if r.ok]
    report = []
    if not rows:
        return pd.DataFrame(columns=COST_COLUMNS)

    frame = pd.DataFrame([{
        'variant': r.variant,
        'strategy': r.strategy,
        'dataset': r.dataset,
        'accuracy': r.accuracy,
        **{f"{k}_s": v for k, v in r.stage_seconds.items()},
    } for r in rows])

    for variant, group in frame.groupby('variant', sort=False):
        plan = plans[StrategyId.parse(group['strategy'].iloc[0])]
        sept_h = _stage_hours(plan, Stage.SEPT, group, 'sept_s')
        dapt_h = _stage_hours(plan, Stage.DAPT, group, 'dapt_s')
        setfit_h = float(group.groupby('dataset')['setfit_s'].mean().sum()) / 3600
        report.append({
            'strategy': variant,
            'dapt_steps': dapt_steps if plan.stage_of(Stage.DAPT) else 0,
            'sept_h': sept_h,
            'dapt_h': dapt_h,
            'setfit_h': setfit_h,
            'total_h': sept_h + dapt_h + setfit_h,
            'acc': float(group['accuracy'].mean()),
        })
    return pd.DataFrame(report, columns=COST_COLUMNS)


def write_aggregate_csv(table: ResultTable, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.cells.to_csv(path, index=False)
    return path


def write_cost_csv(costs: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    costs.to_csv(path, index=False, float_format="%.4f")
    return path
