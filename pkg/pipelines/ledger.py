"""
Stage Ledger
每一次實際執行的訓練階段都記錄一筆 (只新增，一次執行一個 JSON 檔)
"""
import json
import logging
import uuid
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)


@dataclass
class StageRun:
    """單次訓練階段的紀錄"""
    stage: str                   # DAPT / SEPT
    artifact: str                # 產物的 registry key
    target: str = "backbone"     # backbone / adapter
    dataset: Optional[str] = None
    seconds: float = 0.0
    steps: int = 0
    config_hash: str = ""
    started_at: str = field(default_factory=lambda: datetime.now().isoformat(timespec="seconds"))
    run_id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StageRun":
        return cls(**data)


class StageLedger:
    """
    訓練紀錄簿

    root 為 None 時只保存在記憶體；否則每筆寫成 <root>/<run_id>.json，
    不同行程同時寫入也不會互相覆蓋
    """

    def __init__(self, root: Optional[Path] = None):
        self.root = Path(root) if root is not None else None
        self._runs: List[StageRun] = []
        if self.root is not None and self.root.exists():
            for path in sorted(self.root.glob("*.json")):
                self._runs.append(StageRun.from_dict(json.loads(path.read_text(encoding="utf-8"))))

    def record(self, run: StageRun) -> StageRun:
        self._runs.append(run)
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            path = self.root / f"{run.started_at.replace(':', '')}-{run.run_id}.json"
            path.write_text(json.dumps(run.to_dict(), indent=2), encoding="utf-8")
        logger.info("ledger: %s %s (%.1fs)", run.stage, run.artifact, run.seconds)
        return run

    def runs(self, stage: Optional[str] = None) -> List[StageRun]:
        return [r for r in self._runs if stage is None or r.stage == stage]

    def count(self, stage: Optional[str] = None) -> int:
        return len(self.runs(stage))

    def __len__(self) -> int:
        return len(self._runs)
