"""
Dataset Loader Module
讀取分類資料集 (JSONL / CSV) 與 SEPT 句對資料
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import IngestionError

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
FORMATS = ("jsonl", "csv")


@dataclass
class LabeledDataset:
    """
    分類資料集

    Attributes:
        name: 資料集名稱
        train / test: (text, label) 列表
        classes: 類別順序 (第一次出現的順序，寫入 manifest 後固定)
        malformed: 讀取時略過的資料筆數
    """
    name: str
    train: List[Tuple[str, str]]
    test: List[Tuple[str, str]]
    classes: Tuple[str, ...]
    malformed: int = 0

    def __post_init__(self):
        if not self.train:
            raise IngestionError(f"dataset {self.name} has an empty train split")
        known = set(self.classes)
        outside = {label for _, label in self.train + self.test} - known
        if outside:
            raise IngestionError(f"labels outside the class set: {sorted(outside)}")

    @property
    def train_texts(self) -> List[str]:
        return [text for text, _ in self.train]

    @property
    def test_texts(self) -> List[str]:
        return [text for text, _ in self.test]

    def label_ids(self, split: str = "test") -> np.ndarray:
        index = {c: i for i, c in enumerate(self.classes)}
        rows = self.test if split == "test" else self.train
        return np.array([index[label] for _, label in rows], dtype=np.int64)

    def manifest(self) -> Dict[str, object]:
        return {
            'name': self.name,
            'label_order': list(self.classes),
            'split_sizes': {'train': len(self.train), 'test': len(self.test)},
        }


@dataclass
class PairStream:
    """SEPT 用的正例句對 (anchor, positive)"""
    source: str
    pairs: List[Tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self.pairs = [(a, p) for a, p in self.pairs if a and p]

    def __iter__(self) -> Iterator[Tuple[str, str]]:
        return iter(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)


def _detect_format(path: Path, fmt: Optional[str]) -> str:
    fmt = (fmt or path.suffix.lstrip('.')).lower()
    if fmt == "json":
        fmt = "jsonl"
    if fmt not in FORMATS:
        raise IngestionError(f"unsupported format {fmt!r} for {path}; use one of {FORMATS}")
    return fmt


def _read_records(path: Path, fmt: str) -> Tuple[pd.DataFrame, int]:
    """讀取原始資料，回傳 (DataFrame, 無法解析的列數)"""
    if not path.exists():
        raise IngestionError(f"找不到資料檔案: {path}")
    if fmt == "jsonl":
        rows, broken = [], 0
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                broken += 1
                continue
            if isinstance(record, dict):
                rows.append(record)
            else:
                broken += 1
        return pd.DataFrame(rows), broken

    bad_lines: List[List[str]] = []
    frame = pd.read_csv(
        path, dtype=str, keep_default_na=False, engine="python",
        on_bad_lines=lambda line: bad_lines.append(line),
    )
    return frame, len(bad_lines)


def _clean(frame: pd.DataFrame, text_col: str, label_col: str) -> Tuple[pd.DataFrame, int]:
    """保留 text 與 label 都是非空字串的列"""
    for col in (text_col, label_col):
        if col not in frame.columns:
            frame[col] = None
    valid = frame[text_col].notna() & frame[label_col].notna()
    frame = frame[valid].copy()
    frame[text_col] = frame[text_col].astype(str).str.strip()
    frame[label_col] = frame[label_col].astype(str).str.strip()
    frame = frame[(frame[text_col] != "") & (frame[label_col] != "")]
    dropped = int((~valid).sum()) + int(valid.sum()) - len(frame)
    return frame, dropped


def load_dataset(
    path: Path,
    fmt: Optional[str] = None,
    name: Optional[str] = None,
    test_path: Optional[Path] = None,
) -> LabeledDataset:
    """
    讀取分類資料集

    path 可以是：
        - 目錄：內含 train.<fmt> / test.<fmt> (以及選用的 manifest.json)
        - 單一檔案：有 split 欄位時依欄位分割，否則全部視為 train

    Args:
        path: 資料路徑
        fmt: jsonl 或 csv，預設由副檔名判斷
        name: 資料集名稱，預設為檔名
        test_path: 另外指定的測試集檔案

    Raises:
        IngestionError: 沒有任何有效資料
    """
    path = Path(path)
    label_order: List[str] = []
    if path.is_dir():
        manifest_path = path / MANIFEST_FILE
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
            label_order = list(manifest.get('label_order', []))
            name = name or manifest.get('name')
        fmt = fmt or next((f for f in FORMATS if (path / f"train.{f}").exists()), None)
        if fmt is None:
            raise IngestionError(f"no train.jsonl or train.csv under {path}")
        test_path = test_path or path / f"test.{fmt}"
        train_file = path / f"train.{fmt}"
    else:
        train_file = path
    fmt = _detect_format(train_file, fmt)

    frame, malformed = _read_records(train_file, fmt)
    if 'split' not in frame.columns:
        frame['split'] = "train"
    if test_path is not None and Path(test_path).exists():
        test_frame, broken = _read_records(Path(test_path), _detect_format(Path(test_path), fmt))
        test_frame['split'] = "test"
        frame = pd.concat([frame, test_frame], ignore_index=True)
        malformed += broken

    frame, dropped = _clean(frame, "text", "label")
    malformed += dropped
    if frame.empty:
        raise IngestionError(f"no valid rows in {path}")

    # 類別順序：manifest 固定的順序，其餘依第一次出現
    for label in frame['label']:
        if label not in label_order:
            label_order.append(label)

    train = [(t, l) for t, l, s in zip(frame['text'], frame['label'], frame['split']) if s != "test"]
    test = [(t, l) for t, l, s in zip(frame['text'], frame['label'], frame['split']) if s == "test"]
    if not train:
        raise IngestionError(f"no valid train rows in {path}")
    if malformed:
        logger.warning("skipped %d malformed rows while loading %s", malformed, path)

    return LabeledDataset(
        name=name or path.stem,
        train=train,
        test=test,
        classes=tuple(label_order),
        malformed=malformed,
    )


def save_dataset(ds: LabeledDataset, directory: Path, fmt: str = "jsonl") -> Path:
    """寫出 train / test 與 manifest.json"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for split, rows in (("train", ds.train), ("test", ds.test)):
        frame = pd.DataFrame(rows, columns=["text", "label"])
        target = directory / f"{split}.{fmt}"
        if fmt == "jsonl":
            frame.to_json(target, orient="records", lines=True, force_ascii=False)
        else:
            frame.to_csv(target, index=False)
    (directory / MANIFEST_FILE).write_text(json.dumps(ds.manifest(), indent=2, ensure_ascii=False), encoding="utf-8")
    return directory


def unlabeled_corpus(ds: LabeledDataset) -> List[str]:
    """DAPT 語料：整個訓練集，丟掉標籤"""
    return ds.train_texts


def load_pair_stream(path: Path, fmt: Optional[str] = None) -> PairStream:
    """讀取 {"anchor": ..., "positive": ...} 句對"""
    path = Path(path)
    frame, broken = _read_records(path, _detect_format(path, fmt))
    for col in ("anchor", "positive"):
        if col not in frame.columns:
            raise IngestionError(f"pair file {path} lacks a {col!r} column")
    frame = frame.dropna(subset=["anchor", "positive"])
    stream = PairStream(
        source=path.stem,
        pairs=[(str(a).strip(), str(p).strip()) for a, p in zip(frame['anchor'], frame['positive'])],
    )
    if broken:
        logger.warning("skipped %d malformed pair rows in %s", broken, path)
    if not len(stream):
        raise IngestionError(f"no valid pairs in {path}")
    return stream


def save_pair_stream(stream: PairStream, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(stream.pairs, columns=["anchor", "positive"]).to_json(
        path, orient="records", lines=True, force_ascii=False
    )
    return path


def mix_pair_streams(
    streams: Sequence[PairStream],
    per_source: Optional[int] = None,
    seed: int = 0,
) -> PairStream:
    """
    混合多個 SEPT 資料來源 (例如 NLI + SC + SE)

    每個來源先不放回抽 per_source 筆 (None 表示全取)，再整體打亂
    """
    rng = np.random.default_rng(seed)
    mixed: List[Tuple[str, str]] = []
    for stream in streams:
        pairs = list(stream.pairs)
        if per_source is not None and per_source < len(pairs):
            picked = rng.choice(len(pairs), size=per_source, replace=False)
            pairs = [pairs[i] for i in sorted(picked)]
        mixed.extend(pairs)
    order = rng.permutation(len(mixed))
    return PairStream(
        source="+".join(s.source for s in streams),
        pairs=[mixed[i] for i in order],
    )
