"""
SentKit - Domain-adapted Sentence Encoder Toolkit
領域適應句子編碼器工具主程式

Usage:
    python main.py synth --out data/synth                 # 產生合成語料
    python main.py dapt --dataset data/synth              # 領域適應預訓練 (DAPT)
    python main.py sept --peft parallel                   # 句向量預訓練 (SEPT adapter)
    python main.py assemble --strategy adasent --dapt store/dapt/synth --adapter store/adapters/sept-shared
    python main.py setfit --encoder store/composed/adasent-synth --dataset data/synth
    python main.py eval --matrix matrix.toml              # 策略 × 資料集 × 種子 實驗矩陣
    python main.py report                                 # 彙總表、成本表與圖表
"""
import argparse
import copy
import json
import logging
import sys
import traceback
from dataclasses import asdict
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

# 將專案根目錄加入 Python path
sys.path.insert(0, str(Path(__file__).parent))

from adapters import AdapterConfig, export_adapter, load_adapter, save_adapter
from adapters.portability import ADAPTER_JSON
from config import get_settings
from config.run_config import RunConfig, load_run_config
from config.settings import Settings
from data import (
    LabeledDataset,
    SynthSpec,
    load_dataset,
    load_pair_stream,
    mix_pair_streams,
    sample_few_shot,
    save_dataset,
    save_pair_stream,
    synth_corpus,
    unlabeled_corpus,
    unlabeled_pool,
)
from encoder import (
    EncoderState,
    Pooling,
    get_profile,
    load_checkpoint,
    load_pretrained_encoder,
    new_encoder,
    parse_scope,
    save_checkpoint,
)
from errors import EXIT_INTERRUPT, EXIT_OK, EXIT_RUNTIME, ConfigurationError, SentKitError
from evaluation import (
    MatrixRunner,
    SelfTrainingConfig,
    aggregate,
    cost_report,
    evaluate,
    load_records,
    significance,
    write_aggregate_csv,
    write_cost_csv,
)
from pairgen import PairStrategy
from pipelines import (
    STRATEGY_PLANS,
    ArtifactRegistry,
    HeadConfig,
    Objective,
    SetFitConfig,
    StageConfig,
    StrategyId,
    compose,
    run_self_training,
    run_setfit,
    train_dapt,
    train_sept,
)
from pipelines.strategies import BASE_KEY
from visualization import ChartGenerator

logger = logging.getLogger(__name__)

RUN_MANIFEST_FILE = "run_manifest.json"

# 專用旗標 -> 設定檔的 section.key (旗標優先於 --set 與設定檔)
COMMON_FLAGS = {
    'store': 'store.root',
    'results': 'store.results',
    'profile': 'store.profile',
    'pooling': 'store.pooling',
    'base': 'store.base',
}

COMMAND_FLAGS: Dict[str, Dict[str, str]] = {
    'dapt': {
        'objective': 'dapt.objective',
        'steps': 'dapt.steps',
        'epochs': 'dapt.epochs',
        'batch_size': 'dapt.batch_size',
        'lr': 'dapt.learning_rate',
        'peft': 'dapt.peft',
        'seed': 'dapt.rng_seed',
    },
    'sept': {
        'pairs': 'sept.sources',
        'per_source': 'sept.per_source',
        'steps': 'sept.steps',
        'epochs': 'sept.epochs',
        'batch_size': 'sept.batch_size',
        'lr': 'sept.learning_rate',
        'peft': 'sept.peft',
        'scale': 'sept.scale',
        'name': 'sept.name',
        'seed': 'sept.rng_seed',
    },
    'setfit': {
        'shots': 'setfit.shots',
        'scope': 'setfit.scope',
        'pair_strategy': 'setfit.pair_strategy',
        'epochs': 'setfit.epochs',
    },
    'eval': {
        'strategies': 'eval.strategies',
        'datasets': 'eval.datasets',
        'seeds': 'eval.seeds',
        'baseline': 'eval.baseline',
        'significance': 'eval.significance',
        'shots': 'setfit.shots',
    },
    'report': {
        'output': 'report.output',
        'dapt_steps': 'report.dapt_steps',
        'plot': 'report.plot',
    },
    'synth': {
        'classes': 'synth.classes',
        'items_per_class': 'synth.items_per_class',
        'seed': 'synth.seed',
        'name': 'synth.name',
    },
}
COMMAND_FLAGS['selftrain'] = {
    **COMMAND_FLAGS['setfit'],
    'threshold': 'selftrain.threshold',
    'max_iter': 'selftrain.max_iter',
}


def print_banner():
    """印出程式標題"""
    print("""
╔═══════════════════════════════════════════════════════════════╗
║                                                               ║
║        🧠 領域適應句子編碼器工具 (SentKit)                     ║
║                                                               ║
║        DAPT + SEPT adapter + SetFit 少樣本分類                 ║
║                                                               ║
╚═══════════════════════════════════════════════════════════════╝
    """)


# ----------------------------------------------------------------------
# 設定轉換
# ----------------------------------------------------------------------

def _optional(value) -> Optional[str]:
    """TOML 沒有 null：'none' 與空字串代表未設定"""
    if value is None:
        return None
    text = str(value).strip()
    return None if text.lower() in ("", "none") else text


def _optional_number(value):
    """steps / epochs / learning_rate 等選用數值，'none' 代表未設定"""
    if isinstance(value, str):
        text = _optional(value)
        if text is None:
            return None
        try:
            return int(text)
        except ValueError:
            try:
                return float(text)
            except ValueError:
                raise ConfigurationError(f"expected a number or 'none', got {value!r}") from None
    return value


def peft_config(kind) -> Optional[AdapterConfig]:
    kind = _optional(kind)
    return AdapterConfig.for_kind(kind) if kind else None


def dapt_stage_config(cfg: RunConfig, settings: Settings) -> StageConfig:
    d = cfg.dapt
    return StageConfig.dapt_defaults(
        settings.defaults,
        objective=Objective.parse(d.objective),
        steps=_optional_number(d.steps),
        epochs=_optional_number(d.epochs),
        batch_size=d.batch_size,
        learning_rate=_optional_number(d.learning_rate),
        peft=peft_config(d.peft),
        mask_prob=d.mask_prob,
        deletion_ratio=d.deletion_ratio,
        dropout=d.dropout,
        warmup_ratio=d.warmup_ratio,
        weight_decay=d.weight_decay,
        rng_seed=d.rng_seed,
    )


def sept_stage_config(cfg: RunConfig, settings: Settings) -> StageConfig:
    s = cfg.sept
    return StageConfig.sept_defaults(
        settings.defaults,
        steps=_optional_number(s.steps),
        epochs=_optional_number(s.epochs),
        batch_size=s.batch_size,
        learning_rate=_optional_number(s.learning_rate),
        peft=peft_config(s.peft),
        mnrl_scale=s.scale,
        warmup_ratio=s.warmup_ratio,
        weight_decay=s.weight_decay,
        rng_seed=s.rng_seed,
    )


def setfit_config(cfg: RunConfig, seed: int) -> SetFitConfig:
    s = cfg.setfit
    try:
        pair_strategy = PairStrategy[str(s.pair_strategy).strip().upper()]
    except KeyError:
        raise ConfigurationError(f"unknown pair strategy {s.pair_strategy!r}; use exhaustive/balanced_sampled") from None
    return SetFitConfig(
        epochs=s.epochs,
        batch_size=s.batch_size,
        learning_rate=s.learning_rate,
        pair_strategy=pair_strategy,
        loss_reduction=s.loss_reduction,
        rng_seed=seed,
    )


def head_config(cfg: RunConfig) -> HeadConfig:
    return HeadConfig(c=cfg.setfit.head_c, max_iter=cfg.setfit.head_max_iter)


def synth_spec(cfg: RunConfig) -> SynthSpec:
    return SynthSpec(**asdict(cfg.synth))


def resolve_settings(cfg: RunConfig) -> Settings:
    """設定檔的 [store] 覆蓋環境變數"""
    settings = copy.copy(get_settings())
    if _optional(cfg.store.root):
        settings.store_root = Path(cfg.store.root)
    if _optional(cfg.store.results):
        settings.results_root = Path(cfg.store.results)
    if _optional(cfg.store.profile):
        settings.profile = cfg.store.profile
    return settings


# ----------------------------------------------------------------------
# 產物讀寫
# ----------------------------------------------------------------------

def base_encoder(cfg: RunConfig, settings: Settings) -> EncoderState:
    """
    取得 BASE 編碼器

    順序：store.base 指定的 checkpoint -> store/base/<architecture> -> 新建並存檔
    """
    if _optional(cfg.store.base):
        return load_checkpoint(Path(cfg.store.base))

    try:
        profile = get_profile(settings.profile)
    except KeyError as exc:
        raise ConfigurationError(f"unknown architecture profile {settings.profile!r}") from exc
    try:
        pooling = Pooling(str(cfg.store.pooling).upper())
    except ValueError:
        raise ConfigurationError(f"unknown pooling {cfg.store.pooling!r}; use mean or cls") from None

    directory = settings.base_dir / profile.architecture_id
    if directory.exists():
        state = load_checkpoint(directory)
        if state.pooling is pooling:
            return state
        logger.warning("stored base uses %s pooling; rebuilding with %s", state.pooling.value, pooling.value)

    print(f"   🔧 建立 BASE 編碼器 ({profile.architecture_id}, {pooling.value} pooling)...")
    if profile.pretrained_name:
        state = load_pretrained_encoder(profile, pooling)
    else:
        state = new_encoder(profile, pooling)
    save_checkpoint(state, directory)
    return state


def load_named_dataset(spec: str, cfg: RunConfig) -> LabeledDataset:
    """'synth' 代表依 [synth] 產生的合成資料集，其餘視為路徑"""
    if spec == "synth":
        return synth_corpus(synth_spec(cfg)).dataset
    return load_dataset(Path(spec))


def pair_data(cfg: RunConfig) -> List[Tuple[str, str]]:
    """SEPT 句對：sept.sources 混合；未指定時使用合成語料的 paraphrase 句對"""
    sources = cfg.sept.sources
    if isinstance(sources, str):
        sources = [sources]
    if sources:
        streams = [load_pair_stream(Path(p)) for p in sources]
        return mix_pair_streams(streams, cfg.sept.per_source, seed=cfg.sept.rng_seed).pairs
    logger.info("sept.sources is empty; using synthetic paraphrase pairs")
    return synth_corpus(synth_spec(cfg)).pairs.pairs


def load_artifact(path: Path):
    """adapter 目錄 (含 adapter.json) 或 checkpoint 目錄"""
    path = Path(path)
    if (path / ADAPTER_JSON).exists():
        return load_adapter(path)
    return load_checkpoint(path)


def write_run_manifest(directory: Path, command: str, cfg: RunConfig, **details) -> Path:
    """輸出目錄的執行紀錄：指令、設定雜湊、時間與結果摘要"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(directory)
    body = {
        'command': command,
        'config_hash': cfg.config_hash(),
        'created_at': datetime.now().isoformat(timespec="seconds"),
        **details,
    }
    target = directory / RUN_MANIFEST_FILE
    target.write_text(json.dumps(body, indent=2, ensure_ascii=False, default=str), encoding="utf-8")
    return target


# ----------------------------------------------------------------------
# 子指令
# ----------------------------------------------------------------------

def cmd_synth(args, cfg: RunConfig, settings: Settings) -> int:
    """產生合成語料"""
    print("\n📥 產生合成語料...")
    print("-" * 50)
    corpus = synth_corpus(synth_spec(cfg))
    out = Path(args.out)
    save_dataset(corpus.dataset, out, args.format)
    save_pair_stream(corpus.pairs, out / "pairs.jsonl")
    pd.DataFrame({'text': corpus.unlabeled}).to_json(
        out / "unlabeled.jsonl", orient="records", lines=True, force_ascii=False
    )
    write_run_manifest(out, "synth", cfg, classes=list(corpus.dataset.classes),
                       train=len(corpus.dataset.train), test=len(corpus.dataset.test), pairs=len(corpus.pairs))
    print(f"   ✅ {corpus.dataset.name}: {len(corpus.dataset.train)} 訓練 / {len(corpus.dataset.test)} 測試")
    print(f"   ✅ paraphrase 句對: {len(corpus.pairs)} 組")
    print(f"   💾 已儲存至: {out}")
    return EXIT_OK


def cmd_dapt(args, cfg: RunConfig, settings: Settings) -> int:
    """領域適應預訓練"""
    stage = dapt_stage_config(cfg, settings)
    ds = load_named_dataset(args.dataset, cfg)
    print(f"\n🔄 DAPT ({stage.objective.value}) on {ds.name}...")
    print("-" * 50)
    base = base_encoder(cfg, settings)
    state, report = train_dapt(base, unlabeled_corpus(ds), stage)

    if stage.peft is not None:
        out = Path(args.out) if args.out else settings.adapter_dir(f"dapt-{ds.name}")
        save_adapter(export_adapter(state, training_hash=stage.config_hash()), out)
    else:
        out = Path(args.out) if args.out else settings.dapt_dir(ds.name)
        save_checkpoint(state, out, stage.config_hash())
    write_run_manifest(out, "dapt", cfg, dataset=ds.name, steps=report.total_steps, skipped=report.skipped,
                       first_loss=report.first_loss, last_loss=report.last_loss, seconds=report.seconds)
    print(f"   ✅ {report.total_steps} 步 (跳過 {report.skipped})，loss {report.first_loss:.4f} -> {report.last_loss:.4f}")
    print(f"   💾 已儲存至: {out}")
    return EXIT_OK


def cmd_sept(args, cfg: RunConfig, settings: Settings) -> int:
    """句向量預訓練 (MNRL)"""
    stage = sept_stage_config(cfg, settings)
    pairs = pair_data(cfg)
    target = stage.peft.kind.value if stage.peft else "full"
    print(f"\n🔄 SEPT ({target}) on {len(pairs)} pairs...")
    print("-" * 50)
    base = base_encoder(cfg, settings)
    state, report = train_sept(base, pairs, stage)

    if stage.peft is not None:
        out = Path(args.out) if args.out else settings.adapter_dir(f"sept-{cfg.sept.name}")
        save_adapter(export_adapter(state, training_hash=stage.config_hash()), out)
    else:
        out = Path(args.out) if args.out else settings.sept_dir(cfg.sept.name)
        save_checkpoint(state, out, stage.config_hash())
    write_run_manifest(out, "sept", cfg, pairs=len(pairs), steps=report.total_steps,
                       first_loss=report.first_loss, last_loss=report.last_loss, seconds=report.seconds)
    print(f"   ✅ {report.total_steps} 步，loss {report.first_loss:.4f} -> {report.last_loss:.4f}")
    print(f"   💾 已儲存至: {out}")
    return EXIT_OK


def cmd_assemble(args, cfg: RunConfig, settings: Settings) -> int:
    """把既有的產物組成指定策略的編碼器"""
    strategy = StrategyId.parse(args.strategy)
    plan = STRATEGY_PLANS[strategy]
    dataset = args.dataset_name
    registry = ArtifactRegistry()

    if args.adapter and plan.adapter is None:
        raise ConfigurationError(f"strategy {strategy.value} does not take an adapter")
    inputs = (
        (BASE_KEY, cfg.store.base if _optional(cfg.store.base) else None),
        ("dapt/{dataset}", args.dapt),
        ("sept/shared", args.sept),
        (plan.backbone, args.backbone),
        (plan.adapter, args.adapter),
    )
    for template, path in inputs:
        if template is not None and path:
            registry.put(template.format(dataset=dataset), load_artifact(Path(path)))
    if plan.backbone == BASE_KEY and BASE_KEY not in registry:
        registry.put(BASE_KEY, base_encoder(cfg, settings))

    print(f"\n🔧 組裝 {strategy.value}...")
    state = compose(strategy, registry, dataset)
    out = Path(args.out) if args.out else settings.composed_dir(strategy.value.lower(), dataset)
    save_checkpoint(state, out)
    stages = [s.value for s in state.stages]
    write_run_manifest(out, "assemble", cfg, strategy=strategy.value, provenance=stages)
    print(f"   ✅ provenance: {' -> '.join(stages)}")
    print(f"   💾 已儲存至: {out}")
    return EXIT_OK


def _fit_classifier(args, cfg: RunConfig, settings: Settings, command: str, selftrain: bool) -> int:
    encoder = load_checkpoint(Path(args.encoder)) if args.encoder else base_encoder(cfg, settings)
    ds = load_named_dataset(args.dataset, cfg)
    seed = args.seed
    print(f"\n🎯 SetFit on {ds.name} ({cfg.setfit.shots} shots/class, seed {seed})...")
    print("-" * 50)

    fs = sample_few_shot(ds, cfg.setfit.shots, seed)
    clf = run_setfit(encoder, fs, parse_scope(cfg.setfit.scope), head_config(cfg), setfit_config(cfg, seed))
    if selftrain:
        clf = run_self_training(
            clf, clf.encoder, fs, unlabeled_pool(ds, fs),
            threshold=cfg.selftrain.threshold, max_iter=cfg.selftrain.max_iter, head_cfg=head_config(cfg),
        )
        print(f"   🔁 自我訓練加入 {clf.meta.get('pseudo_labeled', 0)} 筆 pseudo label")

    acc = evaluate(clf, ds.test) if ds.test else None
    out = Path(args.out) if args.out else settings.store_root / "classifiers" / f"{command}-{ds.name}-{seed}"
    clf.save(out)
    write_run_manifest(out, command, cfg, dataset=ds.name, seed=seed, accuracy=acc, **clf.meta)
    if acc is not None:
        print(f"   📊 測試準確率: {acc * 100:.2f}%")
    print(f"   💾 已儲存至: {out}")
    return EXIT_OK


def cmd_setfit(args, cfg: RunConfig, settings: Settings) -> int:
    """SetFit 少樣本分類 (selftrain.enabled 時接著自我訓練)"""
    return _fit_classifier(args, cfg, settings, "setfit", selftrain=cfg.selftrain.enabled)


def cmd_selftrain(args, cfg: RunConfig, settings: Settings) -> int:
    """SetFit 後以未標記訓練資料做自我訓練"""
    return _fit_classifier(args, cfg, settings, "selftrain", selftrain=True)


def _significance_rows(table, baseline: str, test: str) -> pd.DataFrame:
    rows = []
    variants = sorted({r.variant for r in table.rows})
    datasets = sorted({r.dataset for r in table.rows})
    for variant in variants:
        if variant == baseline:
            continue
        for dataset in datasets:
            ours = table.seeds_for(variant, dataset)
            theirs = table.seeds_for(baseline, dataset)
            seeds = sorted(set(ours) & set(theirs))
            if len(seeds) < 2:
                continue
            p_value = significance([ours[s] for s in seeds], [theirs[s] for s in seeds], test)
            rows.append({'strategy': variant, 'baseline': baseline, 'dataset': dataset,
                         'n_seeds': len(seeds), 'p_value': p_value})
    return pd.DataFrame(rows, columns=['strategy', 'baseline', 'dataset', 'n_seeds', 'p_value'])


def cmd_eval(args, cfg: RunConfig, settings: Settings) -> int:
    """執行實驗矩陣，已完成的格子直接沿用"""
    e = cfg.eval
    if not e.datasets:
        raise ConfigurationError("eval.datasets is empty")
    datasets: Dict[str, LabeledDataset] = {}
    for spec in e.datasets:
        ds = load_named_dataset(spec, cfg)
        datasets[ds.name] = ds

    selftrain = None
    if cfg.selftrain.enabled:
        selftrain = SelfTrainingConfig(cfg.selftrain.threshold, cfg.selftrain.max_iter)
    runner = MatrixRunner(
        base=base_encoder(cfg, settings),
        datasets=datasets,
        pairs=pair_data(cfg),
        dapt_cfg=dapt_stage_config(cfg, settings),
        sept_cfg=sept_stage_config(cfg, settings),
        results_root=settings.results_root,
        setfit_cfg=setfit_config(cfg, 0),
        head_cfg=head_config(cfg),
        shots=cfg.setfit.shots,
        selftrain=selftrain,
        store_root=settings.store_root,
    )
    table = runner.run(e.strategies, [int(s) for s in e.seeds])
    print(table)

    write_aggregate_csv(table, settings.results_root / "aggregate.csv")
    baseline = _optional(e.baseline)
    if baseline:
        sig = _significance_rows(table, baseline, e.significance)
        sig.to_csv(settings.results_root / "significance.csv", index=False, float_format="%.6f")
        for row in sig.itertuples(index=False):
            mark = "✅" if row.p_value < 0.05 else "➖"
            print(f"   {mark} {row.strategy} vs {row.baseline} on {row.dataset}: p={row.p_value:.4f}")
    write_run_manifest(settings.results_root, "eval", cfg, trained_cells=runner.trained_cells,
                       cached_cells=runner.cached_cells, failed_cells=runner.failed_cells)
    return EXIT_RUNTIME if runner.failed_cells else EXIT_OK


def cmd_report(args, cfg: RunConfig, settings: Settings) -> int:
    """彙總 results/ 下的所有紀錄"""
    r = cfg.report
    results = Path(r.results) if _optional(r.results) else settings.results_root
    out = Path(r.output)
    records = load_records(results)
    if not records:
        raise ConfigurationError(f"no run records under {results}")

    print(f"\n📊 彙總 {len(records)} 筆紀錄...")
    table = aggregate(records, require_same_seeds=False)
    dapt_steps = _optional_number(r.dapt_steps)
    costs = cost_report(records, dapt_steps=dapt_steps if dapt_steps is not None else _optional_number(cfg.dapt.steps))
    write_aggregate_csv(table, out / "aggregate.csv")
    write_cost_csv(costs, out / "cost.csv")
    print(table)
    print(costs.to_string(index=False))

    if r.plot:
        charts = ChartGenerator(str(out))
        charts.plot_strategy_accuracy(table)
        charts.plot_cost(costs)
    write_run_manifest(out, "report", cfg, records=len(records), results=str(results))
    print(f"   💾 已儲存至: {out}")
    return EXIT_OK


COMMANDS = {
    'synth': cmd_synth,
    'dapt': cmd_dapt,
    'sept': cmd_sept,
    'assemble': cmd_assemble,
    'setfit': cmd_setfit,
    'selftrain': cmd_selftrain,
    'eval': cmd_eval,
    'report': cmd_report,
}


# ----------------------------------------------------------------------
# 參數解析
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', '-c', type=str, default=None, help='TOML 設定檔')
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='SECTION.KEY=VALUE',
                        help='覆寫設定值 (可重複)')
    common.add_argument('--store', type=str, default=None, help='產物目錄 (預設: $SENTKIT_STORE 或 ./store)')
    common.add_argument('--results', type=str, default=None, help='結果目錄 (預設: $SENTKIT_RESULTS 或 ./results)')
    common.add_argument('--profile', type=str, default=None, help='架構設定: tiny / full')
    common.add_argument('--pooling', type=str, default=None, help='mean / cls')
    common.add_argument('--base', type=str, default=None, help='BASE 編碼器 checkpoint 目錄')

    parser = argparse.ArgumentParser(
        description="領域適應句子編碼器工具",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
範例:
    python main.py synth --out data/synth
    python main.py dapt --dataset data/synth --steps 200
    python main.py sept --pairs data/synth/pairs.jsonl --peft parallel
    python main.py assemble --strategy adasent --dapt store/dapt/synth --adapter store/adapters/sept-shared --dataset-name synth
    python main.py setfit --encoder store/composed/adasent-synth --dataset data/synth --seed 0
    python main.py eval --matrix matrix.toml
    python main.py report --output report

結束碼: 0 成功 / 1 執行失敗 / 2 參數錯誤 / 3 設定或驗證錯誤 / 130 使用者中斷
        """
    )
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', parents=[common], help='產生合成語料')
    p.add_argument('--out', required=True, help='輸出目錄')
    p.add_argument('--format', choices=['jsonl', 'csv'], default='jsonl')
    p.add_argument('--classes', type=int)
    p.add_argument('--items-per-class', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--name', type=str)

    p = sub.add_parser('dapt', parents=[common], help='領域適應預訓練')
    p.add_argument('--dataset', required=True, help="資料集路徑或 'synth'")
    p.add_argument('--objective', choices=['mlm', 'tsdae', 'simcse'])
    p.add_argument('--steps', type=int)
    p.add_argument('--epochs', type=int)
    p.add_argument('--batch-size', type=int)
    p.add_argument('--lr', type=float)
    p.add_argument('--peft', type=str, help='parallel / bottleneck / lora / prefix / none')
    p.add_argument('--seed', type=int)
    p.add_argument('--out', type=str)

    p = sub.add_parser('sept', parents=[common], help='句向量預訓練')
    p.add_argument('--pairs', action='append', help='anchor/positive 句對檔 (可重複)')
    p.add_argument('--per-source', type=int)
    p.add_argument('--steps', type=int)
    p.add_argument('--epochs', type=int)
    p.add_argument('--batch-size', type=int)
    p.add_argument('--lr', type=float)
    p.add_argument('--peft', type=str, help='parallel / bottleneck / lora / prefix / none')
    p.add_argument('--scale', type=float, help='MNRL 相似度縮放')
    p.add_argument('--name', type=str)
    p.add_argument('--seed', type=int)
    p.add_argument('--out', type=str)

    p = sub.add_parser('assemble', parents=[common], help='組裝策略編碼器')
    p.add_argument('--strategy', required=True)
    p.add_argument('--dapt', type=str, help='DAPT checkpoint 目錄')
    p.add_argument('--sept', type=str, help='SEPT checkpoint 目錄')
    p.add_argument('--backbone', type=str, help='策略主幹 checkpoint 目錄')
    p.add_argument('--adapter', type=str, help='adapter 目錄')
    p.add_argument('--dataset-name', type=str, default='target')
    p.add_argument('--out', type=str)

    for name, help_text in (('setfit', 'SetFit 少樣本分類'), ('selftrain', 'SetFit + 自我訓練')):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument('--dataset', required=True, help="資料集路徑或 'synth'")
        p.add_argument('--encoder', type=str, help='編碼器 checkpoint 目錄 (預設 BASE)')
        p.add_argument('--seed', type=int, default=0)
        p.add_argument('--shots', type=int)
        p.add_argument('--scope', type=str, help='auto / none / adapter / transformer / all')
        p.add_argument('--pair-strategy', type=str)
        p.add_argument('--epochs', type=int)
        p.add_argument('--out', type=str)
        if name == 'selftrain':
            p.add_argument('--threshold', type=float)
            p.add_argument('--max-iter', type=int)

    p = sub.add_parser('eval', parents=[common], help='策略 × 資料集 × 種子 實驗矩陣')
    p.add_argument('--matrix', type=str, help='矩陣設定檔 (等同 --config)')
    p.add_argument('--strategies', nargs='+')
    p.add_argument('--datasets', nargs='+')
    p.add_argument('--seeds', nargs='+', type=int)
    p.add_argument('--shots', type=int)
    p.add_argument('--baseline', type=str)
    p.add_argument('--significance', choices=['ttest', 'wilcoxon'])

    p = sub.add_parser('report', parents=[common], help='彙總表、成本表與圖表')
    p.add_argument('--output', type=str)
    p.add_argument('--dapt-steps', type=int)
    p.add_argument('--no-plot', dest='plot', action='store_const', const=False, default=None)

    return parser


def apply_flags(cfg: RunConfig, args: argparse.Namespace) -> None:
    """專用旗標覆寫設定；steps 與 epochs 互斥，設定其一會清掉另一個"""
    mapping = {**COMMON_FLAGS, **COMMAND_FLAGS.get(args.command, {})}
    for attr, dotted in mapping.items():
        value = getattr(args, attr, None)
        if value is None:
            continue
        cfg.override(dotted, value)
        section, _, key = dotted.partition('.')
        if key == 'steps' and section in ('dapt', 'sept'):
            cfg.override(f"{section}.epochs", None)
        elif key == 'epochs' and section in ('dapt', 'sept'):
            cfg.override(f"{section}.steps", None)


def cli_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    解析參數並執行子指令

    Returns:
        結束碼 (0 成功；SentKitError 依類別回傳 1 或 3；參數錯誤 2；中斷 130)
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_OK

    print_banner()
    try:
        config_path = getattr(args, 'matrix', None) or args.config
        cfg = load_run_config(Path(config_path) if config_path else None, args.overrides)
        apply_flags(cfg, args)
        settings = resolve_settings(cfg)
        logging.basicConfig(
            format='%(asctime)s - %(levelname)s - %(message)s',
            level=getattr(logging, settings.log_level, logging.INFO),
        )
        return COMMANDS[args.command](args, cfg, settings)

    except SentKitError as e:
        print(f"\n❌ 錯誤 [{e.category}]: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        print("\n\n⚠️ 使用者中斷程式")
        return EXIT_INTERRUPT
    except Exception as e:
        print(f"\n❌ 錯誤: {e}")
        traceback.print_exc()
        return EXIT_RUNTIME


def main():
    """主程式進入點"""
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
