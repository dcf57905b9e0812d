"""
評估：準確率、多種子彙總、顯著性檢定、訓練成本與實驗矩陣
"""
import pytest

from data import LabeledDataset
from errors import EvaluationError
from evaluation import (
    MatrixRunner,
    RunRecord,
    SelfTrainingConfig,
    accuracy,
    aggregate,
    cost_report,
    load_records,
    run_matrix,
    significance,
    write_cost_csv,
)
from pipelines import SetFitConfig, StageConfig, StrategyId


def record(strategy="ADASENT", dataset="reviews", seed=0, acc=0.5, **seconds):
    return RunRecord(strategy=strategy, dataset=dataset, seed=seed, accuracy=acc, stage_seconds=seconds)


# ----------------------------------------------------------------------
# 準確率
# ----------------------------------------------------------------------

def test_accuracy():
    assert accuracy(["a", "b", "a"], ["a", "b", "a"]) == 1.0
    assert accuracy(["a", "b", "b", "b"], ["a", "a", "a", "a"]) == 0.25


def test_accuracy_errors():
    with pytest.raises(EvaluationError):
        accuracy([], [])
    with pytest.raises(EvaluationError):
        accuracy(["a"], ["a", "b"])


# ----------------------------------------------------------------------
# RunRecord
# ----------------------------------------------------------------------

def test_run_record_validation():
    with pytest.raises(EvaluationError):
        record(acc=1.5)
    with pytest.raises(EvaluationError):
        record(dapt=-1.0)
    failed = RunRecord(strategy="DAPT", dataset="x", seed=0, accuracy=-1.0, status="failed", error="boom")
    assert not failed.ok
    assert record().variant == "adasent"
    assert record().stage_seconds == {"dapt": 0.0, "sept": 0.0, "setfit": 0.0}


def test_records_saved_per_cell(tmp_path):
    for seed in (0, 1):
        record(seed=seed, acc=0.5 + seed / 10, dapt=12.0).save(tmp_path)
    assert (tmp_path / "adasent" / "reviews" / "1.json").exists()
    loaded = load_records(tmp_path)
    assert [r.seed for r in loaded] == [0, 1]
    assert loaded[1].accuracy == pytest.approx(0.6)
    assert loaded[0].stage_seconds["dapt"] == 12.0
    assert load_records(tmp_path / "missing") == []


# ----------------------------------------------------------------------
# 彙總
# ----------------------------------------------------------------------

def test_aggregate_mean_and_sample_std():
    table = aggregate([record(seed=s, acc=a) for s, a in enumerate([0.5, 0.6, 0.7])])
    cell = table.cells.iloc[0]
    assert cell["mean"] == pytest.approx(0.6)
    assert cell["std"] == pytest.approx(0.1)
    assert cell["n_seeds"] == 3
    assert list(table.cells.columns) == ["strategy", "dataset", "mean", "std", "n_seeds"]
    assert table.seeds_for("adasent", "reviews") == {0: 0.5, 1: 0.6, 2: 0.7}


def test_aggregate_single_seed_has_zero_std():
    table = aggregate([record(acc=0.8)])
    assert table.cells.iloc[0]["std"] == 0.0


def test_aggregate_skips_failed_and_checks_seeds():
    rows = [
        record(seed=0, acc=0.5), record(seed=1, acc=0.7),
        record(strategy="BASE", seed=0, acc=0.4),
    ]
    with pytest.raises(EvaluationError):
        aggregate(rows)
    table = aggregate(rows, require_same_seeds=False)
    assert len(table.cells) == 2

    failed = RunRecord(strategy="BASE", dataset="reviews", seed=1, status="failed")
    assert len(aggregate(rows + [failed], require_same_seeds=False).rows) == 3
    assert aggregate([failed]).cells.empty


def test_pivot_adds_average_column():
    rows = [record(dataset=d, seed=s, acc=a) for d, a in (("x", 0.5), ("y", 0.7)) for s in (0, 1)]
    pivot = aggregate(rows).pivot()
    assert pivot.loc["adasent", "avg"] == pytest.approx(60.0)


# ----------------------------------------------------------------------
# 顯著性檢定
# ----------------------------------------------------------------------

def test_significance_degenerate_differences():
    assert significance([0.5, 0.6, 0.7], [0.5, 0.6, 0.7]) == 1.0
    assert significance([0.6, 0.7, 0.8], [0.5, 0.6, 0.7]) == 0.0
    assert significance([0.6, 0.7, 0.8], [0.5, 0.6, 0.7], test="wilcoxon") == 0.0


def test_significance_returns_p_value():
    a = [0.80, 0.82, 0.79, 0.85, 0.81]
    b = [0.70, 0.75, 0.72, 0.71, 0.74]
    p = significance(a, b)
    assert 0.0 < p < 0.01
    assert 0.0 < significance(a, b, test="wilcoxon") <= 0.1
    assert significance(a, list(reversed(a))) > 0.05


def test_significance_errors():
    with pytest.raises(EvaluationError):
        significance([0.1, 0.2], [0.1])
    with pytest.raises(EvaluationError):
        significance([0.1], [0.2])
    with pytest.raises(EvaluationError):
        significance([0.1, 0.3], [0.2, 0.25], test="anova")


# ----------------------------------------------------------------------
# 訓練成本
# ----------------------------------------------------------------------

def test_cost_report_shared_versus_per_task_sept(tmp_path):
    datasets = [f"task{i}" for i in range(15)]
    dapt_seconds = 0.44 * 3600 / len(datasets)
    rows = []
    for name in datasets:
        for seed in (0, 1):
            rows.append(record("DAPT_THEN_SEPT", name, seed, 0.7, dapt=dapt_seconds, sept=0.27 * 3600))
            rows.append(record("ADASENT", name, seed, 0.8, dapt=dapt_seconds, sept=0.17 * 3600))
            rows.append(record("BASE", name, seed, 0.6, setfit=36.0))

    costs = cost_report(rows, dapt_steps=2344).set_index("strategy")
    assert costs.loc["dapt_then_sept", "total_h"] == pytest.approx(4.49)
    assert costs.loc["dapt_then_sept", "sept_h"] == pytest.approx(4.05)
    assert costs.loc["adasent", "total_h"] == pytest.approx(0.61)
    assert costs.loc["adasent", "dapt_steps"] == 2344
    assert costs.loc["adasent", "acc"] == pytest.approx(0.8)
    assert costs.loc["base", "dapt_steps"] == 0
    assert costs.loc["base", "setfit_h"] == pytest.approx(0.15)

    path = write_cost_csv(costs.reset_index(), tmp_path / "cost.csv")
    assert path.read_text(encoding="utf-8").startswith("strategy,dapt_steps,sept_h,dapt_h,setfit_h,total_h,acc")


def test_cost_report_empty():
    assert cost_report([]).empty


# ----------------------------------------------------------------------
# 實驗矩陣
# ----------------------------------------------------------------------

@pytest.fixture
def make_runner(tmp_path, tiny_encoder, small_synth):
    def make(datasets=None, selftrain=None):
        return MatrixRunner(
            tiny_encoder,
            datasets or {"small": small_synth.dataset},
            small_synth.pairs.pairs,
            StageConfig.dapt_defaults(steps=1, batch_size=4, log_every=0),
            StageConfig.sept_defaults(steps=1, batch_size=4, log_every=0),
            results_root=tmp_path / "results",
            setfit_cfg=SetFitConfig(epochs=1, batch_size=16),
            shots=4,
            selftrain=selftrain,
            store_root=tmp_path / "store",
        )
    return make


def test_matrix_runs_and_resumes(make_runner, tmp_path):
    runner = make_runner()
    table = runner.run(["base", "adasent"], seeds=[0, 1, 2, 3, 4])
    assert runner.trained_cells == 10
    assert len(load_records(tmp_path / "results")) == 10
    assert set(table.cells["strategy"]) == {"base", "adasent"}
    assert set(table.cells["n_seeds"]) == {5}
    assert runner.ledger.count("SEPT") == 1
    assert runner.ledger.count("DAPT") == 1

    again = make_runner()
    rerun = again.run(["base", "adasent"], seeds=[0, 1, 2, 3, 4])
    assert (again.trained_cells, again.cached_cells) == (0, 10)
    assert rerun.cells["mean"].tolist() == table.cells["mean"].tolist()


def test_matrix_records_failed_cells(make_runner, small_synth):
    no_test = LabeledDataset(
        name="notest", train=small_synth.dataset.train, test=[], classes=small_synth.dataset.classes,
    )
    runner = make_runner(datasets={"notest": no_test})
    table = runner.run([StrategyId.BASE], seeds=[0])
    assert runner.failed_cells == 1
    assert table.cells.empty
    runner.run([StrategyId.BASE], seeds=[0])
    assert runner.failed_cells == 2


def test_matrix_with_self_training(make_runner):
    runner = make_runner(selftrain=SelfTrainingConfig(threshold=0.6, max_iter=2))
    run_matrix(runner, [{"name": "base-st", "strategy": "base", "scope": "none"}], seeds=[0])
    row = runner.run([{"name": "base-st", "strategy": "base", "scope": "none"}], seeds=[0]).rows[0]
    assert row.variant == "base-st"
    assert row.pseudo_labeled >= 0
    assert runner.cached_cells == 1
