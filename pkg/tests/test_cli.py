"""
命令列：子指令串接、設定檔與結束碼
"""
import json

import pandas as pd
import pytest

from main import RUN_MANIFEST_FILE, cli_dispatch

SMALL_SYNTH = ["--items-per-class", "12", "--set", "synth.test_items_per_class=6"]


def manifest(directory):
    return json.loads((directory / RUN_MANIFEST_FILE).read_text(encoding="utf-8"))


@pytest.fixture
def synth_dir(isolated_env):
    out = isolated_env / "synth"
    assert cli_dispatch(["synth", "--out", str(out), *SMALL_SYNTH]) == 0
    return out


# ----------------------------------------------------------------------
# 結束碼
# ----------------------------------------------------------------------

@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["dapt"], ["dapt", "--dataset", "x", "--steps", "many"]])
def test_usage_errors_exit_2(isolated_env, argv):
    assert cli_dispatch(argv) == 2


def test_unknown_config_key_exits_3(isolated_env):
    assert cli_dispatch(["synth", "--out", str(isolated_env / "s"), "--set", "synth.colour=3"]) == 3
    assert cli_dispatch(["synth", "--out", str(isolated_env / "s"), "--set", "synth"]) == 3


def test_missing_dataset_exits_3(isolated_env):
    assert cli_dispatch(["dapt", "--dataset", str(isolated_env / "nowhere")]) == 3


def test_bad_config_file_exits_3(isolated_env):
    assert cli_dispatch(["report", "--config", str(isolated_env / "missing.toml")]) == 3


def test_report_without_records_exits_3(isolated_env):
    assert cli_dispatch(["report", "--output", str(isolated_env / "report")]) == 3


# ----------------------------------------------------------------------
# 子指令串接
# ----------------------------------------------------------------------

def test_synth_writes_dataset_and_pairs(synth_dir):
    assert (synth_dir / "train.jsonl").exists()
    assert (synth_dir / "pairs.jsonl").exists()
    assert (synth_dir / "unlabeled.jsonl").exists()
    info = manifest(synth_dir)
    assert info["command"] == "synth"
    assert (info["train"], info["test"], info["pairs"]) == (36, 18, 36)


def test_stage_commands_compose_adasent(isolated_env, synth_dir):
    store = isolated_env / "store"
    quick = ["--steps", "2", "--batch-size", "8"]

    assert cli_dispatch(["dapt", "--dataset", str(synth_dir), *quick]) == 0
    assert (store / "dapt" / "synth" / "manifest.json").exists()
    assert manifest(store / "dapt" / "synth")["steps"] == 2
    assert list((store / "base").iterdir())

    assert cli_dispatch(["sept", "--pairs", str(synth_dir / "pairs.jsonl"), *quick]) == 0
    assert (store / "adapters" / "sept-shared" / "adapter.json").exists()

    assert cli_dispatch([
        "assemble", "--strategy", "adasent",
        "--dapt", str(store / "dapt" / "synth"),
        "--adapter", str(store / "adapters" / "sept-shared"),
        "--dataset-name", "synth",
    ]) == 0
    composed = store / "composed" / "adasent-synth"
    assert manifest(composed)["provenance"] == ["BASE", "DAPT", "SEPT"]

    assert cli_dispatch([
        "setfit", "--encoder", str(composed), "--dataset", str(synth_dir), "--shots", "4", "--seed", "1",
    ]) == 0
    clf_dir = store / "classifiers" / "setfit-synth-1"
    info = manifest(clf_dir)
    assert info["scope"] == "ALL"
    assert info["shots"] == 12
    assert 0.0 <= info["accuracy"] <= 1.0

    assert cli_dispatch([
        "selftrain", "--encoder", str(composed), "--dataset", str(synth_dir), "--shots", "4",
        "--threshold", "0.6", "--max-iter", "2", "--scope", "none",
    ]) == 0
    assert "pseudo_labeled" in manifest(store / "classifiers" / "selftrain-synth-0")


def test_assemble_reports_missing_stage(isolated_env, synth_dir):
    assert cli_dispatch(["assemble", "--strategy", "adasent", "--dataset-name", "synth"]) == 1


def test_assemble_rejects_adapter_for_full_strategy(isolated_env):
    assert cli_dispatch(["assemble", "--strategy", "dapt", "--adapter", str(isolated_env)]) == 3


def test_dapt_with_adapter_and_tsdae(isolated_env, synth_dir):
    assert cli_dispatch([
        "dapt", "--dataset", str(synth_dir), "--objective", "tsdae", "--peft", "lora",
        "--steps", "1", "--batch-size", "4",
    ]) == 0
    assert (isolated_env / "store" / "adapters" / "dapt-synth" / "adapter.json").exists()


def test_eval_and_report_from_toml(isolated_env, synth_dir):
    config = isolated_env / "matrix.toml"
    config.write_text(f"""
[dapt]
steps = 1
batch_size = 4

[sept]
steps = 1
epochs = "none"
batch_size = 4

[setfit]
shots = 4

[eval]
strategies = ["base", "adasent"]
datasets = ["{synth_dir}"]
seeds = [0, 1]
baseline = "base"
""", encoding="utf-8")

    assert cli_dispatch(["eval", "--matrix", str(config)]) == 0
    results = isolated_env / "results"
    aggregate = pd.read_csv(results / "aggregate.csv")
    assert set(aggregate["strategy"]) == {"base", "adasent"}
    assert set(aggregate["n_seeds"]) == {2}
    significance = pd.read_csv(results / "significance.csv")
    assert significance["strategy"].tolist() == ["adasent"]
    assert manifest(results)["trained_cells"] == 4

    assert cli_dispatch(["eval", "--matrix", str(config)]) == 0
    assert manifest(results)["cached_cells"] == 4

    report = isolated_env / "report"
    assert cli_dispatch(["report", "--output", str(report), "--dapt-steps", "1"]) == 0
    costs = pd.read_csv(report / "cost.csv")
    assert list(costs.columns) == ["strategy", "dapt_steps", "sept_h", "dapt_h", "setfit_h", "total_h", "acc"]
    assert costs.set_index("strategy").loc["base", "dapt_steps"] == 0
    assert (report / "strategy_accuracy.png").exists()
