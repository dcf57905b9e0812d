"""
SetFit 兩階段訓練與自我訓練
"""
import math

import numpy as np
import pytest
import torch

from adapters import AdapterConfig, attach
from data import sample_few_shot, unlabeled_pool
from encoder import Scope, Stage
from errors import ConfigurationError
from pipelines import (
    Classifier,
    HeadConfig,
    SetFitConfig,
    fit_head,
    run_self_training,
    run_setfit,
    self_train_head,
)

QUICK = SetFitConfig(epochs=1, batch_size=8, learning_rate=1e-3)
SHARP = HeadConfig(c=1e4)


@pytest.fixture
def shots(small_synth):
    return sample_few_shot(small_synth.dataset, 4, seed=0)


def test_scope_none_keeps_encoder(tiny_encoder, shots):
    clf = run_setfit(tiny_encoder, shots, Scope.NONE, cfg=QUICK)
    assert clf.encoder is tiny_encoder
    assert clf.meta == {'scope': "NONE", 'contrastive_steps': 0, 'shots': 12}
    assert Stage.SETFIT not in clf.encoder.stages


def test_contrastive_stage_leaves_input_untouched(tiny_encoder, shots):
    before = {k: v.clone() for k, v in tiny_encoder.backbone_state().items()}
    clf = run_setfit(tiny_encoder, shots, Scope.TRANSFORMER, cfg=QUICK)
    assert clf.meta['contrastive_steps'] > 0
    assert clf.encoder.stages[-1] is Stage.SETFIT
    for name, tensor in tiny_encoder.backbone_state().items():
        assert torch.equal(tensor, before[name]), name
    assert any(not torch.equal(t, before[n]) for n, t in clf.encoder.backbone_state().items())


def test_default_scope_follows_adapter(tiny_encoder, shots):
    assert run_setfit(tiny_encoder, shots, cfg=QUICK).meta['scope'] == "TRANSFORMER"
    with_adapter = attach(tiny_encoder.clone(), AdapterConfig.for_kind("parallel"))
    assert run_setfit(with_adapter, shots, cfg=QUICK).meta['scope'] == "ALL"


def test_adapter_scope_freezes_backbone(tiny_encoder, shots):
    state = attach(tiny_encoder.clone(), AdapterConfig.for_kind("parallel"))
    clf = run_setfit(state, shots, Scope.ADAPTER, cfg=QUICK)
    for name, tensor in state.backbone_state().items():
        assert torch.equal(tensor, clf.encoder.backbone_state()[name]), name


def test_head_fits_the_shots(tiny_encoder, shots):
    clf = run_setfit(tiny_encoder, shots, Scope.NONE, head_cfg=SHARP)
    assert clf.predict(shots.texts) == shots.labels
    proba = clf.predict_proba(shots.texts)
    assert proba.shape == (12, 3)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, rtol=1e-6)


def test_classifier_save_and_load(tmp_path, tiny_encoder, shots, small_synth):
    clf = run_setfit(tiny_encoder, shots, Scope.TRANSFORMER, cfg=QUICK)
    clf.save(tmp_path / "clf")
    loaded = Classifier.load(tmp_path / "clf")
    texts = small_synth.dataset.test_texts
    assert loaded.classes == clf.classes
    assert loaded.meta == clf.meta
    assert loaded.predict(texts) == clf.predict(texts)


# ----------------------------------------------------------------------
# 自我訓練
# ----------------------------------------------------------------------

def _blobs(seed: int = 0):
    rng = np.random.default_rng(seed)
    centers = np.array([[6.0, 0.0], [-6.0, 0.0]])
    gold_x = np.concatenate([centers[0] + rng.normal(0, 0.5, (2, 2)), centers[1] + rng.normal(0, 0.5, (2, 2))])
    gold_y = np.array([0, 0, 1, 1])
    unlabeled = np.concatenate([centers[0] + rng.normal(0, 0.5, (20, 2)), centers[1] + rng.normal(0, 0.5, (20, 2))])
    return gold_x, gold_y, unlabeled


def test_self_training_adds_confident_pseudo_labels():
    gold_x, gold_y, unlabeled = _blobs()
    result = self_train_head(gold_x, gold_y, unlabeled, threshold=0.9, max_iter=10, head_cfg=HeadConfig(c=100.0))
    assert np.all(result.labeled_iter[:4] == 0)
    assert result.pseudo_labeled > 0
    assert result.n_iter >= 1
    assert list(result.head.predict(unlabeled[:20])) == [0] * 20
    assert list(result.head.predict(unlabeled[20:])) == [1] * 20


@pytest.mark.parametrize("threshold, unlabeled_rows", [(1.1, 40), (1.0, 40), (0.9, 0)])
def test_self_training_degenerates_to_plain_fit(threshold, unlabeled_rows):
    gold_x, gold_y, unlabeled = _blobs()
    result = self_train_head(gold_x, gold_y, unlabeled[:unlabeled_rows], threshold=threshold)
    plain = fit_head(gold_x, gold_y)
    np.testing.assert_array_equal(result.head.coef_, plain.coef_)
    assert result.pseudo_labeled == 0


@pytest.mark.parametrize("threshold", [0.0, -0.5, math.inf, math.nan])
def test_self_training_rejects_threshold_outside_open_interval(threshold):
    gold_x, gold_y, unlabeled = _blobs()
    with pytest.raises(ConfigurationError):
        self_train_head(gold_x, gold_y, unlabeled, threshold=threshold)


def test_run_self_training_short_circuits(tiny_encoder, shots, small_synth):
    clf = run_setfit(tiny_encoder, shots, Scope.NONE)
    pool = unlabeled_pool(small_synth.dataset, shots)
    assert run_self_training(clf, clf.encoder, shots, pool, threshold=1.1) is clf
    assert run_self_training(clf, clf.encoder, shots, [], threshold=0.9) is clf
    with pytest.raises(ConfigurationError):
        run_self_training(clf, clf.encoder, shots, pool, threshold=0.0)
    with pytest.raises(ConfigurationError):
        run_self_training(clf, clf.encoder, shots, pool, threshold=math.inf)


def test_run_self_training_records_pseudo_labels(tiny_encoder, shots, small_synth):
    clf = run_setfit(tiny_encoder, shots, Scope.NONE, head_cfg=SHARP)
    pool = unlabeled_pool(small_synth.dataset, shots)
    trained = run_self_training(clf, clf.encoder, shots, pool, threshold=0.5, head_cfg=SHARP)
    assert trained is not clf
    assert trained.encoder is clf.encoder
    assert trained.meta['pseudo_labeled'] >= 0
    assert trained.meta['scope'] == "NONE"
    assert len(trained.predict(small_synth.dataset.test_texts)) == len(small_synth.dataset.test)
