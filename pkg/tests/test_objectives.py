"""
目標函數：MNRL、SetFit 餘弦損失、MLM、遮罩規劃、TSDAE 與 SimCSE
"""
import math

import pytest
import torch
from torch.autograd import gradcheck

from encoder import TINY_PROFILE, TokenBatch, tokenize
from errors import ConfigurationError, SkipBatch, StructuralError
from objectives import (
    IGNORE_INDEX,
    MaskAction,
    PairBatch,
    TiedDenoisingDecoder,
    cosine_pair_loss,
    delete_tokens,
    kept_length,
    mlm_loss,
    mnrl_loss,
    plan_mlm_mask,
    simcse_step,
    tsdae_step,
)

SPECIAL_IDS = (0, 1, 2, 3, 4)


# ----------------------------------------------------------------------
# MNRL / 餘弦損失
# ----------------------------------------------------------------------

def test_mnrl_uniform_scores_give_log_k():
    embeddings = torch.ones(4, 8)
    loss = mnrl_loss(PairBatch(embeddings, embeddings.clone()), scale=1.0)
    assert loss.item() == pytest.approx(math.log(4), abs=1e-6)


def test_mnrl_orthogonal_pairs():
    eye = torch.eye(2)
    loss = mnrl_loss(PairBatch(eye, eye.clone()), scale=1.0)
    assert loss.item() == pytest.approx(0.31326, abs=1e-5)
    assert loss.item() == pytest.approx(-math.log(math.e / (math.e + 1)), abs=1e-6)


def test_mnrl_single_pair_is_zero():
    loss = mnrl_loss(PairBatch(torch.randn(1, 8), torch.randn(1, 8)), scale=20.0)
    assert loss.item() == pytest.approx(0.0, abs=1e-7)


def test_mnrl_rejects_non_positive_scale():
    with pytest.raises(ConfigurationError):
        mnrl_loss(PairBatch(torch.eye(2), torch.eye(2)), scale=0.0)


def test_pair_batch_validation():
    with pytest.raises(StructuralError):
        PairBatch(torch.ones(2, 4), torch.ones(3, 4))
    with pytest.raises(StructuralError):
        PairBatch(torch.ones(0, 4), torch.ones(0, 4))
    with pytest.raises(StructuralError):
        PairBatch(torch.ones(2, 4), torch.ones(2, 4), torch.tensor([1.0, 2.0]))


@pytest.mark.parametrize("left, right, label, expected", [
    ([1.0, 0.0], [2.0, 0.0], 1.0, 0.0),
    ([1.0, 0.0], [0.0, 3.0], 0.0, 0.0),
    ([1.0, 0.0], [0.0, 1.0], 1.0, 1.0),
])
@pytest.mark.parametrize("reduction", ["squared", "absolute"])
def test_cosine_pair_loss_identities(left, right, label, expected, reduction):
    batch = PairBatch(
        torch.tensor([left], dtype=torch.float64),
        torch.tensor([right], dtype=torch.float64),
        torch.tensor([label], dtype=torch.float64),
    )
    assert cosine_pair_loss(batch, reduction).item() == pytest.approx(expected, abs=1e-9)


def test_cosine_pair_loss_needs_labels_and_known_reduction():
    with pytest.raises(StructuralError):
        cosine_pair_loss(PairBatch(torch.eye(2), torch.eye(2)))
    with pytest.raises(ConfigurationError):
        cosine_pair_loss(PairBatch(torch.eye(2), torch.eye(2), torch.ones(2)), reduction="huber")


def test_mnrl_gradients():
    torch.manual_seed(0)
    left = torch.randn(3, 5, dtype=torch.float64, requires_grad=True)
    right = torch.randn(3, 5, dtype=torch.float64, requires_grad=True)
    assert gradcheck(lambda a, b: mnrl_loss(PairBatch(a, b), scale=5.0), (left, right), atol=1e-6, rtol=1e-4)


def test_cosine_pair_loss_gradients():
    torch.manual_seed(0)
    left = torch.randn(4, 5, dtype=torch.float64, requires_grad=True)
    right = torch.randn(4, 5, dtype=torch.float64, requires_grad=True)
    labels = torch.tensor([1.0, 0.0, 1.0, 0.0], dtype=torch.float64)
    assert gradcheck(
        lambda a, b: cosine_pair_loss(PairBatch(a, b, labels)), (left, right), atol=1e-6, rtol=1e-4
    )


# ----------------------------------------------------------------------
# MLM
# ----------------------------------------------------------------------

def test_mlm_uniform_logits():
    logits = torch.zeros(2, 3, 1000)
    labels = torch.full((2, 3), IGNORE_INDEX)
    labels[0, 1] = 17
    labels[1, 2] = 999
    assert mlm_loss(logits, labels).item() == pytest.approx(math.log(1000), abs=1e-5)


def test_mlm_averages_labeled_positions_only():
    probs = torch.tensor([
        [0.5, 0.5 / 3, 0.5 / 3, 0.5 / 3],
        [0.25, 0.25, 0.25, 0.25],
        [0.1, 0.2, 0.3, 0.4],
    ])
    labels = torch.tensor([0, 0, IGNORE_INDEX])
    loss = mlm_loss(torch.log(probs), labels)
    assert loss.item() == pytest.approx((math.log(2) + math.log(4)) / 2, abs=1e-5)
    assert loss.item() == pytest.approx(1.0397, abs=1e-4)


def test_mlm_without_labels_skips():
    with pytest.raises(SkipBatch):
        mlm_loss(torch.zeros(1, 4, 10), torch.full((1, 4), IGNORE_INDEX))


# ----------------------------------------------------------------------
# 遮罩規劃
# ----------------------------------------------------------------------

def _random_batch(rows: int, cols: int, seed: int = 0) -> TokenBatch:
    generator = torch.Generator().manual_seed(seed)
    ids = torch.randint(5, 1000, (rows, cols), generator=generator)
    ids[:, 0] = 0
    ids[:, -1] = 2
    return TokenBatch(ids, torch.ones(rows, cols, dtype=torch.long))


def _plan(batch: TokenBatch, mask_prob: float, seed: int = 0):
    return plan_mlm_mask(batch, mask_prob, seed, mask_token_id=4, vocab_size=1000, special_ids=SPECIAL_IDS)


def test_mask_prob_zero_selects_nothing():
    plan, corrupted, labels = _plan(_random_batch(4, 20), 0.0)
    assert len(plan) == 0
    assert torch.all(labels == IGNORE_INDEX)
    assert plan.action_fractions() == (0.0, 0.0, 0.0)


def test_mask_prob_one_selects_every_content_token():
    batch = _random_batch(4, 20)
    plan, corrupted, labels = _plan(batch, 1.0)
    assert len(plan) == 4 * 18
    assert torch.all(labels[:, 0] == IGNORE_INDEX)
    assert torch.all(labels[:, -1] == IGNORE_INDEX)
    assert torch.equal(labels[:, 1:-1], batch.token_ids[:, 1:-1])


def test_masking_statistics():
    batch = _random_batch(100, 1002, seed=3)
    plan, corrupted, labels = _plan(batch, 0.15, seed=11)
    eligible = 100 * 1000
    assert len(plan) / eligible == pytest.approx(0.15, abs=0.02)

    mask_frac, random_frac, keep_frac = plan.action_fractions()
    assert mask_frac == pytest.approx(0.8, abs=0.02)
    assert random_frac == pytest.approx(0.1, abs=0.02)
    assert keep_frac == pytest.approx(0.1, abs=0.02)

    rows, cols = plan.positions[:, 0], plan.positions[:, 1]
    masked = plan.actions == int(MaskAction.MASK_TOKEN)
    kept = plan.actions == int(MaskAction.KEEP)
    assert torch.all(corrupted.token_ids[rows[masked], cols[masked]] == 4)
    assert torch.equal(corrupted.token_ids[rows[kept], cols[kept]], batch.token_ids[rows[kept], cols[kept]])
    unselected = labels == IGNORE_INDEX
    assert torch.equal(corrupted.token_ids[unselected], batch.token_ids[unselected])


def test_masking_skips_padding_and_is_seeded():
    ids = torch.tensor([[0, 10, 11, 12, 2], [0, 13, 2, 1, 1]])
    mask = torch.tensor([[1, 1, 1, 1, 1], [1, 1, 1, 0, 0]])
    batch = TokenBatch(ids, mask)
    plan_a, corrupted_a, labels_a = _plan(batch, 1.0, seed=5)
    plan_b, corrupted_b, labels_b = _plan(batch, 1.0, seed=5)
    assert torch.equal(labels_a, labels_b)
    assert torch.equal(corrupted_a.token_ids, corrupted_b.token_ids)
    assert torch.all(labels_a[1, 3:] == IGNORE_INDEX)


def test_mask_prob_out_of_range():
    with pytest.raises(ConfigurationError):
        _plan(_random_batch(1, 5), 1.5)


# ----------------------------------------------------------------------
# TSDAE / SimCSE
# ----------------------------------------------------------------------

@pytest.mark.parametrize("n, ratio, expected", [
    (0, 0.6, 0),
    (1, 0.6, 1),
    (2, 0.6, 1),
    (5, 0.6, 2),
    (10, 0.6, 4),
    (3, 0.5, 2),
    (7, 0.0, 7),
])
def test_kept_length(n, ratio, expected):
    assert kept_length(n, ratio) == expected


def test_delete_tokens_keeps_specials_in_place(tiny_encoder):
    batch = tokenize(tiny_encoder, ["tok1 tok2 tok3 tok4 tok5 tok6 tok7 tok8 tok9 tok10", "tok11 tok12"])
    noisy, kept = delete_tokens(batch, 0.6, rng_seed=0, special_ids=SPECIAL_IDS, pad_token_id=1)
    assert kept.tolist() == [4, 1]
    lengths = noisy.attention_mask.sum(dim=1).tolist()
    assert lengths == [6, 3]
    for row, length in zip(noisy.token_ids, lengths):
        assert row[0].item() == 0
        assert row[length - 1].item() == 2


def test_delete_tokens_preserves_order(tiny_encoder):
    batch = tokenize(tiny_encoder, [" ".join(f"tok{i}" for i in range(20))])
    noisy, _ = delete_tokens(batch, 0.5, rng_seed=7, special_ids=SPECIAL_IDS, pad_token_id=1)
    content = [t for t in noisy.token_ids[0].tolist() if t not in SPECIAL_IDS]
    assert content == sorted(content)


def test_delete_tokens_ratio_validation(token_batch):
    with pytest.raises(ConfigurationError):
        delete_tokens(token_batch, 1.0, rng_seed=0, special_ids=SPECIAL_IDS, pad_token_id=1)


def test_tsdae_skips_when_nothing_survives(tiny_encoder):
    batch = tokenize(tiny_encoder, ["tok1", "tok2"])
    with pytest.raises(SkipBatch):
        tsdae_step(tiny_encoder, batch, TiedDenoisingDecoder(TINY_PROFILE, num_layers=1), 0.6, 0)


def test_tsdae_loss_has_gradients(tiny_encoder):
    batch = tokenize(tiny_encoder, ["tok1 tok2 tok3 tok4 tok5 tok6", "tok7", "tok8 tok9 tok10 tok11"])
    decoder = TiedDenoisingDecoder(TINY_PROFILE, num_layers=1)
    loss = tsdae_step(tiny_encoder, batch, decoder, 0.6, 0)
    assert torch.isfinite(loss)
    loss.backward()
    assert tiny_encoder.model.word_embeddings.weight.grad is not None


def test_simcse_restores_dropout_and_mode(tiny_encoder, token_batch):
    tiny_encoder.model.eval()
    loss = simcse_step(tiny_encoder, token_batch, dropout_p=0.3, scale=20.0)
    assert torch.isfinite(loss)
    assert tiny_encoder.model.dropout_rate() == pytest.approx(TINY_PROFILE.dropout)
    assert not tiny_encoder.model.training


def test_simcse_zero_dropout_warns(tiny_encoder, token_batch, caplog):
    simcse_step(tiny_encoder, token_batch, dropout_p=0.0)
    assert "dropout_p=0" in caplog.text
