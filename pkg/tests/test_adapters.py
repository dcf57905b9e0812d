"""
Adapter：零初始化恆等、形狀、匯出 / 匯入與可攜性
"""
from dataclasses import replace

import pytest
import torch
from torch.autograd import gradcheck
from peft import PrefixEncoder
from peft.tuners.lora import LoraLayer
from torch.func import functional_call

from adapters import (
    AdapterConfig,
    AdapterKind,
    InitMode,
    adapter_fraction,
    adapter_parameter_count,
    adapter_tensor_shapes,
    attach,
    export_adapter,
    import_adapter,
    load_adapter,
    save_adapter,
)
from adapters.modules import BottleneckBranch
from encoder import TINY_PROFILE, ProvenanceEntry, Stage, encode, new_encoder
from errors import ConfigurationError, PortabilityError
from pipelines import StageConfig, run_dapt, run_sept


@pytest.mark.parametrize("kind", ["parallel", "bottleneck", "lora"])
def test_zero_init_adapter_is_exact_identity(tiny_encoder, token_batch, kind):
    before = encode(tiny_encoder, token_batch)
    attach(tiny_encoder, AdapterConfig.for_kind(kind))
    after = encode(tiny_encoder, token_batch)
    assert torch.equal(before, after)


def test_prefix_adapter_keeps_output_shape(tiny_encoder, token_batch):
    attach(tiny_encoder, AdapterConfig.for_kind("prefix"))
    out = encode(tiny_encoder, token_batch)
    assert out.shape == (3, 64)
    assert tiny_encoder.adapter_state()["layers.0.adapters.prefix.encoder.embedding.weight"].shape == (16, 128)
    assert isinstance(tiny_encoder.model.layers[1].adapters["prefix"].encoder, PrefixEncoder)


def test_prefix_keys_and_values_split_the_peft_embedding(tiny_encoder):
    attach(tiny_encoder, AdapterConfig.for_kind("prefix", prefix_len=3))
    slot = tiny_encoder.model.layers[0].adapters["prefix"]
    keys, values = slot(batch_size=2)
    weight = slot.encoder.embedding.weight
    assert keys.shape == values.shape == (2, 3, 64)
    assert torch.equal(keys[1], weight[:, :64])
    assert torch.equal(values[0], weight[:, 64:])


def test_lora_tensor_shapes(tiny_encoder):
    cfg = AdapterConfig.for_kind("lora")
    shapes = adapter_tensor_shapes(cfg, 64, 2)
    assert shapes["layers.0.query.lora_A.default.weight"] == (8, 64)
    assert shapes["layers.1.value.lora_B.default.weight"] == (64, 8)

    attach(tiny_encoder, cfg)
    actual = {name: tuple(t.shape) for name, t in tiny_encoder.adapter_state().items()}
    assert actual == shapes


def test_kind_defaults():
    parallel = AdapterConfig.for_kind("parallel")
    assert (parallel.reduction_factor, parallel.scaling) == (2, 4.0)
    assert AdapterConfig.for_kind("bottleneck").reduction_factor == 16
    assert AdapterConfig.for_kind(AdapterKind.LORA).rank == 8
    assert AdapterConfig.for_kind("prefix").prefix_len == 16
    assert parallel.init_mode is InitMode.ZERO_OUT_PROJ


def test_config_validation():
    with pytest.raises(ConfigurationError):
        AdapterConfig.for_kind("houlsby-xl")
    with pytest.raises(ConfigurationError):
        AdapterConfig(kind=AdapterKind.LORA, rank=8, reduction_factor=2)
    with pytest.raises(ConfigurationError):
        AdapterConfig(kind=AdapterKind.LORA, rank=0)
    with pytest.raises(ConfigurationError):
        AdapterConfig.for_kind("parallel", scaling=0.0)
    with pytest.raises(ConfigurationError):
        AdapterConfig.for_kind("parallel", reduction_factor=128).bottleneck_dim(64)


def test_config_dict_round_trip():
    cfg = AdapterConfig.for_kind("lora", rank=4, init_mode="RANDOM")
    assert AdapterConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.config_hash() == AdapterConfig.from_dict(cfg.to_dict()).config_hash()


def test_parameter_count_matches_attached_tensors(tiny_encoder):
    cfg = AdapterConfig.for_kind("parallel")
    attach(tiny_encoder, cfg)
    attached = sum(t.numel() for t in tiny_encoder.adapter_state().values())
    assert attached == adapter_parameter_count(cfg, 64, 2) == 8384
    total = sum(p.numel() for p in tiny_encoder.model.parameters())
    assert adapter_fraction(tiny_encoder) == pytest.approx(8384 / total)


def test_double_attach_and_empty_export(tiny_encoder):
    with pytest.raises(ConfigurationError):
        export_adapter(tiny_encoder)
    attach(tiny_encoder, AdapterConfig.for_kind("parallel"))
    with pytest.raises(ConfigurationError):
        attach(tiny_encoder, AdapterConfig.for_kind("lora"))


def test_export_then_import_reproduces_output(token_batch):
    source = new_encoder(TINY_PROFILE, seed=0)
    attach(source, AdapterConfig.for_kind("parallel", init_mode="RANDOM"), rng_seed=3)
    weights = export_adapter(source)

    target = import_adapter(new_encoder(TINY_PROFILE, seed=0), weights)
    assert torch.equal(encode(source, token_batch), encode(target, token_batch))


def test_adapter_output_depends_only_on_backbone_and_weights(token_batch):
    cfg = AdapterConfig.for_kind("lora", init_mode="RANDOM")
    trained_on = attach(new_encoder(TINY_PROFILE, seed=0), cfg, rng_seed=5)
    weights = export_adapter(trained_on)

    other = new_encoder(TINY_PROFILE, seed=9)
    imported = import_adapter(other.clone(), weights)
    attached_here = attach(other.clone(), cfg, rng_seed=5)
    assert torch.equal(encode(imported, token_batch), encode(attached_here, token_batch))
    assert not torch.allclose(encode(imported, token_batch), encode(trained_on, token_batch))


def test_exported_adapter_is_independent_copy(tiny_encoder):
    attach(tiny_encoder, AdapterConfig.for_kind("parallel"))
    weights = export_adapter(tiny_encoder)
    with torch.no_grad():
        for param in tiny_encoder.model.parameters():
            param.add_(1.0)
    assert all(torch.count_nonzero(t) == 0 for name, t in weights.tensors.items() if "up.weight" in name)


def test_adapter_moves_onto_dapt_backbone_with_provenance(tiny_encoder, small_synth):
    dapt = run_dapt(tiny_encoder, small_synth.unlabeled, StageConfig.dapt_defaults(steps=0, batch_size=4))
    adapter = run_sept(
        tiny_encoder,
        small_synth.pairs.pairs,
        StageConfig.sept_defaults(steps=1, batch_size=4, peft=AdapterConfig.for_kind("parallel"), log_every=0),
    )
    composed = import_adapter(dapt.clone(), adapter)
    assert composed.stages == [Stage.BASE, Stage.DAPT, Stage.SEPT]
    assert dapt.stages == [Stage.BASE, Stage.DAPT]


def test_portability_rejects_other_architectures(tiny_encoder):
    attach(tiny_encoder, AdapterConfig.for_kind("parallel"))
    weights = export_adapter(tiny_encoder)

    wider = new_encoder(replace(TINY_PROFILE, architecture_id="tiny-roberta-wide", hidden_dim=128))
    with pytest.raises(PortabilityError) as info:
        import_adapter(wider, weights)
    assert info.value.source_id == "tiny-roberta"
    assert info.value.target_id == "tiny-roberta-wide"

    same_id = new_encoder(replace(TINY_PROFILE, num_layers=3))
    with pytest.raises(PortabilityError):
        import_adapter(same_id, weights)


def test_import_into_encoder_with_adapter_fails(tiny_encoder):
    attach(tiny_encoder, AdapterConfig.for_kind("parallel"))
    weights = export_adapter(tiny_encoder)
    with pytest.raises(ConfigurationError):
        import_adapter(tiny_encoder, weights)


def test_save_and_load_are_bit_exact(tmp_path, tiny_encoder):
    attach(tiny_encoder, AdapterConfig.for_kind("bottleneck", init_mode="RANDOM"), rng_seed=2)
    tiny_encoder.adapter_meta['provenance'].append(
        ProvenanceEntry.of(Stage.SEPT, target="adapter", loss="MNRL")
    )
    weights = export_adapter(tiny_encoder, training_hash="h1")
    save_adapter(weights, tmp_path / "adapter")

    loaded = load_adapter(tmp_path / "adapter")
    assert loaded.config == weights.config
    assert loaded.training_hash == "h1"
    assert loaded.provenance == weights.provenance
    assert loaded.tensors.keys() == weights.tensors.keys()
    for name, tensor in weights.tensors.items():
        assert torch.equal(loaded.tensors[name], tensor)


def test_load_adapter_missing_directory(tmp_path):
    with pytest.raises(ConfigurationError):
        load_adapter(tmp_path / "nothing")


def test_import_warns_on_training_hash_mismatch(tiny_encoder, caplog):
    attach(tiny_encoder, AdapterConfig.for_kind("parallel"))
    weights = export_adapter(tiny_encoder, training_hash="trained-with-a")
    import_adapter(new_encoder(TINY_PROFILE), weights, expected_hash="trained-with-b")
    assert "differs from expected" in caplog.text


def test_bottleneck_branch_gradients():
    cfg = AdapterConfig.for_kind("bottleneck", reduction_factor=2, init_mode="RANDOM")
    torch.manual_seed(0)
    module = BottleneckBranch(8, cfg).double()
    x = torch.randn(3, 8, dtype=torch.float64)
    weight = module.up.weight.detach().clone().requires_grad_(True)
    assert gradcheck(lambda w: functional_call(module, {'up.weight': w}, (x,)), (weight,), rtol=1e-3)


def test_lora_is_injected_by_peft(tiny_encoder):
    attach(tiny_encoder, AdapterConfig.for_kind("lora", rank=4, scaling=8.0))
    layer = tiny_encoder.model.layers[0]
    assert isinstance(layer.query, LoraLayer)
    assert isinstance(layer.value, LoraLayer)
    assert not isinstance(layer.key, LoraLayer)
    assert layer.query.scaling["default"] == pytest.approx(2.0)
    assert torch.count_nonzero(layer.value.lora_B["default"].weight) == 0
    assert all(p.requires_grad for p in tiny_encoder.model.parameters())


def test_lora_gradients():
    state = attach(new_encoder(TINY_PROFILE), AdapterConfig.for_kind("lora", rank=2, init_mode="RANDOM"))
    query = state.model.layers[0].query.double()
    torch.manual_seed(0)
    x = torch.randn(3, 64, dtype=torch.float64)
    b = query.lora_B["default"].weight.detach().clone().requires_grad_(True)
    assert gradcheck(lambda w: functional_call(query, {'lora_B.default.weight': w}, (x,)), (b,), rtol=1e-3)
