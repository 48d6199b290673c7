"""Training loop, schedule, gradient checks, rank sweep."""

import json
import math

import pytest
import torch

from jpt.backbone import BackboneConfig, LoraConfig
from jpt.model import TaggerConfig, TaggerCore, load_core
from jpt.synthetic import SyntheticGrammar, generate_synthetic
from jpt.training import (
    TrainConfig,
    backbone_checksum,
    grad_check,
    lr_at,
    sweep_lora,
    token_f1,
    train,
    warmup_steps,
)

TINY = TaggerConfig(
    backbone=BackboneConfig(
        vocab_size=256, d_model=16, n_layers=1, n_heads=2, max_seq_len=256
    ),
    lora=LoraConfig(r=2, alpha=4.0),
    d_p=8,
    d_enc=8,
)

RECORDS = generate_synthetic(SyntheticGrammar(), 8, seed=0)


def tiny_config(**overrides) -> TrainConfig:
    base = dict(
        learning_rate=1e-3, epochs=1, effective_batch=4, accumulation=2, max_seq_len=256
    )
    base.update(overrides)
    return TrainConfig(**base)


# -- config -----------------------------------------------------------------


def test_accumulation_must_divide_batch():
    with pytest.raises(ValueError, match="divide"):
        TrainConfig(effective_batch=8, accumulation=3)


def test_micro_batch():
    assert TrainConfig(effective_batch=8, accumulation=2).micro_batch == 4
    assert TrainConfig(effective_batch=6, accumulation=6).micro_batch == 1


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(warmup_ratio=1.5)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1)


# -- schedule ---------------------------------------------------------------


def test_warmup_step_count_rounds_up():
    config = TrainConfig()
    assert warmup_steps(config, 100) == 10
    assert warmup_steps(config, 7) == 1
    assert warmup_steps(config, 1) == 1


def test_lr_zero_at_step_zero():
    assert lr_at(0, 100, TrainConfig()) == 0.0


def test_lr_peak_at_warmup_end():
    config = TrainConfig()
    assert lr_at(10, 100, config) == pytest.approx(config.learning_rate)


def test_lr_zero_at_the_end():
    config = TrainConfig()
    assert lr_at(100, 100, config) == pytest.approx(0.0, abs=1e-12)


def test_lr_linear_during_warmup():
    config = TrainConfig()
    for step in range(10):
        assert lr_at(step, 100, config) == pytest.approx(
            config.learning_rate * step / 10
        )


def test_lr_cosine_after_warmup():
    config = TrainConfig()
    for step in (10, 25, 55, 100):
        progress = (step - 10) / 90
        expected = config.learning_rate * 0.5 * (1 + math.cos(math.pi * progress))
        assert lr_at(step, 100, config) == pytest.approx(expected)


def test_lr_halfway_point():
    config = TrainConfig()
    assert lr_at(55, 100, config) == pytest.approx(config.learning_rate / 2)


def test_lr_all_warmup():
    config = TrainConfig(warmup_ratio=1.0)
    assert lr_at(10, 10, config) == pytest.approx(config.learning_rate)


# -- training loop ----------------------------------------------------------


def state_bytes(core: TaggerCore) -> dict[str, bytes]:
    return {
        k: v.detach().cpu().numpy().tobytes() for k, v in core.state_dict().items()
    }


def test_zero_epochs_touches_nothing():
    core = TaggerCore(TINY)
    before = state_bytes(core)
    result = train(core, RECORDS, tiny_config(epochs=0))
    assert result.total_steps == 0
    assert result.metrics == []
    assert state_bytes(core) == before


def test_training_is_deterministic():
    results = []
    for _ in range(2):
        core = TaggerCore(TINY)
        result = train(core, RECORDS, tiny_config(epochs=2))
        results.append((result.metrics, state_bytes(core)))
    assert results[0][0] == results[1][0]
    assert results[0][1] == results[1][1]


def test_loss_decreases():
    core = TaggerCore(TINY)
    result = train(core, RECORDS, tiny_config(epochs=8, learning_rate=3e-3))
    assert result.metrics[-1]["total"] < result.metrics[0]["total"]


def test_backbone_frozen_through_training():
    core = TaggerCore(TINY)
    frozen_before = {
        name: p.detach().clone()
        for name, p in core.encoder.named_parameters()
        if not p.requires_grad
    }
    result = train(core, RECORDS, tiny_config(epochs=2))
    assert result.backbone_untouched
    for name, p in core.encoder.named_parameters():
        if not p.requires_grad:
            assert torch.equal(p, frozen_before[name]), name


def test_adapters_actually_move():
    core = TaggerCore(TINY)
    before = {
        name: p.detach().clone()
        for name, p in core.named_parameters()
        if p.requires_grad
    }
    train(core, RECORDS, tiny_config(epochs=2))
    moved = [
        name
        for name, p in core.named_parameters()
        if p.requires_grad and not torch.equal(p, before[name])
    ]
    assert moved


def test_metrics_step_numbering():
    core = TaggerCore(TINY)
    result = train(core, RECORDS, tiny_config(epochs=2))
    assert [m["step"] for m in result.metrics] == list(range(result.total_steps))
    for m in result.metrics:
        assert set(m) == {"step", "epoch", "lr", "ce", "focal", "total"}


def test_too_long_record_rejected():
    with pytest.raises(ValueError, match="max_seq_len"):
        train(TaggerCore(TINY), RECORDS, tiny_config(max_seq_len=16))


def test_empty_records_rejected():
    with pytest.raises(ValueError):
        train(TaggerCore(TINY), [], tiny_config())


def test_nan_aborts_and_rolls_back():
    core = TaggerCore(TINY)
    with torch.no_grad():
        core.token_mlp.layers[-1].weight.fill_(1e38)
    poisoned = state_bytes(core)
    result = train(core, RECORDS, tiny_config(epochs=1))
    assert result.aborted
    # rollback restores the pre-step snapshot, which here is the poisoned
    # initial state: no optimizer step survives
    assert state_bytes(core) == poisoned
    assert result.metrics == []


def test_checkpoint_artifacts(tmp_path):
    core = TaggerCore(TINY)
    result = train(core, RECORDS, tiny_config(epochs=1), out_dir=tmp_path)
    assert result.checkpoint_path is not None

    restored = load_core(result.checkpoint_path)
    text = RECORDS[0].text
    with torch.no_grad():
        assert torch.equal(
            core.run(RECORDS[0].schema, text).softmax_scores,
            restored.run(RECORDS[0].schema, text).softmax_scores,
        )

    config_echo = json.loads((tmp_path / "config.json").read_text())
    assert config_echo["train"]["learning_rate"] == 1e-3
    assert config_echo["tagger"]["variant"] == "full"

    lines = (tmp_path / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == result.total_steps
    assert json.loads(lines[0])["step"] == 0


def test_backbone_checksum_ignores_adapters():
    core = TaggerCore(TINY)
    before = backbone_checksum(core)
    with torch.no_grad():
        core.encoder.blocks[0].attn.query.lora_a.add_(1.0)
    assert backbone_checksum(core) == before
    with torch.no_grad():
        core.encoder.blocks[0].attn.query.weight.add_(1.0)
    assert backbone_checksum(core) != before


# -- gradient checking ------------------------------------------------------


def test_grad_check_quadratic_is_exact():
    x = torch.tensor([1.0, -2.0, 3.0], dtype=torch.float64, requires_grad=True)

    def loss_fn():
        return (x**2).sum() + 3 * x.sum()

    assert grad_check(loss_fn, [x], eps=1e-6) < 1e-9


def test_grad_check_catches_wrong_gradient():
    x = torch.tensor([1.0, 2.0], dtype=torch.float64, requires_grad=True)

    class Wrong(torch.autograd.Function):
        @staticmethod
        def forward(ctx, v):
            return (v**2).sum()

        @staticmethod
        def backward(ctx, g):
            return g * torch.ones(2, dtype=torch.float64)

    assert grad_check(lambda: Wrong.apply(x), [x], eps=1e-6) > 0.1


def test_grad_check_validates_eps():
    x = torch.tensor([1.0], dtype=torch.float64, requires_grad=True)
    with pytest.raises(ValueError):
        grad_check(lambda: x.sum(), [x], eps=0.0)


def test_grad_check_pipeline_small():
    core = TaggerCore(TINY).double()
    record = RECORDS[0]

    def loss_fn():
        ce, focal = core.losses(record)
        return ce + focal

    err = grad_check(loss_fn, core.trainable_parameters(), n_coords=40)
    assert err < 1e-4


# -- token F1 and rank sweep ------------------------------------------------


def test_token_f1_hand_case():
    # tp=1 entity token, 2 predicted, 1 gold: P=0.5, R=1, F1=2/3
    assert token_f1([1, 0, 2], [1, 0, 0]) == pytest.approx(2 / 3)


def test_token_f1_ignores_o_agreement():
    assert token_f1([0, 0], [0, 0]) == 0.0


def test_token_f1_perfect():
    assert token_f1([1, 2, 0], [1, 2, 0]) == 1.0


def test_token_f1_shape_mismatch():
    with pytest.raises(ValueError):
        token_f1([1], [1, 0])


def test_sweep_rejects_duplicates_and_negatives():
    with pytest.raises(ValueError, match="duplicate"):
        sweep_lora([2, 2], None, RECORDS, RECORDS, tiny_config())
    with pytest.raises(ValueError, match=">= 0"):
        sweep_lora([-1], None, RECORDS, RECORDS, tiny_config())


def test_sweep_runs_and_reports():
    from dataclasses import replace

    def factory(rank):
        lora = LoraConfig(r=rank, alpha=2.0 * rank) if rank else None
        return TaggerCore(replace(TINY, lora=lora))

    rows = sweep_lora([0, 2], factory, RECORDS, RECORDS, tiny_config())
    assert [row["rank"] for row in rows] == [0, 2]
    for row in rows:
        assert 0.0 <= row["token_f1"] <= 1.0
        assert isinstance(row["non_decreasing"], bool)
    assert rows[0]["non_decreasing"]
