"""Backbone tests: causality, adapters, parameter accounting, attention."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from jpt.backbone import (
    BackboneConfig,
    EncoderOutput,
    LoraConfig,
    ToyCausalEncoder,
    attention_rollup,
    backbone_param_count,
    count_trainable,
    lora_delta,
    rollup_from_csv,
    rollup_to_csv,
)
from jpt.weights_io import (
    WeightsError,
    file_checksum,
    load_encoder,
    load_weights,
    save_encoder,
    save_weights,
)

CFG = BackboneConfig(vocab_size=64, d_model=32, n_layers=2, n_heads=4, max_seq_len=64)


@pytest.fixture(scope="module")
def model() -> ToyCausalEncoder:
    return ToyCausalEncoder(CFG)


# ---------------------------------------------------------------------------
# encode basics


def test_encode_shape(model: ToyCausalEncoder) -> None:
    out = model.encode([1, 2, 3])
    assert out.hidden.shape == (3, CFG.d_model)
    assert out.attentions is None


def test_encode_deterministic(model: ToyCausalEncoder) -> None:
    a = model.encode([5, 6, 7]).hidden
    b = model.encode([5, 6, 7]).hidden
    assert torch.equal(a, b)
    fresh = ToyCausalEncoder(CFG).encode([5, 6, 7]).hidden
    assert torch.equal(a, fresh)


def test_encode_rejects_bad_inputs(model: ToyCausalEncoder) -> None:
    with pytest.raises(ValueError, match="empty"):
        model.encode([])
    with pytest.raises(ValueError, match="max_seq_len"):
        model.encode(list(range(2)) * 40)
    with pytest.raises(ValueError, match="vocabulary"):
        model.encode([CFG.vocab_size])


def test_causality_bitwise(model: ToyCausalEncoder) -> None:
    base = [3, 9, 12, 7, 30, 21, 2, 14]
    ref = model.encode(base).hidden
    changed = list(base)
    changed[5] = 55
    out = model.encode(changed).hidden
    assert torch.equal(ref[:5], out[:5])
    assert not torch.equal(ref[5:], out[5:])


def test_duplicated_input_sensitivity(model: ToyCausalEncoder) -> None:
    # second-pass states see the whole first pass, so perturbing the very
    # first token moves every second-pass row
    x = [10, 11, 12, 13]
    sep = 1
    seq = x + [sep] + x
    ref = model.encode(seq).hidden
    perturbed = list(seq)
    perturbed[0] = 40
    out = model.encode(perturbed).hidden
    offset = len(x) + 1
    for k in range(len(x)):
        delta = (ref[offset + k] - out[offset + k]).abs().max().item()
        assert delta > 1e-9


# ---------------------------------------------------------------------------
# lora


def test_lora_zero_init_identity() -> None:
    base = ToyCausalEncoder(CFG)
    adapted = ToyCausalEncoder(CFG, LoraConfig(r=4, alpha=8.0))
    ids = [2, 3, 5, 8, 13]
    assert torch.equal(base.encode(ids).hidden, adapted.encode(ids).hidden)


def test_lora_rank_one_construction() -> None:
    model = ToyCausalEncoder(CFG, LoraConfig(r=1, alpha=1.0, targets=("query",)))
    layer = model.blocks[0].attn.query
    with torch.no_grad():
        layer.lora_a.zero_()
        layer.lora_b.zero_()
        layer.lora_a[0, 0] = 1.0
        layer.lora_b[0, 0] = 1.0
    diff = layer.effective_weight() - layer.weight
    assert diff[0, 0].item() == pytest.approx(1.0)
    assert diff.abs().sum().item() == pytest.approx(1.0)


def test_lora_delta_rank_bound() -> None:
    lora = LoraConfig(r=3, alpha=6.0)
    model = ToyCausalEncoder(CFG, lora)
    layer = model.blocks[1].attn.value
    with torch.no_grad():
        layer.lora_a.normal_(0, 1.0)
        layer.lora_b.normal_(0, 1.0)
    delta = lora_delta(layer).detach().numpy()
    singular = np.linalg.svd(delta, compute_uv=False)
    assert (singular[lora.r :] < 1e-5).all()
    assert singular[0] > 1e-3  # genuinely nonzero delta


def test_lora_only_targets_adapted() -> None:
    model = ToyCausalEncoder(CFG, LoraConfig(r=2, alpha=4.0, targets=("query", "value")))
    attn = model.blocks[0].attn
    assert attn.query.lora_a is not None
    assert attn.value.lora_a is not None
    assert attn.key.lora_a is None
    assert attn.output.lora_a is None
    trainable = model.trainable_parameters()
    assert trainable and all(p.requires_grad for p in trainable)
    # base weights never enter the trainable set
    assert not model.tok_emb.requires_grad


def test_lora_config_validation() -> None:
    with pytest.raises(ValueError):
        LoraConfig(r=0)
    with pytest.raises(ValueError):
        LoraConfig(r=2, targets=("query", "gate"))


# ---------------------------------------------------------------------------
# parameter accounting


def test_count_trainable_toy_hand_value() -> None:
    cfg = BackboneConfig(vocab_size=64, d_model=64, n_layers=2, n_heads=4)
    trainable, _ = count_trainable(cfg, LoraConfig(r=4, alpha=8.0))
    assert trainable == 4 * 2 * 4 * (64 + 64)  # = 4096


def test_count_trainable_no_adapter() -> None:
    trainable, fraction = count_trainable(CFG, None)
    assert trainable == 0
    assert fraction == 0.0


def test_count_trainable_matches_torch(model: ToyCausalEncoder) -> None:
    lora = LoraConfig(r=4, alpha=8.0)
    adapted = ToyCausalEncoder(CFG, lora)
    actual = sum(p.numel() for p in adapted.trainable_parameters())
    expected, _ = count_trainable(CFG, lora)
    assert actual == expected
    frozen = sum(p.numel() for p in model.parameters())
    assert frozen == backbone_param_count(CFG)


def test_count_trainable_published_scale() -> None:
    # published 4B-scale dims: adapters land at ~23.6M and the trainable
    # fraction stays well under 2%
    cfg = BackboneConfig(
        vocab_size=151_000, d_model=2560, n_layers=36, n_heads=32, max_seq_len=4096
    )
    lora = LoraConfig(r=32, alpha=64.0)
    heads = 14_700_000 + 131_000
    trainable, fraction = count_trainable(cfg, lora, heads, backbone_total=4_000_000_000)
    assert trainable - heads == 23_592_960
    assert fraction < 0.02


# ---------------------------------------------------------------------------
# attention


def test_attention_invariants(model: ToyCausalEncoder) -> None:
    out = model.encode([4, 9, 2, 17, 6], record_attention=True)
    assert out.attentions is not None
    assert len(out.attentions) == CFG.n_layers
    assert out.attentions[0].shape == (CFG.n_heads, 5, 5)
    out.check()


def test_rollup_requires_recording(model: ToyCausalEncoder) -> None:
    out = model.encode([4, 9, 2])
    with pytest.raises(ValueError, match="attention recording"):
        attention_rollup(out, [2], [0])


def test_rollup_uniform_synthetic() -> None:
    # forced-uniform attention rows make every rolled-up entry 1/L
    length, heads = 6, 2
    uniform = torch.full((heads, length, length), 1.0 / length)
    out = EncoderOutput(hidden=torch.zeros(length, 4), attentions=(uniform, uniform))
    rolled = attention_rollup(out, [4, 5], [0, 1])
    assert np.allclose(rolled, 1.0 / length)


def test_rollup_single_token(model: ToyCausalEncoder) -> None:
    out = model.encode([3, 1, 3], record_attention=True)
    rolled = attention_rollup(out, [2], [0])
    assert rolled.shape == (1, 1)
    assert 0.0 <= rolled[0, 0] <= 1.0


def test_rollup_rows_are_subdistributions(model: ToyCausalEncoder) -> None:
    ids = [7, 8, 9, 1, 7, 8, 9]
    out = model.encode(ids, record_attention=True)
    rolled = attention_rollup(out, [4, 5, 6], [0, 1, 2])
    assert (rolled >= 0).all()
    assert (rolled.sum(axis=1) <= 1 + 1e-5).all()


def test_rollup_csv_round_trip() -> None:
    matrix = np.array([[0.125, 1e-9], [0.25, 0.7300000000000001]])
    text = rollup_to_csv(matrix, ["tok,a", 'tok"b'], ["x", "y"])
    back, rows, cols = rollup_from_csv(text)
    assert np.array_equal(back, matrix)
    assert rows == ["tok,a", 'tok"b']
    assert cols == ["x", "y"]


# ---------------------------------------------------------------------------
# weights container


def test_weights_round_trip(tmp_path) -> None:
    tensors = {
        "a": np.arange(6, dtype=np.float32).reshape(2, 3),
        "b": np.array([1.5], dtype=np.float32),
    }
    path = tmp_path / "w.jptw"
    save_weights(path, tensors, config={"d": 3}, meta={"note": "test"})
    wf = load_weights(path)
    assert wf.config == {"d": 3}
    assert wf.meta == {"note": "test"}
    assert set(wf.tensors) == {"a", "b"}
    assert np.array_equal(wf.tensors["a"], tensors["a"])


def test_weights_checksum_stable(tmp_path) -> None:
    path1, path2 = tmp_path / "a.jptw", tmp_path / "b.jptw"
    tensors = {"t": np.zeros(4, dtype=np.float32)}
    save_weights(path1, tensors, config={"x": 1})
    save_weights(path2, tensors, config={"x": 1})
    assert file_checksum(path1) == file_checksum(path2)


def test_weights_bad_magic(tmp_path) -> None:
    path = tmp_path / "bad.jptw"
    path.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(WeightsError, match="magic"):
        load_weights(path)


def test_weights_truncated(tmp_path) -> None:
    path = tmp_path / "trunc.jptw"
    save_weights(path, {"t": np.ones(64, dtype=np.float32)})
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(WeightsError, match="truncated"):
        load_weights(path)


def test_encoder_save_load_bitwise(tmp_path) -> None:
    model = ToyCausalEncoder(CFG, LoraConfig(r=2, alpha=4.0))
    with torch.no_grad():
        model.blocks[0].attn.query.lora_b.normal_(0, 0.1)
    path = tmp_path / "enc.jptw"
    save_encoder(path, model)
    restored = load_encoder(path)
    ids = [3, 1, 4, 1, 5]
    assert torch.equal(model.encode(ids).hidden, restored.encode(ids).hidden)
    assert restored.lora is not None and restored.lora.r == 2
