"""Causal sequence encoder: a small deterministic transformer with optional
low-rank adapters on the attention projections, plus attention extraction.

The base weights are frozen structurally (requires_grad is never set on
them); only adapter tensors are trainable here. Determinism matters more
than speed: tests assert bitwise causality, so inference runs single
threaded in deterministic mode.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

log = logging.getLogger(__name__)

LORA_TARGETS = ("query", "key", "value", "output")


def deterministic_mode() -> None:
    """Single-threaded CPU math with a fixed reduction order.

    Required for the bitwise causality guarantees; call once per process
    before encoding.
    """
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)


@dataclass(frozen=True)
class BackboneConfig:
    """Shape and seed of the toy causal transformer."""

    vocab_size: int = 512
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_seq_len: int = 1024
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if min(self.vocab_size, self.d_model, self.n_layers, self.n_heads) < 1:
            raise ValueError("all backbone dimensions must be >= 1")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @property
    def d_ff(self) -> int:
        return 4 * self.d_model

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "max_seq_len": self.max_seq_len,
            "rng_seed": self.rng_seed,
        }


@dataclass(frozen=True)
class LoraConfig:
    """Low-rank adapter shape: delta = (alpha / r) * B @ A per projection."""

    r: int = 4
    alpha: float = 8.0
    targets: tuple[str, ...] = LORA_TARGETS
    rng_seed: int = 1

    def __post_init__(self) -> None:
        if self.r < 1:
            raise ValueError("lora rank must be >= 1 (omit the adapter for r = 0)")
        for t in self.targets:
            if t not in LORA_TARGETS:
                raise ValueError(f"unknown lora target {t!r}; choose from {LORA_TARGETS}")
        if len(set(self.targets)) != len(self.targets):
            raise ValueError("duplicate lora targets")

    @property
    def scaling(self) -> float:
        return self.alpha / self.r


@dataclass
class EncoderOutput:
    """Final-layer hidden states, plus per-layer attention if recorded.

    ``attentions[l]`` has shape [n_heads, L, L]; each row is a distribution
    over positions <= its index (causal mask).
    """

    hidden: torch.Tensor
    attentions: tuple[torch.Tensor, ...] | None = None

    def check(self, tol: float = 1e-5) -> None:
        """Assert the causal sub-distribution invariants on recorded rows."""
        if self.attentions is None:
            return
        for attn in self.attentions:
            length = attn.shape[-1]
            future = torch.triu(torch.ones(length, length, dtype=torch.bool), diagonal=1)
            above = attn.masked_select(future)
            if above.numel() and above.abs().max().item() > 0:
                raise AssertionError("attention mass on future positions")
            sums = attn.sum(dim=-1)
            if (sums - 1).abs().max().item() > tol:
                raise AssertionError("attention rows do not sum to 1")


class LoraLinear(nn.Module):
    """A frozen linear map with an optional trainable low-rank delta."""

    def __init__(
        self,
        d_in: int,
        d_out: int,
        generator: torch.Generator,
        lora: LoraConfig | None = None,
        lora_generator: torch.Generator | None = None,
    ) -> None:
        super().__init__()
        weight = torch.empty(d_out, d_in)
        weight.normal_(0.0, 0.02, generator=generator)
        self.weight = nn.Parameter(weight, requires_grad=False)
        self.bias = nn.Parameter(torch.zeros(d_out), requires_grad=False)
        self.scaling = 0.0
        if lora is not None:
            a = torch.empty(lora.r, d_in)
            a.normal_(0.0, 0.02, generator=lora_generator)
            self.lora_a = nn.Parameter(a)
            self.lora_b = nn.Parameter(torch.zeros(d_out, lora.r))
            self.scaling = lora.scaling
        else:
            self.lora_a = None
            self.lora_b = None

    def effective_weight(self) -> torch.Tensor:
        """Base weight plus the adapter delta; the base is never mutated."""
        if self.lora_a is None:
            return self.weight
        return self.weight + self.scaling * (self.lora_b @ self.lora_a)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(x, self.effective_weight(), self.bias)


class _Attention(nn.Module):
    def __init__(
        self,
        config: BackboneConfig,
        generator: torch.Generator,
        lora: LoraConfig | None,
        lora_generator: torch.Generator | None,
    ) -> None:
        super().__init__()
        d = config.d_model
        self.n_heads = config.n_heads
        self.d_head = config.d_head

        def proj(target: str) -> LoraLinear:
            active = lora if (lora is not None and target in lora.targets) else None
            return LoraLinear(d, d, generator, active, lora_generator)

        self.query = proj("query")
        self.key = proj("key")
        self.value = proj("value")
        self.output = proj("output")

    def forward(
        self, x: torch.Tensor, record: bool
    ) -> tuple[torch.Tensor, torch.Tensor | None]:
        length = x.shape[0]
        shape = (length, self.n_heads, self.d_head)
        q = self.query(x).view(shape).transpose(0, 1)
        k = self.key(x).view(shape).transpose(0, 1)
        v = self.value(x).view(shape).transpose(0, 1)
        scores = (q @ k.transpose(-1, -2)) / math.sqrt(self.d_head)
        future = torch.triu(torch.ones(length, length, dtype=torch.bool), diagonal=1)
        scores = scores.masked_fill(future, float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(0, 1).reshape(length, -1)
        return self.output(out), (attn if record else None)


class _Block(nn.Module):
    def __init__(
        self,
        config: BackboneConfig,
        generator: torch.Generator,
        lora: LoraConfig | None,
        lora_generator: torch.Generator | None,
    ) -> None:
        super().__init__()
        d = config.d_model
        self.ln1 = nn.LayerNorm(d)
        self.attn = _Attention(config, generator, lora, lora_generator)
        self.ln2 = nn.LayerNorm(d)
        w1 = torch.empty(config.d_ff, d)
        w1.normal_(0.0, 0.02, generator=generator)
        w2 = torch.empty(d, config.d_ff)
        w2.normal_(0.0, 0.02, generator=generator)
        self.ffn_w1 = nn.Parameter(w1, requires_grad=False)
        self.ffn_b1 = nn.Parameter(torch.zeros(config.d_ff), requires_grad=False)
        self.ffn_w2 = nn.Parameter(w2, requires_grad=False)
        self.ffn_b2 = nn.Parameter(torch.zeros(d), requires_grad=False)
        for p in list(self.ln1.parameters()) + list(self.ln2.parameters()):
            p.requires_grad_(False)

    def forward(
        self, x: torch.Tensor, record: bool
    ) -> tuple[torch.Tensor, torch.Tensor | None]:
        attn_out, attn = self.attn(self.ln1(x), record)
        x = x + attn_out
        h = F.linear(self.ln2(x), self.ffn_w1, self.ffn_b1)
        h = F.gelu(h)  # exact erf form
        x = x + F.linear(h, self.ffn_w2, self.ffn_b2)
        return x, attn


class ToyCausalEncoder(nn.Module):
    """Pre-norm causal transformer with learned absolute positions.

    Base weights are drawn from ``config.rng_seed`` and frozen; adapter
    weights (if any) come from ``lora.rng_seed`` so the base is identical
    with and without adapters.
    """

    def __init__(self, config: BackboneConfig, lora: LoraConfig | None = None) -> None:
        super().__init__()
        self.config = config
        self.lora = lora
        g = torch.Generator().manual_seed(config.rng_seed)
        lg = None
        if lora is not None:
            lg = torch.Generator().manual_seed(lora.rng_seed)
        tok = torch.empty(config.vocab_size, config.d_model)
        tok.normal_(0.0, 0.02, generator=g)
        pos = torch.empty(config.max_seq_len, config.d_model)
        pos.normal_(0.0, 0.02, generator=g)
        self.tok_emb = nn.Parameter(tok, requires_grad=False)
        self.pos_emb = nn.Parameter(pos, requires_grad=False)
        self.blocks = nn.ModuleList(
            _Block(config, g, lora, lg) for _ in range(config.n_layers)
        )
        self.ln_f = nn.LayerNorm(config.d_model)
        for p in self.ln_f.parameters():
            p.requires_grad_(False)

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]

    def encode(
        self, token_ids, record_attention: bool = False
    ) -> EncoderOutput:
        ids = torch.as_tensor(token_ids, dtype=torch.long)
        if ids.ndim != 1:
            raise ValueError("token_ids must be a flat sequence")
        length = ids.shape[0]
        if length == 0:
            raise ValueError("empty input")
        if length > self.config.max_seq_len:
            raise ValueError(
                f"sequence length {length} exceeds max_seq_len {self.config.max_seq_len}"
            )
        if int(ids.max()) >= self.config.vocab_size or int(ids.min()) < 0:
            raise ValueError("token id out of vocabulary range")
        x = self.tok_emb[ids] + self.pos_emb[:length]
        attentions: list[torch.Tensor] = []
        for block in self.blocks:
            x, attn = block(x, record_attention)
            if record_attention:
                attentions.append(attn)
        x = self.ln_f(x)
        return EncoderOutput(
            hidden=x, attentions=tuple(attentions) if record_attention else None
        )

    forward = encode


def encode(
    token_ids, model: ToyCausalEncoder, record_attention: bool = False
) -> EncoderOutput:
    return model.encode(token_ids, record_attention)


def lora_delta(layer: LoraLinear) -> torch.Tensor:
    """The adapter's contribution to the effective weight (rank <= r)."""
    if layer.lora_a is None:
        return torch.zeros_like(layer.weight)
    return layer.scaling * (layer.lora_b @ layer.lora_a)


def backbone_param_count(config: BackboneConfig) -> int:
    """Closed-form parameter count of the frozen base (no adapters)."""
    d = config.d_model
    per_layer = (
        2 * d  # ln1
        + 4 * (d * d + d)  # q, k, v, output projections with biases
        + 2 * d  # ln2
        + config.d_ff * d + config.d_ff  # ffn in
        + d * config.d_ff + d  # ffn out
    )
    return (
        config.vocab_size * d
        + config.max_seq_len * d
        + config.n_layers * per_layer
        + 2 * d  # final norm
    )


def count_trainable(
    config: BackboneConfig,
    lora: LoraConfig | None,
    head_param_counts: int = 0,
    backbone_total: int | None = None,
) -> tuple[int, float]:
    """Trainable-parameter count and its fraction of the full model.

    Each adapted projection contributes r * (d_in + d_out) per layer; the
    toy backbone's projections are square so d_in = d_out = d_model.
    ``backbone_total`` overrides the frozen count for what-if arithmetic at
    larger scales.
    """
    adapters = 0
    if lora is not None:
        adapters = config.n_layers * sum(
            lora.r * (config.d_model + config.d_model) for _ in lora.targets
        )
    trainable = adapters + head_param_counts
    total_frozen = backbone_total if backbone_total is not None else backbone_param_count(config)
    return trainable, trainable / (total_frozen + trainable)


def attention_rollup(
    output: EncoderOutput, second_pass_positions, first_pass_positions
) -> np.ndarray:
    """Mean attention, over layers and heads, from each second-pass token to
    each first-pass token. Entry (i, j) is how much original token i's
    second occurrence attends back to original token j's first occurrence.
    """
    if output.attentions is None:
        raise ValueError("attentions absent: rerun encode with attention recording")
    stacked = torch.stack(list(output.attentions))  # [layers, heads, L, L]
    mean = stacked.mean(dim=(0, 1))
    rows = torch.as_tensor(list(second_pass_positions), dtype=torch.long)
    cols = torch.as_tensor(list(first_pass_positions), dtype=torch.long)
    return mean[rows][:, cols].detach().cpu().numpy().astype(np.float64)


def rollup_to_csv(matrix: np.ndarray, row_tokens, col_tokens) -> str:
    """CSV with token surface forms as headers; floats survive round-trip."""
    n_rows, n_cols = matrix.shape
    if len(row_tokens) != n_rows or len(col_tokens) != n_cols:
        raise ValueError("header lengths do not match matrix shape")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["", *col_tokens])
    for token, row in zip(row_tokens, matrix):
        writer.writerow([token, *(f"{v:.17g}" for v in row)])
    return buf.getvalue()


def rollup_from_csv(text: str) -> tuple[np.ndarray, list[str], list[str]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or len(rows) < 2:
        raise ValueError("csv has no data rows")
    col_tokens = rows[0][1:]
    row_tokens = [r[0] for r in rows[1:]]
    matrix = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    return matrix, row_tokens, col_tokens
