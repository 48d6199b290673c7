"""Projection MLPs, dual bilinear scoring heads, and training losses.

Token states and entity definition vectors are projected into one shared
space; a bilinear form scores every (token, class) pair. Two heads share
those scores' functional shape but differ in activation and loss: softmax
with class-weighted cross-entropy, and sigmoid one-vs-rest with focal
loss. Their probability rows are averaged at decode time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

LN_EPS = 1e-5


class ProjectionMLP(nn.Module):
    """linear -> LayerNorm -> GELU per hidden layer, then a final linear.

    ``dims`` lists layer widths input-first, e.g. (d_in, 1024, d_p). A
    two-entry dims is a single linear map.
    """

    def __init__(self, dims: tuple[int, ...], rng_seed: int = 0) -> None:
        super().__init__()
        if len(dims) < 2:
            raise ValueError("dims needs at least input and output widths")
        self.dims = tuple(int(d) for d in dims)
        g = torch.Generator().manual_seed(rng_seed)
        layers: list[nn.Module] = []
        for i, (d_in, d_out) in enumerate(zip(dims, dims[1:])):
            linear = nn.Linear(d_in, d_out)
            with torch.no_grad():
                linear.weight.normal_(0.0, 0.02, generator=g)
                linear.bias.zero_()
            layers.append(linear)
            if i < len(dims) - 2:
                layers.append(nn.LayerNorm(d_out, eps=LN_EPS))
        self.layers = nn.ModuleList(layers)

    @property
    def d_in(self) -> int:
        return self.dims[0]

    @property
    def d_out(self) -> int:
        return self.dims[-1]

    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def init_identity(self) -> None:
        """Identity-initialize; only meaningful for a square single linear."""
        if len(self.dims) != 2 or self.dims[0] != self.dims[1]:
            raise ValueError("identity init needs a single square linear layer")
        with torch.no_grad():
            self.layers[0].weight.copy_(torch.eye(self.dims[0]))
            self.layers[0].bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.d_in:
            raise ValueError(f"input dim {x.shape[-1]} != expected {self.d_in}")
        h = x
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if isinstance(layer, nn.LayerNorm):
                h = F.gelu(h)  # exact erf form
        return h


def project_tokens(hidden_second_pass: torch.Tensor, token_mlp: ProjectionMLP) -> torch.Tensor:
    """Map second-pass hidden states [n x d_llm] to the shared space [n x d_p]."""
    if hidden_second_pass.ndim != 2:
        raise ValueError("expected a 2-d matrix of second-pass states")
    if hidden_second_pass.shape[0] == 0:
        raise ValueError("empty input")
    return token_mlp(hidden_second_pass.to(token_mlp.dtype()))


class BilinearHeadParams(nn.Module):
    """Learned bilinear form plus a bias functional over entity vectors.

    Zero-shot schemas vary in N, so the per-class bias cannot be a fixed
    vector; it is materialized per schema as b_j = u . p_j + b0.
    """

    def __init__(self, d_p: int, rng_seed: int = 0) -> None:
        super().__init__()
        g = torch.Generator().manual_seed(rng_seed)
        w = torch.empty(d_p, d_p)
        w.normal_(0.0, 0.02, generator=g)
        self.W = nn.Parameter(w)
        self.u = nn.Parameter(torch.zeros(d_p))
        self.b0 = nn.Parameter(torch.zeros(()))

    def materialize(self, entities: torch.Tensor) -> "BilinearHead":
        b = entities.to(self.u.dtype) @ self.u + self.b0
        return BilinearHead(W=self.W, b=b)

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


@dataclass
class BilinearHead:
    """Concrete scoring head for one schema: W [d_p x d_p], b [(N+1)]."""

    W: torch.Tensor
    b: torch.Tensor


def score(tokens: torch.Tensor, entities: torch.Tensor, head: BilinearHead) -> torch.Tensor:
    """s[i][j] = t_i^T W p_j + b[j], shape [n x (N+1)]."""
    if tokens.ndim != 2 or entities.ndim != 2:
        raise ValueError("tokens and entities must be 2-d")
    if tokens.shape[1] != head.W.shape[0] or entities.shape[1] != head.W.shape[1]:
        raise ValueError(
            f"shape mismatch: tokens {tuple(tokens.shape)}, W {tuple(head.W.shape)}, "
            f"entities {tuple(entities.shape)}"
        )
    if head.b.shape[0] != entities.shape[0]:
        raise ValueError("bias length must equal the entity row count")
    return tokens @ head.W @ entities.transpose(0, 1) + head.b


def softmax_probs(scores: torch.Tensor) -> torch.Tensor:
    return torch.softmax(scores, dim=-1)


def sigmoid_probs(scores: torch.Tensor) -> torch.Tensor:
    return torch.sigmoid(scores)


@dataclass
class TokenPredictions:
    """Decoded labels (0..N, 0 = O) and ensembled probability rows."""

    labels: tuple[int, ...]
    probs: np.ndarray

    def __post_init__(self) -> None:
        if len(self.labels) != self.probs.shape[0]:
            raise ValueError("labels and probs disagree on token count")


def ensemble(softmax_p: torch.Tensor, sigmoid_p: torch.Tensor) -> TokenPredictions:
    """Average the two heads' rows and decode.

    Sigmoid rows are renormalized first so the average stays a
    distribution; ties break toward the lowest class index, so O wins
    over any entity class.
    """
    if softmax_p.shape != sigmoid_p.shape:
        raise ValueError("head outputs must share a shape")
    sig = sigmoid_p / sigmoid_p.sum(dim=-1, keepdim=True)
    mixed = (softmax_p + sig) / 2
    mixed = mixed / mixed.sum(dim=-1, keepdim=True)
    rows = mixed.detach().cpu().numpy().astype(np.float64)
    labels = tuple(int(np.argmax(row)) for row in rows)  # argmax takes first on ties
    return TokenPredictions(labels=labels, probs=rows)


@dataclass(frozen=True)
class LossConfig:
    """Loss weights; the O-class is downweighted in the CE head and
    expressed as all-classes-negative under the focal head."""

    w_o: float = 0.25
    entity_weight: float = 1.0
    focal_gamma: float = 2.5
    focal_pos_weight: float = 5.0
    mix_ce: float = 1.0
    mix_focal: float = 1.0

    def __post_init__(self) -> None:
        if min(self.w_o, self.entity_weight, self.focal_pos_weight) <= 0:
            raise ValueError("class weights must be positive")
        if self.focal_gamma < 0:
            raise ValueError("focal gamma must be >= 0")


def _check_labels(scores: torch.Tensor, gold_labels: torch.Tensor) -> torch.Tensor:
    gold = torch.as_tensor(gold_labels, dtype=torch.long)
    if gold.ndim != 1 or gold.shape[0] != scores.shape[0]:
        raise ValueError("gold labels must align with score rows")
    if gold.numel() and (int(gold.min()) < 0 or int(gold.max()) >= scores.shape[1]):
        raise ValueError("gold label out of class range")
    return gold


def loss_weighted_ce(
    scores: torch.Tensor, gold_labels, cfg: LossConfig | None = None
) -> torch.Tensor:
    """Class-weighted cross-entropy, normalized by the sum of applied
    weights (a weighted mean, not a token-count mean)."""
    cfg = cfg or LossConfig()
    gold = _check_labels(scores, gold_labels)
    logp = F.log_softmax(scores, dim=-1)
    picked = logp[torch.arange(scores.shape[0]), gold]
    weights = torch.where(
        gold == 0,
        torch.as_tensor(cfg.w_o, dtype=scores.dtype),
        torch.as_tensor(cfg.entity_weight, dtype=scores.dtype),
    )
    return -(weights * picked).sum() / weights.sum()


def loss_focal(
    scores: torch.Tensor, gold_labels, cfg: LossConfig | None = None
) -> torch.Tensor:
    """One-vs-rest focal loss over entity classes 1..N under the sigmoid
    head; a gold-O token is negative for every class. Mean over the
    n x N token-class pairs."""
    cfg = cfg or LossConfig()
    gold = _check_labels(scores, gold_labels)
    n, width = scores.shape
    if width < 2:
        raise ValueError("need at least one entity class")
    s = scores[:, 1:]
    classes = torch.arange(1, width)
    y = (gold.unsqueeze(1) == classes.unsqueeze(0)).to(scores.dtype)
    p = torch.sigmoid(s)
    # p_t = p where y=1 else 1-p; logs via softplus for large-score stability
    p_t = y * p + (1 - y) * (1 - p)
    log_p_t = -(y * F.softplus(-s) + (1 - y) * F.softplus(s))
    alpha = y * cfg.focal_pos_weight + (1 - y) * 1.0
    if cfg.focal_gamma == 0:
        modulator = torch.ones_like(p_t)  # pow(0) has a bad gradient at p_t = 1
    else:
        modulator = (1 - p_t).pow(cfg.focal_gamma)
    terms = -alpha * modulator * log_p_t
    return terms.mean()


def total_loss(ce: torch.Tensor, focal: torch.Tensor, cfg: LossConfig | None = None) -> torch.Tensor:
    cfg = cfg or LossConfig()
    return cfg.mix_ce * ce + cfg.mix_focal * focal
