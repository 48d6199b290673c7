"""The assembled tagger: prompt, backbone, projections, dual heads, spans.

``TaggerCore`` is the torch pipeline; ``TwoPassTagger`` wraps it in a
scikit-learn style estimator (fit on DatasetRecords, predict spans).

Ablation variants rewire the same pipeline: single_pass drops the input
duplication (classifying first-occurrence states), the definition
variants control which channel (prompt text, embedding, both, neither)
carries the type definitions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import torch
from sklearn.base import BaseEstimator

from jpt.backbone import BackboneConfig, LoraConfig, ToyCausalEncoder
from jpt.data import (
    DatasetRecord,
    EntitySchema,
    HashVocab,
    ReferenceTokenizer,
    TokenizedText,
    tokenize,
)
from jpt.definitions import (
    EmbeddingCache,
    HashEmbeddingProvider,
    embed_schema,
)
from jpt.heads import (
    BilinearHeadParams,
    LossConfig,
    ProjectionMLP,
    TokenPredictions,
    ensemble,
    loss_focal,
    loss_weighted_ce,
    score,
    sigmoid_probs,
    softmax_probs,
)
from jpt.prompting import (
    SINGLE_TURN_TEMPLATE,
    PromptRender,
    PromptTemplate,
    render_prompt,
)
from jpt.spans import EntitySpan, merge_spans

VARIANTS = (
    "full",
    "single_pass",
    "prompt_only_definitions",
    "embedding_only_definitions",
    "no_definitions",
)

# Short turns keep desk-scale training sequences cheap; the faithful
# long-form template remains the default for prompt inspection tooling.
COMPACT_TEMPLATE = PromptTemplate(
    system_text="Tag each entity mention in the user text.",
    assistant_ack_text="Ready.",
)
COMPACT_SINGLE_PASS = replace(
    COMPACT_TEMPLATE, duplicated_turn_template=SINGLE_TURN_TEMPLATE
)


@dataclass(frozen=True)
class AblationConfig:
    """Pipeline wiring for one ablation variant."""

    variant: str = "full"

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")

    @property
    def duplicated(self) -> bool:
        return self.variant != "single_pass"

    @property
    def definitions_in_prompt(self) -> bool:
        return self.variant in ("full", "single_pass", "prompt_only_definitions")

    @property
    def embedding_channel(self) -> str:
        if self.variant in ("full", "single_pass", "embedding_only_definitions"):
            return "definition"
        return "name"


@dataclass(frozen=True)
class TaggerConfig:
    """Everything needed to rebuild a TaggerCore deterministically."""

    backbone: BackboneConfig = BackboneConfig()
    lora: LoraConfig | None = LoraConfig()
    d_p: int = 16
    d_enc: int = 16
    token_mlp_hidden: tuple[int, ...] = ()
    entity_mlp_hidden: tuple[int, ...] = ()
    loss: LossConfig = LossConfig()
    variant: str = "full"
    rng_seed: int = 0

    def ablation(self) -> AblationConfig:
        return AblationConfig(self.variant)

    def to_dict(self) -> dict:
        payload = {
            "backbone": self.backbone.to_dict(),
            "lora": None,
            "d_p": self.d_p,
            "d_enc": self.d_enc,
            "token_mlp_hidden": list(self.token_mlp_hidden),
            "entity_mlp_hidden": list(self.entity_mlp_hidden),
            "loss": {
                "w_o": self.loss.w_o,
                "entity_weight": self.loss.entity_weight,
                "focal_gamma": self.loss.focal_gamma,
                "focal_pos_weight": self.loss.focal_pos_weight,
                "mix_ce": self.loss.mix_ce,
                "mix_focal": self.loss.mix_focal,
            },
            "variant": self.variant,
            "rng_seed": self.rng_seed,
        }
        if self.lora is not None:
            payload["lora"] = {
                "r": self.lora.r,
                "alpha": self.lora.alpha,
                "targets": list(self.lora.targets),
                "rng_seed": self.lora.rng_seed,
            }
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "TaggerConfig":
        lora = None
        if payload.get("lora"):
            entry = dict(payload["lora"])
            entry["targets"] = tuple(entry.get("targets", ()))
            lora = LoraConfig(**entry)
        return cls(
            backbone=BackboneConfig(**payload["backbone"]),
            lora=lora,
            d_p=payload["d_p"],
            d_enc=payload["d_enc"],
            token_mlp_hidden=tuple(payload.get("token_mlp_hidden", ())),
            entity_mlp_hidden=tuple(payload.get("entity_mlp_hidden", ())),
            loss=LossConfig(**payload.get("loss", {})),
            variant=payload.get("variant", "full"),
            rng_seed=payload.get("rng_seed", 0),
        )


@dataclass
class TaggerOutput:
    """One forward pass: the render, raw scores, and decoded predictions."""

    render: PromptRender
    softmax_scores: torch.Tensor
    sigmoid_scores: torch.Tensor
    predictions: TokenPredictions
    spans: list[EntitySpan]
    encoder_output: object = None


class TaggerCore(torch.nn.Module):
    """Full pipeline over one schema at a time; schema is a call argument,
    never baked into parameters, so one model serves any schema."""

    def __init__(
        self,
        config: TaggerConfig,
        provider=None,
        cache: EmbeddingCache | None = None,
        template: PromptTemplate | None = None,
        tokenizer: ReferenceTokenizer | None = None,
    ) -> None:
        super().__init__()
        self.config = config
        ablation = config.ablation()
        self.ablation = ablation
        self.encoder = ToyCausalEncoder(config.backbone, config.lora)
        d_model = config.backbone.d_model
        self.token_mlp = ProjectionMLP(
            (d_model, *config.token_mlp_hidden, config.d_p), rng_seed=config.rng_seed + 11
        )
        self.entity_mlp = ProjectionMLP(
            (config.d_enc, *config.entity_mlp_hidden, config.d_p),
            rng_seed=config.rng_seed + 13,
        )
        self.softmax_head = BilinearHeadParams(config.d_p, rng_seed=config.rng_seed + 17)
        self.sigmoid_head = BilinearHeadParams(config.d_p, rng_seed=config.rng_seed + 19)
        self.provider = provider or HashEmbeddingProvider(d_enc=config.d_enc)
        self.cache = cache
        self.tokenizer = tokenizer or ReferenceTokenizer()
        self.vocab = HashVocab(config.backbone.vocab_size)
        if template is not None:
            self.template = template
        else:
            self.template = COMPACT_TEMPLATE if ablation.duplicated else COMPACT_SINGLE_PASS

    # -- stages -----------------------------------------------------------

    def render(self, schema: EntitySchema, text: TokenizedText) -> PromptRender:
        return render_prompt(
            schema,
            text,
            template=self.template,
            tokenizer=self.tokenizer,
            vocab=self.vocab,
            definitions_in_prompt=self.ablation.definitions_in_prompt,
        )

    def encode_render(self, render: PromptRender, record_attention: bool = False):
        out = self.encoder.encode(render.token_ids, record_attention)
        positions = torch.as_tensor(render.second_pass_positions, dtype=torch.long)
        return out.hidden[positions], out

    def entity_matrix(self, schema: EntitySchema) -> torch.Tensor:
        raw = embed_schema(schema, self.provider, self.cache, self.ablation.embedding_channel)
        x = torch.as_tensor(raw, dtype=self.entity_mlp.dtype())
        return self.entity_mlp(x)

    def classify(
        self, hidden_second_pass: torch.Tensor, entities: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        tokens = self.token_mlp(hidden_second_pass.to(self.token_mlp.dtype()))
        sm = score(tokens, entities, self.softmax_head.materialize(entities))
        sg = score(tokens, entities, self.sigmoid_head.materialize(entities))
        return sm, sg

    # -- end-to-end -------------------------------------------------------

    def run(
        self,
        schema: EntitySchema,
        text: TokenizedText | str,
        record_attention: bool = False,
    ) -> TaggerOutput:
        if isinstance(text, str):
            text = tokenize(text, self.tokenizer)
        render = self.render(schema, text)
        hidden2, enc_out = self.encode_render(render, record_attention)
        entities = self.entity_matrix(schema)
        sm_scores, sg_scores = self.classify(hidden2, entities)
        preds = ensemble(softmax_probs(sm_scores), sigmoid_probs(sg_scores))
        return TaggerOutput(
            render=render,
            softmax_scores=sm_scores,
            sigmoid_scores=sg_scores,
            predictions=preds,
            spans=merge_spans(preds),
            encoder_output=enc_out,
        )

    def losses(self, record: DatasetRecord) -> tuple[torch.Tensor, torch.Tensor]:
        """(cross-entropy, focal) on the record's content tokens only."""
        render = self.render(record.schema, record.text)
        hidden2, _ = self.encode_render(render)
        entities = self.entity_matrix(record.schema)
        sm_scores, sg_scores = self.classify(hidden2, entities)
        full = sequence_labels(render, record.token_labels())
        gold = second_pass_labels(render, full)
        ce = loss_weighted_ce(sm_scores, gold, self.config.loss)
        focal = loss_focal(sg_scores, gold, self.config.loss)
        return ce, focal

    def trainable_parameters(self) -> list[torch.nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]


def sequence_labels(render: PromptRender, token_labels) -> list[int]:
    """Expand per-original-token labels onto the rendered sequence; all
    prompt and first-pass positions get the O label."""
    if len(token_labels) != len(render.second_pass_positions):
        raise ValueError("token labels must cover the original tokens")
    full = [0] * len(render.token_ids)
    for i, pos in enumerate(render.second_pass_positions):
        full[pos] = int(token_labels[i])
    return full


def second_pass_labels(render: PromptRender, full_labels) -> list[int]:
    """Gold labels at the classified positions; everything else (prompt,
    separators, first pass) never reaches a loss."""
    if len(full_labels) != len(render.token_ids):
        raise ValueError("full label vector must cover the rendered sequence")
    return [int(full_labels[p]) for p in render.second_pass_positions]


# ---------------------------------------------------------------------------
# persistence


def save_core(path: str | Path, core: TaggerCore, meta: dict | None = None) -> None:
    from jpt.weights_io import save_weights

    tensors = dict(core.state_dict())
    config = {
        "tagger": core.config.to_dict(),
        "provider": {"name": core.provider.name, "d_enc": core.provider.d_enc},
    }
    save_weights(path, tensors, config=config, meta=meta)


def load_core(
    path: str | Path,
    provider=None,
    cache: EmbeddingCache | None = None,
    template: PromptTemplate | None = None,
) -> TaggerCore:
    from jpt.weights_io import WeightsError, load_weights

    wf = load_weights(path)
    if "tagger" not in wf.config:
        raise WeightsError(f"{path}: container carries no tagger config")
    config = TaggerConfig.from_dict(wf.config["tagger"])
    if provider is None:
        provider = HashEmbeddingProvider(d_enc=config.d_enc)
    core = TaggerCore(config, provider=provider, cache=cache, template=template)
    state = {k: torch.from_numpy(v) for k, v in wf.tensors.items()}
    core.load_state_dict(state)
    return core


# ---------------------------------------------------------------------------
# estimator facade


class TwoPassTagger(BaseEstimator):
    """Scikit-learn style front door.

    fit(records) trains adapters and heads on DatasetRecords (all sharing
    one schema); predict(texts) returns per-text entity spans. Constructor
    arguments are stored verbatim so get_params/set_params/clone behave.
    """

    def __init__(
        self,
        variant: str = "full",
        vocab_size: int = 512,
        d_model: int = 32,
        n_layers: int = 2,
        n_heads: int = 4,
        max_seq_len: int = 512,
        d_p: int = 16,
        d_enc: int = 16,
        lora_rank: int = 4,
        lora_alpha: float = 8.0,
        learning_rate: float = 1e-3,
        epochs: int = 3,
        effective_batch: int = 8,
        accumulation: int = 2,
        seed: int = 0,
    ) -> None:
        self.variant = variant
        self.vocab_size = vocab_size
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.max_seq_len = max_seq_len
        self.d_p = d_p
        self.d_enc = d_enc
        self.lora_rank = lora_rank
        self.lora_alpha = lora_alpha
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.effective_batch = effective_batch
        self.accumulation = accumulation
        self.seed = seed

    def _build_config(self) -> TaggerConfig:
        backbone = BackboneConfig(
            vocab_size=self.vocab_size,
            d_model=self.d_model,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            max_seq_len=self.max_seq_len,
            rng_seed=self.seed,
        )
        lora = None
        if self.lora_rank > 0:
            lora = LoraConfig(
                r=self.lora_rank, alpha=self.lora_alpha, rng_seed=self.seed + 1
            )
        return TaggerConfig(
            backbone=backbone,
            lora=lora,
            d_p=self.d_p,
            d_enc=self.d_enc,
            variant=self.variant,
            rng_seed=self.seed,
        )

    def fit(self, X, y=None) -> "TwoPassTagger":
        from jpt.training import TrainConfig, train

        records = list(X)
        if not records:
            raise ValueError("fit needs at least one record")
        self.schema_ = records[0].schema
        self.core_ = TaggerCore(self._build_config())
        config = TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            effective_batch=self.effective_batch,
            accumulation=self.accumulation,
            max_seq_len=self.max_seq_len,
            seed=self.seed,
        )
        self.train_result_ = train(self.core_, records, config)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "core_"):
            raise RuntimeError("this TwoPassTagger instance is not fitted yet")

    def predict(self, X) -> list[list[int]]:
        """Per-text token label sequences (0 = outside)."""
        self._check_fitted()
        out = []
        with torch.no_grad():
            for item in X:
                schema, text = self._coerce(item)
                out.append(list(self.core_.run(schema, text).predictions.labels))
        return out

    def predict_spans(self, X) -> list[list[EntitySpan]]:
        self._check_fitted()
        out = []
        with torch.no_grad():
            for item in X:
                schema, text = self._coerce(item)
                out.append(self.core_.run(schema, text).spans)
        return out

    def score(self, X, y=None) -> float:
        """Span micro-F1 against the records' gold annotations."""
        from jpt.spans import evaluate

        self._check_fitted()
        records = list(X)
        pred_all: list[tuple[int, int, int]] = []
        gold_all: list[tuple[int, int, int]] = []
        offset = 0
        with torch.no_grad():
            for record in records:
                result = self.core_.run(record.schema, record.text)
                pred_all.extend(
                    (s.start + offset, s.end + offset, s.type_index) for s in result.spans
                )
                gold_all.extend(
                    (s + offset, e + offset, t) for s, e, t in record.gold.spans
                )
                offset += len(record.text) + 1
        if not records:
            return 0.0
        return evaluate(pred_all, gold_all, records[0].schema.n_types).f1

    def _coerce(self, item) -> tuple[EntitySchema, TokenizedText]:
        if isinstance(item, DatasetRecord):
            return item.schema, item.text
        if isinstance(item, str):
            return self.schema_, tokenize(item, self.core_.tokenizer)
        raise TypeError(f"cannot predict on {type(item).__name__}")
