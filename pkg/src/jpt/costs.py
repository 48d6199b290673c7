"""Token-economics model for prefill-only tagging vs generative extraction.

Prefill tokens are processed in one parallel pass; decoded tokens are
produced one forward pass at a time, which is why API providers price
them several times higher. The tagger reads a duplicated input but
decodes nothing, so its cost is pure prefill; generative extractors pay
the decode premium on every entity they print.

The model predicts token costs only. Wall-clock ratios depend on
hardware and serving stack; a reported A100 measurement of ~22x speedup
over a 7B generative baseline is carried as context, never asserted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

REPORTED_WALL_CLOCK_SPEEDUP = 22.0


@dataclass(frozen=True)
class CostModel:
    """Per-token prices. Decoded output is never cheaper than prefill."""

    c_in: float = 1.0
    c_out: float = 4.0

    def __post_init__(self) -> None:
        if self.c_in <= 0 or self.c_out <= 0:
            raise ValueError("token prices must be positive")
        if self.c_out < self.c_in:
            raise ValueError(
                f"c_out ({self.c_out}) must be >= c_in ({self.c_in})"
            )


@dataclass(frozen=True)
class WorkloadStats:
    """Per-sample averages describing a dataset and its prompting."""

    mean_input_tokens: float
    schema_size: int
    mean_entities: float
    prompt_overhead: float = 0.0
    tokens_per_entity: float = 4.0

    def __post_init__(self) -> None:
        if self.mean_input_tokens <= 0:
            raise ValueError("mean_input_tokens must be positive")
        if self.schema_size < 1:
            raise ValueError("schema_size must be >= 1")
        if self.mean_entities < 0 or self.prompt_overhead < 0:
            raise ValueError("mean_entities and prompt_overhead must be >= 0")


# stats shaped like a political-news benchmark: ~45-token sentences,
# 9 entity types, ~6 mentions per sentence, a ~60-token instruction block
POLITICS_LIKE_STATS = WorkloadStats(
    mean_input_tokens=45.0,
    schema_size=9,
    mean_entities=6.0,
    prompt_overhead=60.0,
    tokens_per_entity=4.0,
)


@dataclass(frozen=True)
class Workload:
    """One method's token consumption as a function of the stats."""

    name: str
    input_tokens: Callable[[WorkloadStats], float]
    output_tokens: Callable[[WorkloadStats], float]


def duplicated_tagger_workload(name: str = "jpt") -> Workload:
    """Prefill-only: prompt overhead plus the text twice plus a
    separator; zero decoded tokens."""
    return Workload(
        name=name,
        input_tokens=lambda s: s.prompt_overhead + 2 * s.mean_input_tokens + 1,
        output_tokens=lambda s: 0.0,
    )


def generative_single_call_workload(name: str = "generative-single-call") -> Workload:
    """One request listing all entities: the model decodes a few tokens
    per mention."""
    return Workload(
        name=name,
        input_tokens=lambda s: s.prompt_overhead + s.mean_input_tokens,
        output_tokens=lambda s: s.tokens_per_entity * s.mean_entities,
    )


def generative_per_type_workload(
    name: str = "generative-per-type", empty_answer_tokens: float = 2.0
) -> Workload:
    """One request per entity type: the prompt is re-sent N times and
    every call decodes at least a short answer."""
    return Workload(
        name=name,
        input_tokens=lambda s: s.schema_size * (s.prompt_overhead + s.mean_input_tokens),
        output_tokens=lambda s: s.tokens_per_entity * s.mean_entities
        + s.schema_size * empty_answer_tokens,
    )


def generative_rewrite_workload(name: str = "generative-rewrite") -> Workload:
    """Decodes the whole input back with inline tags (sequence-to-sequence
    style), so output grows with the text, not just the entity count."""
    return Workload(
        name=name,
        input_tokens=lambda s: s.prompt_overhead + s.mean_input_tokens,
        output_tokens=lambda s: s.mean_input_tokens
        + s.tokens_per_entity * s.mean_entities,
    )


def custom_workload(
    name: str,
    input_tokens: Callable[[WorkloadStats], float],
    output_tokens: Callable[[WorkloadStats], float],
) -> Workload:
    """Escape hatch for API-style methods whose prompting template is a
    free parameter."""
    return Workload(name=name, input_tokens=input_tokens, output_tokens=output_tokens)


DEFAULT_WORKLOADS = (
    duplicated_tagger_workload(),
    generative_single_call_workload(),
    generative_per_type_workload(),
    generative_rewrite_workload(),
)


def workload_cost(model: CostModel, workload: Workload, stats: WorkloadStats) -> float:
    return (
        workload.input_tokens(stats) * model.c_in
        + workload.output_tokens(stats) * model.c_out
    )


def profile_cost(
    model: CostModel,
    workloads=DEFAULT_WORKLOADS,
    stats: WorkloadStats = POLITICS_LIKE_STATS,
    reference: str = "jpt",
) -> list[dict]:
    """Cost table, one row per method.

    ``ratio`` is each method's cost over the reference row's (the
    prefill-only tagger by default); the reference row gets 1.0.
    """
    workloads = list(workloads)
    if not workloads:
        raise ValueError("no workloads to profile")
    names = [w.name for w in workloads]
    if len(set(names)) != len(names):
        raise ValueError("duplicate workload names")
    rows = []
    for w in workloads:
        inp = float(w.input_tokens(stats))
        out = float(w.output_tokens(stats))
        if inp < 0 or out < 0:
            raise ValueError(f"workload {w.name!r} produced negative token counts")
        rows.append(
            {
                "method": w.name,
                "input_tokens": inp,
                "output_tokens": out,
                "cost": inp * model.c_in + out * model.c_out,
            }
        )
    ref_cost = None
    for row in rows:
        if row["method"] == reference:
            ref_cost = row["cost"]
    for row in rows:
        row["ratio"] = row["cost"] / ref_cost if ref_cost else None
    return rows


def cost_table(rows: list[dict]) -> str:
    """Plain-text rendering of a profile_cost result."""
    header = f"{'method':<28} {'input':>10} {'output':>10} {'cost':>12} {'ratio':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        ratio = f"{row['ratio']:.2f}" if row["ratio"] is not None else "-"
        lines.append(
            f"{row['method']:<28} {row['input_tokens']:>10.1f} "
            f"{row['output_tokens']:>10.1f} {row['cost']:>12.1f} {ratio:>8}"
        )
    return "\n".join(lines)
