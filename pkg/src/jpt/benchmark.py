"""Desk-scale disambiguation benchmark.

Trains a fresh tagger on the synthetic corpus and scores accuracy on the
tokens whose class is revealed only after the token. The duplicated
variant can read the revealing phrase from the first pass; a single-pass
model is capped near the class prior by causal masking, whatever the
training budget.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import torch

from jpt.backbone import BackboneConfig, LoraConfig
from jpt.data import DatasetRecord
from jpt.model import TaggerConfig, TaggerCore
from jpt.synthetic import SyntheticGrammar, generate_synthetic
from jpt.training import TrainConfig, TrainResult, sweep_lora, train


@dataclass(frozen=True)
class BenchmarkBudget:
    """Training budget sized to finish a two-variant, three-seed
    comparison in minutes on one CPU core."""

    n_train: int = 200
    n_eval: int = 80
    d_model: int = 48
    n_layers: int = 2
    n_heads: int = 4
    vocab_size: int = 512
    max_seq_len: int = 512
    lora_rank: int = 8
    lora_alpha: float = 16.0
    token_mlp_hidden: tuple[int, ...] = (64,)
    learning_rate: float = 5e-3
    epochs: int = 40
    effective_batch: int = 8
    accumulation: int = 2


def ambiguous_accuracy(core: TaggerCore, records: list[DatasetRecord]) -> float:
    """Token accuracy restricted to the marked ambiguous positions."""
    hit = tot = 0
    with torch.no_grad():
        for record in records:
            if not record.ambiguous_tokens:
                continue
            out = core.run(record.schema, record.text)
            gold = record.token_labels()
            for i in record.ambiguous_tokens:
                tot += 1
                hit += out.predictions.labels[i] == gold[i]
    return hit / tot if tot else 0.0


def benchmark_core(variant: str, seed: int, budget: BenchmarkBudget) -> TaggerCore:
    config = TaggerConfig(
        backbone=BackboneConfig(
            vocab_size=budget.vocab_size,
            d_model=budget.d_model,
            n_layers=budget.n_layers,
            n_heads=budget.n_heads,
            max_seq_len=budget.max_seq_len,
            rng_seed=seed,
        ),
        lora=(
            LoraConfig(r=budget.lora_rank, alpha=budget.lora_alpha, rng_seed=seed + 1)
            if budget.lora_rank > 0
            else None
        ),
        token_mlp_hidden=budget.token_mlp_hidden,
        variant=variant,
        rng_seed=seed,
    )
    return TaggerCore(config)


def benchmark_run(
    variant: str,
    seed: int,
    budget: BenchmarkBudget | None = None,
    grammar: SyntheticGrammar | None = None,
) -> tuple[float, TaggerCore, TrainResult]:
    """Train one variant at one seed; returns (ambiguous accuracy, core,
    train result). Both variants get byte-identical budgets."""
    budget = budget or BenchmarkBudget()
    grammar = grammar or SyntheticGrammar()
    train_records = generate_synthetic(grammar, budget.n_train, seed=seed)
    eval_records = generate_synthetic(grammar, budget.n_eval, seed=1000 + seed)
    core = benchmark_core(variant, seed, budget)
    config = TrainConfig(
        learning_rate=budget.learning_rate,
        epochs=budget.epochs,
        effective_batch=budget.effective_batch,
        accumulation=budget.accumulation,
        max_seq_len=budget.max_seq_len,
        seed=seed,
    )
    result = train(core, train_records, config)
    return ambiguous_accuracy(core, eval_records), core, result


def benchmark_matrix(
    seeds=(0, 1, 2),
    variants=("full", "single_pass"),
    budget: BenchmarkBudget | None = None,
) -> dict[str, dict[int, float]]:
    """Accuracy per variant per seed, identical budget throughout."""
    out: dict[str, dict[int, float]] = {v: {} for v in variants}
    for seed in seeds:
        for variant in variants:
            acc, _, _ = benchmark_run(variant, seed, budget)
            out[variant][seed] = acc
    return out


def benchmark_sweep(
    ranks=(0, 4),
    seed: int = 0,
    budget: BenchmarkBudget | None = None,
    grammar: SyntheticGrammar | None = None,
) -> list[dict]:
    """Adapter-rank sweep on a smaller corpus slice; head capacity is held
    fixed so only the rank varies between rows."""
    budget = budget or replace(BenchmarkBudget(), n_train=120, n_eval=60)
    grammar = grammar or SyntheticGrammar()
    train_records = generate_synthetic(grammar, budget.n_train, seed=seed)
    eval_records = generate_synthetic(grammar, budget.n_eval, seed=1000 + seed)

    def factory(rank: int) -> TaggerCore:
        per_rank = replace(budget, lora_rank=rank, lora_alpha=2.0 * rank)
        return benchmark_core("full", seed, per_rank)

    config = TrainConfig(
        learning_rate=budget.learning_rate,
        epochs=budget.epochs,
        effective_batch=budget.effective_batch,
        accumulation=budget.accumulation,
        max_seq_len=budget.max_seq_len,
        seed=seed,
    )
    return sweep_lora(ranks, factory, train_records, eval_records, config)
