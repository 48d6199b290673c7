"""Training loop, learning-rate schedule, gradient checking, rank sweeps.

The optimizer only ever sees adapter, projection, and head parameters;
the backbone's bytes are checksummed before and after every run to prove
it. A non-finite loss aborts the run and rolls back to the last good
parameter snapshot.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from jpt.data import DatasetRecord
from jpt.heads import LossConfig
from jpt.model import TaggerCore, save_core

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Published defaults; desk-scale runs override lr and epochs."""

    learning_rate: float = 5e-5
    warmup_ratio: float = 0.10
    effective_batch: int = 8
    accumulation: int = 2
    epochs: int = 5
    max_seq_len: int = 4096
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    clip_norm: float = 1.0
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self) -> None:
        if self.effective_batch % self.accumulation != 0:
            raise ValueError(
                f"accumulation {self.accumulation} must divide "
                f"effective batch {self.effective_batch}"
            )
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise ValueError("warmup_ratio must be in [0, 1]")
        if self.learning_rate <= 0 or self.epochs < 0:
            raise ValueError("learning_rate must be positive, epochs non-negative")

    @property
    def micro_batch(self) -> int:
        return self.effective_batch // self.accumulation


def warmup_steps(config: TrainConfig, total_steps: int) -> int:
    return math.ceil(config.warmup_ratio * total_steps)


def lr_at(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear warmup to the configured peak, then cosine decay to zero."""
    if total_steps <= 0:
        return 0.0
    warmup = warmup_steps(config, total_steps)
    if warmup and step < warmup:
        return config.learning_rate * step / warmup
    if total_steps == warmup:
        return config.learning_rate
    progress = (step - warmup) / (total_steps - warmup)
    return config.learning_rate * 0.5 * (1.0 + math.cos(math.pi * progress))


def backbone_checksum(core: TaggerCore) -> str:
    """sha256 over the frozen encoder tensors, in name order."""
    h = hashlib.sha256()
    for name, param in sorted(core.encoder.named_parameters()):
        if not param.requires_grad:
            h.update(name.encode())
            h.update(param.detach().cpu().numpy().tobytes())
    return h.hexdigest()


@dataclass
class TrainResult:
    metrics: list[dict]
    checkpoint_path: Path | None
    backbone_checksum_before: str
    backbone_checksum_after: str
    aborted: bool = False
    total_steps: int = 0

    @property
    def backbone_untouched(self) -> bool:
        return self.backbone_checksum_before == self.backbone_checksum_after


def _batched(items: list, size: int) -> list[list]:
    return [items[i : i + size] for i in range(0, len(items), size)]


def train(
    core: TaggerCore,
    records: list[DatasetRecord],
    config: TrainConfig,
    out_dir: str | Path | None = None,
) -> TrainResult:
    """Deterministic AdamW loop with gradient accumulation and clipping.

    Writes (when ``out_dir`` given) a weights checkpoint, a JSON config
    echo, and a metrics JSONL with one line per optimizer step.
    """
    if not records:
        raise ValueError("no training records")
    for record in records:
        if 2 * len(record.text) + 1 > config.max_seq_len:
            raise ValueError(
                f"record of {len(record.text)} tokens exceeds max_seq_len "
                f"{config.max_seq_len} after duplication"
            )
    torch.manual_seed(config.seed)
    params = core.trainable_parameters()
    optimizer = torch.optim.AdamW(
        params,
        lr=config.learning_rate,
        betas=config.betas,
        eps=config.adam_eps,
        weight_decay=config.weight_decay,
    )
    checksum_before = backbone_checksum(core)

    micro_per_epoch = math.ceil(len(records) / config.micro_batch)
    steps_per_epoch = math.ceil(micro_per_epoch / config.accumulation)
    total_steps = config.epochs * steps_per_epoch

    metrics: list[dict] = []
    last_good = copy.deepcopy(core.state_dict())
    aborted = False
    step = 0
    order_rng = random.Random(config.seed)

    for epoch in range(config.epochs):
        order = list(range(len(records)))
        order_rng.shuffle(order)
        micro_batches = _batched([records[i] for i in order], config.micro_batch)
        for group in _batched(micro_batches, config.accumulation):
            optimizer.zero_grad()
            ce_sum = focal_sum = total_sum = 0.0
            bad = False
            for micro in group:
                ce_acc = focal_acc = None
                for record in micro:
                    ce, focal = core.losses(record)
                    ce_acc = ce if ce_acc is None else ce_acc + ce
                    focal_acc = focal if focal_acc is None else focal_acc + focal
                ce_mean = ce_acc / len(micro)
                focal_mean = focal_acc / len(micro)
                loss = (
                    config.loss.mix_ce * ce_mean + config.loss.mix_focal * focal_mean
                ) / len(group)
                if not torch.isfinite(loss):
                    bad = True
                    break
                loss.backward()
                ce_sum += float(ce_mean.detach())
                focal_sum += float(focal_mean.detach())
                total_sum += float(loss.detach()) * len(group)
            if bad:
                aborted = True
                break
            lr = lr_at(step, total_steps, config)
            for pg in optimizer.param_groups:
                pg["lr"] = lr
            torch.nn.utils.clip_grad_norm_(params, config.clip_norm)
            optimizer.step()
            metrics.append(
                {
                    "step": step,
                    "epoch": epoch,
                    "lr": lr,
                    "ce": ce_sum / len(group),
                    "focal": focal_sum / len(group),
                    "total": total_sum / len(group),
                }
            )
            step += 1
        if aborted:
            log.error("non-finite loss at step %d; rolling back", step)
            core.load_state_dict(last_good)
            break
        last_good = copy.deepcopy(core.state_dict())

    checksum_after = backbone_checksum(core)
    if checksum_after != checksum_before:
        raise RuntimeError("backbone weights changed during training")

    checkpoint_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        checkpoint_path = out / "checkpoint.jptw"
        save_core(
            checkpoint_path,
            core,
            meta={"aborted": aborted, "steps": step, "backbone_checksum": checksum_after},
        )
        (out / "config.json").write_text(
            json.dumps(
                {"train": _config_dict(config), "tagger": core.config.to_dict()},
                indent=2,
                sort_keys=True,
            ),
            encoding="utf-8",
        )
        with (out / "metrics.jsonl").open("w", encoding="utf-8") as fh:
            for row in metrics:
                fh.write(json.dumps(row, sort_keys=True) + "\n")

    return TrainResult(
        metrics=metrics,
        checkpoint_path=checkpoint_path,
        backbone_checksum_before=checksum_before,
        backbone_checksum_after=checksum_after,
        aborted=aborted,
        total_steps=step,
    )


def _config_dict(config: TrainConfig) -> dict:
    return {
        "learning_rate": config.learning_rate,
        "warmup_ratio": config.warmup_ratio,
        "effective_batch": config.effective_batch,
        "accumulation": config.accumulation,
        "epochs": config.epochs,
        "max_seq_len": config.max_seq_len,
        "betas": list(config.betas),
        "adam_eps": config.adam_eps,
        "weight_decay": config.weight_decay,
        "clip_norm": config.clip_norm,
        "seed": config.seed,
    }


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(
    loss_fn,
    params,
    eps: float = 1e-5,
    n_coords: int = 200,
    seed: int = 0,
    floor: float = 1e-6,
) -> float:
    """Max relative error between autograd and central differences.

    ``loss_fn`` must be a deterministic scalar function of ``params``;
    call in 64-bit mode (float64 params) for the documented tolerances.
    Samples ``n_coords`` coordinates across all parameters (every
    coordinate when there are fewer).

    ``eps`` sits near the float64 central-difference optimum (truncation
    eps^2 vs forward rounding noise / eps); ``floor`` keeps coordinates
    whose true gradient is numerically zero from reading as mismatches.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if floor <= 0:
        raise ValueError("floor must be positive")
    params = [p for p in params if p.requires_grad]
    if not params:
        raise ValueError("no trainable parameters to check")
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    coords = []
    for pi, p in enumerate(params):
        for flat in range(p.numel()):
            coords.append((pi, flat))
    rng = random.Random(seed)
    if len(coords) > n_coords:
        coords = rng.sample(coords, n_coords)
    worst = 0.0
    with torch.no_grad():
        for pi, flat in coords:
            p = params[pi]
            view = p.view(-1)
            original = view[flat].item()
            view[flat] = original + eps
            f_plus = float(loss_fn())
            view[flat] = original - eps
            f_minus = float(loss_fn())
            view[flat] = original
            numeric = (f_plus - f_minus) / (2 * eps)
            grad = grads[pi]
            analytic = 0.0 if grad is None else float(grad.view(-1)[flat])
            denom = max(floor, abs(analytic) + abs(numeric))
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# rank sweep


def token_f1(pred_labels, gold_labels) -> float:
    """Micro F1 over entity-class tokens (label > 0)."""
    pred = np.asarray(pred_labels)
    gold = np.asarray(gold_labels)
    if pred.shape != gold.shape:
        raise ValueError("label sequences differ in shape")
    tp = int(((pred == gold) & (gold > 0)).sum())
    n_pred = int((pred > 0).sum())
    n_gold = int((gold > 0).sum())
    if not n_pred or not n_gold:
        return 0.0
    precision, recall = tp / n_pred, tp / n_gold
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def sweep_lora(
    ranks,
    core_factory,
    train_records: list[DatasetRecord],
    eval_records: list[DatasetRecord],
    config: TrainConfig,
) -> list[dict]:
    """Train one model per rank (0 = no adapters) and report token F1.

    ``core_factory(rank)`` must return a fresh TaggerCore; identical seeds
    across ranks keep the comparison fair. Rows carry a qualitative
    ``non_decreasing`` flag relative to the previous rank.
    """
    ranks = list(ranks)
    if len(set(ranks)) != len(ranks):
        raise ValueError("duplicate ranks in sweep")
    if any(r < 0 for r in ranks):
        raise ValueError("ranks must be >= 0")
    rows: list[dict] = []
    for rank in ranks:
        core = core_factory(rank)
        train(core, train_records, config)
        preds: list[int] = []
        golds: list[int] = []
        with torch.no_grad():
            for record in eval_records:
                result = core.run(record.schema, record.text)
                preds.extend(result.predictions.labels)
                golds.extend(record.token_labels())
        f1 = token_f1(preds, golds)
        rows.append(
            {
                "rank": rank,
                "token_f1": f1,
                "non_decreasing": (not rows) or f1 >= rows[-1]["token_f1"] - 1e-9,
            }
        )
    return rows
