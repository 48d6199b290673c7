"""Span decoding and evaluation: merge token labels into entity spans,
align subwords to words, score exact-match span F1, and bucket errors.

Matching is greedy left-to-right in priority rounds; with flat
non-overlapping spans and exact-match scoring this equals optimal
assignment. Buckets partition gold and predicted spans: each matched pair
lands in one bucket, every leftover is missed or spurious.
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

from jpt.data import TokenizedText
from jpt.heads import TokenPredictions

BUCKET_NAMES = (
    "exact",
    "type_confusion",
    "over_extension",
    "truncation",
    "partial_overlap",
    "missed",
    "spurious",
)


@dataclass(frozen=True)
class EntitySpan:
    """A decoded entity: token range, class index, mean winning probability."""

    start: int
    end: int
    type_index: int
    score: float = 1.0

    def __post_init__(self) -> None:
        if self.start < 0 or self.end <= self.start:
            raise ValueError(f"invalid span ({self.start}, {self.end})")
        if self.type_index < 1:
            raise ValueError("type_index must be >= 1")

    def char_range(self, text: TokenizedText) -> tuple[int, int]:
        return text.char_range_of(self.start, self.end)

    def key(self) -> tuple[int, int, int]:
        return (self.start, self.end, self.type_index)


def merge_spans(preds: TokenPredictions) -> list[EntitySpan]:
    """Maximal runs of one non-O label become one span; a type change or an
    O token ends the run. Span score = mean winning-class probability."""
    labels = preds.labels
    spans: list[EntitySpan] = []
    i, n = 0, len(labels)
    while i < n:
        label = labels[i]
        if label == 0:
            i += 1
            continue
        j = i
        while j < n and labels[j] == label:
            j += 1
        run_score = float(np.mean(preds.probs[i:j, label]))
        spans.append(EntitySpan(start=i, end=j, type_index=label, score=run_score))
        i = j
    return spans


def spans_to_labels(spans, n_tokens: int) -> list[int]:
    labels = [0] * n_tokens
    for span in spans:
        start, end, type_index = _key(span)
        for k in range(start, end):
            labels[k] = type_index
    return labels


def align_to_words(labels, word_ids, policy: str = "first") -> list[int]:
    """Collapse subword labels to one label per whitespace word.

    ``first`` takes the first subword's label; ``majority`` votes, ties
    going to the earliest subword's label in the word.
    """
    if policy not in ("first", "majority"):
        raise ValueError(f"unknown alignment policy {policy!r}")
    if len(labels) != len(word_ids):
        raise ValueError("labels and word_ids must align")
    if not labels:
        return []
    groups: dict[int, list[int]] = {}
    for label, wid in zip(labels, word_ids):
        groups.setdefault(wid, []).append(label)
    out = []
    for wid in sorted(groups):
        members = groups[wid]
        if policy == "first":
            out.append(members[0])
        else:
            out.append(Counter(members).most_common(1)[0][0])
    return out


def _key(span) -> tuple[int, int, int]:
    if isinstance(span, EntitySpan):
        return span.key()
    start, end, type_index = span
    return (int(start), int(end), int(type_index))


def _validated(spans, who: str) -> list[tuple[int, int, int]]:
    keys = sorted(_key(s) for s in spans)
    prev_end = 0
    for start, end, type_index in keys:
        if start < 0 or end <= start or type_index < 1:
            raise ValueError(f"{who} span ({start}, {end}, {type_index}) invalid")
        if start < prev_end:
            raise ValueError(f"{who} spans overlap")
        prev_end = end
    return keys


@dataclass
class EvalReport:
    """Micro scores, per-type scores, token confusion, and error buckets."""

    precision: float
    recall: float
    f1: float
    n_gold: int
    n_pred: int
    true_positives: int
    per_type: dict[int, dict[str, float]]
    buckets: dict[str, int]
    empty: bool = False
    confusion: np.ndarray | None = None

    def to_dict(self) -> dict:
        payload = {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "n_gold": self.n_gold,
            "n_pred": self.n_pred,
            "true_positives": self.true_positives,
            "per_type": {str(k): v for k, v in self.per_type.items()},
            "buckets": dict(self.buckets),
            "empty": self.empty,
        }
        if self.confusion is not None:
            payload["confusion"] = self.confusion.tolist()
        return payload

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _prf(tp: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def evaluate(pred_spans, gold_spans, n_types: int) -> EvalReport:
    """Exact-match span micro P/R/F1 with greedy left-to-right matching.

    Both empty lists score 0 by convention and set the ``empty`` flag.
    """
    preds = _validated(pred_spans, "predicted")
    golds = _validated(gold_spans, "gold")
    matched_gold: set[int] = set()
    tp = 0
    for pred in preds:
        for gi, gold in enumerate(golds):
            if gi not in matched_gold and gold == pred:
                matched_gold.add(gi)
                tp += 1
                break
    precision, recall, f1 = _prf(tp, len(preds), len(golds))
    per_type: dict[int, dict[str, float]] = {}
    for t in range(1, n_types + 1):
        p_t = [s for s in preds if s[2] == t]
        g_t = [s for s in golds if s[2] == t]
        # spans in one list are non-overlapping, hence unique: set math suffices
        tp_t = len(set(p_t) & set(g_t))
        pr, rc, f = _prf(tp_t, len(p_t), len(g_t))
        per_type[t] = {"precision": pr, "recall": rc, "f1": f, "n_gold": len(g_t), "n_pred": len(p_t)}
    return EvalReport(
        precision=precision,
        recall=recall,
        f1=f1,
        n_gold=len(golds),
        n_pred=len(preds),
        true_positives=tp,
        per_type=per_type,
        buckets=categorize_errors(preds, golds),
        empty=not preds and not golds,
    )


def _overlaps(a: tuple[int, int, int], b: tuple[int, int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def categorize_errors(pred_spans, gold_spans) -> dict[str, int]:
    """Bucket every span via priority matching rounds.

    Pairing order: exact; same-boundary type confusion; over-extension
    (pred strictly contains gold, same type); truncation (pred strictly
    inside gold, same type); any remaining overlap. Unpaired gold spans
    are missed, unpaired predictions spurious.
    """
    preds = _validated(pred_spans, "predicted")
    golds = _validated(gold_spans, "gold")

    def same_bounds_other_type(p, g):
        return p[:2] == g[:2] and p[2] != g[2]

    def over_extension(p, g):
        return p[2] == g[2] and p[0] <= g[0] and g[1] <= p[1] and (p[0], p[1]) != (g[0], g[1])

    def truncation(p, g):
        return p[2] == g[2] and g[0] <= p[0] and p[1] <= g[1] and (p[0], p[1]) != (g[0], g[1])

    rounds = (
        ("exact", lambda p, g: p == g),
        ("type_confusion", same_bounds_other_type),
        ("over_extension", over_extension),
        ("truncation", truncation),
        ("partial_overlap", _overlaps),
    )
    counts = {name: 0 for name in BUCKET_NAMES}
    free_pred = list(range(len(preds)))
    free_gold = list(range(len(golds)))
    for name, predicate in rounds:
        for pi in list(free_pred):
            for gi in free_gold:
                if predicate(preds[pi], golds[gi]):
                    counts[name] += 1
                    free_pred.remove(pi)
                    free_gold.remove(gi)
                    break
    counts["missed"] = len(free_gold)
    counts["spurious"] = len(free_pred)
    return counts


def confusion_matrix(token_preds, token_gold, n_types: int) -> np.ndarray:
    """Token-level counts[gold][pred] over classes 0..N."""
    preds = list(token_preds)
    golds = list(token_gold)
    if len(preds) != len(golds):
        raise ValueError("prediction and gold sequences differ in length")
    counts = np.zeros((n_types + 1, n_types + 1), dtype=np.int64)
    for g, p in zip(golds, preds):
        if not (0 <= g <= n_types and 0 <= p <= n_types):
            raise ValueError(f"label pair ({g}, {p}) outside 0..{n_types}")
        counts[g][p] += 1
    return counts


def confusion_to_csv(counts: np.ndarray, class_names: list[str]) -> str:
    if counts.shape[0] != len(class_names):
        raise ValueError("class name count must match matrix size")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["gold\\pred", *class_names])
    for name, row in zip(class_names, counts):
        writer.writerow([name, *(int(v) for v in row)])
    return buf.getvalue()


def error_examples_jsonl(
    pred_spans, gold_spans, text: TokenizedText, type_names: list[str]
) -> str:
    """One JSON line per non-exact bucket assignment, with text excerpts."""
    preds = _validated(pred_spans, "predicted")
    golds = _validated(gold_spans, "gold")

    def excerpt(span: tuple[int, int, int]) -> dict:
        start_c, end_c = text.char_range_of(span[0], span[1])
        return {
            "text": text.raw_text[start_c:end_c],
            "tokens": [span[0], span[1]],
            "type": type_names[span[2] - 1],
        }

    lines = []
    matched_gold: set[int] = set()
    for pred in preds:
        hit = next(
            (
                (gi, g)
                for gi, g in enumerate(golds)
                if gi not in matched_gold and _overlaps(pred, g)
            ),
            None,
        )
        if hit is not None and hit[1] == pred:
            matched_gold.add(hit[0])
            continue
        entry = {"predicted": excerpt(pred)}
        if hit is not None:
            matched_gold.add(hit[0])
            entry["gold"] = excerpt(hit[1])
            entry["bucket"] = _pair_bucket(pred, hit[1])
        else:
            entry["bucket"] = "spurious"
        lines.append(json.dumps(entry, sort_keys=True))
    for gi, gold in enumerate(golds):
        if gi not in matched_gold:
            lines.append(json.dumps({"gold": excerpt(gold), "bucket": "missed"}, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


def _pair_bucket(pred: tuple[int, int, int], gold: tuple[int, int, int]) -> str:
    if pred == gold:
        return "exact"
    if pred[:2] == gold[:2]:
        return "type_confusion"
    if pred[2] == gold[2] and pred[0] <= gold[0] and gold[1] <= pred[1]:
        return "over_extension"
    if pred[2] == gold[2] and gold[0] <= pred[0] and pred[1] <= gold[1]:
        return "truncation"
    return "partial_overlap"
