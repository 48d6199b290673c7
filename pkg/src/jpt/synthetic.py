"""Synthetic disambiguation corpus.

Sentences place an entity name before the phrase that reveals its class:
"... Paris released a new album" (person) vs "... Paris is a beautiful
city" (location). Ambiguous names appear with both continuations behind
string-identical prefixes, so any model reading only left context is
capped at the class prior on those tokens. Unambiguous name pools give
the task enough learnable signal elsewhere.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from jpt.data import (
    DatasetRecord,
    EntitySchema,
    EntityTypeDef,
    GoldAnnotation,
    tokenize,
)

PERSON_DEF = "A named individual, including fictional characters"
LOCATION_DEF = "A geographical place such as a city, country, or landmark"

AMBIGUOUS_NAMES = (
    "Paris", "Clinton", "Jordan", "Phoenix", "Austin",
    "Madison", "Jackson", "Sydney", "Victoria", "Dakota",
)
PERSON_NAMES = (
    "Einstein", "Mozart", "Chaplin", "Curie", "Dickens",
    "Rembrandt", "Kahlo", "Hendrix",
)
LOCATION_NAMES = (
    "Tokyo", "Norway", "Berlin", "Kenya", "Lisbon",
    "Oslo", "Cairo", "Havana",
)
PERSON_CUES = (
    "released a new album",
    "signed a record deal",
    "won the best actor award",
    "gave a farewell speech",
    "published a second memoir",
)
LOCATION_CUES = (
    "is a beautiful city",
    "has two million residents",
    "hosted the winter games",
    "lies on the river delta",
    "built a new airport",
)
PREFIXES = (
    "We heard that",
    "Reports confirmed that",
    "Everyone already knows",
    "Last week apparently",
    "The press wrote that",
)


@dataclass(frozen=True)
class SyntheticGrammar:
    """Vocabulary pools for the generator; defaults reproduce the stock task."""

    ambiguous_names: tuple[str, ...] = AMBIGUOUS_NAMES
    person_names: tuple[str, ...] = PERSON_NAMES
    location_names: tuple[str, ...] = LOCATION_NAMES
    person_cues: tuple[str, ...] = PERSON_CUES
    location_cues: tuple[str, ...] = LOCATION_CUES
    prefixes: tuple[str, ...] = PREFIXES
    ambiguous_fraction: float = 0.5

    def __post_init__(self) -> None:
        overlap = set(self.person_names) & set(self.location_names)
        if overlap:
            raise ValueError(f"unambiguous pools overlap: {sorted(overlap)}")
        if not 0.0 <= self.ambiguous_fraction <= 1.0:
            raise ValueError("ambiguous_fraction must be in [0, 1]")

    def schema(self) -> EntitySchema:
        return EntitySchema(
            types=(
                EntityTypeDef("PERSON", PERSON_DEF),
                EntityTypeDef("LOCATION", LOCATION_DEF),
            )
        )


def _record(
    schema: EntitySchema, prefix: str, name: str, cue: str, type_index: int, ambiguous: bool
) -> DatasetRecord:
    text = tokenize(f"{prefix} {name} {cue}")
    slot = len(prefix.split())
    assert text.tokens[slot] == name
    return DatasetRecord(
        text=text,
        schema=schema,
        gold=GoldAnnotation(spans=((slot, slot + 1, type_index),)),
        ambiguous_tokens=(slot,) if ambiguous else (),
    )


def generate_synthetic(
    grammar: SyntheticGrammar | None = None, count: int = 64, seed: int = 0
) -> list[DatasetRecord]:
    """Deterministic corpus of ``count`` records.

    Ambiguous items come in adjacent pairs sharing prefix and name, one
    record per class, keeping ambiguous class counts within one of equal.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    grammar = grammar or SyntheticGrammar()
    rng = random.Random(seed)
    schema = grammar.schema()
    n_pairs = round(count * grammar.ambiguous_fraction / 2)
    schedule = ["pair"] * n_pairs + ["single"] * (count - 2 * n_pairs)
    rng.shuffle(schedule)
    records: list[DatasetRecord] = []
    pair_flip = rng.random() < 0.5  # class order inside pairs
    single_flip = rng.random() < 0.5  # class of lone records
    for kind in schedule:
        if kind == "pair":
            prefix = rng.choice(grammar.prefixes)
            name = rng.choice(grammar.ambiguous_names)
            pair = [
                (rng.choice(grammar.person_cues), 1),
                (rng.choice(grammar.location_cues), 2),
            ]
            if pair_flip:
                pair.reverse()
            pair_flip = not pair_flip
            for cue, type_index in pair:
                records.append(_record(schema, prefix, name, cue, type_index, True))
        elif single_flip:
            single_flip = False
            records.append(
                _record(
                    schema,
                    rng.choice(grammar.prefixes),
                    rng.choice(grammar.person_names),
                    rng.choice(grammar.person_cues),
                    1,
                    False,
                )
            )
        else:
            single_flip = True
            records.append(
                _record(
                    schema,
                    rng.choice(grammar.prefixes),
                    rng.choice(grammar.location_names),
                    rng.choice(grammar.location_cues),
                    2,
                    False,
                )
            )
    return records


def ambiguous_pairs(records: list[DatasetRecord]) -> list[tuple[DatasetRecord, DatasetRecord]]:
    """Adjacent ambiguous pairs, as emitted by generate_synthetic."""
    pairs = []
    i = 0
    while i < len(records) - 1:
        a, b = records[i], records[i + 1]
        if a.ambiguous_tokens and b.ambiguous_tokens:
            a_slot, b_slot = a.ambiguous_tokens[0], b.ambiguous_tokens[0]
            if (
                a_slot == b_slot
                and a.text.tokens[: a_slot + 1] == b.text.tokens[: b_slot + 1]
                and a.gold.spans[0][2] != b.gold.spans[0][2]
            ):
                pairs.append((a, b))
                i += 2
                continue
        i += 1
    return pairs
