"""Chat-prompt rendering with input duplication and exact position maps.

The rendered prompt carries the schema twice over two channels (definition
lines in a user turn, plus definition embeddings elsewhere) and the input
text twice, so each token's second occurrence can attend to the whole
sentence under a causal mask. Position maps are recorded while rendering,
never recovered by substring search afterwards, so they stay exact even if
a subword tokenizer would merge across segment boundaries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from jpt.data import EntitySchema, HashVocab, ReferenceTokenizer, TokenizedText

DEFAULT_SYSTEM_TEXT = """You are an information-extraction assistant.
Task: Perform Named Entity Recognition (NER) on the user-supplied text.
The user will give you the supported entity types and their definitions.
You will read the types and definitions to understand what each entity type means.
The user will give you the text twice in the format "The first time: 'actual text' The second time: 'actual text'".
Output Format: Output ONE annotated text with entities as <entity_text, ENTITY_TYPE>
Rules:
(1) Keep multi-word entities together;
(2) Only use provided types;
(3) Output once;
(4) No bare-noun labelling (e.g., don't label "museum" unless part of proper name);
(5) Output types exactly as listed;
(6) Only label if clearly matches definition."""

DEFAULT_ACK_TEXT = (
    "I have read the definitions. Please provide the text in the format "
    "'The first time: <text> The second time: <text>'"
)

DEFAULT_SCHEMA_TURN_TEMPLATE = (
    "Supported entity types ({count}): {names}\nEntity type definitions:\n{definitions}"
)

DEFAULT_DUPLICATED_TURN_TEMPLATE = "The first time: '{text}' The second time: '{text}'"

SINGLE_TURN_TEMPLATE = "The text: '{text}'"


@dataclass(frozen=True)
class PromptTemplate:
    """Template strings for the four chat turns; rendering is byte-stable."""

    system_text: str = DEFAULT_SYSTEM_TEXT
    schema_turn_template: str = DEFAULT_SCHEMA_TURN_TEMPLATE
    assistant_ack_text: str = DEFAULT_ACK_TEXT
    duplicated_turn_template: str = DEFAULT_DUPLICATED_TURN_TEMPLATE
    turn_start: str = "<|im_start|>"
    turn_end: str = "<|im_end|>"

    def text_turn_parts(self) -> tuple[str, ...]:
        """Split the text turn template at its {text} placeholders.

        Returns the literal segments around the text slots: two slots give
        (prefix, separator, suffix); one slot gives (prefix, suffix).
        """
        parts = self.duplicated_turn_template.split("{text}")
        if len(parts) not in (2, 3):
            raise ValueError(
                "duplicated_turn_template must contain the {text} placeholder once or twice"
            )
        return tuple(parts)


SINGLE_PASS_TEMPLATE = PromptTemplate(
    system_text=DEFAULT_SYSTEM_TEXT.replace(
        "The user will give you the text twice in the format "
        "\"The first time: 'actual text' The second time: 'actual text'\".",
        "The user will give you the text in the format \"The text: 'actual text'\".",
    ),
    assistant_ack_text=(
        "I have read the definitions. Please provide the text in the format "
        "'The text: <text>'"
    ),
    duplicated_turn_template=SINGLE_TURN_TEMPLATE,
)


@dataclass(frozen=True)
class PromptRender:
    """A rendered prompt: token ids plus the maps into the duplicated text.

    ``first_pass_positions[i]`` / ``second_pass_positions[i]`` are the
    absolute positions of original token i's two occurrences;
    ``sep_position`` is the last token of the separator text between them.
    For single-occurrence renders the two maps coincide and
    ``sep_position`` is -1.
    """

    token_ids: tuple[int, ...]
    tokens: tuple[str, ...]
    rendered_text: str
    first_pass_positions: tuple[int, ...]
    second_pass_positions: tuple[int, ...]
    sep_position: int
    duplicated: bool = True

    def __post_init__(self) -> None:
        n = len(self.first_pass_positions)
        if len(self.second_pass_positions) != n:
            raise ValueError("position maps must have equal length")
        if not self.duplicated:
            return
        for i, second in enumerate(self.second_pass_positions):
            if second <= self.sep_position:
                raise ValueError(f"second pass position {second} not after separator")
            if self.token_ids[second] != self.token_ids[self.first_pass_positions[i]]:
                raise ValueError(f"token mismatch between passes at original index {i}")
        for first in self.first_pass_positions:
            if first >= self.sep_position:
                raise ValueError(f"first pass position {first} not before separator")

    def __len__(self) -> int:
        return len(self.token_ids)


class _Builder:
    """Accumulates tokenized segments, recording absolute token offsets."""

    def __init__(self, tokenizer: ReferenceTokenizer, vocab: HashVocab) -> None:
        self.tokenizer = tokenizer
        self.vocab = vocab
        self.ids: list[int] = []
        self.tokens: list[str] = []
        self.text_parts: list[str] = []

    def literal(self, segment: str) -> None:
        self.text_parts.append(segment)
        for piece in self.tokenizer.tokenize(segment).tokens:
            self.tokens.append(piece)
            self.ids.append(self.vocab.id_of(piece))

    def content(self, text: TokenizedText) -> list[int]:
        """Insert the input text; returns the absolute positions it occupies."""
        self.text_parts.append(text.raw_text)
        base = len(self.ids)
        for piece in text.tokens:
            self.tokens.append(piece)
            self.ids.append(self.vocab.id_of(piece))
        return list(range(base, len(self.ids)))

    @property
    def last_position(self) -> int:
        return len(self.ids) - 1


def render_schema_turn(
    schema: EntitySchema, template: PromptTemplate, definitions_in_prompt: bool = True
) -> str:
    """The schema turn: type-name list plus one definition line per type, in
    schema order. With ``definitions_in_prompt`` off, definition lines carry
    the bare type name instead (name-only prompt channel)."""
    names = schema.names()
    def_lines = "\n".join(
        f'- "{t.name}": "{t.definition if definitions_in_prompt else t.name}"'
        for t in schema.types
    )
    return template.schema_turn_template.format(
        count=schema.n_types, names=json.dumps(names), definitions=def_lines
    )


def render_prompt(
    schema: EntitySchema,
    text: TokenizedText,
    template: PromptTemplate | None = None,
    tokenizer: ReferenceTokenizer | None = None,
    vocab: HashVocab | None = None,
    definitions_in_prompt: bool = True,
) -> PromptRender:
    """Render the full chat prompt and record both text-occurrence maps.

    Raises ValueError for an empty input text or an empty schema.
    """
    if len(text) == 0:
        raise ValueError("empty input")
    if schema.n_types == 0:
        raise ValueError("empty schema")
    template = template or PromptTemplate()
    tokenizer = tokenizer or ReferenceTokenizer()
    vocab = vocab or HashVocab(vocab_size=8192)

    b = _Builder(tokenizer, vocab)
    ts, te = template.turn_start, template.turn_end
    b.literal(f"{ts}system\n{template.system_text}\n{te}\n")
    schema_turn = render_schema_turn(schema, template, definitions_in_prompt)
    b.literal(f"{ts}user\n{schema_turn}\n{te}\n")
    b.literal(f"{ts}assistant\n{template.assistant_ack_text}\n{te}\n")

    parts = template.text_turn_parts()
    if len(parts) == 3:
        prefix, middle, suffix = parts
        b.literal(f"{ts}user\n{prefix}")
        first_positions = b.content(text)
        b.literal(middle)
        sep_position = b.last_position
        second_positions = b.content(text)
        b.literal(f"{suffix}\n{te}\n")
        duplicated = True
    else:
        prefix, suffix = parts
        b.literal(f"{ts}user\n{prefix}")
        first_positions = b.content(text)
        second_positions = first_positions
        sep_position = -1
        b.literal(f"{suffix}\n{te}\n")
        duplicated = False

    return PromptRender(
        token_ids=tuple(b.ids),
        tokens=tuple(b.tokens),
        rendered_text="".join(b.text_parts),
        first_pass_positions=tuple(first_positions),
        second_pass_positions=tuple(second_positions),
        sep_position=sep_position,
        duplicated=duplicated,
    )


def duplicate_core(tokens: list[int], sep: int) -> tuple[list[int], int]:
    """Core duplication: tokens ++ [sep] ++ tokens.

    Returns the duplicated sequence and the offset of the second occurrence
    (n + 1). The full prompt pipeline realizes the separator as template
    text instead; this is the bare construction.
    """
    n = len(tokens)
    if n == 0:
        raise ValueError("empty input")
    return list(tokens) + [sep] + list(tokens), n + 1


def extract_second_pass(hidden, positions) -> "np.ndarray":
    """Gather hidden-state rows at the second-occurrence positions, in
    original token order. Works on numpy arrays and torch tensors."""
    length = hidden.shape[0]
    if len(positions) == 0:
        raise ValueError("empty position map")
    for pos in positions:
        if not 0 <= pos < length:
            raise ValueError(
                f"position {pos} out of range for {length} hidden rows "
                "(render/backbone mismatch)"
            )
    idx = list(positions)
    return hidden[idx]
