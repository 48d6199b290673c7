"""jpt: zero-shot NER by passing the input twice through a causal encoder.

The engine duplicates the input so that every token's second occurrence can
attend to the whole sentence under a causal mask, then matches projected
token states against definition-derived entity embeddings with a pair of
bilinear heads.
"""

from jpt.data import (
    DatasetRecord,
    EntitySchema,
    EntityTypeDef,
    GoldAnnotation,
    TokenizedText,
    read_conll,
    read_jsonl,
)
__version__ = "0.1.0"


def __getattr__(name: str):
    # the estimator pulls in torch; keep bare `import jpt` cheap
    if name == "TwoPassTagger":
        from jpt.model import TwoPassTagger

        return TwoPassTagger
    raise AttributeError(f"module 'jpt' has no attribute {name!r}")

__all__ = [
    "DatasetRecord",
    "EntitySchema",
    "EntityTypeDef",
    "GoldAnnotation",
    "TokenizedText",
    "TwoPassTagger",
    "read_conll",
    "read_jsonl",
    "__version__",
]
