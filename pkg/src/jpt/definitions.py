"""Definition embeddings: pluggable providers, a content-addressed cache,
and projection of raw definition vectors into the shared entity space.

Cache keys cover provider name, output dimension, and the definition text,
so switching providers can never alias stale vectors. The log is
append-only; compaction is an explicit operation.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
import torch

from jpt.data import EntitySchema

log = logging.getLogger(__name__)


class EmbeddingError(Exception):
    """Provider failure or cache corruption."""


class EmbeddingProvider(Protocol):
    name: str
    d_enc: int

    def embed(self, text: str) -> np.ndarray: ...


class HashEmbeddingProvider:
    """Deterministic test double: the vector is a seeded pseudo-random
    stream keyed by the definition text. Reproducible across runs and
    machines; obviously carries no semantics."""

    def __init__(self, d_enc: int = 64, name: str = "hash-v1") -> None:
        self.d_enc = d_enc
        self.name = name
        self.calls = 0

    def embed(self, text: str) -> np.ndarray:
        self.calls += 1
        digest = hashlib.sha256(f"{self.name}\x00{self.d_enc}\x00{text}".encode()).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.d_enc).astype(np.float32)


def cache_key(provider_name: str, d_enc: int, definition: str) -> str:
    payload = f"{provider_name}\x00{d_enc}\x00{definition}".encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


class EmbeddingCache:
    """Append-only vector log with a JSON index sidecar.

    Record layout: u32 header length, JSON header {key, provider, d_enc,
    definition}, then d_enc little-endian float32 values. The sidecar maps
    key -> byte offset and is rebuilt from the log when stale or missing.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self.index_path = self.path.with_suffix(self.path.suffix + ".idx")
        self.hits = 0
        self.misses = 0
        self._index: dict[str, int] = {}
        self._load_index()

    def _load_index(self) -> None:
        if not self.path.exists():
            return
        if self.index_path.exists():
            try:
                payload = json.loads(self.index_path.read_text("utf-8"))
                if payload.get("log_size") == self.path.stat().st_size:
                    self._index = {k: int(v) for k, v in payload["offsets"].items()}
                    return
            except (json.JSONDecodeError, KeyError, ValueError):
                log.warning("%s: unreadable index sidecar, rescanning log", self.index_path)
        self._index = {key: off for key, off, _ in self._scan()}
        self._write_index()

    def _scan(self):
        raw = self.path.read_bytes()
        pos = 0
        while pos < len(raw):
            if pos + 4 > len(raw):
                raise EmbeddingError(f"{self.path}: truncated record at {pos}; rebuild the cache")
            (header_len,) = struct.unpack_from("<I", raw, pos)
            header_start = pos + 4
            try:
                header = json.loads(raw[header_start : header_start + header_len])
                d_enc = int(header["d_enc"])
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise EmbeddingError(
                    f"{self.path}: corrupt record header at {pos}; rebuild the cache"
                ) from exc
            body_start = header_start + header_len
            body_end = body_start + 4 * d_enc
            if body_end > len(raw):
                raise EmbeddingError(f"{self.path}: truncated record at {pos}; rebuild the cache")
            yield header["key"], pos, header
            pos = body_end

    def _write_index(self) -> None:
        payload = {"log_size": self.path.stat().st_size if self.path.exists() else 0,
                   "offsets": self._index}
        self.index_path.write_text(json.dumps(payload), encoding="utf-8")

    def __len__(self) -> int:
        return len(self._index)

    def __contains__(self, key: str) -> bool:
        return key in self._index

    def get(self, key: str) -> np.ndarray | None:
        offset = self._index.get(key)
        if offset is None:
            return None
        header, vec = self._read_record(offset)
        if header["key"] != key:
            raise EmbeddingError(f"{self.path}: index points at wrong record; rebuild the cache")
        return vec

    def put(self, key: str, provider_name: str, definition: str, vector: np.ndarray) -> None:
        vec = np.ascontiguousarray(vector, dtype="<f4")
        header = json.dumps(
            {"key": key, "provider": provider_name, "d_enc": int(vec.shape[0]),
             "definition": definition},
            sort_keys=True,
        ).encode("utf-8")
        with self.path.open("ab") as fh:
            offset = fh.tell()
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(vec.tobytes())
        self._index[key] = offset
        self._write_index()

    def verify(self) -> int:
        """Re-hash every record; raises on any key that no longer matches
        its (provider, d_enc, definition). Returns the verified count."""
        count = 0
        if not self.path.exists():
            return 0
        for key, _, header in self._scan():
            expected = cache_key(header["provider"], header["d_enc"], header["definition"])
            if key != expected:
                raise EmbeddingError(
                    f"{self.path}: hash mismatch for {header['definition']!r}; rebuild the cache"
                )
            count += 1
        return count

    def _read_record(self, offset: int) -> tuple[dict, np.ndarray]:
        with self.path.open("rb") as fh:
            fh.seek(offset)
            (header_len,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(header_len))
            vec = np.frombuffer(fh.read(4 * int(header["d_enc"])), dtype="<f4")
        return header, vec.copy()

    def compact(self) -> None:
        """Rewrite the log keeping one (the latest) record per key."""
        if not self.path.exists():
            return
        latest = {key: offset for key, offset, _ in self._scan()}
        tmp = self.path.with_suffix(".tmp")
        new_index: dict[str, int] = {}
        with tmp.open("wb") as out:
            for key, offset in latest.items():
                header, vec = self._read_record(offset)
                blob = json.dumps(header, sort_keys=True).encode("utf-8")
                new_index[key] = out.tell()
                out.write(struct.pack("<I", len(blob)))
                out.write(blob)
                out.write(vec.astype("<f4").tobytes())
        tmp.replace(self.path)
        self._index = new_index
        self._write_index()


def embed_definition(
    definition: str, provider: EmbeddingProvider, cache: EmbeddingCache | None = None
) -> np.ndarray:
    """Cache-first definition embedding; a miss persists before returning."""
    if not definition:
        raise ValueError("empty definition")
    key = cache_key(provider.name, provider.d_enc, definition)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            cache.hits += 1
            return hit
        cache.misses += 1
    try:
        vec = np.asarray(provider.embed(definition), dtype=np.float32)
    except Exception as exc:
        raise EmbeddingError(f"provider {provider.name!r} failed: {exc}") from exc
    if vec.shape != (provider.d_enc,):
        raise EmbeddingError(
            f"provider {provider.name!r} returned shape {vec.shape}, wanted ({provider.d_enc},)"
        )
    if cache is not None:
        cache.put(key, provider.name, definition, vec)
    return vec


def embed_schema(
    schema: EntitySchema,
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None = None,
    channel: str = "definition",
) -> np.ndarray:
    """Raw embedding matrix [(N+1) x d_enc]: row 0 is the O-class, rows
    1..N follow schema order. ``channel`` picks what gets embedded: the
    definition text, or just the type name (ablation channel; O becomes
    the literal name "O")."""
    if channel not in ("definition", "name"):
        raise ValueError(f"unknown embedding channel {channel!r}")
    if channel == "definition":
        texts = [schema.o_definition] + [t.definition for t in schema.types]
    else:
        texts = ["O"] + [t.name for t in schema.types]
    rows = [embed_definition(text, provider, cache) for text in texts]
    return np.stack(rows).astype(np.float32)


@dataclass
class EntityRepresentations:
    """Projected entity matrix [(N+1) x d_p]; row 0 is the O-class."""

    matrix: torch.Tensor

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2 or self.matrix.shape[0] < 2:
            raise ValueError("entity matrix must be (N+1) x d_p with N >= 1")
        if not torch.isfinite(self.matrix).all():
            raise ValueError("entity matrix contains non-finite entries")

    @property
    def n_types(self) -> int:
        return self.matrix.shape[0] - 1


def project_entities(raw: np.ndarray | torch.Tensor, entity_mlp) -> EntityRepresentations:
    """Row-wise projection of raw definition vectors to d_p."""
    x = torch.as_tensor(np.asarray(raw), dtype=entity_mlp.dtype())
    if x.ndim != 2:
        raise ValueError("raw embedding matrix must be 2-d")
    if x.shape[1] != entity_mlp.d_in:
        raise ValueError(
            f"definition vectors have dim {x.shape[1]}, entity projection wants {entity_mlp.d_in}"
        )
    return EntityRepresentations(matrix=entity_mlp(x))


def build_entity_matrix(
    schema: EntitySchema,
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None,
    entity_mlp,
    channel: str = "definition",
) -> EntityRepresentations:
    raw = embed_schema(schema, provider, cache, channel)
    return project_entities(raw, entity_mlp)


def warm_cache(
    schema: EntitySchema, provider: EmbeddingProvider, cache: EmbeddingCache
) -> int:
    """Pre-populate the cache for a schema (both channels); returns the
    number of entries added."""
    before = len(cache)
    for channel in ("definition", "name"):
        embed_schema(schema, provider, cache, channel)
    return len(cache) - before
