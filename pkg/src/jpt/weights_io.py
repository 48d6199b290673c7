"""Versioned binary weights container.

Layout: magic ``JPTW``, u32 format version, u32 header length, JSON header
(config echo plus a tensor directory), then the tensors' raw bytes,
little-endian float32, in directory order. Everything after the header is
addressed by (offset, nbytes) relative to the data section start.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"JPTW"
VERSION = 1


class WeightsError(Exception):
    """Raised for malformed, truncated, or wrong-version weight files."""


@dataclass
class WeightsFile:
    config: dict
    meta: dict
    tensors: dict[str, np.ndarray]


def _as_f4(value) -> np.ndarray:
    arr = np.asarray(
        value.detach().cpu().numpy() if hasattr(value, "detach") else value
    )
    return np.ascontiguousarray(arr, dtype="<f4")


def save_weights(
    path: str | Path,
    tensors: Mapping[str, object],
    config: dict | None = None,
    meta: dict | None = None,
) -> None:
    directory = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = _as_f4(tensors[name])
        blob = arr.tobytes()
        directory.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)}
        )
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"config": config or {}, "meta": meta or {}, "tensors": directory},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_weights(path: str | Path) -> WeightsFile:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise WeightsError(f"{path}: not a weights container (bad magic)")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise WeightsError(f"{path}: unsupported container version {version}")
    if len(raw) < 12 + header_len:
        raise WeightsError(f"{path}: truncated header")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightsError(f"{path}: corrupt header: {exc}") from exc
    data = raw[12 + header_len :]
    tensors: dict[str, np.ndarray] = {}
    for entry in header.get("tensors", []):
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(data):
            raise WeightsError(f"{path}: truncated tensor {entry['name']!r}")
        arr = np.frombuffer(data[start : start + nbytes], dtype="<f4")
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return WeightsFile(
        config=header.get("config", {}), meta=header.get("meta", {}), tensors=tensors
    )


def file_checksum(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_encoder(path: str | Path, model, meta: dict | None = None) -> None:
    """Persist a ToyCausalEncoder (and any adapters) with its config echo."""
    tensors = {name: param for name, param in model.state_dict().items()}
    config = {"backbone": model.config.to_dict()}
    if model.lora is not None:
        config["lora"] = {
            "r": model.lora.r,
            "alpha": model.lora.alpha,
            "targets": list(model.lora.targets),
            "rng_seed": model.lora.rng_seed,
        }
    save_weights(path, tensors, config=config, meta=meta)


def load_encoder(path: str | Path):
    """Rebuild a ToyCausalEncoder from a container written by save_encoder."""
    import torch

    from jpt.backbone import BackboneConfig, LoraConfig, ToyCausalEncoder

    wf = load_weights(path)
    try:
        config = BackboneConfig(**wf.config["backbone"])
    except (KeyError, TypeError) as exc:
        raise WeightsError(f"{path}: missing or invalid backbone config") from exc
    lora = None
    if "lora" in wf.config:
        payload = dict(wf.config["lora"])
        payload["targets"] = tuple(payload.get("targets", ()))
        lora = LoraConfig(**payload)
    model = ToyCausalEncoder(config, lora)
    state = {k: torch.from_numpy(v) for k, v in wf.tensors.items()}
    model.load_state_dict(state)
    return model
