"""HTTP surface: prediction, evaluation, schema registry, health.

All endpoints sit under /v1 and emit canonical JSON (sorted keys,
compact separators, floats rounded to 9 decimal places) so responses in
deterministic mode are byte-stable. Timing is the one non-deterministic
field; tests strip it before comparing bytes.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import torch
from fastapi import FastAPI, Response

from jpt.backbone import BackboneConfig, LoraConfig, attention_rollup, rollup_to_csv
from jpt.data import DatasetRecord, EntitySchema, tokenize
from jpt.definitions import EmbeddingCache, warm_cache
from jpt.heads import ensemble, sigmoid_probs, softmax_probs
from jpt.model import TaggerConfig, TaggerCore, load_core
from jpt.spans import confusion_matrix, evaluate, merge_spans
from jpt.synthetic import SyntheticGrammar, generate_synthetic

_SYNTHETIC_ID = re.compile(r"^synthetic-(\d+)-(\d+)$")


class ServiceError(Exception):
    def __init__(self, status: int, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.message = message


def canonical_json(payload) -> str:
    return json.dumps(_round_floats(payload), sort_keys=True, separators=(",", ":"))


def _round_floats(x):
    if isinstance(x, float):
        return round(x, 9)
    if isinstance(x, dict):
        return {k: _round_floats(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round_floats(v) for v in x]
    return x


def strip_timing(payload: dict) -> dict:
    return {k: v for k, v in payload.items() if k != "timing_us"}


def demo_core(seed: int = 0) -> TaggerCore:
    """Small deterministic model for demos and golden fixtures; untrained
    but fully functional."""
    return TaggerCore(
        TaggerConfig(
            backbone=BackboneConfig(
                vocab_size=512,
                d_model=32,
                n_layers=2,
                n_heads=4,
                max_seq_len=512,
                rng_seed=seed,
            ),
            lora=LoraConfig(r=4, alpha=8.0, rng_seed=seed + 1),
            rng_seed=seed,
        )
    )


def predict_once(
    core: TaggerCore,
    schema: EntitySchema,
    text: str,
    return_probs: bool = False,
    return_attention: bool = False,
) -> tuple[dict, str | None]:
    """One prediction with per-stage timing; shared by CLI and service.

    Returns (response payload, attention CSV or None). Stage boundaries:
    render (prompt assembly), encode (the single forward pass), classify
    (projections and bilinear scores), decode (ensemble and span merge).
    """
    if not text or not text.strip():
        raise ServiceError(400, "empty input")
    names = schema.names()
    t_start = time.perf_counter_ns()

    tokenized = tokenize(text, core.tokenizer)
    render = core.render(schema, tokenized)
    if len(render.token_ids) > core.config.backbone.max_seq_len:
        raise ServiceError(
            400,
            f"rendered input of {len(render.token_ids)} tokens exceeds the "
            f"model limit of {core.config.backbone.max_seq_len}; split the "
            "text into shorter chunks and merge the spans",
        )
    t_render = time.perf_counter_ns()

    with torch.no_grad():
        hidden2, enc_out = core.encode_render(render, record_attention=return_attention)
        t_encode = time.perf_counter_ns()
        entities = core.entity_matrix(schema)
        sm_scores, sg_scores = core.classify(hidden2, entities)
    t_classify = time.perf_counter_ns()

    preds = ensemble(softmax_probs(sm_scores), sigmoid_probs(sg_scores))
    spans = merge_spans(preds)
    span_rows = []
    for s in spans:
        c_start, c_end = tokenized.char_range_of(s.start, s.end)
        span_rows.append(
            {
                "start": s.start,
                "end": s.end,
                "type": s.type_index,
                "type_name": names[s.type_index - 1],
                "score": float(s.score),
                "char_start": c_start,
                "char_end": c_end,
                "text": tokenized.raw_text[c_start:c_end],
            }
        )
    t_decode = time.perf_counter_ns()

    payload = {
        "schema_id": schema.content_id(),
        "labels": [int(v) for v in preds.labels],
        "tokens": list(tokenized.tokens),
        "spans": span_rows,
        "timing_us": {
            "render": (t_render - t_start) // 1000,
            "encode": (t_encode - t_render) // 1000,
            "classify": (t_classify - t_encode) // 1000,
            "decode": (t_decode - t_classify) // 1000,
            "total": (time.perf_counter_ns() - t_start) // 1000,
        },
    }
    if return_probs:
        payload["probs"] = [[float(p) for p in row] for row in preds.probs]

    attention_csv = None
    if return_attention:
        if render.duplicated:
            rollup = attention_rollup(
                enc_out, render.second_pass_positions, render.first_pass_positions
            )
            tokens = [render.tokens[p] for p in render.first_pass_positions]
            attention_csv = rollup_to_csv(rollup, tokens, tokens)
    return payload, attention_csv


@dataclass
class ServiceState:
    core: TaggerCore
    checksum: str
    cache: EmbeddingCache | None = None
    schemas: dict[str, EntitySchema] = field(default_factory=dict)
    attention_jobs: dict[str, str] = field(default_factory=dict)
    schema_lock: threading.Lock = field(default_factory=threading.Lock)
    eval_lock: threading.Lock = field(default_factory=threading.Lock)
    job_lock: threading.Lock = field(default_factory=threading.Lock)
    job_counter: int = 0

    def register(self, schema: EntitySchema) -> str:
        schema_id = schema.content_id()
        with self.schema_lock:
            if schema_id not in self.schemas:
                if self.cache is not None:
                    warm_cache(schema, self.core.provider, self.cache)
                self.schemas[schema_id] = schema
        return schema_id

    def store_attention(self, csv_text: str) -> str:
        with self.job_lock:
            self.job_counter += 1
            job_id = f"attn-{self.job_counter:06d}"
            self.attention_jobs[job_id] = csv_text
        return job_id


def _json_response(payload, status: int = 200) -> Response:
    return Response(
        content=canonical_json(payload),
        status_code=status,
        media_type="application/json",
    )


def _schema_from_request(state: ServiceState, body: dict) -> EntitySchema:
    inline = body.get("schema")
    schema_id = body.get("schema_id")
    if inline is not None and schema_id is not None:
        raise ServiceError(400, "give either schema or schema_id, not both")
    if inline is not None:
        try:
            return EntitySchema.from_dict(inline)
        except (KeyError, TypeError, ValueError) as exc:
            raise ServiceError(400, f"invalid schema: {exc}")
    if schema_id is not None:
        with state.schema_lock:
            schema = state.schemas.get(schema_id)
        if schema is None:
            raise ServiceError(404, f"unknown schema_id {schema_id!r}")
        return schema
    raise ServiceError(400, "request needs schema or schema_id")


def _records_from_request(state: ServiceState, body: dict) -> list[DatasetRecord]:
    from jpt.data import DataError, _record_from_payload

    dataset_id = body.get("dataset_id")
    rows = body.get("records")
    if dataset_id is not None:
        match = _SYNTHETIC_ID.match(dataset_id)
        if not match:
            raise ServiceError(
                404,
                f"unknown dataset_id {dataset_id!r}; use synthetic-<count>-<seed> "
                "or upload records",
            )
        count, seed = int(match.group(1)), int(match.group(2))
        if count > 10_000:
            raise ServiceError(400, "synthetic dataset capped at 10000 records")
        return generate_synthetic(SyntheticGrammar(), count, seed=seed)
    if not rows:
        raise ServiceError(400, "request needs dataset_id or a records list")
    records = []
    for i, row in enumerate(rows):
        try:
            records.append(_record_from_payload(row, state.core.tokenizer))
        except DataError as exc:
            raise ServiceError(400, f"record {i}: {exc}")
    return records


def create_app(
    core: TaggerCore,
    checksum: str = "unset",
    cache: EmbeddingCache | None = None,
) -> FastAPI:
    state = ServiceState(core=core, checksum=checksum, cache=cache)
    app = FastAPI(title="duplicated-input tagger", version="1")
    app.state.service = state

    @app.exception_handler(ServiceError)
    async def service_error(_, exc: ServiceError):
        return _json_response({"error": exc.message}, status=exc.status)

    @app.get("/healthz")
    def healthz():
        return _json_response(
            {
                "status": "ok",
                "checksum": state.checksum,
                "config": state.core.config.to_dict(),
            }
        )

    @app.post("/v1/predict")
    def predict(body: dict):
        schema = _schema_from_request(state, body)
        state.register(schema)
        payload, attention_csv = predict_once(
            state.core,
            schema,
            body.get("text", ""),
            return_probs=bool(body.get("return_probs")),
            return_attention=bool(body.get("return_attention")),
        )
        if attention_csv is not None:
            payload["attention_job"] = state.store_attention(attention_csv)
        return _json_response(payload)

    @app.post("/v1/evaluate")
    def evaluate_endpoint(body: dict):
        records = _records_from_request(state, body)
        with state.eval_lock:
            report, n_records = _evaluate_records(state.core, records)
        payload = report.to_dict()
        payload["n_records"] = n_records
        return _json_response(payload)

    @app.post("/v1/schema")
    def register_schema(body: dict):
        try:
            schema = EntitySchema.from_dict(body)
        except (KeyError, TypeError, ValueError) as exc:
            raise ServiceError(400, f"invalid schema: {exc}")
        schema_id = state.register(schema)
        return _json_response({"id": schema_id, "n_types": schema.n_types})

    @app.get("/v1/schema/{schema_id}")
    def get_schema(schema_id: str):
        with state.schema_lock:
            schema = state.schemas.get(schema_id)
        if schema is None:
            raise ServiceError(404, f"unknown schema_id {schema_id!r}")
        return _json_response({"id": schema_id, **schema.to_dict()})

    @app.get("/v1/attention/{job_id}")
    def get_attention(job_id: str):
        with state.job_lock:
            csv_text = state.attention_jobs.get(job_id)
        if csv_text is None:
            raise ServiceError(404, f"unknown attention job {job_id!r}")
        return Response(content=csv_text, media_type="text/csv")

    return app


def _evaluate_records(core: TaggerCore, records: list[DatasetRecord]):
    """Offset-packed span evaluation plus token confusion over a record
    list sharing one schema."""
    if not records:
        raise ServiceError(400, "no records to evaluate")
    schema_ids = {r.schema.content_id() for r in records}
    if len(schema_ids) > 1:
        raise ServiceError(400, "records mix schemas; evaluate one schema at a time")
    n_types = records[0].schema.n_types
    pred_all: list[tuple[int, int, int]] = []
    gold_all: list[tuple[int, int, int]] = []
    pred_labels: list[int] = []
    gold_labels: list[int] = []
    offset = 0
    with torch.no_grad():
        for record in records:
            out = core.run(record.schema, record.text)
            pred_all.extend(
                (s.start + offset, s.end + offset, s.type_index) for s in out.spans
            )
            gold_all.extend((s + offset, e + offset, t) for s, e, t in record.gold.spans)
            pred_labels.extend(int(v) for v in out.predictions.labels)
            gold_labels.extend(record.token_labels())
            offset += len(record.text) + 1
    report = evaluate(pred_all, gold_all, n_types)
    report.confusion = confusion_matrix(pred_labels, gold_labels, n_types)
    return report, len(records)


def load_service(model_dir: str | Path) -> FastAPI:
    """Build the app from a directory holding checkpoint.jptw and
    optionally cache.bin."""
    from jpt.weights_io import file_checksum

    model_dir = Path(model_dir)
    checkpoint = model_dir / "checkpoint.jptw"
    if not checkpoint.exists():
        raise FileNotFoundError(
            f"{checkpoint} not found; train first (jpt train --out {model_dir}) "
            "or pass --demo for an untrained demo model"
        )
    cache_path = model_dir / "cache.bin"
    cache = EmbeddingCache(cache_path) if cache_path.exists() else None
    core = load_core(checkpoint, cache=cache)
    return create_app(core, checksum=file_checksum(checkpoint), cache=cache)


def serve(bind: str, model_dir: str | Path | None = None, demo: bool = False) -> None:
    """Run the HTTP service until interrupted."""
    import uvicorn

    if demo:
        app = create_app(demo_core(), checksum="demo")
    else:
        if model_dir is None:
            raise ValueError("serve needs a model directory or demo mode")
        app = load_service(model_dir)
    host, _, port = bind.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
