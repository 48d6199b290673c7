"""Command-line surface: predict, train, eval, profile, serve, cache,
attention, prompt.

Exit codes: 0 success, 1 usage, 2 data problem, 3 model problem.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from jpt.config import Config, ConfigError, load_config
from jpt.data import DataError, load_schema, read_conll, read_jsonl, tokenize

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_MODEL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract reserves 2 for data
    problems, so route usage failures through our own exception."""

    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="jpt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    def model_flags(p):
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--model", help="directory with checkpoint.jptw")
        group.add_argument(
            "--demo", action="store_true", help="small untrained demo model"
        )

    p = sub.add_parser("predict", help="tag one text")
    model_flags(p)
    p.add_argument("--schema", required=True, help="schema JSON file")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--text")
    source.add_argument("--file", help="read the text from this file")
    p.add_argument("--chunk", type=int, metavar="TOKENS",
                   help="split long inputs into windows of this many tokens")
    p.add_argument("--probs", action="store_true", help="include per-token probabilities")

    p = sub.add_parser("train", help="fit adapters and heads on a dataset")
    p.add_argument("--config", help="key = value training config file")
    p.add_argument("--ablation", default="full", help="model variant to train")
    p.add_argument("--data", required=True, help="JSONL or CoNLL dataset")
    p.add_argument("--out", required=True, help="checkpoint output directory")

    p = sub.add_parser("eval", help="score a model on a dataset")
    model_flags(p)
    p.add_argument("--data", required=True, help="JSONL or CoNLL dataset")
    p.add_argument("--report", help="write the full report JSON here")

    p = sub.add_parser("profile", help="compare token-economics of tagging methods")
    p.add_argument("--c-in", type=float, default=1.0, help="cost per input token")
    p.add_argument("--c-out", type=float, default=4.0, help="cost per output token")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--bind", default="127.0.0.1:8000")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--model", help="directory with checkpoint.jptw")
    group.add_argument("--demo", action="store_true")

    p = sub.add_parser("cache", help="embedding cache maintenance")
    cache_sub = p.add_subparsers(dest="cache_command", metavar="action")
    cw = cache_sub.add_parser("warm", help="precompute schema embeddings")
    cw.add_argument("--schema", required=True)
    cw.add_argument("--cache", required=True, help="cache file path")
    cw.add_argument("--d-enc", type=int, default=16)
    cv = cache_sub.add_parser("verify", help="check cache integrity")
    cv.add_argument("--cache", required=True)

    p = sub.add_parser("attention", help="dump second-pass attention roll-up CSV")
    model_flags(p)
    p.add_argument("--schema", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--out", required=True, help="CSV output path")

    p = sub.add_parser("prompt", help="print the rendered prompt")
    p.add_argument("--schema", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--variant", default="full")
    p.add_argument("--no-definitions", action="store_true",
                   help="leave type definitions out of the prompt")
    return parser


def _load_core(args):
    from jpt.service import demo_core
    from jpt.weights_io import WeightsError

    if getattr(args, "demo", False):
        return demo_core()
    from jpt.model import load_core

    checkpoint = Path(args.model) / "checkpoint.jptw"
    if not checkpoint.exists():
        raise ModelError(f"{checkpoint} not found; run 'jpt train --out {args.model}' first")
    try:
        return load_core(checkpoint)
    except (WeightsError, RuntimeError, KeyError, ValueError) as exc:
        raise ModelError(f"cannot load {checkpoint}: {exc}")


class ModelError(Exception):
    pass


def _read_records(path: str):
    p = Path(path)
    if not p.exists():
        raise DataError(f"dataset {p} not found")
    records = read_conll(p) if p.suffix in (".conll", ".txt") else read_jsonl(p)
    if not records:
        raise DataError(f"dataset {p} is empty")
    return records


def _cmd_predict(args) -> int:
    from jpt.service import ServiceError, predict_once, strip_timing

    core = _load_core(args)
    schema = load_schema(args.schema)
    if args.file is not None:
        source = Path(args.file)
        if not source.exists():
            raise DataError(f"text file {source} not found")
        text = source.read_text(encoding="utf-8")
    else:
        text = args.text

    if args.chunk is not None:
        if args.chunk < 1:
            raise UsageError("--chunk must be >= 1")
        payload = _predict_chunked(core, schema, text, args.chunk, args.probs)
    else:
        try:
            payload, _ = predict_once(core, schema, text, return_probs=args.probs)
        except ServiceError as exc:
            raise DataError(exc.message)
        payload = strip_timing(payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def _predict_chunked(core, schema, text, chunk_tokens, return_probs) -> dict:
    """Windows of whole tokens; each window is tagged independently, so no
    span ever crosses a window boundary."""
    from jpt.service import ServiceError, predict_once

    tokenized = tokenize(text, core.tokenizer)
    if len(tokenized) == 0:
        raise DataError("empty input")
    merged = {"schema_id": schema.content_id(), "labels": [], "spans": [], "chunks": 0}
    if return_probs:
        merged["probs"] = []
    for start in range(0, len(tokenized), chunk_tokens):
        end = min(start + chunk_tokens, len(tokenized)) - 1
        c_start = tokenized.char_spans[start][0]
        c_end = tokenized.char_spans[end][1]
        piece = tokenized.raw_text[c_start:c_end]
        try:
            payload, _ = predict_once(core, schema, piece, return_probs=return_probs)
        except ServiceError as exc:
            raise DataError(f"chunk starting at token {start}: {exc.message}")
        merged["labels"].extend(payload["labels"])
        if return_probs:
            merged["probs"].extend(payload["probs"])
        for span in payload["spans"]:
            span["start"] += start
            span["end"] += start
            span["char_start"] += c_start
            span["char_end"] += c_start
            merged["spans"].append(span)
        merged["chunks"] += 1
    return merged


def _train_tagger_config(config: Config, variant: str):
    from jpt.backbone import BackboneConfig, LoraConfig
    from jpt.model import TaggerConfig

    rank = config.get_int("model.lora_rank", 4)
    lora = None
    if rank > 0:
        lora = LoraConfig(
            r=rank,
            alpha=config.get_float("model.lora_alpha", 2.0 * rank),
            rng_seed=config.get_int("model.lora_seed", 1),
        )
    return TaggerConfig(
        backbone=BackboneConfig(
            vocab_size=config.get_int("model.vocab_size", 512),
            d_model=config.get_int("model.d_model", 48),
            n_layers=config.get_int("model.n_layers", 2),
            n_heads=config.get_int("model.n_heads", 4),
            max_seq_len=config.get_int("model.max_seq_len", 512),
            rng_seed=config.get_int("model.seed", 0),
        ),
        lora=lora,
        d_p=config.get_int("model.d_p", 16),
        d_enc=config.get_int("model.d_enc", 16),
        token_mlp_hidden=config.get_int_tuple("model.token_mlp_hidden", (64,)),
        variant=variant,
        rng_seed=config.get_int("model.seed", 0),
    )


def _train_config(config: Config):
    from jpt.training import TrainConfig

    return TrainConfig(
        learning_rate=config.get_float("train.learning_rate", 5e-3),
        warmup_ratio=config.get_float("train.warmup_ratio", 0.10),
        effective_batch=config.get_int("train.effective_batch", 8),
        accumulation=config.get_int("train.accumulation", 2),
        epochs=config.get_int("train.epochs", 40),
        max_seq_len=config.get_int("train.max_seq_len", 512),
        weight_decay=config.get_float("train.weight_decay", 0.01),
        clip_norm=config.get_float("train.clip_norm", 1.0),
        seed=config.get_int("train.seed", 0),
    )


def _cmd_train(args) -> int:
    from jpt.model import TaggerCore, VARIANTS
    from jpt.training import train

    if args.ablation not in VARIANTS:
        raise UsageError(f"unknown ablation {args.ablation!r}; choose from {VARIANTS}")
    config = load_config(args.config)
    records = _read_records(args.data)
    try:
        core = TaggerCore(_train_tagger_config(config, args.ablation))
        result = train(core, records, _train_config(config), out_dir=args.out)
    except ValueError as exc:
        raise DataError(str(exc))
    status = "aborted (non-finite loss), rolled back" if result.aborted else "ok"
    print(json.dumps({
        "status": status,
        "steps": result.total_steps,
        "checkpoint": str(result.checkpoint_path),
        "backbone_untouched": result.backbone_untouched,
    }, indent=2))
    return EXIT_OK if not result.aborted else EXIT_MODEL


def _cmd_eval(args) -> int:
    from jpt.service import ServiceError, _evaluate_records

    core = _load_core(args)
    records = _read_records(args.data)
    try:
        report, n_records = _evaluate_records(core, records)
    except ServiceError as exc:
        raise DataError(exc.message)
    payload = report.to_dict()
    payload["n_records"] = n_records
    if args.report:
        Path(args.report).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    print(json.dumps(
        {k: payload[k] for k in ("precision", "recall", "f1", "n_gold", "n_pred")},
        indent=2, sort_keys=True,
    ))
    return EXIT_OK


def _cmd_profile(args) -> int:
    from jpt.costs import CostModel, cost_table, profile_cost

    rows = profile_cost(CostModel(c_in=args.c_in, c_out=args.c_out))
    print(cost_table(rows))
    return EXIT_OK


def _cmd_serve(args) -> int:
    from jpt.service import serve

    try:
        serve(args.bind, model_dir=args.model, demo=args.demo)
    except FileNotFoundError as exc:
        raise ModelError(str(exc))
    except OSError as exc:
        print(f"cannot bind {args.bind}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def _cmd_cache(args) -> int:
    from jpt.definitions import EmbeddingCache, EmbeddingError, HashEmbeddingProvider, warm_cache

    if args.cache_command == "warm":
        schema = load_schema(args.schema)
        cache = EmbeddingCache(args.cache)
        added = warm_cache(schema, HashEmbeddingProvider(d_enc=args.d_enc), cache)
        print(json.dumps({"added": added, "total": len(cache)}))
        return EXIT_OK
    if args.cache_command == "verify":
        if not Path(args.cache).exists():
            raise DataError(f"cache file {args.cache} not found")
        try:
            count = EmbeddingCache(args.cache).verify()
        except EmbeddingError as exc:
            raise DataError(str(exc))
        print(json.dumps({"records": count, "status": "ok"}))
        return EXIT_OK
    raise UsageError("cache needs an action: warm or verify")


def _cmd_attention(args) -> int:
    from jpt.backbone import attention_rollup, rollup_to_csv

    core = _load_core(args)
    schema = load_schema(args.schema)
    if not args.text.strip():
        raise DataError("empty input")
    out = core.run(schema, args.text, record_attention=True)
    render = out.render
    if not render.duplicated:
        raise DataError("attention roll-up needs the duplicated variant")
    rollup = attention_rollup(
        out.encoder_output, render.second_pass_positions, render.first_pass_positions
    )
    tokens = [render.tokens[p] for p in render.first_pass_positions]
    Path(args.out).write_text(rollup_to_csv(rollup, tokens, tokens), encoding="utf-8")
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_prompt(args) -> int:
    from jpt.model import VARIANTS
    from jpt.prompting import SINGLE_PASS_TEMPLATE, PromptTemplate, render_prompt

    if args.variant not in VARIANTS:
        raise UsageError(f"unknown variant {args.variant!r}; choose from {VARIANTS}")
    schema = load_schema(args.schema)
    if not args.text.strip():
        raise DataError("empty input")
    template = SINGLE_PASS_TEMPLATE if args.variant == "single_pass" else PromptTemplate()
    render = render_prompt(
        schema,
        tokenize(args.text),
        template=template,
        definitions_in_prompt=not args.no_definitions,
    )
    print(render.rendered_text)
    return EXIT_OK


_COMMANDS = {
    "predict": _cmd_predict,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "profile": _cmd_profile,
    "serve": _cmd_serve,
    "cache": _cmd_cache,
    "attention": _cmd_attention,
    "prompt": _cmd_prompt,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConfigError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
