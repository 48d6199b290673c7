"""CLI exit codes, chunked prediction, goldens, train/eval round-trip."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from jpt.cli import EXIT_DATA, EXIT_MODEL, EXIT_OK, EXIT_USAGE, main
from jpt.data import tokenize, write_jsonl
from jpt.synthetic import generate_synthetic

FIXTURES = Path(__file__).parent / "fixtures" / "cli"
SCHEMA = str(FIXTURES / "person_location_schema.json")


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# -- usage errors -----------------------------------------------------------


def test_unknown_command_exits_1(capsys):
    code, _, err = run(capsys, "bogus")
    assert code == EXIT_USAGE
    assert "invalid choice" in err


def test_unknown_flag_exits_1(capsys):
    code, _, _ = run(capsys, "predict", "--demo", "--schema", SCHEMA, "--text", "x",
                     "--bogus")
    assert code == EXIT_USAGE


def test_no_command_prints_help_exits_1(capsys):
    code, _, err = run(capsys)
    assert code == EXIT_USAGE
    assert "command" in err


def test_chunk_must_be_positive(capsys):
    code, _, err = run(capsys, "predict", "--demo", "--schema", SCHEMA,
                       "--text", "a b c", "--chunk", "0")
    assert code == EXIT_USAGE
    assert "--chunk" in err


# -- predict ----------------------------------------------------------------


def test_predict_outputs_labels_and_spans(capsys):
    text = "Jordan visited Paris ."
    code, out, _ = run(capsys, "predict", "--demo", "--schema", SCHEMA, "--text", text)
    assert code == EXIT_OK
    payload = json.loads(out)
    assert len(payload["labels"]) == len(tokenize(text))
    assert "timing_us" not in payload
    for span in payload["spans"]:
        assert text[span["char_start"] : span["char_end"]] == span["text"]


def test_predict_empty_text_exits_2(capsys):
    code, _, err = run(capsys, "predict", "--demo", "--schema", SCHEMA, "--text", "  ")
    assert code == EXIT_DATA
    assert "empty input" in err


def test_predict_missing_schema_file_exits_2(capsys):
    code, _, _ = run(capsys, "predict", "--demo", "--schema", "/nope.json",
                     "--text", "hello world")
    assert code == EXIT_DATA


def test_predict_from_file(capsys, tmp_path):
    source = tmp_path / "in.txt"
    source.write_text("Amy flew to Oslo .")
    code, out, _ = run(capsys, "predict", "--demo", "--schema", SCHEMA,
                       "--file", str(source))
    assert code == EXIT_OK
    assert len(json.loads(out)["labels"]) == 5


def test_chunked_spans_stay_inside_windows(capsys):
    text = "Jordan visited Paris twice last year with Amy ."
    n_tokens = len(tokenize(text))
    chunk = 3
    code, out, _ = run(capsys, "predict", "--demo", "--schema", SCHEMA,
                       "--text", text, "--chunk", str(chunk))
    assert code == EXIT_OK
    payload = json.loads(out)
    assert payload["chunks"] == -(-n_tokens // chunk)  # ceil division
    assert len(payload["labels"]) == n_tokens
    for span in payload["spans"]:
        # a span may never straddle a window boundary
        assert span["start"] // chunk == (span["end"] - 1) // chunk
        assert text[span["char_start"] : span["char_end"]] == span["text"]


def test_chunked_covers_every_token_once(capsys):
    text = "one two three four five"
    code, out, _ = run(capsys, "predict", "--demo", "--schema", SCHEMA,
                       "--text", text, "--chunk", "2", "--probs")
    assert code == EXIT_OK
    payload = json.loads(out)
    assert len(payload["labels"]) == 5
    assert len(payload["probs"]) == 5


# -- train / eval -----------------------------------------------------------


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "train.jsonl"
    write_jsonl(generate_synthetic(count=8, seed=0), path)
    return str(path)


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, dataset):
    out = tmp_path_factory.mktemp("cli") / "run"
    cfg = out.parent / "train.cfg"
    cfg.write_text(
        "train.epochs = 1\nmodel.d_model = 16\nmodel.n_heads = 2\nmodel.n_layers = 1\n"
    )
    code = main(["train", "--config", str(cfg), "--data", dataset, "--out", str(out)])
    assert code == EXIT_OK
    return str(out)


def test_train_writes_checkpoint(trained_dir):
    assert (Path(trained_dir) / "checkpoint.jptw").exists()
    assert (Path(trained_dir) / "metrics.jsonl").exists()


def test_train_unknown_ablation_exits_1(capsys, dataset):
    code, _, err = run(capsys, "train", "--ablation", "warp", "--data", dataset,
                       "--out", "/tmp/never")
    assert code == EXIT_USAGE
    assert "warp" in err


def test_train_missing_data_exits_2(capsys):
    code, _, _ = run(capsys, "train", "--data", "/nope.jsonl", "--out", "/tmp/never")
    assert code == EXIT_DATA


def test_train_bad_config_value_exits_2(capsys, dataset, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("train.epochs = many\n")
    code, _, err = run(capsys, "train", "--config", str(cfg), "--data", dataset,
                       "--out", str(tmp_path / "out"))
    assert code == EXIT_DATA
    assert "train.epochs" in err


def test_eval_trained_model(capsys, trained_dir, dataset, tmp_path):
    report_path = tmp_path / "report.json"
    code, out, _ = run(capsys, "eval", "--model", trained_dir, "--data", dataset,
                       "--report", str(report_path))
    assert code == EXIT_OK
    assert set(json.loads(out)) == {"precision", "recall", "f1", "n_gold", "n_pred"}
    full = json.loads(report_path.read_text())
    assert "confusion" in full
    assert full["n_records"] == 8


def test_eval_empty_dataset_exits_2(capsys, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    code, _, err = run(capsys, "eval", "--demo", "--data", str(empty))
    assert code == EXIT_DATA
    assert "empty" in err


def test_missing_checkpoint_exits_3(capsys, dataset, tmp_path):
    code, _, err = run(capsys, "eval", "--model", str(tmp_path), "--data", dataset)
    assert code == EXIT_MODEL
    assert "train" in err  # remedy text points at the train command


# -- profile ----------------------------------------------------------------


def test_profile_prints_all_methods(capsys):
    code, out, _ = run(capsys, "profile", "--c-out", "4.0")
    assert code == EXIT_OK
    for method in ("jpt", "generative-single-call", "generative-per-type",
                   "generative-rewrite"):
        assert method in out
    jpt_line = next(line for line in out.splitlines() if line.startswith("jpt"))
    assert "1.00" in jpt_line  # reference ratio


# -- cache ------------------------------------------------------------------


def test_cache_warm_then_verify(capsys, tmp_path):
    cache = tmp_path / "cache.bin"
    code, out, _ = run(capsys, "cache", "warm", "--schema", SCHEMA, "--cache", str(cache))
    assert code == EXIT_OK
    added = json.loads(out)["added"]
    assert added > 0
    code, out, _ = run(capsys, "cache", "verify", "--cache", str(cache))
    assert code == EXIT_OK
    assert json.loads(out)["records"] == added


def test_cache_verify_corrupt_exits_2(capsys, tmp_path):
    cache = tmp_path / "cache.bin"
    cache.write_bytes(b"\xff\xff\xff\xff garbage")
    code, _, _ = run(capsys, "cache", "verify", "--cache", str(cache))
    assert code == EXIT_DATA


def test_cache_missing_action_exits_1(capsys):
    code, _, _ = run(capsys, "cache")
    assert code == EXIT_USAGE


# -- attention / prompt -----------------------------------------------------


def test_attention_csv_headers_are_tokens(capsys, tmp_path):
    out_path = tmp_path / "attn.csv"
    code, _, _ = run(capsys, "attention", "--demo", "--schema", SCHEMA,
                     "--text", "Paris released a new album", "--out", str(out_path))
    assert code == EXIT_OK
    header = out_path.read_text().splitlines()[0]
    assert header == ",Paris,released,a,new,album"


def test_prompt_matches_golden(capsys):
    code, out, _ = run(capsys, "prompt", "--schema", SCHEMA,
                       "--text", "Paris released a new album")
    assert code == EXIT_OK
    want = (FIXTURES / "prompt_full.txt").read_text(encoding="utf-8")
    assert out == want


def test_prompt_single_pass_shows_text_once(capsys):
    code, out, _ = run(capsys, "prompt", "--schema", SCHEMA, "--variant", "single_pass",
                       "--text", "Paris released a new album")
    assert code == EXIT_OK
    assert out.count("Paris released a new album") == 1
    assert "The first time" not in out


def test_prompt_unknown_variant_exits_1(capsys):
    code, _, _ = run(capsys, "prompt", "--schema", SCHEMA, "--variant", "sideways",
                     "--text", "hello")
    assert code == EXIT_USAGE
