"""The shipped JSON-schema and the JSONL reader agree on what a record is."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

jsonschema = pytest.importorskip("jsonschema")

from jpt.data import read_jsonl, write_jsonl
from jpt.synthetic import generate_synthetic

SCHEMA_PATH = Path(__file__).parent.parent / "schemas" / "dataset_record.schema.json"


@pytest.fixture(scope="module")
def validator():
    schema = json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))
    jsonschema.Draft202012Validator.check_schema(schema)
    return jsonschema.Draft202012Validator(schema)


def test_written_records_validate(validator, tmp_path):
    path = tmp_path / "corpus.jsonl"
    write_jsonl(generate_synthetic(count=12, seed=3), path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 12
    for line in lines:
        validator.validate(json.loads(line))


def test_minimal_record_validates(validator):
    validator.validate(
        {
            "text": "Paris released a new album",
            "entity_types": [{"name": "person", "definition": "A named individual"}],
        }
    )


@pytest.mark.parametrize(
    "payload",
    [
        {"entity_types": [{"name": "a", "definition": "b"}]},  # no text
        {"text": "x"},  # no entity_types
        {"text": "x", "entity_types": []},  # empty schema
        {"text": "x", "entity_types": [{"name": "a"}]},  # type without definition
        {"text": "x", "entity_types": [{"name": "a", "definition": "b"}],
         "spans": [{"start": 0, "end": 1}]},  # span without type
        {"text": "x", "entity_types": [{"name": "a", "definition": "b"}],
         "spans": [{"start": -1, "end": 1, "type": "a"}]},  # negative offset
        {"text": "x", "entity_types": [{"name": "a", "definition": "b"}],
         "unexpected": 1},  # unknown field
    ],
)
def test_malformed_records_rejected(validator, payload):
    with pytest.raises(jsonschema.ValidationError):
        validator.validate(payload)


def test_schema_matches_reader_acceptance(validator, tmp_path):
    """Anything the schema accepts with consistent offsets, the reader loads."""
    payload = {
        "text": "Jordan visited Paris .",
        "entity_types": [
            {"name": "person", "definition": "A named individual"},
            {"name": "location", "definition": "A place"},
        ],
        "spans": [
            {"start": 0, "end": 6, "type": "person"},
            {"start": 15, "end": 20, "type": "location"},
        ],
    }
    validator.validate(payload)
    path = tmp_path / "one.jsonl"
    path.write_text(json.dumps(payload) + "\n", encoding="utf-8")
    records = read_jsonl(path)
    assert len(records) == 1
    assert records[0].gold.spans == ((0, 1, 1), (2, 3, 2))
