"""Record the service fixtures the workbench contract tests replay.

Run from the repository root:

    python scripts/regen_workbench_fixtures.py

Regenerating is only needed when the service payload format or the demo
model changes.  Responses are recorded in deterministic mode with the
timing block stripped, so reruns are byte-identical.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi.testclient import TestClient

from jpt.backbone import deterministic_mode
from jpt.service import canonical_json, create_app, demo_core, strip_timing

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "frontend" / "test" / "fixtures"

SAMPLE_TEXT = "find a cheap italian restaurant nearby with parking"

GENERIC_LOCATION = "A geographical place"
PRECISE_LOCATION = (
    "Any word indicating WHERE: explicit places (NYC, downtown), relative "
    "indicators (nearby, around, close by), directional phrases (east, south "
    "side). Tag the location word itself."
)

CUISINE = {
    "name": "CUISINE",
    "definition": "A style of cooking such as italian or thai",
}
PRICE = {"name": "PRICE", "definition": "A monetary value"}


def restaurant_schema(location_definition: str) -> dict:
    return {
        "types": [
            CUISINE,
            {"name": "LOCATION", "definition": location_definition},
            PRICE,
        ]
    }


# Gold annotations for the metrics panel: char-offset spans aligned to
# token boundaries, types referenced by name.
GOLD_RECORDS = [
    {
        "text": SAMPLE_TEXT,
        "entity_types": restaurant_schema(GENERIC_LOCATION)["types"],
        "spans": [
            {"start": 7, "end": 12, "type": "PRICE"},
            {"start": 13, "end": 20, "type": "CUISINE"},
            {"start": 32, "end": 38, "type": "LOCATION"},
        ],
    },
    {
        "text": "any thai places downtown open late",
        "entity_types": restaurant_schema(GENERIC_LOCATION)["types"],
        "spans": [
            {"start": 4, "end": 8, "type": "CUISINE"},
            {"start": 16, "end": 24, "type": "LOCATION"},
        ],
    },
]


def record(client: TestClient, name: str, method: str, path: str, body=None) -> dict:
    if method == "GET":
        resp = client.get(path)
    else:
        resp = client.post(path, json=body)
    if resp.status_code != 200:
        raise SystemExit(f"{name}: HTTP {resp.status_code}: {resp.text}")
    payload = strip_timing(resp.json())
    entry = {
        "request": {"method": method, "path": path, "body": body},
        "response": payload,
    }
    out = FIXTURE_DIR / f"{name}.json"
    out.write_bytes((canonical_json(entry) + "\n").encode())
    print(f"wrote {out}")
    return payload


def main() -> None:
    deterministic_mode()
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    client = TestClient(create_app(demo_core(), checksum="workbench-demo"))

    record(client, "healthz", "GET", "/healthz")
    record(
        client,
        "schema_register",
        "POST",
        "/v1/schema",
        restaurant_schema(GENERIC_LOCATION),
    )
    generic = record(
        client,
        "predict_generic",
        "POST",
        "/v1/predict",
        {"text": SAMPLE_TEXT, "schema": restaurant_schema(GENERIC_LOCATION)},
    )
    precise = record(
        client,
        "predict_precise",
        "POST",
        "/v1/predict",
        {"text": SAMPLE_TEXT, "schema": restaurant_schema(PRECISE_LOCATION)},
    )
    span_set = lambda p: {(s["char_start"], s["char_end"], s["type_name"]) for s in p["spans"]}
    if span_set(generic) == span_set(precise):
        raise SystemExit("definition edit did not change the span set; pick another sample")

    record(client, "evaluate", "POST", "/v1/evaluate", {"records": GOLD_RECORDS})

    attn = record(
        client,
        "attention",
        "POST",
        "/v1/predict",
        {
            "text": SAMPLE_TEXT,
            "schema": restaurant_schema(GENERIC_LOCATION),
            "return_attention": True,
        },
    )
    resp = client.get(f"/v1/attention/{attn['attention_job']}")
    if resp.status_code != 200:
        raise SystemExit(f"attention csv: HTTP {resp.status_code}")
    csv_path = FIXTURE_DIR / "attention_rollup.csv"
    csv_path.write_bytes(resp.content)
    print(f"wrote {csv_path}")

    gold_path = FIXTURE_DIR / "gold_records.json"
    gold_path.write_bytes((canonical_json(GOLD_RECORDS) + "\n").encode())
    print(f"wrote {gold_path}")


if __name__ == "__main__":
    main()
