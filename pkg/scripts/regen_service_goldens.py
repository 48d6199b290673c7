#!/usr/bin/env python3
"""Regenerate the recorded HTTP fixtures under tests/fixtures/service/.

Run after any intentional change to the model, the renderer, or the
response shape, then review the diff before committing:

    python3 scripts/regen_service_goldens.py
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi.testclient import TestClient

from jpt.backbone import deterministic_mode
from jpt.service import canonical_json, create_app, demo_core, strip_timing

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "service"

SCHEMA = {
    "types": [
        {"name": "person", "definition": "Named human beings, including fictional."},
        {
            "name": "location",
            "definition": "Geographic places such as cities, countries, and rivers.",
        },
    ]
}

CASES = [
    {
        "name": "predict_basic",
        "method": "POST",
        "path": "/v1/predict",
        "body": {"text": "Jordan visited Paris in May .", "schema": SCHEMA},
    },
    {
        "name": "predict_probs",
        "method": "POST",
        "path": "/v1/predict",
        "body": {"text": "Amy flew to Oslo .", "schema": SCHEMA, "return_probs": True},
    },
    {
        "name": "evaluate_synthetic",
        "method": "POST",
        "path": "/v1/evaluate",
        "body": {"dataset_id": "synthetic-6-0"},
    },
    {
        "name": "healthz",
        "method": "GET",
        "path": "/healthz",
        "body": None,
    },
]


def main() -> None:
    deterministic_mode()
    FIXTURES.mkdir(parents=True, exist_ok=True)
    client = TestClient(create_app(demo_core(), checksum="golden-demo"))

    for case in CASES:
        if case["method"] == "GET":
            resp = client.get(case["path"])
        else:
            resp = client.post(case["path"], json=case["body"])
        assert resp.status_code == 200, (case["name"], resp.status_code, resp.text)
        payload = strip_timing(json.loads(resp.text))
        record = {
            "request": {k: v for k, v in case.items() if k != "name"},
            "response": payload,
        }
        out = FIXTURES / f"{case['name']}.json"
        out.write_text(canonical_json(record) + "\n", encoding="utf-8")
        print(f"wrote {out}")

    # attention CSV golden: predict with recording on, then fetch the job
    resp = client.post(
        "/v1/predict",
        json={"text": "Jordan went home .", "schema": SCHEMA, "return_attention": True},
    )
    assert resp.status_code == 200, resp.text
    job = json.loads(resp.text)["attention_job"]
    csv_resp = client.get(f"/v1/attention/{job}")
    assert csv_resp.status_code == 200
    out = FIXTURES / "attention_rollup.csv"
    out.write_text(csv_resp.text, encoding="utf-8")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
