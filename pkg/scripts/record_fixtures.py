#!/usr/bin/env python3
"""Record HTTP request/response fixtures from the evaluation service.

Drives the real FastAPI app in-process with a deterministic scripted
exchange and writes each interaction to frontend/fixtures/*.json.  The
browser client's contract tests replay these fixtures, and a test on the
Python side regenerates them to catch drift in either direction.

Usage: python3 scripts/record_fixtures.py [--check]
  --check  regenerate in memory and fail (exit 1) if any committed fixture
           differs, without touching the files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from fastapi.testclient import TestClient

from histsum.evalsvc import EvaluationService, create_app

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "frontend" / "fixtures"

MODEL_X = "system-alpha"
MODEL_Y = "system-beta"

DOCS = {
    "doc-01": {
        "reference": ["the committee approved the budget",
                      "construction starts in june"],
        "source": ["the city committee met on tuesday evening",
                   "after hours of debate the committee approved the budget",
                   "several residents spoke against the plan",
                   "officials said construction starts in june",
                   "the mayor thanked the volunteers"],
    },
    "doc-02": {
        "reference": ["the bridge reopened after repairs"],
        "source": ["the old bridge closed last march for repairs",
                   "engineers replaced the worn support cables",
                   "the bridge reopened after repairs",
                   "traffic returned to normal within a day"],
    },
    "doc-03": {
        "reference": ["the library extended its weekend hours",
                      "membership is free for students"],
        "source": ["the library announced new weekend hours",
                   "the library extended its weekend hours",
                   "membership is free for students",
                   "a reading festival is planned for autumn"],
    },
}

OUTPUTS_X = {
    "doc-01": ["after hours of debate the committee approved the budget",
               "officials said construction starts in june"],
    "doc-02": ["the bridge reopened after repairs"],
    "doc-03": ["the library extended its weekend hours",
               "a reading festival is planned for autumn"],
}

OUTPUTS_Y = {
    "doc-01": ["the city committee met on tuesday evening",
               "several residents spoke against the plan"],
    "doc-02": ["engineers replaced the worn support cables",
               "traffic returned to normal within a day"],
    "doc-03": ["the library announced new weekend hours",
               "membership is free for students"],
}


def record() -> dict[str, dict]:
    service = EvaluationService()
    client = TestClient(create_app(service))
    fixtures: dict[str, dict] = {}

    def exchange(name: str, method: str, path: str, body: dict | None = None):
        if method == "GET":
            resp = client.get(path)
        else:
            resp = client.post(path, json=body)
        fixtures[name] = {
            "request": {"method": method, "path": path, "body": body},
            "response": {"status": resp.status_code, "body": resp.json()},
        }
        return resp.json()

    create_body = {"model_x": MODEL_X, "model_y": MODEL_Y,
                   "outputs_x": OUTPUTS_X, "outputs_y": OUTPUTS_Y,
                   "docs": DOCS, "seed": 7}
    created = exchange("create_session", "POST", "/session", create_body)
    sid = created["session_id"]

    pair = exchange("next_pair", "GET",
                    f"/session/{sid}/next?evaluator=reviewer-1")

    ranks_body = {"evaluator": "reviewer-1", "pair_id": pair["pair_id"],
                  "skipped": False,
                  "ranks": {"overall": [1, 2], "coverage": [1, 1],
                            "non_redundancy": [2, 1]},
                  "note": ""}
    exchange("submit_ranking", "POST", f"/session/{sid}/ranking", ranks_body)

    pair2 = exchange("next_pair_second", "GET",
                     f"/session/{sid}/next?evaluator=reviewer-1")
    exchange("skip_ranking", "POST", f"/session/{sid}/ranking",
             {"evaluator": "reviewer-1", "pair_id": pair2["pair_id"],
              "skipped": True, "ranks": None, "note": ""})

    pair3 = exchange("next_pair_third", "GET",
                     f"/session/{sid}/next?evaluator=reviewer-1")
    exchange("rank_third", "POST", f"/session/{sid}/ranking",
             {"evaluator": "reviewer-1", "pair_id": pair3["pair_id"],
              "skipped": False,
              "ranks": {"overall": [2, 1], "coverage": [2, 1],
                        "non_redundancy": [1, 1]},
              "note": "close call"})

    exchange("session_done", "GET",
             f"/session/{sid}/next?evaluator=reviewer-1")

    exchange("highlight", "POST", f"/session/{sid}/highlight",
             {"pair_id": pair["pair_id"], "query": "budget approved"})

    exchange("document", "GET", f"/document/{pair['doc_id']}")

    exchange("invalid_ranks", "POST", f"/session/{sid}/ranking",
             {"evaluator": "reviewer-1", "pair_id": pair["pair_id"],
              "skipped": False,
              "ranks": {"overall": [2, 2], "coverage": [1, 2],
                        "non_redundancy": [1, 2]},
              "note": ""})

    exchange("unknown_pair", "POST", f"/session/{sid}/ranking",
             {"evaluator": "reviewer-1", "pair_id": 999, "skipped": True,
              "ranks": None, "note": ""})

    exchange("aggregate", "GET", f"/session/{sid}/aggregate")
    return fixtures


def render(fixtures: dict[str, dict]) -> dict[str, str]:
    return {f"{name}.json": json.dumps(payload, indent=2, sort_keys=True) + "\n"
            for name, payload in fixtures.items()}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--check", action="store_true",
                        help="verify committed fixtures instead of writing")
    args = parser.parse_args()

    files = render(record())
    if args.check:
        stale = []
        for fname, text in files.items():
            path = FIXTURE_DIR / fname
            if not path.exists() or path.read_text(encoding="utf-8") != text:
                stale.append(fname)
        extra = {p.name for p in FIXTURE_DIR.glob("*.json")} - set(files)
        if stale or extra:
            print(f"stale fixtures: {sorted(stale)} extra: {sorted(extra)}")
            return 1
        print(f"{len(files)} fixtures up to date")
        return 0

    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    for fname, text in files.items():
        (FIXTURE_DIR / fname).write_text(text, encoding="utf-8")
    print(f"wrote {len(files)} fixtures to {FIXTURE_DIR}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
