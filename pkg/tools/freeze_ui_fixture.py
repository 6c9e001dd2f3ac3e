"""Record the frozen HTTP exchanges behind the frontend's scripted flow.

Re-runs the pinned context-effect pipeline (same settings the acceptance
suite asserts), serves the trained checkpoints in process, and walks the
demo flow the frontend tests replay: suggest on a cold session, submit a
query, suggest again.  The tool searches the vocabulary for a
(prefix, submission) pair where the context-aware pane's ordering
visibly changes while the context-blind pane's does not, then writes
every request/response pair to frontend/tests/fixtures/scripted_flow.json.

Run it only when the pipeline or service change on purpose; the point of
the fixture is that the frontend tests fail loudly when the recorded
contract drifts.

Usage: python3 tools/freeze_ui_fixture.py [workdir]
(workdir defaults to a fresh temp dir; pass one to reuse its artifacts)
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))
sys.path.insert(0, str(REPO / "tools"))

from fastapi.testclient import TestClient  # noqa: E402

from acrank.cli import _build_rankers, _load_stats_store, _load_table  # noqa: E402
from acrank.service import Service, SessionStore, create_app  # noqa: E402
from acrank.trie import trie_from_stats_lines  # noqa: E402
from freeze_acceptance import SETTINGS, run_pipeline  # noqa: E402

FIXTURE = REPO / "frontend" / "tests" / "fixtures" / "scripted_flow.json"
SESSION_ID = "scripted-flow-fixture"
AWARE = "deeppltr"
BLIND = "context-blind"
PANES = (AWARE, BLIND, "mpc")
K = 8


def build_client(root: Path) -> TestClient:
    data = root / "data"
    stats = _load_stats_store(str(data / "stats.jsonl"))
    table = _load_table(str(root / "embeddings.tsv"))
    with open(data / "stats.jsonl", "r", encoding="utf-8") as handle:
        trie = trie_from_stats_lines(handle)
    rankers, _ = _build_rankers(
        ["mpc", str(root / "deeppltr.ckpt"), str(root / "ablate_context.ckpt")],
        stats, table)
    service = Service(trie=trie, rankers=rankers, sessions=SessionStore(),
                      default_ranker=AWARE, model_version="ui-fixture")
    return TestClient(create_app(service))


def suggest(client: TestClient, prefix: str, ranker: str,
            session_id: str = SESSION_ID) -> dict:
    response = client.get("/suggest", params={
        "prefix": prefix, "session_id": session_id, "k": K, "ranker": ranker})
    response.raise_for_status()
    payload = response.json()
    payload["latency_ms"] = 0.0  # wall-clock noise has no place in a fixture
    return payload


def order(payload: dict) -> list[str]:
    return [s["query"] for s in payload["suggestions"]]


def find_demo_flow(client: TestClient) -> tuple[str, str]:
    """First (prefix, submission) where submitting moves the aware pane's
    top suggestion but leaves the blind pane untouched.  Fresh throwaway
    sessions keep the search from contaminating the recorded session."""
    rankers_resp = client.get("/rankers").json()["rankers"]
    for pane in PANES:
        assert pane in rankers_resp, f"service lacks pane ranker {pane!r}"
    prefixes = ["ba", "ca", "de", "fi", "ga", "ha"]
    probe = 0
    for prefix in prefixes:
        cold_aware = order(suggest(client, prefix, AWARE, "probe-cold"))
        cold_blind = order(suggest(client, prefix, BLIND, "probe-cold"))
        if not cold_aware:
            continue
        for submission in cold_aware:
            probe += 1
            sid = f"probe-{probe}"
            client.post("/submit", json={"session_id": sid,
                                         "query": submission})
            warm_aware = order(suggest(client, prefix, AWARE, sid))
            warm_blind = order(suggest(client, prefix, BLIND, sid))
            if (warm_aware != cold_aware and warm_aware[0] != cold_aware[0]
                    and warm_blind == cold_blind):
                return prefix, submission
    raise SystemExit("no (prefix, submission) pair demonstrates the "
                     "context effect; recalibrate the pipeline first")


def main() -> None:
    if len(sys.argv) > 1:
        workdir = Path(sys.argv[1])
    else:
        workdir = Path(tempfile.mkdtemp(prefix="acrank-ui-fixture-"))
    print(f"pipeline runs under {workdir}")
    ctx = run_pipeline(workdir / "context", SETTINGS["context_corpus"],
                       ("", "ablate_context"))
    client = build_client(ctx["root"])

    prefix, submission = find_demo_flow(client)
    print(f"demo flow: prefix {prefix!r}, submission {submission!r}")

    steps: list[dict] = []

    def record_suggest(stage: str, ranker: str) -> dict:
        payload = suggest(client, prefix, ranker)
        steps.append({
            "op": "suggest", "stage": stage, "ranker": ranker,
            "request": {"prefix": prefix, "session_id": SESSION_ID,
                        "k": K, "ranker": ranker},
            "response": payload,
        })
        return payload

    before = {ranker: record_suggest("before_submit", ranker)
              for ranker in PANES}
    client.post("/submit", json={"session_id": SESSION_ID,
                                 "query": submission})
    steps.append({"op": "submit",
                  "request": {"session_id": SESSION_ID, "query": submission}})
    after = {ranker: record_suggest("after_submit", ranker)
             for ranker in PANES}

    assert order(after[AWARE]) != order(before[AWARE])
    assert order(after[AWARE])[0] != order(before[AWARE])[0]
    assert order(after[BLIND]) == order(before[BLIND])
    assert order(after["mpc"]) == order(before["mpc"])

    payload = {
        "meta": {
            "session_id": SESSION_ID, "prefix": prefix,
            "submission": submission, "k": K,
            "aware_ranker": AWARE, "blind_ranker": BLIND, "panes": list(PANES),
            "rankers_response": {"rankers": client.get("/rankers").json()["rankers"]},
        },
        "steps": steps,
    }
    FIXTURE.parent.mkdir(parents=True, exist_ok=True)
    FIXTURE.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                       encoding="utf-8")
    print(f"wrote {FIXTURE}")
    print(f"aware pane before: {order(before[AWARE])[:3]} ...")
    print(f"aware pane after:  {order(after[AWARE])[:3]} ...")


if __name__ == "__main__":
    main()
