"""Recompute the frozen end-to-end acceptance numbers.

Runs the two pinned pilot pipelines (a context-effect corpus and a
position-noise corpus) through the real CLI, measures every margin the
acceptance tests assert, and rewrites tests/fixtures/acceptance_thresholds.json.

Run this only when the generator, features, model, or training change on
purpose; the point of the fixture is that accidental changes fail the
acceptance suite instead of silently shifting results.

Usage: python3 tools/freeze_acceptance.py [workdir]
(workdir defaults to a fresh temp dir; pass one to inspect artifacts)
"""

from __future__ import annotations

import itertools
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from acrank.cli import main as cli  # noqa: E402
from acrank.embedding import load_embeddings  # noqa: E402

FIXTURE = REPO / "tests" / "fixtures" / "acceptance_thresholds.json"

# The pinned pipeline settings.  The acceptance tests re-run exactly these,
# so every number below is reproducible bit for bit.
SETTINGS = {
    "context_corpus": {
        "gen": {"users": 600, "days": 10, "seed": 7,
                "context_strength": 3.5, "browse_rate": 0.0},
        "prepare_seed": 7,
        "embeddings": {"dim": 32, "epochs": 5, "seed": 7},
        "ranker": {"epochs": 8, "seed": 7},
    },
    "noise_corpus": {
        "gen": {"users": 600, "days": 10, "seed": 11,
                "context_strength": 3.5, "browse_rate": 0.1},
        "prepare_seed": 11,
        "embeddings": {"dim": 32, "epochs": 5, "seed": 11},
        "ranker": {"epochs": 8, "seed": 7},
    },
    "targets": {
        "mrr_vs_mpc": 0.05,
        "swps_mrr_vs_context_blind": 0.05,
        "swops_mrr_tolerance": 0.02,
        "ndcg1_delta_margin": 0.01,
        "embedding_separation": 0.2,
    },
}


def run_pipeline(root: Path, spec: dict, variants: tuple[str, ...]) -> dict:
    """gen -> prepare -> embeddings -> train each variant -> evaluate.

    Returns the parsed report.json payload plus artifact paths.
    """
    root.mkdir(parents=True, exist_ok=True)
    gen = spec["gen"]
    sessions = root / "sessions.jsonl"
    vocab = root / "vocab.json"
    assert cli([
        "gen-synthetic", "--out", str(sessions), "--vocab-out", str(vocab),
        "--users", str(gen["users"]), "--days", str(gen["days"]),
        "--seed", str(gen["seed"]),
        "--context-strength", str(gen["context_strength"]),
        "--browse-rate", str(gen["browse_rate"]),
    ]) == 0
    data = root / "data"
    assert cli([
        "prepare-data", "--sessions", str(sessions), "--out-dir", str(data),
        "--seed", str(spec["prepare_seed"]),
    ]) == 0
    emb = root / "embeddings.tsv"
    e = spec["embeddings"]
    assert cli([
        "train-embeddings", "--sessions", str(sessions), "--out", str(emb),
        "--dim", str(e["dim"]), "--epochs", str(e["epochs"]),
        "--seed", str(e["seed"]),
    ]) == 0
    r = spec["ranker"]
    checkpoints = []
    for variant in variants:
        ckpt = root / f"{variant or 'deeppltr'}.ckpt"
        argv = [
            "train-ranker", "--pairs", str(data / "train_pairs.jsonl"),
            "--val-pairs", str(data / "val_pairs.jsonl"),
            "--stats", str(data / "stats.jsonl"), "--embeddings", str(emb),
            "--out", str(ckpt), "--epochs", str(r["epochs"]),
            "--seed", str(r["seed"]),
        ]
        if variant:
            argv.append(f"--{variant.replace('_', '-')}")
        assert cli(argv) == 0
        checkpoints.append(ckpt)
    out = root / "eval"
    argv = [
        "evaluate", "--samples", str(data / "eval_samples.jsonl"),
        "--stats", str(data / "stats.jsonl"), "--embeddings", str(emb),
        "--ranker", "mpc", "--baseline", "mpc", "--out-dir", str(out),
    ]
    for ckpt in checkpoints:
        argv += ["--ranker", str(ckpt)]
    assert cli(argv) == 0
    payload = json.loads((out / "report.json").read_text())
    return {"reports": payload["reports"], "root": root,
            "vocab": vocab, "embeddings": emb}


def embedding_separation(vocab_path: Path, embeddings_path: Path) -> float:
    """Mean intra-cluster minus mean inter-cluster cosine, within stem
    groups (the competing suggestions a prefix actually pools)."""
    vocab = json.loads(vocab_path.read_text())
    labels = {v["text"].replace(" ", "_"): (v["stem"], v["cluster"])
              for v in vocab}
    with open(embeddings_path, "r", encoding="utf-8") as handle:
        table = load_embeddings(handle)
    norms = table.target / np.linalg.norm(table.target, axis=1, keepdims=True)
    by_stem: dict[str, list[tuple[int, np.ndarray]]] = {}
    for i, token in enumerate(table.tokens):
        if token in labels:
            stem, cluster = labels[token]
            by_stem.setdefault(stem, []).append((cluster, norms[i]))
    intra, inter = [], []
    for items in by_stem.values():
        for (c1, v1), (c2, v2) in itertools.combinations(items, 2):
            (intra if c1 == c2 else inter).append(float(v1 @ v2))
    return float(np.mean(intra) - np.mean(inter))


def main() -> None:
    if len(sys.argv) > 1:
        workdir = Path(sys.argv[1])
    else:
        workdir = Path(tempfile.mkdtemp(prefix="acrank-freeze-"))
    print(f"pipelines run under {workdir}")

    ctx = run_pipeline(workdir / "context", SETTINGS["context_corpus"],
                       ("", "ablate_context"))
    noise = run_pipeline(workdir / "noise", SETTINGS["noise_corpus"],
                         ("", "ablate_delta_ndcg"))

    c = ctx["reports"]
    n = noise["reports"]
    frozen = {
        "mrr_mpc": c["mpc"]["slices"]["AS"]["mrr"],
        "mrr_deeppltr": c["deeppltr"]["slices"]["AS"]["mrr"],
        "swps_mrr_deeppltr": c["deeppltr"]["slices"]["SWPS"]["mrr"],
        "swps_mrr_context_blind": c["context-blind"]["slices"]["SWPS"]["mrr"],
        "swops_mrr_deeppltr": c["deeppltr"]["slices"]["SWOPS"]["mrr"],
        "swops_mrr_context_blind": c["context-blind"]["slices"]["SWOPS"]["mrr"],
        "ndcg1_deeppltr": n["deeppltr"]["slices"]["AS"]["ndcg_at_1"],
        "ndcg1_deeppltr_ndcg": n["deeppltr-ndcg"]["slices"]["AS"]["ndcg_at_1"],
        "embedding_separation": embedding_separation(
            ctx["vocab"], ctx["embeddings"]),
    }
    frozen["margin_mrr_vs_mpc"] = frozen["mrr_deeppltr"] - frozen["mrr_mpc"]
    frozen["margin_swps"] = (frozen["swps_mrr_deeppltr"]
                             - frozen["swps_mrr_context_blind"])
    frozen["margin_swops_abs"] = abs(frozen["swops_mrr_deeppltr"]
                                     - frozen["swops_mrr_context_blind"])
    frozen["margin_ndcg1_delta"] = (frozen["ndcg1_deeppltr"]
                                    - frozen["ndcg1_deeppltr_ndcg"])

    payload = dict(SETTINGS)
    payload["frozen"] = frozen
    FIXTURE.parent.mkdir(parents=True, exist_ok=True)
    FIXTURE.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                       encoding="utf-8")
    print(json.dumps(frozen, sort_keys=True, indent=2))
    targets = SETTINGS["targets"]
    ok = (frozen["margin_mrr_vs_mpc"] >= targets["mrr_vs_mpc"]
          and frozen["margin_swps"] >= targets["swps_mrr_vs_context_blind"]
          and frozen["margin_swops_abs"] <= targets["swops_mrr_tolerance"]
          and frozen["margin_ndcg1_delta"] >= targets["ndcg1_delta_margin"]
          and frozen["embedding_separation"] >= targets["embedding_separation"])
    print(f"wrote {FIXTURE}")
    print("all targets met" if ok else "WARNING: some targets missed")


if __name__ == "__main__":
    main()
