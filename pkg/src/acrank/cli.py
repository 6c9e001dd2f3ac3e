"""Operator entry points: synthetic data generation, data preparation,
embedding and ranker training, offline evaluation, and serving.

Every subcommand accepts ``--config FILE`` (JSON keyed by subcommand, or
flat) whose entries mirror the flags; explicit flags override the file,
and a few serve paths also honor environment variables (flag wins over
env, env over file).  Each run writes a manifest next to its outputs with
sha256 content hashes of inputs and outputs and the resolved settings, so
reruns are comparable byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .baselines import MostPopularRanker, MostValuableRanker, PopularityIndex
from .checkpoint import load_checkpoint, save_checkpoint
from .embedding import SkipgramConfig, load_embeddings, save_embeddings, train_skipgram
from .features import (
    CONTEXT_QUERIES,
    HISTORY_DAYS,
    FeatureLayout,
    load_stats,
    dump_stats,
)
from .manifest import file_sha256, write_manifest, write_text_atomic
from .metrics import evaluate as run_evaluation
from .metrics import render_table
from .model import LossConfig, ModelRanker, NetworkConfig
from .prepare import (
    build_eval_samples,
    build_stats,
    extract_query_runs,
    gmv_positive,
    read_eval_samples,
    read_pairs,
    sessions_to_pairs,
    split_sessions,
    write_eval_samples,
    write_pairs,
)
from .sessions import parse_session_log
from .service import Service, SessionStore, create_app
from .synth import SynthConfig, generate_sessions, vocabulary_to_dicts
from .training import TrainingConfig, build_pair_dataset, train
from .trie import trie_from_stats_lines


class CliError(Exception):
    """Operator-facing failure; message printed, nonzero exit."""


def _load_file_config(path: str | None, subcommand: str) -> dict:
    if not path:
        return {}
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise CliError(f"config {path} must hold a JSON object")
    section = payload.get(subcommand)
    if isinstance(section, dict):
        return section
    return {k: v for k, v in payload.items() if not isinstance(v, dict)}


class Settings:
    """Layered flag resolution: explicit flag > env var > config file >
    default.  Flags are declared with default=None so absence is visible."""

    def __init__(self, args: argparse.Namespace, subcommand: str):
        self._args = vars(args)
        self._file = _load_file_config(self._args.get("config"), subcommand)

    def get(self, name: str, default=None, env: str | None = None, cast=None):
        value = self._args.get(name)
        if value is None and env:
            raw = os.environ.get(env)
            if raw not in (None, ""):
                value = raw
        if value is None and name in self._file:
            value = self._file[name]
        if value is None:
            value = default
        if value is not None and cast is not None and not isinstance(value, bool):
            try:
                value = cast(value)
            except (TypeError, ValueError) as exc:
                raise CliError(f"bad value for {name}: {value!r}") from exc
        return value

    def flag(self, name: str, default: bool = False) -> bool:
        value = self._args.get(name)
        if value is None and name in self._file:
            value = self._file[name]
        if value is None:
            return default
        return bool(value)

    def require(self, name: str, env: str | None = None) -> str:
        value = self.get(name, env=env)
        if value is None:
            raise CliError(f"missing required option --{name.replace('_', '-')}")
        return str(value)


def _read_sessions(path: str, strict: bool = False):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            errors: list = []
            sessions = list(parse_session_log(handle, strict=strict, errors=errors))
    except OSError as exc:
        raise CliError(f"cannot read session log {path}: {exc}") from exc
    for err in errors:
        print(f"warning: skipped line {err.line_no}: {err.reason}", file=sys.stderr)
    if not sessions:
        raise CliError(f"session log {path} contains no usable sessions")
    return sessions


def _load_stats_store(path: str):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return load_stats(handle)
    except OSError as exc:
        raise CliError(f"cannot read stats file {path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(f"bad stats file {path}: {exc}") from exc


def _load_table(path: str | None):
    if not path:
        return None
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return load_embeddings(handle)
    except OSError as exc:
        raise CliError(f"cannot read embeddings {path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(f"bad embedding file {path}: {exc}") from exc


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    settings = Settings(args, "gen-synthetic")
    out = Path(settings.require("out"))
    config = SynthConfig(
        users=settings.get("users", 150, cast=int),
        days=settings.get("days", 10, cast=int),
        mean_episodes_per_user=settings.get("episodes_per_user", 3.0, cast=float),
        mean_searches_per_episode=settings.get("searches_per_episode", 3.0, cast=float),
        beta_context=settings.get("context_strength", 2.5, cast=float),
        browse_rate=settings.get("browse_rate", 0.0, cast=float),
        offlist_rate=settings.get("offlist_rate", 0.03, cast=float),
        gmv_zero_rate=settings.get("gmv_zero_rate", 0.25, cast=float),
        seed=settings.get("seed", 0, cast=int),
    )
    records, vocabulary = generate_sessions(config)
    lines = "".join(json.dumps(record, sort_keys=True) + "\n" for record in records)
    write_text_atomic(out, lines)
    outputs = {"sessions": out}
    vocab_out = settings.get("vocab_out")
    if vocab_out:
        write_text_atomic(
            Path(vocab_out),
            json.dumps(vocabulary_to_dicts(vocabulary), sort_keys=True, indent=2) + "\n")
        outputs["vocabulary"] = Path(vocab_out)
    write_manifest(
        out.with_suffix(out.suffix + ".manifest.json"),
        kind="gen-synthetic",
        inputs={},
        outputs=outputs,
        settings={"sessions": len(records), **config.__dict__},
    )
    print(f"wrote {len(records)} sessions to {out}")
    return 0


def cmd_prepare_data(args: argparse.Namespace) -> int:
    settings = Settings(args, "prepare-data")
    sessions_path = settings.require("sessions")
    out_dir = Path(settings.require("out_dir"))
    seed = settings.get("seed", 0, cast=int)
    validation_fraction = settings.get("validation_fraction", 0.1, cast=float)
    eval_fraction = settings.get("eval_fraction", 0.2, cast=float)
    weight_mode = settings.get("weight_mode", "log1p_gmv")
    eval_weight_mode = settings.get("eval_weight_mode", "unit")
    positive_only = settings.flag("gmv_positive_only")

    sessions = _read_sessions(sessions_path, strict=settings.flag("strict"))
    reference_ts = max(s.timestamp for s in sessions)
    train_sessions, val_sessions, eval_sessions = split_sessions(
        sessions, validation_fraction, eval_fraction, seed)

    pair_source_train = gmv_positive(train_sessions) if positive_only else train_sessions
    pair_source_val = gmv_positive(val_sessions) if positive_only else val_sessions
    try:
        train_pairs = sessions_to_pairs(pair_source_train, weight_mode)
        val_pairs = sessions_to_pairs(pair_source_val, weight_mode)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if not train_pairs:
        print("warning: zero training pairs extracted", file=sys.stderr)

    stats = build_stats(train_sessions, reference_ts)
    samples = build_eval_samples(eval_sessions, eval_weight_mode)

    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "train_pairs": out_dir / "train_pairs.jsonl",
        "val_pairs": out_dir / "val_pairs.jsonl",
        "eval_samples": out_dir / "eval_samples.jsonl",
        "stats": out_dir / "stats.jsonl",
    }
    import io

    def dump(writer, payload) -> str:
        buffer = io.StringIO()
        writer(payload, buffer)
        return buffer.getvalue()

    write_text_atomic(paths["train_pairs"], dump(write_pairs, train_pairs))
    write_text_atomic(paths["val_pairs"], dump(write_pairs, val_pairs))
    write_text_atomic(paths["eval_samples"], dump(write_eval_samples, samples))
    write_text_atomic(paths["stats"], dump(dump_stats, stats))
    write_manifest(
        out_dir / "manifest.json",
        kind="prepare-data",
        inputs={"sessions": sessions_path},
        outputs=paths,
        settings={
            "seed": seed,
            "validation_fraction": validation_fraction,
            "eval_fraction": eval_fraction,
            "weight_mode": weight_mode,
            "eval_weight_mode": eval_weight_mode,
            "gmv_positive_only": positive_only,
            "sessions": len(sessions),
            "train_sessions": len(train_sessions),
            "val_sessions": len(val_sessions),
            "eval_sessions": len(eval_sessions),
            "train_pairs": len(train_pairs),
            "val_pairs": len(val_pairs),
            "eval_samples": len(samples),
            "reference_ts": reference_ts,
        },
    )
    print(f"prepared {len(train_pairs)} train pairs, {len(val_pairs)} val pairs, "
          f"{len(samples)} eval samples, {len(stats)} stat rows in {out_dir}")
    return 0


def cmd_train_embeddings(args: argparse.Namespace) -> int:
    settings = Settings(args, "train-embeddings")
    sessions_path = settings.require("sessions")
    out = Path(settings.require("out"))
    sessions = _read_sessions(sessions_path)
    runs = extract_query_runs(sessions)
    if not runs:
        raise CliError("no multi-query runs in the session log; nothing to train on")
    config = SkipgramConfig(
        dim=settings.get("dim", 50, cast=int),
        window=settings.get("window", 5, cast=int),
        negatives=settings.get("negatives", 5, cast=int),
        epochs=settings.get("epochs", 5, cast=int),
        initial_lr=settings.get("lr", 0.05, cast=float),
        min_count=settings.get("min_count", 2, cast=int),
        seed=settings.get("seed", 0, cast=int),
        workers=settings.get("workers", 1, cast=int),
    )
    from .embedding import build_corpus

    corpus = build_corpus(runs, min_count=config.min_count)
    if not corpus.tokens:
        raise CliError("corpus is empty after the min-count cutoff")
    table = train_skipgram(corpus, config)
    import io

    buffer = io.StringIO()
    save_embeddings(table, buffer, include_context=settings.flag("include_context"))
    write_text_atomic(out, buffer.getvalue())
    write_manifest(
        out.with_suffix(out.suffix + ".manifest.json"),
        kind="train-embeddings",
        inputs={"sessions": sessions_path},
        outputs={"embeddings": out},
        settings={"tokens": len(corpus.tokens), "runs": len(runs),
                  **config.__dict__},
    )
    print(f"trained {len(corpus.tokens)} embeddings -> {out}")
    return 0


def cmd_train_ranker(args: argparse.Namespace) -> int:
    settings = Settings(args, "train-ranker")
    pairs_path = settings.require("pairs")
    stats_path = settings.require("stats")
    out = Path(settings.require("out"))
    val_path = settings.get("val_pairs")
    embeddings_path = settings.get("embeddings")

    try:
        with open(pairs_path, "r", encoding="utf-8") as handle:
            train_pairs = read_pairs(handle)
    except OSError as exc:
        raise CliError(f"cannot read pairs {pairs_path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if not train_pairs:
        raise CliError(f"no training pairs in {pairs_path}")
    val_pairs = []
    if val_path:
        try:
            with open(val_path, "r", encoding="utf-8") as handle:
                val_pairs = read_pairs(handle)
        except OSError as exc:
            raise CliError(f"cannot read pairs {val_path}: {exc}") from exc

    stats = _load_stats_store(stats_path)
    table = _load_table(embeddings_path)
    layout = FeatureLayout(
        series_len=HISTORY_DAYS,
        context_queries=CONTEXT_QUERIES,
        embedding_dim=table.dim if table is not None else None,
    )
    ablate_delta = settings.flag("ablate_delta_ndcg")
    ablate_context = settings.flag("ablate_context")
    network = NetworkConfig(
        dense_len=layout.dense_len,
        series_len=layout.series_len,
        context_len=layout.context_len,
        query_repr_units=settings.get("query_units", 128, cast=int),
        lstm_units=settings.get("lstm_units", 16, cast=int),
        context_repr_units=settings.get("context_units", 128, cast=int),
        merge_units=settings.get("merge_units", 64, cast=int),
        dropout_rate=settings.get("dropout", 0.1, cast=float),
        seed=settings.get("seed", 0, cast=int),
        ablate_delta_ndcg=ablate_delta,
        ablate_context=ablate_context,
    )
    training_config = TrainingConfig(
        epochs=settings.get("epochs", 10, cast=int),
        batch_size=settings.get("batch_size", 256, cast=int),
        learning_rate=settings.get("lr", 1e-3, cast=float),
        seed=settings.get("seed", 0, cast=int),
    )
    loss_cfg = LossConfig(use_delta_ndcg=not ablate_delta)

    default_name = "deeppltr"
    if ablate_delta:
        default_name = "deeppltr-ndcg"
    if ablate_context:
        default_name = "context-blind"
    name = settings.get("name", default_name)

    try:
        train_data = build_pair_dataset(train_pairs, stats, table, layout)
        val_data = (build_pair_dataset(val_pairs, stats, table, layout)
                    if val_pairs else None)
    except ValueError as exc:
        raise CliError(f"featurization failed: {exc}") from exc

    def progress(record):
        val = "-" if record.val_loss is None else f"{record.val_loss:.6f}"
        print(f"epoch {record.epoch}: train_loss={record.train_loss:.6f} "
              f"val_loss={val}")

    result = train(train_data, layout, network, training_config, loss_cfg,
                   val_data, progress=progress)
    model = result.model
    model = type(model)(
        config=model.config, params=model.params, layout=model.layout,
        scaler=model.scaler, metadata=model.metadata, ranker_id=name)
    save_checkpoint(model, out)
    inputs = {"pairs": pairs_path, "stats": stats_path}
    if val_path:
        inputs["val_pairs"] = val_path
    if embeddings_path:
        inputs["embeddings"] = embeddings_path
    write_manifest(
        out.with_suffix(out.suffix + ".manifest.json"),
        kind="train-ranker",
        inputs=inputs,
        outputs={"checkpoint": out},
        settings={
            "ranker_id": name,
            "best_epoch": result.best_epoch,
            "ablate_delta_ndcg": ablate_delta,
            "ablate_context": ablate_context,
            **{f"network_{k}": v for k, v in network.to_dict().items()},
            **{f"training_{k}": v for k, v in training_config.__dict__.items()},
        },
    )
    print(f"saved checkpoint (ranker_id={name}, best epoch {result.best_epoch}) "
          f"-> {out}")
    return 0


def _build_rankers(
    specs: list[str], stats, table
) -> tuple[dict[str, object], dict[str, str]]:
    """Resolve --ranker values: 'mpc', 'mpgc', or a checkpoint path.

    Returns the ranker registry plus, for checkpoint-backed rankers, the
    path of the producing run's manifest when one sits next to the file.
    """
    index = PopularityIndex.from_stats(stats)
    rankers: dict[str, object] = {}
    manifests: dict[str, str] = {}
    for spec in specs:
        if spec == "mpc":
            ranker = MostPopularRanker(index)
        elif spec == "mpgc":
            ranker = MostValuableRanker(index)
        else:
            if not Path(spec).exists():
                raise CliError(
                    f"ranker {spec!r} is neither mpc, mpgc, nor a checkpoint path")
            try:
                model = load_checkpoint(spec)
            except ValueError as exc:
                raise CliError(f"cannot load checkpoint {spec}: {exc}") from exc
            ranker = ModelRanker(model, stats, table)
            manifest_path = Path(spec + ".manifest.json")
            if manifest_path.exists():
                manifests[ranker.ranker_id] = str(manifest_path)
        if ranker.ranker_id in rankers:
            raise CliError(f"duplicate ranker id {ranker.ranker_id!r}")
        rankers[ranker.ranker_id] = ranker
    return rankers, manifests


def cmd_evaluate(args: argparse.Namespace) -> int:
    settings = Settings(args, "evaluate")
    samples_path = settings.require("samples")
    stats_path = settings.require("stats")
    out_dir = settings.get("out_dir")
    specs = args.ranker or settings.get("ranker") or ["mpc"]
    if isinstance(specs, str):
        specs = [specs]
    baseline = settings.get("baseline")

    try:
        with open(samples_path, "r", encoding="utf-8") as handle:
            samples = read_eval_samples(handle)
    except OSError as exc:
        raise CliError(f"cannot read samples {samples_path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if not samples:
        raise CliError(f"no eval samples in {samples_path}")

    stats = _load_stats_store(stats_path)
    table = _load_table(settings.get("embeddings"))
    rankers, checkpoint_manifests = _build_rankers(specs, stats, table)

    reports = []
    for ranker_id in rankers:
        try:
            reports.append(run_evaluation(rankers[ranker_id], samples))
        except ValueError as exc:
            raise CliError(f"evaluation failed for {ranker_id}: {exc}") from exc
    table_text = render_table(reports, baseline)
    print(table_text)

    if out_dir:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report_json = out_dir / "report.json"
        report_txt = out_dir / "report.txt"
        payload = {
            "reports": {r.ranker_id: r.to_dict() for r in reports},
            "baseline": baseline,
        }
        write_text_atomic(report_json,
                          json.dumps(payload, sort_keys=True, indent=2) + "\n")
        write_text_atomic(report_txt, table_text + "\n")
        inputs = {"samples": samples_path, "stats": stats_path}
        embeddings_path = settings.get("embeddings")
        if embeddings_path:
            inputs["embeddings"] = embeddings_path
        for spec in specs:
            if spec not in ("mpc", "mpgc"):
                inputs[f"checkpoint_{Path(spec).stem}"] = spec
        # chain to the producing run's manifest so runs are traceable
        for ranker_id, manifest_path in checkpoint_manifests.items():
            inputs[f"manifest_{ranker_id}"] = manifest_path
        write_manifest(
            out_dir / "manifest.json",
            kind="evaluate",
            inputs=inputs,
            outputs={"report_json": report_json, "report_txt": report_txt},
            settings={"rankers": sorted(rankers), "baseline": baseline,
                      "samples": len(samples)},
        )
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    settings = Settings(args, "serve")
    trie_path = settings.require("trie", env="ACRANK_TRIE")
    stats_path = settings.require("stats", env="ACRANK_STATS")
    embeddings_path = settings.get("embeddings", env="ACRANK_EMBEDDINGS")
    checkpoints = args.checkpoint or []
    if not checkpoints:
        env_ckpt = os.environ.get("ACRANK_CHECKPOINT")
        if env_ckpt:
            checkpoints = [env_ckpt]
        else:
            file_value = settings.get("checkpoint")
            if isinstance(file_value, str):
                checkpoints = [file_value]
            elif isinstance(file_value, list):
                checkpoints = file_value
    port = settings.get("port", 8000, env="ACRANK_PORT", cast=int)
    host = settings.get("host", "127.0.0.1", env="ACRANK_HOST")

    stats = _load_stats_store(stats_path)
    table = _load_table(embeddings_path)
    try:
        with open(trie_path, "r", encoding="utf-8") as handle:
            trie = trie_from_stats_lines(handle)
    except OSError as exc:
        raise CliError(f"cannot read trie source {trie_path}: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise CliError(f"bad trie source {trie_path}: {exc}") from exc

    specs = ["mpc", "mpgc"] + list(checkpoints)
    rankers, _ = _build_rankers(specs, stats, table)
    model_version = "unversioned"
    if checkpoints:
        model_version = file_sha256(checkpoints[0])[:16]
    default_ranker = "mpc"
    for ranker_id in rankers:
        if ranker_id not in ("mpc", "mpgc"):
            default_ranker = ranker_id
            break
    service = Service(
        trie=trie,
        rankers=rankers,
        sessions=SessionStore(),
        default_ranker=default_ranker,
        model_version=model_version,
    )
    app = create_app(service)

    import socket

    import uvicorn

    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        sock.bind((host, port))
    except OSError as exc:
        raise CliError(f"cannot bind {host}:{port}: {exc}") from exc
    bound_port = sock.getsockname()[1]
    print(f"serving on http://{host}:{bound_port} "
          f"(rankers: {', '.join(service.ranker_ids())})", flush=True)
    server = uvicorn.Server(uvicorn.Config(
        app, log_level=settings.get("log_level", "warning")))
    server.run(sockets=[sock])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="acrank",
        description="Query autocompletion ranking pipeline and service.",
    )
    parser.add_argument("--version", action="version", version=f"acrank {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config mirroring the flags")
        p.add_argument("--seed", type=int, help="random seed (default 0)")

    p = sub.add_parser("gen-synthetic", help="sample a synthetic session log")
    add_common(p)
    p.add_argument("--out", help="session log output path (JSONL)")
    p.add_argument("--vocab-out", dest="vocab_out",
                   help="also write the ground-truth vocabulary JSON")
    p.add_argument("--users", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--episodes-per-user", dest="episodes_per_user", type=float)
    p.add_argument("--searches-per-episode", dest="searches_per_episode", type=float)
    p.add_argument("--context-strength", dest="context_strength", type=float)
    p.add_argument("--browse-rate", dest="browse_rate", type=float,
                   help="fraction of searches made in a browsing mood: "
                        "hovering at short prefixes and settling for a "
                        "family flagship")
    p.add_argument("--offlist-rate", dest="offlist_rate", type=float)
    p.add_argument("--gmv-zero-rate", dest="gmv_zero_rate", type=float)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("prepare-data",
                       help="split sessions and emit pairs, samples, stats")
    add_common(p)
    p.add_argument("--sessions", help="session log (JSONL)")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--validation-fraction", dest="validation_fraction", type=float)
    p.add_argument("--eval-fraction", dest="eval_fraction", type=float)
    p.add_argument("--weight-mode", dest="weight_mode",
                   choices=["gmv", "unit", "log1p_gmv"])
    p.add_argument("--eval-weight-mode", dest="eval_weight_mode",
                   choices=["unit", "gmv", "log1p_gmv"])
    p.add_argument("--gmv-positive-only", dest="gmv_positive_only",
                   action="store_true", default=None,
                   help="drop sessions without attributed sales")
    p.add_argument("--strict", action="store_true", default=None,
                   help="fail on the first malformed log line")
    p.set_defaults(func=cmd_prepare_data)

    p = sub.add_parser("train-embeddings",
                       help="learn whole-query vectors from the session log")
    add_common(p)
    p.add_argument("--sessions")
    p.add_argument("--out")
    p.add_argument("--dim", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--negatives", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--min-count", dest="min_count", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--include-context", dest="include_context",
                   action="store_true", default=None)
    p.set_defaults(func=cmd_train_embeddings)

    p = sub.add_parser("train-ranker", help="train the pairwise neural ranker")
    add_common(p)
    p.add_argument("--pairs")
    p.add_argument("--val-pairs", dest="val_pairs")
    p.add_argument("--stats")
    p.add_argument("--embeddings")
    p.add_argument("--out")
    p.add_argument("--name", help="ranker id recorded in the checkpoint")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--query-units", dest="query_units", type=int)
    p.add_argument("--lstm-units", dest="lstm_units", type=int)
    p.add_argument("--context-units", dest="context_units", type=int)
    p.add_argument("--merge-units", dest="merge_units", type=int)
    p.add_argument("--ablate-delta-ndcg", dest="ablate_delta_ndcg",
                   action="store_true", default=None,
                   help="train without the rank-gap loss factor")
    p.add_argument("--ablate-context", dest="ablate_context",
                   action="store_true", default=None,
                   help="zero the context block (context-blind variant)")
    p.set_defaults(func=cmd_train_ranker)

    p = sub.add_parser("evaluate", help="score rankers on held-out samples")
    add_common(p)
    p.add_argument("--samples")
    p.add_argument("--stats")
    p.add_argument("--embeddings")
    p.add_argument("--ranker", action="append",
                   help="mpc, mpgc, or a checkpoint path (repeatable)")
    p.add_argument("--baseline", help="ranker id for percent deltas")
    p.add_argument("--out-dir", dest="out_dir")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the HTTP suggestion service")
    add_common(p)
    p.add_argument("--trie", help="stats JSONL used to build the match trie")
    p.add_argument("--stats")
    p.add_argument("--embeddings")
    p.add_argument("--checkpoint", action="append",
                   help="ranker checkpoint (repeatable)")
    p.add_argument("--port", type=int, help="0 binds an ephemeral port")
    p.add_argument("--host")
    p.add_argument("--log-level", dest="log_level")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 0


if __name__ == "__main__":
    sys.exit(main())
