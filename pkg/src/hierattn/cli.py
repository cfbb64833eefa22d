"""Command-line surface: validate, train, evaluate, predict, explain.

A run is described by a JSON config file; every value can be overridden by a
flag (flags win). Exit codes: 0 success, 2 config/parse error, 3 data
consistency error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import html
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from .classifier import forward_document
from .corpus import (
    build_vocabulary,
    encode_document,
    load_corpus,
    load_embeddings,
    random_embeddings,
)
from .errors import ConfigError, HierattnError, UnknownDocumentError
from .hierarchy import load_hierarchy
from .metrics import evaluate
from .training import (
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)

PATH_KEYS = ("hierarchy", "train", "valid", "test", "embeddings", "checkpoint", "output_dir")
TRAIN_KEYS = tuple(f.name for f in dataclasses.fields(TrainConfig))
VARIANT_ALIASES = {"full": "full", "nc": "nc", "local": "local_only", "global": "global_only"}


@dataclasses.dataclass
class RunConfig:
    hierarchy: str | None = None
    train: str | None = None
    valid: str | None = None
    test: str | None = None
    embeddings: str | None = None
    checkpoint: str | None = None
    output_dir: str = "."
    training: TrainConfig = dataclasses.field(default_factory=TrainConfig)

    def require(self, *keys: str) -> None:
        for key in keys:
            value = getattr(self, key)
            if value is None:
                raise ConfigError(f"config key {key!r} is required for this command")
            if key != "output_dir" and not os.path.exists(value):
                raise ConfigError(f"{key} file not found: {value}")


def load_run_config(path: str | None) -> RunConfig:
    """Parse the JSON config file, rejecting unknown keys."""
    cfg = RunConfig()
    if path is None:
        return cfg
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    training = doc.pop("training", {})
    if not isinstance(training, dict):
        raise ConfigError(f"{path}: 'training' must be an object")
    unknown = set(doc) - set(PATH_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    unknown = set(training) - set(TRAIN_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown training keys {sorted(unknown)}")
    for key in PATH_KEYS:
        if key in doc:
            setattr(cfg, key, doc[key])
    try:
        cfg.training = TrainConfig(**training)
    except TypeError as exc:
        raise ConfigError(f"{path}: bad training section ({exc})") from None
    return cfg


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    for key in PATH_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    updates = {}
    for key in TRAIN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            updates[key] = value
    if getattr(args, "variant", None) is not None:
        updates["variant"] = VARIANT_ALIASES[args.variant]
    if updates:
        cfg.training = dataclasses.replace(cfg.training, **updates)
    return cfg


def _timestamp_field(args) -> dict:
    if getattr(args, "no_timestamp", False):
        return {}
    return {"timestamp": datetime.now(timezone.utc).isoformat()}


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


# -- subcommands ---------------------------------------------------------------

def cmd_validate(cfg: RunConfig, args) -> int:
    """Parse the hierarchy and corpora, printing counts and closure fixes."""
    cfg.require("hierarchy")
    hier = load_hierarchy(cfg.hierarchy)
    sizes = ", ".join(str(s) for s in hier.level_sizes())
    print(f"hierarchy: {cfg.hierarchy}")
    print(f"levels: {sizes}")
    print(f"total labels: {hier.num_labels}")
    for split in ("train", "valid", "test"):
        path = getattr(cfg, split)
        if path is None:
            continue
        raw_labels = 0
        docs = load_corpus(path, hier)
        closed_labels = sum(len(d.labels) for d in docs)
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    raw_labels += len(json.loads(line).get("labels", []))
        added = closed_labels - raw_labels
        print(f"{split}: {len(docs)} documents, closure added {added} ancestor labels")
    return 0


def _prepare_model(cfg: RunConfig):
    """Shared loader for evaluate / predict / explain."""
    cfg.require("hierarchy", "checkpoint")
    hier = load_hierarchy(cfg.hierarchy)
    params = load_checkpoint(cfg.checkpoint, hier)
    return hier, params


def cmd_train(cfg: RunConfig, args) -> int:
    cfg.require("hierarchy", "train", "valid")
    if cfg.checkpoint is None:
        raise ConfigError("config key 'checkpoint' is required for training")
    tc = cfg.training
    hier = load_hierarchy(cfg.hierarchy)
    train_docs = load_corpus(cfg.train, hier)
    valid_docs = load_corpus(cfg.valid, hier)
    vocab = build_vocabulary(train_docs, min_count=tc.min_count)
    if cfg.embeddings is not None:
        embeddings = load_embeddings(cfg.embeddings, vocab, tc.embed_dim, seed=tc.seed)
    else:
        print(f"no embeddings file; random initialization at dim {tc.embed_dim}")
        embeddings = random_embeddings(vocab, tc.embed_dim, seed=tc.seed)
    params, history = train(tc, train_docs, valid_docs, hier, vocab, embeddings)

    os.makedirs(cfg.output_dir, exist_ok=True)
    save_checkpoint(params, cfg.checkpoint)
    history_path = os.path.join(cfg.output_dir, "history.json")
    _write_json(history_path, {**_timestamp_field(args), "epochs": history})
    best = max(h["valid_auprc"] for h in history)
    print(f"checkpoint: {cfg.checkpoint}")
    print(f"history: {history_path}")
    print(f"{best:.6f}")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    cfg.require("test")
    hier, params = _prepare_model(cfg)
    docs = load_corpus(cfg.test, hier)
    alpha = params.config.alpha if args.alpha is None else args.alpha
    report = evaluate(params, docs, hier, alpha=alpha)
    rounded = _round_report(report)
    os.makedirs(cfg.output_dir, exist_ok=True)
    report_path = os.path.join(cfg.output_dir, "evaluation.json")
    _write_json(report_path, {**_timestamp_field(args), **rounded})
    print(f"report: {report_path}")
    print(f"{report['overall']['blended']:.6f}")
    return 0


def _round_report(report: dict) -> dict:
    def r(x):
        return None if x is None else round(x, 6)

    return {
        "overall": {k: r(v) for k, v in report["overall"].items()},
        "per_level": [
            {"level": e["level"], **{k: r(e[k]) for k in ("blended", "local", "global")}}
            for e in report["per_level"]
        ],
        "counts": report["counts"],
    }


def cmd_predict(cfg: RunConfig, args) -> int:
    """Write one record per document with all (label, score) pairs."""
    cfg.require("test")
    hier, params = _prepare_model(cfg)
    docs = load_corpus(cfg.test, hier)
    alpha = params.config.alpha if args.alpha is None else args.alpha
    labels = hier.global_label_order()
    os.makedirs(cfg.output_dir, exist_ok=True)
    out_path = os.path.join(cfg.output_dir, "predictions.jsonl")
    tape = params.tape
    with open(out_path, "w", encoding="utf-8") as fh:
        for doc in docs:
            ids, mask = encode_document(doc, params.vocab, params.config.max_len)
            with tape.no_grad():
                scores, _ = forward_document(ids, mask, params, alpha=alpha)
            pairs = [
                [label, round(float(p), 6)]
                for label, p in zip(labels, scores.blended_values())
            ]
            fh.write(json.dumps({"id": doc.id, "scores": pairs}) + "\n")
    print(f"predictions: {out_path}")
    return 0


def cmd_explain(cfg: RunConfig, args) -> int:
    """Export attention explanations and a static heatmap page per document."""
    cfg.require("test")
    hier, params = _prepare_model(cfg)
    docs = load_corpus(cfg.test, hier)
    by_id = {d.id: d for d in docs}
    wanted = args.ids if args.ids else list(by_id)
    missing = [i for i in wanted if i not in by_id]
    if missing:
        raise UnknownDocumentError(f"document ids not in corpus: {missing}")
    alpha = params.config.alpha if args.alpha is None else args.alpha
    os.makedirs(cfg.output_dir, exist_ok=True)
    records_path = os.path.join(cfg.output_dir, "explanations.jsonl")
    tape = params.tape
    with open(records_path, "w", encoding="utf-8") as fh:
        for doc_id in wanted:
            doc = by_id[doc_id]
            record = _explain_document(
                doc, params, hier, alpha, args.top_k, args.min_score
            )
            fh.write(json.dumps(record) + "\n")
            page = _heatmap_page(record)
            page_path = os.path.join(cfg.output_dir, f"explain_{doc_id}.html")
            with open(page_path, "w", encoding="utf-8") as page_fh:
                page_fh.write(page)
    print(f"explanations: {records_path}")
    return 0


def _explain_document(doc, params, hier, alpha, top_k, min_score) -> dict:
    ids, mask = encode_document(doc, params.vocab, params.config.max_len)
    with params.tape.no_grad():
        scores, traces = forward_document(ids, mask, params, alpha=alpha)
    tokens = list(doc.tokens[: params.config.max_len])
    blended = scores.blended_values()
    record = {"id": doc.id, "tokens": tokens, "levels": []}
    offset = 0
    for h in range(1, hier.depth + 1):
        level_labels = hier.labels_at_level(h)
        A = traces[h - 1].A.data
        entries = []
        for j, label in enumerate(level_labels):
            score = float(blended[offset + j])
            if score <= min_score:
                continue
            weights = A[j, : len(tokens)]
            order = np.argsort(-weights, kind="stable")[:top_k]
            entries.append({
                "label": label,
                "score": round(score, 6),
                "tokens": [[tokens[t], round(float(weights[t]), 6)] for t in order],
            })
        record["levels"].append({"level": h, "labels": entries})
        offset += len(level_labels)
    return record


def _heatmap_page(record: dict) -> str:
    """Self-contained HTML: one row per surviving label, tokens shaded by weight."""
    tokens = record["tokens"]
    parts = [
        "<!DOCTYPE html>",
        "<html><head><meta charset='utf-8'>",
        f"<title>attention: {html.escape(record['id'])}</title>",
        "<style>body{font-family:sans-serif;margin:2em}"
        "table{border-collapse:collapse}"
        "td,th{padding:4px 6px;text-align:left}"
        "th{white-space:nowrap}"
        "span.tok{padding:1px 3px;border-radius:3px;display:inline-block;margin:1px}"
        "</style></head><body>",
        f"<h1>Document {html.escape(record['id'])}</h1>",
    ]
    weight_of = {}
    for level in record["levels"]:
        for entry in level["labels"]:
            weight_of[(level["level"], entry["label"])] = dict(
                (t, w) for t, w in entry["tokens"]
            )
    for level in record["levels"]:
        parts.append(f"<h2>Level {level['level']}</h2>")
        if not level["labels"]:
            parts.append("<p>No label above the score threshold.</p>")
            continue
        parts.append("<table>")
        for entry in level["labels"]:
            weights = weight_of[(level["level"], entry["label"])]
            peak = max(weights.values()) if weights else 1.0
            cells = []
            for tok in tokens:
                w = weights.get(tok, 0.0)
                intensity = 0.0 if peak <= 0 else w / peak
                cells.append(
                    f"<span class='tok' style='background:rgba(214,69,34,{intensity:.3f})'>"
                    f"{html.escape(tok)}</span>"
                )
            parts.append(
                f"<tr><th>{html.escape(entry['label'])} ({entry['score']:.3f})</th>"
                f"<td>{''.join(cells)}</td></tr>"
            )
        parts.append("</table>")
    parts.append("</body></html>")
    return "\n".join(parts)


# -- argument parsing ------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hierattn",
        description="Hierarchical multi-label text classifier with label-based attention.",
    )
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON run config file")
    shared.add_argument("--no-timestamp", action="store_true",
                        help="omit timestamps from output files")
    for key in PATH_KEYS:
        shared.add_argument(f"--{key.replace('_', '-')}", dest=key)
    shared.add_argument("--seed", type=int)
    shared.add_argument("--alpha", type=float)
    shared.add_argument("--variant", choices=sorted(VARIANT_ALIASES))
    shared.add_argument("--learning-rate", type=float, dest="learning_rate")
    shared.add_argument("--optimizer", choices=("adam", "sgd"))
    shared.add_argument("--batch-size", type=int, dest="batch_size")
    shared.add_argument("--max-epochs", type=int, dest="max_epochs")
    shared.add_argument("--patience", type=int)
    shared.add_argument("--max-len", type=int, dest="max_len")
    shared.add_argument("--embed-dim", type=int, dest="embed_dim")
    shared.add_argument("--component-dim", type=int, dest="component_dim")
    shared.add_argument("--components", type=int)
    shared.add_argument("--hidden-dim", type=int, dest="hidden_dim")
    shared.add_argument("--min-count", type=int, dest="min_count")
    shared.add_argument("--target-metric", type=float, dest="target_metric")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[shared],
                   help="check hierarchy and corpus files")
    sub.add_parser("train", parents=[shared], help="train and write a checkpoint")
    sub.add_parser("evaluate", parents=[shared],
                   help="report AU(PRC) on the test split")
    sub.add_parser("predict", parents=[shared],
                   help="write blended label scores for a corpus")
    explain = sub.add_parser("explain", parents=[shared],
                             help="export attention explanations")
    explain.add_argument("--ids", nargs="*", default=None,
                         help="document ids to explain (default: all)")
    explain.add_argument("--top-k", type=int, default=10, dest="top_k")
    explain.add_argument("--min-score", type=float, default=0.1, dest="min_score")
    return parser


COMMANDS = {
    "validate": cmd_validate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "explain": cmd_explain,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_run_config(args.config)
        cfg = apply_overrides(cfg, args)
        return COMMANDS[args.command](cfg, args)
    except HierattnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


def main_entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    main_entry()
