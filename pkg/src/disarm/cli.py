"""Command-line entry point.

Exit codes: 0 success, 1 validation or contract failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import statistics
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import torch

from . import reporting
from .ablation import AblationData, run_all
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .dataset.candidates import EntityLexicon, extract_candidates
from .dataset.context import ContextCache, fetch_context, load_search_client
from .dataset.records import (
    ContextDoc,
    MemeRecord,
    read_instances,
    validate_manifest,
    write_instances,
)
from .dataset.sampling import build_all_instances
from .dataset.stats import corpus_stats
from .encoders import EncoderSet
from .errors import ConfigError, DisarmError
from .evaluation import EvalReport, evaluate
from .features import FeatureSet, featurize
from .model import VARIANTS, DisarmModel
from .training import train

log = logging.getLogger("disarm")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _write_json(path: Path, obj) -> Path:
    return _write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_records(cfg: RunConfig) -> dict[str, MemeRecord]:
    report = validate_manifest(cfg.path("manifest", must_exist=True))
    if not report.ok:
        raise DisarmError(f"manifest has {len(report.violations)} violation(s); run build-dataset for the report")
    return {r.id: r for r in report.records}


def _contexts(cfg: RunConfig, records: dict[str, MemeRecord]) -> dict[str, ContextDoc]:
    """Context per meme: the manifest's own, else the cache entry, else an empty flagged document."""
    cache_path = cfg.paths.get("cache")
    cache = ContextCache(cache_path) if cache_path is not None and cache_path.exists() else None
    out = {}
    for rid, rec in records.items():
        doc = rec.context or (cache.get(rec.ocr_text) if cache is not None else None)
        out[rid] = doc or ContextDoc.failure(rec.ocr_text)
    return out


def _features(cfg: RunConfig, split: str, records, contexts, encoders) -> FeatureSet:
    path = cfg.path("instances") / f"{split}.jsonl"
    if not path.is_file():
        raise DisarmError(f"missing instance file {path}; run build-dataset first")
    return featurize(read_instances(path), records, encoders, contexts)


def _encoders(cfg: RunConfig) -> EncoderSet:
    return EncoderSet.from_names(cfg.encoders, seed=cfg.encoder_seed)


# -- commands ----------------------------------------------------------------

def cmd_build_dataset(cfg: RunConfig, args) -> int:
    manifest = cfg.path("manifest", must_exist=True)
    lexicon = EntityLexicon.load(cfg.path("lexicon", must_exist=True))
    reports = cfg.path("reports")
    report = validate_manifest(manifest)
    _write(reports / "validation.txt", report.to_text())
    _write_json(reports / "validation.json", report.to_dict())
    if not report.ok:
        print(report.to_text(), end="")
        return EXIT_FAIL

    records = report.records
    for rec in records:
        if not rec.candidates:
            rec.candidates = extract_candidates(rec.image_path, rec.ocr_text, lexicon)
    instances = build_all_instances(records, lexicon)
    out = cfg.path("instances")
    for split, rows in instances.items():
        write_instances(out / f"{split}.jsonl", rows)

    counts: dict[str, dict[str, int]] = {}
    for split, rows in instances.items():
        for i in rows:
            key = i.scenario if split == "test" else split
            c = counts.setdefault(key, {"harmful": 0, "not_harmful": 0})
            c["harmful" if i.label else "not_harmful"] += 1
    _write_json(reports / "instances.json", counts)
    lines = [f"{'set':<12}{'harmful':>9}{'not-harmful':>13}"]
    lines += [f"{k:<12}{v['harmful']:>9}{v['not_harmful']:>13}" for k, v in sorted(counts.items())]
    _write(reports / "instances.txt", "\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def cmd_fetch_contexts(cfg: RunConfig, args) -> int:
    if not cfg.search_client:
        raise ConfigError("search_client is not configured")
    client = load_search_client(cfg.search_client, cfg.base_dir)
    report = validate_manifest(cfg.path("manifest", must_exist=True), check_images=False)
    cache = ContextCache(cfg.path("cache"))
    queries, cached = [], 0
    for rec in report.records:
        if rec.context is not None or rec.ocr_text in cache:
            cached += 1
        elif rec.ocr_text not in queries:
            queries.append(rec.ocr_text)
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        docs = list(pool.map(lambda q: fetch_context(q, client, cache), queries))
    failed = sum(d.failed for d in docs)
    print(f"fetched {len(docs) - failed}, cached {cached}, failed {failed}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    records = _load_records(cfg)
    contexts = _contexts(cfg, records)
    enc = _encoders(cfg)
    tr = _features(cfg, "train", records, contexts, enc)
    va = _features(cfg, "validation", records, contexts, enc)
    reports, ckpts = cfg.path("reports"), cfg.path("checkpoints")
    best = []
    for i in range(cfg.runs):
        seed = cfg.run_seed(i)
        tcfg = cfg.train.__class__(**{**cfg.train.to_dict(), "seed": seed})
        model = DisarmModel(sorted(set(tr.entities)), cfg.model, "full", seed=seed, ct_nonlinear=cfg.ct_nonlinear)
        model, history = train(tcfg, tr, va, model)
        save_checkpoint(ckpts / f"run-{i}", model, encoders=enc.names(), threshold=tcfg.threshold, seed=seed)
        hist = {**history.to_dict(), "seed": seed, "config": tcfg.to_dict()}
        _write_json(reports / f"history-run-{i}.json", hist)
        reporting.plot_history(hist, reports / "figures" / f"history-run-{i}.png")
        best.append(history.best_val_macro_f1)
        print(f"run {i} (seed {seed}): best validation macro-F1 {history.best_val_macro_f1:.4f} "
              f"at epoch {history.best_epoch} of {len(history.epochs)}")
    if cfg.runs > 1:
        mean, std = statistics.mean(best), statistics.pstdev(best)
        _write_json(reports / "train_summary.json", {"runs": cfg.runs, "best_val_macro_f1": best,
                                                     "mean": mean, "std": std})
        print(f"best validation macro-F1 over {cfg.runs} runs: {mean:.4f} ± {std:.4f}")
    return EXIT_OK


def _mean_reports(per_run: list[dict[str, EvalReport]]) -> dict:
    out = {}
    for s in per_run[0]:
        vals = [r[s] for r in per_run if s in r]
        out[s] = {m: {"mean": statistics.mean(getattr(v, m) for v in vals),
                      "std": statistics.pstdev(getattr(v, m) for v in vals)}
                  for m in ("accuracy", "macro_precision", "macro_recall", "macro_f1")}
    return out


def cmd_evaluate(cfg: RunConfig, args) -> int:
    records = _load_records(cfg)
    contexts = _contexts(cfg, records)
    enc = _encoders(cfg)
    test = _features(cfg, "test", records, contexts, enc)
    if args.checkpoint:
        ckpts = [Path(args.checkpoint)]
    else:
        ckpts = [cfg.path("checkpoints") / f"run-{i}" for i in range(cfg.runs)]
    out = cfg.path("reports") / "evaluation"
    per_run = []
    for k, ck in enumerate(ckpts):
        model, meta = load_checkpoint(ck, dims=cfg.model, variant="full")
        if meta.get("encoders") and meta["encoders"] != enc.names():
            log.warning("checkpoint was trained with encoders %s, evaluating with %s", meta["encoders"], enc.names())
        reports = evaluate(model, test, meta.get("threshold", cfg.train.threshold))
        per_run.append(reports)
        sub = out if len(ckpts) == 1 else out / f"run-{k}"
        for s, r in reports.items():
            _write_json(sub / f"{s}.json", r.to_dict())
            _write(sub / f"{s}.txt", reporting.format_report_table({s: r}, title=f"Test set {s}"))
        table = reporting.format_report_table(reports, title=f"checkpoint {ck.name}")
        _write(sub / "summary.txt", table)
        reporting.plot_scenario_scores(reports, sub / "figures" / "scores.png")
        reporting.plot_confusions(reports, sub / "figures" / "confusion.png")
        print(table)
    if len(per_run) > 1:
        summary = _mean_reports(per_run)
        _write_json(out / "mean_std.json", summary)
        for s, ms in summary.items():
            f = ms["macro_f1"]
            print(f"{s:<10} macro-F1 {f['mean']:.4f} ± {f['std']:.4f}")
    return EXIT_OK


def cmd_ablate(cfg: RunConfig, args) -> int:
    records = _load_records(cfg)
    contexts = _contexts(cfg, records)
    enc = _encoders(cfg)
    data = AblationData(_features(cfg, "train", records, contexts, enc),
                        _features(cfg, "validation", records, contexts, enc),
                        _features(cfg, "test", records, contexts, enc))
    variants = [args.variant] if args.variant else list(VARIANTS)
    results = run_all(variants, cfg.train, data, cfg.model)
    rows = [(r.variant, r.reports) for r in results]
    table = reporting.format_ablation_table(rows)
    reports = cfg.path("reports")
    _write(reports / "ablation.txt", table)
    _write_json(reports / "ablation.json", [
        {"variant": r.variant, "error": r.error,
         "reports": {s: rep.to_dict() for s, rep in (r.reports or {}).items()}} for r in results])
    reporting.plot_ablation(rows, reports / "figures" / "ablation.png")
    print(table, end="")
    failed = [r.variant for r in results if r.error]
    if failed:
        print(f"failed variants: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_stats(cfg: RunConfig, args) -> int:
    report = validate_manifest(cfg.path("manifest", must_exist=True), check_images=False)
    if not report.records:
        print("manifest has no records", file=sys.stderr)
        return EXIT_FAIL
    lex_path = cfg.paths.get("lexicon")
    lexicon = EntityLexicon.load(lex_path) if lex_path is not None and lex_path.exists() else None
    stats = corpus_stats(report.records, lexicon, k=args.k)
    out = cfg.path("reports") / "stats"
    _write(out / "top_entities.txt", stats.top_table_text())
    _write(out / "top_entities.csv", stats.top_table_csv())
    _write(out / "length_histogram.txt", stats.histogram_text())
    _write(out / "length_histogram.csv", stats.histogram_csv())
    _write_json(out / "stats.json", stats.to_dict())
    reporting.plot_length_histograms(stats, out / "figures" / "length_histogram.png")
    reporting.plot_top_entities(stats, out / "figures" / "top_entities.png")
    reporting.plot_entity_lengths(stats, out / "figures" / "entity_lengths.png")
    print(stats.top_table_text())
    print(stats.histogram_text(), end="")
    return EXIT_OK


COMMANDS = {
    "build-dataset": (cmd_build_dataset, "validate the manifest and write train/validation/test instances"),
    "fetch-contexts": (cmd_fetch_contexts, "retrieve context documents into the cache"),
    "train": (cmd_train, "train the model and write checkpoints and histories"),
    "evaluate": (cmd_evaluate, "evaluate checkpoints on test scenarios A/B/C"),
    "ablate": (cmd_ablate, "train and evaluate every ablation variant"),
    "stats": (cmd_stats, "corpus statistics: top entities and text-length histograms"),
}


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", required=True, help="run configuration file (YAML or JSON)")
    shared.add_argument("--seed", type=int, help="override the config seed")
    shared.add_argument("--jobs", type=int, default=1, help="parallel workers / torch threads")
    shared.add_argument("--runs", type=int, help="independent training runs (seed, seed+1, ...)")
    shared.add_argument("--variant", choices=VARIANTS, help="ablate: run only this variant")
    shared.add_argument("--k", type=int, default=5, help="stats: entities per top-k table")
    shared.add_argument("--checkpoint", help="evaluate: checkpoint directory (default: all run-* dirs)")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="disarm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sub.add_parser(name, parents=[shared], help=help_)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(max(1, args.jobs))
    try:
        cfg = RunConfig.load(args.config).with_overrides(seed=args.seed, runs=args.runs)
        return COMMANDS[args.command][0](cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DisarmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
