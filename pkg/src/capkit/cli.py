"""Command-line entry point.

Exit codes: 0 on success, 1 on operational errors (prefixed ``error:`` on
stderr), 2 on usage errors.  Every randomized command requires --seed and is
bit-reproducible.  Candidate files are JSONL ``{"id": ..., "caption": ...}``;
references travel as corpus manifests.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import corpus, decode, fense, metrics, reports, synth, toymodel, trainkit
from .errors import CapkitError


def _operational(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (CapkitError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _load_candidates(path: str) -> list[tuple[str, str]]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CapkitError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "id" not in obj or "caption" not in obj:
                raise CapkitError(f"{path}:{lineno}: need 'id' and 'caption' fields")
            pairs.append((str(obj["id"]), str(obj["caption"])))
    if not pairs:
        raise CapkitError(f"{path}: no candidates")
    return pairs


def _reference_map(manifest_path: str) -> dict[str, list[str]]:
    return {r.id: list(r.captions) for r in corpus.load_manifest(manifest_path)}


def _load_spice_sidecar(path: str) -> dict[str, float]:
    scores = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CapkitError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if "id" not in obj or "spice" not in obj:
                raise CapkitError(f"{path}:{lineno}: need 'id' and 'spice' fields")
            try:
                scores[str(obj["id"])] = float(obj["spice"])
            except (TypeError, ValueError) as exc:
                raise CapkitError(f"{path}:{lineno}: bad spice value: {exc}") from exc
    return scores


def _tokenize(caption: str) -> corpus.TokenizedCaption:
    return corpus.tokenize_or_raise(caption)


def _write_report(out: str, fmt: str, json_obj, csv_header, csv_rows) -> None:
    if fmt == "json":
        reports.write_json(out, json_obj)
    else:
        reports.write_csv(out, csv_header, csv_rows)


def _load_stop_words(path: str | None) -> frozenset[str]:
    if path is None:
        path = fense.default_lexicon_dir() / "stopwords.txt"
    return fense.load_word_list(path)


def _records_with_features(manifest: str, features_dir: str | None):
    records = corpus.load_manifest(manifest)
    contexts = []
    for record in records:
        if record.embedding_path is None:
            raise CapkitError(f"clip {record.id!r}: no embedding_path in manifest")
        path = Path(record.embedding_path)
        if not path.is_absolute() and features_dir is not None:
            path = Path(features_dir) / path
        if not path.is_file():
            raise CapkitError(f"clip {record.id!r}: missing feature file {path}")
        contexts.append(toymodel.AudioContext(toymodel.read_aemb(path)))
    return records, contexts


def _load_vocab(path: str) -> decode.Vocabulary:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CapkitError(f"{path}: invalid vocabulary JSON: {exc}") from exc
    if not isinstance(obj, dict) or "tokens" not in obj:
        raise CapkitError(f"{path}: vocabulary sidecar needs a 'tokens' list")
    return decode.Vocabulary(obj["tokens"], obj.get("tasks", ()))


def _save_vocab(path: Path, vocab: decode.Vocabulary) -> None:
    tokens = [vocab.token(i) for i in range(vocab.n_special, len(vocab))]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"tokens": tokens, "tasks": list(vocab.tasks)}, fh, indent=2)
        fh.write("\n")


format_option = click.option(
    "--format", "fmt", type=click.Choice(["json", "csv"]), default="json",
    show_default=True, help="Report format.",
)
out_option = click.option("--out", required=True, help="Output file path.")
seed_option = click.option("--seed", type=int, required=True, help="RNG seed.")


@click.group()
def main() -> None:
    """Caption-corpus auditing, captioning metrics, constrained decoding,
    and toy-captioner training."""


@main.command()
@click.option("--manifest", required=True, help="Corpus manifest (JSONL).")
@out_option
@format_option
@_operational
def stats(manifest: str, out: str, fmt: str) -> None:
    """Corpus summary statistics (counts, hours, vocabulary, lengths)."""
    result = corpus.corpus_stats(corpus.load_manifest(manifest))
    rows = reports.corpus_stats_rows(result)
    _write_report(out, fmt, dict(rows), ("statistic", "value"), rows)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--manifest", required=True, help="Corpus manifest (JSONL).")
@click.option("--n", type=int, default=1, show_default=True, help="N-gram order.")
@click.option("--top-k", type=int, default=None, help="Keep only the top K n-grams.")
@click.option("--stemmer", type=click.Choice(["porter", "none"]), default="porter",
              show_default=True, help="Stemmer applied before counting.")
@out_option
@format_option
@_operational
def ngrams(manifest: str, n: int, top_k: int | None, stemmer: str, out: str, fmt: str) -> None:
    """Ranked n-gram distribution over all captions."""
    records = corpus.load_manifest(manifest)
    captions = [_tokenize(c) for r in records for c in r.captions]
    ranked = corpus.ngram_distribution(captions, n, top_k=top_k, stemmer=stemmer)
    if fmt == "json":
        reports.write_json(out, [{"ngram": g, "count": c} for g, c in ranked])
    else:
        reports.write_csv(out, ("rank", "ngram", "count"),
                          [(i + 1, g, c) for i, (g, c) in enumerate(ranked)])
    click.echo(f"wrote {out}")


@main.command()
@click.option("--manifest", required=True, help="Manifest for dataset A (JSONL).")
@click.option("--manifest-b", default=None, help="Manifest for dataset B (JSONL).")
@click.option("--keys-b", default=None, help="Plain-text source-key list for B.")
@out_option
@format_option
@_operational
def overlap(manifest: str, manifest_b: str | None, keys_b: str | None, out: str, fmt: str) -> None:
    """Source-key overlap audit of dataset A against dataset B."""
    if (manifest_b is None) == (keys_b is None):
        raise CapkitError("provide exactly one of --manifest-b / --keys-b")
    a = corpus.load_manifest(manifest)
    if manifest_b is not None:
        b = corpus.load_manifest(manifest_b)
    else:
        with open(keys_b, encoding="utf-8") as fh:
            b = [line.strip() for line in fh if line.strip()]
    report = corpus.overlap_audit(a, b)
    obj = reports.overlap_report_dict(report)
    _write_report(out, fmt, obj, ("dataset_a", "dataset_b", "n_matched", "overlap_pct"),
                  [(report.dataset_a, report.dataset_b, len(report.matched_ids),
                    report.overlap_pct)])
    click.echo(f"overlap {report.dataset_a}/{report.dataset_b}: "
               f"{reports.fmt_float(report.overlap_pct)}%")


@main.command("filter-wc")
@click.option("--manifest", required=True, help="WavCaps-style manifest (JSONL).")
@click.option("--max-duration", type=float, default=30.0, show_default=True,
              help="Keep clips at most this long (seconds, inclusive).")
@click.option("--exclude-keys", default=None,
              help="Plain-text file of source keys to drop.")
@out_option
@_operational
def filter_wc(manifest: str, max_duration: float, exclude_keys: str | None, out: str) -> None:
    """Duration/overlap filter; writes the surviving records as a manifest."""
    records = corpus.load_manifest(manifest)
    keys: list[str] = []
    if exclude_keys is not None:
        with open(exclude_keys, encoding="utf-8") as fh:
            keys = [line.strip() for line in fh if line.strip()]
    kept = corpus.filter_wavcaps(records, max_duration, keys)
    corpus.write_manifest(kept, out)
    click.echo(f"kept {len(kept)}/{len(records)} clips -> {out}")


@main.command("sample-epoch")
@click.option("--manifest", required=True, help="Pooled training manifest (JSONL).")
@click.option("--target", required=True, help="Target dataset tag (supplies half the epoch).")
@seed_option
@out_option
@_operational
def sample_epoch(manifest: str, target: str, seed: int, out: str) -> None:
    """Balanced epoch plan: the full target dataset plus an equal random share
    of the rest."""
    plan = corpus.balanced_epoch(target.lower(), corpus.load_manifest(manifest), seed)
    reports.write_json(out, {
        "target_dataset": plan.target_dataset,
        "seed": plan.seed,
        "n_entries": len(plan.entries),
        "entries": [list(e) for e in plan.entries],
    })
    click.echo(f"planned {len(plan.entries)} entries -> {out}")


@main.command("eval")
@click.option("--candidates", required=True, help="Candidate captions (JSONL id/caption).")
@click.option("--references", required=True, help="Reference manifest (JSONL).")
@click.option("--spice-sidecar", default=None, help="Optional SPICE scores (JSONL id/spice).")
@click.option("--embeddings", default=None, help="Optional SEMB store for FENSE.")
@click.option("--lexicon-dir", default=None, help="Fluency lexicon directory.")
@out_option
@format_option
@_operational
def eval_cmd(candidates: str, references: str, spice_sidecar: str | None,
             embeddings: str | None, lexicon_dir: str | None, out: str, fmt: str) -> None:
    """Score candidates against references: CIDEr-D, optional SPIDEr/FENSE,
    and diversity statistics."""
    pairs = _load_candidates(candidates)
    ref_map = _reference_map(references)
    missing = [i for i, _ in pairs if i not in ref_map]
    if missing:
        raise CapkitError(f"candidates without references: {', '.join(missing[:5])}")
    ids = [i for i, _ in pairs]
    cand_tokens = [_tokenize(c) for _, c in pairs]
    ref_tokens = [[_tokenize(c) for c in ref_map[i]] for i in ids]

    spice = None
    if spice_sidecar is not None:
        sidecar = _load_spice_sidecar(spice_sidecar)
        absent = [i for i in ids if i not in sidecar]
        if absent:
            raise CapkitError(f"spice sidecar misses ids: {', '.join(absent[:5])}")
        spice = [sidecar[i] for i in ids]

    fense_scores = None
    if embeddings is not None:
        store = fense.SentenceEmbeddingStore.load(embeddings)
        lexicons = fense.Lexicons.load(lexicon_dir)
        fense_scores, _ = fense.score_fense(
            [c for _, c in pairs], [ref_map[i] for i in ids], store, lexicons
        )

    result = metrics.evaluate_corpus(cand_tokens, ref_tokens, spice=spice, fense=fense_scores)
    _write_report(out, fmt, reports.eval_result_dict(result, ids),
                  ("metric", "mean"), reports.eval_summary_rows(result))
    click.echo(f"cider_d mean {reports.fmt_float(result.cider_d_mean)} -> {out}")


@main.command()
@click.option("--references", required=True, help="Reference manifest (JSONL, >=2 captions per clip).")
@click.option("--repetitions", type=int, default=5, show_default=True)
@seed_option
@out_option
@format_option
@_operational
def crossref(references: str, repetitions: int, seed: int, out: str, fmt: str) -> None:
    """Human top-line: hold one reference out per item as the candidate,
    repeated and averaged."""
    records = corpus.load_manifest(references)
    items = [[_tokenize(c) for c in r.captions] for r in records]
    result = metrics.cross_reference(items, repetitions, seed)
    obj = reports.eval_result_dict(result, [r.id for r in records])
    obj["repetitions"] = repetitions
    obj["seed"] = seed
    _write_report(out, fmt, obj, ("metric", "mean"), reports.eval_summary_rows(result))
    click.echo(f"crossref cider_d mean {reports.fmt_float(result.cider_d_mean)} -> {out}")


@main.command("fense")
@click.option("--candidates", required=True, help="Candidate captions (JSONL id/caption).")
@click.option("--references", required=True, help="Reference manifest (JSONL).")
@click.option("--embeddings", required=True, help="SEMB sentence-embedding store.")
@click.option("--lexicon-dir", default=None, help="Fluency lexicon directory.")
@click.option("--sim-aggregate", type=click.Choice(["max", "mean"]), default="max",
              show_default=True, help="Similarity aggregation over references.")
@out_option
@format_option
@_operational
def fense_cmd(candidates: str, references: str, embeddings: str,
              lexicon_dir: str | None, sim_aggregate: str, out: str, fmt: str) -> None:
    """FENSE scores: SBERT cosine similarity gated by the fluency detector."""
    pairs = _load_candidates(candidates)
    ref_map = _reference_map(references)
    missing = [i for i, _ in pairs if i not in ref_map]
    if missing:
        raise CapkitError(f"candidates without references: {', '.join(missing[:5])}")
    store = fense.SentenceEmbeddingStore.load(embeddings)
    lexicons = fense.Lexicons.load(lexicon_dir)
    scores, verdicts = fense.score_fense(
        [c for _, c in pairs], [ref_map[i] for i, _ in pairs], store, lexicons,
        aggregate=sim_aggregate,
    )
    per_item = [
        {"id": i, "fense": s, "has_error": v.has_error,
         "triggered_rules": sorted(v.triggered_rules)}
        for (i, _), s, v in zip(pairs, scores, verdicts)
    ]
    mean = sum(scores) / len(scores)
    _write_report(out, fmt, {"per_item": per_item, "corpus": {"fense": mean}},
                  ("metric", "mean"), [("fense", mean)])
    click.echo(f"fense mean {reports.fmt_float(mean)} -> {out}")


@main.command("decode")
@click.option("--checkpoint", required=True, help="Toy-captioner checkpoint file.")
@click.option("--vocab", "vocab_path", required=True, help="Vocabulary sidecar (JSON).")
@click.option("--manifest", required=True, help="Manifest with embedding_path per clip.")
@click.option("--features-dir", default=None, help="Base directory for relative feature paths.")
@click.option("--task", default=None, help="Task-embedding tag replacing <bos>.")
@click.option("--beam-size", type=int, default=2, show_default=True)
@click.option("--min-len", type=int, default=3, show_default=True)
@click.option("--max-len", type=int, default=30, show_default=True)
@click.option("--stopwords", default=None, help="Stop-word file (repetition allowed).")
@out_option
@_operational
def decode_cmd(checkpoint: str, vocab_path: str, manifest: str, features_dir: str | None,
               task: str | None, beam_size: int, min_len: int, max_len: int,
               stopwords: str | None, out: str) -> None:
    """Beam-search captions for every clip; JSONL id/task/caption/logprob."""
    params = toymodel.load_checkpoint(checkpoint)
    vocab = _load_vocab(vocab_path)
    records, contexts = _records_with_features(manifest, features_dir)
    cfg = decode.DecodeConfig(
        beam_size=beam_size, min_len=min_len, max_len=max_len,
        stop_word_ids=vocab.stop_word_ids(_load_stop_words(stopwords)), task=task,
    )
    decoded = decode.beam_search(contexts, toymodel.ToyScorer(params), vocab, cfg)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for record, d in zip(records, decoded):
            fh.write(json.dumps({
                "id": record.id,
                "task": task if task is not None else "",
                "caption": " ".join(vocab.decode(d.token_ids)),
                "logprob": reports.fmt_float(d.cum_logprob),
            }, ensure_ascii=False) + "\n")
    click.echo(f"decoded {len(decoded)} clips -> {out}")


@main.command("te-compare")
@click.option("--task-a", required=True, help="First task-embedding tag.")
@click.option("--task-b", required=True, help="Second task-embedding tag.")
@click.option("--checkpoint", required=True, help="Toy-captioner checkpoint file.")
@click.option("--vocab", "vocab_path", required=True, help="Vocabulary sidecar (JSON).")
@click.option("--manifest", required=True, help="Manifest with embedding_path per clip.")
@click.option("--features-dir", default=None, help="Base directory for relative feature paths.")
@click.option("--beam-size", type=int, default=2, show_default=True)
@click.option("--min-len", type=int, default=3, show_default=True)
@click.option("--max-len", type=int, default=30, show_default=True)
@click.option("--stopwords", default=None, help="Stop-word file (repetition allowed).")
@click.option("--embeddings", default=None,
              help="Optional SEMB store adding per-task FENSE columns.")
@click.option("--lexicon-dir", default=None, help="Fluency lexicon directory.")
@click.option("--out", required=True, help="Output directory (pairs.jsonl + stats.json).")
@_operational
def te_compare_cmd(task_a: str, task_b: str, checkpoint: str, vocab_path: str,
                   manifest: str, features_dir: str | None, beam_size: int,
                   min_len: int, max_len: int, stopwords: str | None,
                   embeddings: str | None, lexicon_dir: str | None, out: str) -> None:
    """Decode every clip under two task embeddings; emit paired captions and
    a per-task table (CIDEr-D vs the manifest references, optional FENSE,
    #Words, mean sentence length) plus the cross-output SPIDEr (SPICE 0)."""
    params = toymodel.load_checkpoint(checkpoint)
    vocab = _load_vocab(vocab_path)
    records, contexts = _records_with_features(manifest, features_dir)
    cfg = decode.DecodeConfig(
        beam_size=beam_size, min_len=min_len, max_len=max_len,
        stop_word_ids=vocab.stop_word_ids(_load_stop_words(stopwords)),
    )
    report = decode.te_compare(contexts, toymodel.ToyScorer(params), vocab, cfg,
                               (task_a, task_b))
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "pairs.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for record, cap_a, cap_b in zip(records, report.captions_a, report.captions_b):
            fh.write(json.dumps({
                "id": record.id,
                f"caption_{task_a}": " ".join(cap_a),
                f"caption_{task_b}": " ".join(cap_b),
            }, ensure_ascii=False) + "\n")

    store = fense.SentenceEmbeddingStore.load(embeddings) if embeddings else None
    lexicons = fense.Lexicons.load(lexicon_dir) if embeddings else None
    ref_sets = [[_tokenize(c) for c in r.captions] for r in records]
    per_task = {}
    for task, captions, n_words, mean_len in (
        (task_a, report.captions_a, report.n_unique_words_a,
         report.mean_sentence_length_a),
        (task_b, report.captions_b, report.n_unique_words_b,
         report.mean_sentence_length_b),
    ):
        fense_scores = None
        if store is not None:
            fense_scores, _ = fense.score_fense(
                [" ".join(c) for c in captions],
                [list(r.captions) for r in records], store, lexicons,
            )
        scored = metrics.evaluate_corpus(captions, ref_sets, fense=fense_scores)
        block = {"cider_d": scored.cider_d_mean}
        if fense_scores is not None:
            block["fense"] = scored.fense_mean
        block["n_words"] = n_words
        block["mean_sent_len"] = mean_len
        per_task[task] = block

    cross = metrics.evaluate_corpus(report.captions_a,
                                    [[c] for c in report.captions_b])
    _, cross_spider = metrics.spider(cross.cider_d, [0.0] * len(cross.cider_d))
    reports.write_json(out_dir / "stats.json", {
        "task_a": task_a,
        "task_b": task_b,
        "per_task": per_task,
        "cross_output": {"cider_d": cross.cider_d_mean, "spider": cross_spider},
    })
    click.echo(f"paired decode of {len(records)} clips -> {out_dir}")


@main.command("train-toy")
@click.option("--manifest", required=True, help="Training manifest with embedding paths.")
@click.option("--features-dir", default=None, help="Base directory for relative feature paths.")
@click.option("--config", "config_path", default=None, help="key = value hyperparameter file.")
@click.option("--tasks", default="auto",
              help="Comma-separated task tags, or 'auto' (= dataset tags present).")
@click.option("--balance-target", default=None, help="Dataset tag to balance epochs toward.")
@click.option("--d-model", type=int, default=16, show_default=True)
@seed_option
@click.option("--out", required=True, help="Output directory (checkpoint + vocab + trace).")
@_operational
def train_toy_cmd(manifest: str, features_dir: str | None, config_path: str | None,
                  tasks: str, balance_target: str | None, d_model: int,
                  seed: int, out: str) -> None:
    """Train the toy captioner; writes checkpoint.toyc, vocab.json, trace.json."""
    cfg = trainkit.TrainConfig.from_file(config_path) if config_path else trainkit.TrainConfig()
    click.echo("resolved config:")
    for key, value in cfg.as_dict().items():
        click.echo(f"  {key} = {value}")
    records, contexts = _records_with_features(manifest, features_dir)
    features = {r.id: c.features for r, c in zip(records, contexts)}
    train_records = [r for r in records if r.subset == "train"]
    val_records = [r for r in records if r.subset == "val"]
    if tasks == "auto":
        task_list: tuple[str, ...] = tuple(sorted({r.dataset for r in records}))
    elif tasks:
        task_list = tuple(t.strip() for t in tasks.split(",") if t.strip())
    else:
        task_list = ()
    result = toymodel.train_toy(
        train_records or records, features, cfg, tasks=task_list, seed=seed,
        val_records=val_records, d_model=d_model, balance_target=balance_target,
        stop_words=_load_stop_words(None),
    )
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    toymodel.save_checkpoint(out_dir / "checkpoint.toyc", result.params)
    _save_vocab(out_dir / "vocab.json", result.vocab)
    reports.write_json(out_dir / "trace.json", {
        "best_epoch": result.best_epoch,
        "epochs": [
            {"epoch": e.epoch, "lr": e.lr, "train_loss": e.train_loss,
             "val_metric": e.val_metric, "val_metric_name": e.val_metric_name}
            for e in result.trace
        ],
    })
    first, last = result.trace[0].train_loss, result.trace[-1].train_loss
    click.echo(f"train loss {reports.fmt_float(first)} -> {reports.fmt_float(last)}; "
               f"artifacts in {out_dir}")


@main.command("gen-synth")
@click.option("--n-clips", type=int, default=60, show_default=True)
@click.option("--tasks", default="ac,cl", show_default=True,
              help="Comma-separated task tags (round-robin assignment).")
@click.option("--d-audio", type=int, default=12, show_default=True)
@click.option("--captions-per-clip", type=int, default=1, show_default=True,
              help="Template variants per clip (>= 2 enables crossref runs).")
@seed_option
@click.option("--out", required=True, help="Output directory (manifest + features).")
@_operational
def gen_synth(n_clips: int, tasks: str, d_audio: int, captions_per_clip: int,
              seed: int, out: str) -> None:
    """Generate the two-style synthetic corpus (manifest + AEMB features)."""
    task_list = tuple(t.strip() for t in tasks.split(",") if t.strip())
    records, _ = synth.generate_synthetic_corpus(
        n_clips, seed, tasks=task_list, d_audio=d_audio,
        captions_per_clip=captions_per_clip, out_dir=out,
    )
    click.echo(f"generated {len(records)} clips -> {out}")


if __name__ == "__main__":
    main()
