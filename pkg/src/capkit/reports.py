"""Plot-ready JSON and CSV emitters with stable float formatting.

Every floating-point value is rounded to 6 significant digits before
emission so reports are stable enough for golden-file comparisons.

Fixed column orders:

* eval CSV summary: rows ``(metric, mean)`` in the order cider_d, spice,
  spider, fense, n_words, mean_sent_len (absent metrics are omitted);
* corpus stats CSV: rows ``(statistic, value)`` in the CorpusStats field
  order;
* n-gram CSV: columns ``rank, ngram, count``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import CorpusStats, OverlapReport
from .metrics import EvalResult

EVAL_METRIC_ORDER = ("cider_d", "spice", "spider", "fense", "n_words", "mean_sent_len")


def fmt_float(value: float) -> float:
    """Round to 6 significant digits."""
    return float(f"{value:.6g}")


def _rounded(obj):
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    return obj


def write_json(path: str | Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_rounded(obj), fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt_float(v) if isinstance(v, float) else v for v in row])


def eval_result_dict(result: EvalResult, ids: Sequence[str] | None = None) -> dict:
    """Per-item and corpus-level blocks for the eval JSON report."""
    n = len(result.cider_d)
    ids = list(ids) if ids is not None else [str(i) for i in range(n)]
    per_item = []
    spider = result.spider
    for i in range(n):
        entry: dict = {"id": ids[i], "cider_d": result.cider_d[i]}
        if result.spice is not None:
            entry["spice"] = result.spice[i]
            entry["spider"] = spider[i]
        if result.fense is not None:
            entry["fense"] = result.fense[i]
        per_item.append(entry)
    corpus: dict = {"cider_d": result.cider_d_mean}
    if result.spice is not None:
        corpus["spice"] = result.spice_mean
        corpus["spider"] = result.spider_mean
    if result.fense is not None:
        corpus["fense"] = result.fense_mean
    corpus["n_words"] = result.n_unique_words
    corpus["mean_sent_len"] = result.mean_sentence_length
    return {"per_item": per_item, "corpus": corpus}


def eval_summary_rows(result: EvalResult) -> list[tuple[str, float]]:
    """(metric, mean) rows in the fixed order, skipping absent metrics."""
    values = {
        "cider_d": result.cider_d_mean,
        "spice": result.spice_mean,
        "spider": result.spider_mean,
        "fense": result.fense_mean,
        "n_words": result.n_unique_words,
        "mean_sent_len": result.mean_sentence_length,
    }
    return [(m, values[m]) for m in EVAL_METRIC_ORDER if values[m] is not None]


def corpus_stats_rows(stats: CorpusStats) -> list[tuple[str, object]]:
    return [
        ("n_audio", stats.n_audio),
        ("audio_hours", stats.audio_hours),
        ("vocab_size", stats.vocab_size),
        ("n_words", stats.n_words),
        ("caption_len_min", stats.caption_len_min),
        ("caption_len_max", stats.caption_len_max),
        ("caption_len_mean", stats.caption_len_mean),
        ("captions_per_audio_min", stats.captions_per_audio_min),
        ("captions_per_audio_max", stats.captions_per_audio_max),
    ]


def overlap_report_dict(report: OverlapReport) -> dict:
    return {
        "dataset_a": report.dataset_a,
        "dataset_b": report.dataset_b,
        "n_matched": len(report.matched_ids),
        "overlap_pct": report.overlap_pct,
        "matched_ids": [list(pair) for pair in report.matched_ids],
    }
