"""Caption corpus loading, preprocessing, auditing, sampling, and summaries.

The on-disk manifest format is JSON-Lines (UTF-8, LF), one object per clip:

    {"id": str, "dataset": str, "subset": str, "duration_sec": float,
     "captions": [str], "source_key": str?, "embedding_path": str?}

All operations are pure functions over immutable inputs; randomized ones
take explicit integer seeds.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import CapkitError, ManifestError
from .stem import make_stemmer

KNOWN_DATASETS = ("ac", "cl", "ma", "wc_as", "wc_fs", "wc_sb", "wc_bbc")
WAVCAPS_PREFIX = "wc_"

REJECT_EMPTY = "empty"
REJECT_TOO_LONG = "too_long"


@dataclass(frozen=True)
class ClipRecord:
    """One captioned audio clip.

    ``dataset`` is a lowercase tag: one of the known tags above or any other
    name (treated as an ad-hoc dataset).  ``source_key`` is the upstream
    identifier used for overlap matching (e.g. a video or file id).
    """

    id: str
    dataset: str
    subset: str
    duration_sec: float
    captions: tuple[str, ...]
    source_key: str | None = None
    embedding_path: str | None = None

    def __post_init__(self) -> None:
        if not self.captions:
            raise ManifestError(f"clip {self.id!r}: captions must be non-empty")
        if self.duration_sec < 0:
            raise ManifestError(
                f"clip {self.id!r}: negative duration {self.duration_sec}"
            )

    def is_wavcaps(self) -> bool:
        return self.dataset.startswith(WAVCAPS_PREFIX)


@dataclass(frozen=True)
class TokenizedCaption:
    tokens: tuple[str, ...]
    original: str


@dataclass(frozen=True)
class RejectedCaption:
    original: str
    reason: str  # REJECT_EMPTY or REJECT_TOO_LONG


def preprocess_caption(
    raw: str, max_words: int | None = None
) -> TokenizedCaption | RejectedCaption:
    """Lowercase, replace every Unicode punctuation character by a space,
    and split on whitespace.

    Returns a :class:`RejectedCaption` when nothing survives cleaning or when
    the token count exceeds ``max_words`` (when given).
    """
    chars = []
    for ch in raw.lower():
        chars.append(" " if unicodedata.category(ch).startswith("P") else ch)
    tokens = "".join(chars).split()
    if not tokens:
        return RejectedCaption(raw, REJECT_EMPTY)
    if max_words is not None and len(tokens) > max_words:
        return RejectedCaption(raw, REJECT_TOO_LONG)
    return TokenizedCaption(tuple(tokens), raw)


def tokenize_or_raise(raw: str) -> TokenizedCaption:
    """Tokenize a caption that is required to be non-empty after cleaning."""
    out = preprocess_caption(raw)
    if isinstance(out, RejectedCaption):
        raise CapkitError(f"caption {raw!r} is empty after preprocessing")
    return out


TokensLike = Union[TokenizedCaption, Sequence[str]]


def tokens_of(caption: TokensLike) -> tuple[str, ...]:
    if isinstance(caption, TokenizedCaption):
        return caption.tokens
    return tuple(caption)


def load_manifest(path: str | Path) -> list[ClipRecord]:
    """Read a JSONL manifest; errors carry the 1-based line number."""
    records: list[ClipRecord] = []
    seen: set[tuple[str, str, str]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise ManifestError(f"{path}:{lineno}: expected a JSON object")
            missing = [k for k in ("id", "dataset", "subset", "duration_sec", "captions") if k not in obj]
            if missing:
                raise ManifestError(
                    f"{path}:{lineno}: missing field(s) {', '.join(missing)}"
                )
            captions = obj["captions"]
            if not isinstance(captions, list) or not all(isinstance(c, str) for c in captions):
                raise ManifestError(f"{path}:{lineno}: 'captions' must be a list of strings")
            try:
                record = ClipRecord(
                    id=str(obj["id"]),
                    dataset=str(obj["dataset"]).lower(),
                    subset=str(obj["subset"]),
                    duration_sec=float(obj["duration_sec"]),
                    captions=tuple(captions),
                    source_key=obj.get("source_key"),
                    embedding_path=obj.get("embedding_path"),
                )
            except ManifestError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            key = (record.dataset, record.subset, record.id)
            if key in seen:
                raise ManifestError(
                    f"{path}:{lineno}: duplicate id {record.id!r} within "
                    f"({record.dataset}, {record.subset})"
                )
            seen.add(key)
            records.append(record)
    return records


def write_manifest(records: Iterable[ClipRecord], path: str | Path) -> None:
    """Write records as JSONL (UTF-8, LF), omitting unset optional fields."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            obj: dict = {
                "id": r.id,
                "dataset": r.dataset,
                "subset": r.subset,
                "duration_sec": r.duration_sec,
                "captions": list(r.captions),
            }
            if r.source_key is not None:
                obj["source_key"] = r.source_key
            if r.embedding_path is not None:
                obj["embedding_path"] = r.embedding_path
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def filter_wavcaps(
    records: Iterable[ClipRecord],
    max_duration_sec: float = 30.0,
    exclusion_keys: Iterable[str] = (),
) -> list[ClipRecord]:
    """Keep clips lasting at most ``max_duration_sec`` (boundary inclusive)
    whose source_key is not in the exclusion set."""
    excluded = frozenset(exclusion_keys)
    return [
        r
        for r in records
        if r.duration_sec <= max_duration_sec
        and (r.source_key is None or r.source_key not in excluded)
    ]


@dataclass(frozen=True)
class OverlapReport:
    dataset_a: str
    dataset_b: str
    matched_ids: tuple[tuple[str, str], ...]
    overlap_pct: float  # 100 * |matched in A| / |A|


def overlap_audit(
    a: Sequence[ClipRecord],
    b: Sequence[ClipRecord] | Sequence[str],
    dataset_b: str | None = None,
) -> OverlapReport:
    """Match records of A against B (records or a bare source-key list) on
    exact source_key equality.

    Each matched A record contributes exactly one ``(id_a, id_b)`` pair,
    taking the first B occurrence of the key in input order.
    """
    a = list(a)
    b = list(b)
    if not a:
        raise CapkitError("overlap_audit: dataset A is empty")
    missing = [r.id for r in a if r.source_key is None]

    b_keys: dict[str, str] = {}
    label_b = dataset_b
    if b and isinstance(b[0], ClipRecord):
        for r in b:  # type: ignore[assignment]
            if r.source_key is None:
                missing.append(r.id)
            elif r.source_key not in b_keys:
                b_keys[r.source_key] = r.id
        if label_b is None:
            label_b = b[0].dataset  # type: ignore[union-attr]
    else:
        for key in b:
            if key not in b_keys:
                b_keys[str(key)] = str(key)
        if label_b is None:
            label_b = "keys"

    if missing:
        raise CapkitError(
            "overlap_audit: records missing source_key: " + ", ".join(missing)
        )

    matched = tuple(
        (r.id, b_keys[r.source_key]) for r in a if r.source_key in b_keys
    )
    pct = 100.0 * len(matched) / len(a)
    return OverlapReport(a[0].dataset, label_b, matched, pct)


@dataclass(frozen=True)
class EpochPlan:
    """One balanced training epoch: the full target dataset plus an equally
    sized sample drawn without replacement from the other datasets."""

    target_dataset: str
    entries: tuple[tuple[str, str, str], ...]  # (dataset, subset, id)
    seed: int


def balanced_epoch(
    target: str, pool: Iterable[ClipRecord], seed: int
) -> EpochPlan:
    pool = list(pool)
    keys = [(r.dataset, r.id) for r in pool]
    dupes = [k for k, c in Counter(keys).items() if c > 1]
    if dupes:
        raise CapkitError(
            f"balanced_epoch: duplicate (dataset, id) pairs in pool: {dupes[:5]}"
        )
    target_records = [r for r in pool if r.dataset == target]
    other_records = [r for r in pool if r.dataset != target]
    if not target_records:
        raise CapkitError(f"balanced_epoch: no records for target dataset {target!r}")
    n = len(target_records)
    if len(other_records) < n:
        raise CapkitError(
            f"balanced_epoch: non-target pool has {len(other_records)} records, "
            f"need at least {n} (sampling is without replacement)"
        )
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(other_records), size=n, replace=False)
    entries = [(r.dataset, r.subset, r.id) for r in target_records]
    entries += [
        (other_records[i].dataset, other_records[i].subset, other_records[i].id)
        for i in picks
    ]
    order = rng.permutation(len(entries))
    return EpochPlan(target, tuple(entries[i] for i in order), seed)


def select_caption(record: ClipRecord, rng: np.random.Generator) -> str:
    """Uniform seeded choice among a clip's captions (one draw per call,
    also for single-caption clips, to keep RNG consumption uniform)."""
    idx = int(rng.integers(len(record.captions)))
    return record.captions[idx]


@dataclass(frozen=True)
class CorpusStats:
    n_audio: int
    audio_hours: float
    vocab_size: int
    n_words: int
    caption_len_min: int
    caption_len_max: int
    caption_len_mean: float
    captions_per_audio_min: int
    captions_per_audio_max: int


def corpus_stats(records: Sequence[ClipRecord]) -> CorpusStats:
    """Per-dataset summary: audio count and hours, vocabulary size over raw
    tokens, token totals, caption-length and captions-per-audio ranges."""
    if not records:
        raise CapkitError("corpus_stats: no records")
    vocab: set[str] = set()
    n_words = 0
    lengths: list[int] = []
    for r in records:
        for raw in r.captions:
            tokens = tokenize_or_raise(raw).tokens
            vocab.update(tokens)
            n_words += len(tokens)
            lengths.append(len(tokens))
    per_audio = [len(r.captions) for r in records]
    return CorpusStats(
        n_audio=len(records),
        audio_hours=sum(r.duration_sec for r in records) / 3600.0,
        vocab_size=len(vocab),
        n_words=n_words,
        caption_len_min=min(lengths),
        caption_len_max=max(lengths),
        caption_len_mean=sum(lengths) / len(lengths),
        captions_per_audio_min=min(per_audio),
        captions_per_audio_max=max(per_audio),
    )


def ngram_distribution(
    captions: Iterable[TokensLike],
    n: int,
    top_k: int | None = None,
    stemmer: str | None = "porter",
) -> list[tuple[str, int]]:
    """Ranked (ngram, count) list, count-descending with lexicographic
    tie-break.  Tokens are stemmed first (Porter by default; pass
    ``stemmer=None`` to disable)."""
    if n < 1:
        raise CapkitError(f"ngram_distribution: n must be >= 1, got {n}")
    stem = make_stemmer(stemmer)
    counts: Counter[str] = Counter()
    for cap in captions:
        tokens = [stem(t) for t in tokens_of(cap)]
        for i in range(len(tokens) - n + 1):
            counts[" ".join(tokens[i : i + n])] += 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:top_k] if top_k is not None else ranked
