"""FENSE scoring: sentence-embedding cosine similarity gated by a
deterministic, rule-based fluency-error detector.

The detector approximates the five error categories with explicit rules
over user-overridable word lists (see ``data/lexicons/``):

1. repeated_ngram       - a 4-gram occurs twice, or a non-stop-word token
                          occurs twice anywhere in the caption;
2. incomplete_sentence  - the caption ends on a forbidden final token
                          (conjunctions, prepositions, articles);
3. repeated_adverb      - the same adverb-lexicon token occurs twice;
4. missing_conjunction  - two verb-lexicon tokens with no conjunction
                          between them;
5. missing_verb         - no verb-lexicon token at all.

Sentence embeddings live in a binary "SEMB" store keyed by the SHA-256 hex
of the caption's UTF-8 bytes, so candidate and reference captions share one
store.  Layout (all integers little-endian): magic ``SEMB``, u32 version=1,
u32 count, u32 dim, then per entry u16 key length, UTF-8 key bytes, and dim
little-endian f32 values.  Entries are written sorted by key.
"""

from __future__ import annotations

import hashlib
import os
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import TokensLike, tokens_of
from .errors import CapkitError, FormatError

SEMB_MAGIC = b"SEMB"
SEMB_VERSION = 1

FLUENCY_RULES = (
    "repeated_ngram",
    "incomplete_sentence",
    "repeated_adverb",
    "missing_conjunction",
    "missing_verb",
)

LEXICON_ENV_VAR = "CAPKIT_LEXICON_DIR"
_LEXICON_FILES = {
    "verbs": "verbs.txt",
    "adverbs": "adverbs.txt",
    "conjunctions": "conjunctions.txt",
    "sentence_final_forbidden": "sentence_final.txt",
    "stop_words": "stopwords.txt",
}


def caption_key(caption: str) -> str:
    """SHA-256 hex digest of the caption's UTF-8 bytes."""
    return hashlib.sha256(caption.encode("utf-8")).hexdigest()


def load_word_list(path: str | Path) -> frozenset[str]:
    """One lowercase word per line; ``#`` starts a comment."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.split("#", 1)[0].strip().lower()
            if word:
                words.add(word)
    return frozenset(words)


def default_lexicon_dir() -> Path:
    return Path(__file__).parent / "data" / "lexicons"


@dataclass(frozen=True)
class Lexicons:
    verbs: frozenset[str]
    adverbs: frozenset[str]
    conjunctions: frozenset[str]
    sentence_final_forbidden: frozenset[str]
    stop_words: frozenset[str]

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "Lexicons":
        """Load from ``directory``, the ``CAPKIT_LEXICON_DIR`` environment
        variable, or the packaged defaults, in that order."""
        if directory is None:
            directory = os.environ.get(LEXICON_ENV_VAR) or default_lexicon_dir()
        directory = Path(directory)
        fields = {}
        for field, filename in _LEXICON_FILES.items():
            path = directory / filename
            if not path.is_file():
                raise CapkitError(f"lexicon file not found: {path}")
            fields[field] = load_word_list(path)
        return cls(**fields)


@dataclass(frozen=True)
class FluencyVerdict:
    has_error: bool
    triggered_rules: frozenset[str]

    def __post_init__(self) -> None:
        if self.has_error != bool(self.triggered_rules):
            raise CapkitError("FluencyVerdict: has_error must match triggered_rules")


def detect_fluency_errors(caption: TokensLike, lexicons: Lexicons) -> FluencyVerdict:
    tokens = tokens_of(caption)
    rules: set[str] = set()

    fourgrams = Counter(tuple(tokens[i : i + 4]) for i in range(len(tokens) - 3))
    repeated_fourgram = any(c >= 2 for c in fourgrams.values())
    content_counts = Counter(t for t in tokens if t not in lexicons.stop_words)
    if repeated_fourgram or any(c >= 2 for c in content_counts.values()):
        rules.add("repeated_ngram")

    if tokens and tokens[-1] in lexicons.sentence_final_forbidden:
        rules.add("incomplete_sentence")

    adverb_counts = Counter(t for t in tokens if t in lexicons.adverbs)
    if any(c >= 2 for c in adverb_counts.values()):
        rules.add("repeated_adverb")

    last_verb = None
    for i, tok in enumerate(tokens):
        if tok in lexicons.verbs:
            if last_verb is not None and not any(
                tokens[j] in lexicons.conjunctions for j in range(last_verb + 1, i)
            ):
                rules.add("missing_conjunction")
            last_verb = i
    if last_verb is None:
        rules.add("missing_verb")

    return FluencyVerdict(bool(rules), frozenset(rules))


def sbert_sim(
    candidate_embedding: np.ndarray,
    reference_embeddings: Sequence[np.ndarray],
    aggregate: str = "max",
) -> float:
    """Cosine similarity of the candidate against the references, aggregated
    with ``max`` (default: matching any one human description counts) or
    ``mean``."""
    cand = np.asarray(candidate_embedding, dtype=np.float64)
    cand_norm = float(np.linalg.norm(cand))
    if cand_norm == 0.0:
        raise CapkitError("sbert_sim: zero-norm candidate embedding")
    sims = []
    for ref in reference_embeddings:
        ref = np.asarray(ref, dtype=np.float64)
        if ref.shape != cand.shape:
            raise CapkitError(
                f"sbert_sim: dimension mismatch {cand.shape} vs {ref.shape}"
            )
        ref_norm = float(np.linalg.norm(ref))
        if ref_norm == 0.0:
            raise CapkitError("sbert_sim: zero-norm reference embedding")
        sims.append(float(cand @ ref) / (cand_norm * ref_norm))
    if not sims:
        raise CapkitError("sbert_sim: no reference embeddings")
    if aggregate == "max":
        return max(sims)
    if aggregate == "mean":
        return sum(sims) / len(sims)
    raise CapkitError(f"sbert_sim: unknown aggregate {aggregate!r}")


def fense(sbert_similarity: float, verdict: FluencyVerdict) -> float:
    """SBERT similarity, divided by 10 when a fluency error was detected."""
    return sbert_similarity / 10.0 if verdict.has_error else sbert_similarity


@dataclass
class SentenceEmbeddingStore:
    """Immutable-after-load map from caption-hash keys to fixed-size
    embedding vectors."""

    vectors: dict[str, np.ndarray]
    dim: int

    @classmethod
    def from_captions(
        cls, embeddings: Mapping[str, np.ndarray]
    ) -> "SentenceEmbeddingStore":
        """Build from caption-text -> vector, hashing the keys."""
        vectors = {}
        dim = None
        for caption, vec in embeddings.items():
            vec = np.asarray(vec, dtype=np.float32)
            if vec.ndim != 1:
                raise CapkitError("embedding vectors must be 1-D")
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise CapkitError(
                    f"embedding dim drift: {vec.size} != {dim} for {caption!r}"
                )
            vectors[caption_key(caption)] = vec
        if dim is None:
            raise CapkitError("cannot build an empty embedding store")
        return cls(vectors, dim)

    def embedding_for(self, caption: str) -> np.ndarray:
        key = caption_key(caption)
        try:
            return self.vectors[key]
        except KeyError:
            raise CapkitError(
                f"no embedding stored for caption {caption!r} (key {key[:12]}...)"
            ) from None

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(SEMB_MAGIC)
            fh.write(struct.pack("<III", SEMB_VERSION, len(self.vectors), self.dim))
            for key in sorted(self.vectors):
                key_bytes = key.encode("utf-8")
                fh.write(struct.pack("<H", len(key_bytes)))
                fh.write(key_bytes)
                vec = np.ascontiguousarray(self.vectors[key], dtype="<f4")
                fh.write(vec.tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "SentenceEmbeddingStore":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:4] != SEMB_MAGIC:
            raise FormatError(f"{path}: not an SEMB file (bad magic)")
        if len(data) < 16:
            raise FormatError(f"{path}: truncated SEMB header")
        version, count, dim = struct.unpack_from("<III", data, 4)
        if version != SEMB_VERSION:
            raise FormatError(f"{path}: unsupported SEMB version {version}")
        if dim == 0:
            raise FormatError(f"{path}: SEMB dim must be positive")
        vectors: dict[str, np.ndarray] = {}
        offset = 16
        for _ in range(count):
            if offset + 2 > len(data):
                raise FormatError(f"{path}: truncated SEMB entry header")
            (key_len,) = struct.unpack_from("<H", data, offset)
            offset += 2
            end = offset + key_len + 4 * dim
            if end > len(data):
                raise FormatError(f"{path}: truncated SEMB entry payload")
            key = data[offset : offset + key_len].decode("utf-8")
            offset += key_len
            vec = np.frombuffer(data[offset : offset + 4 * dim], dtype="<f4").copy()
            offset += 4 * dim
            vectors[key] = vec
        if offset != len(data):
            raise FormatError(f"{path}: {len(data) - offset} trailing bytes")
        return cls(vectors, int(dim))


def score_fense(
    candidates: Sequence[str],
    reference_sets: Sequence[Sequence[str]],
    store: SentenceEmbeddingStore,
    lexicons: Lexicons,
    aggregate: str = "max",
) -> tuple[tuple[float, ...], tuple[FluencyVerdict, ...]]:
    """Per-item FENSE over raw caption strings (embeddings looked up by
    caption hash; fluency judged on the preprocessed candidate)."""
    from .corpus import tokenize_or_raise

    if len(candidates) != len(reference_sets):
        raise CapkitError("score_fense: candidates/reference_sets length mismatch")
    scores = []
    verdicts = []
    for cand, refs in zip(candidates, reference_sets):
        if not refs:
            raise CapkitError(f"score_fense: no references for candidate {cand!r}")
        sim = sbert_sim(
            store.embedding_for(cand),
            [store.embedding_for(r) for r in refs],
            aggregate=aggregate,
        )
        verdict = detect_fluency_errors(tokenize_or_raise(cand), lexicons)
        scores.append(fense(sim, verdict))
        verdicts.append(verdict)
    return tuple(scores), tuple(verdicts)
