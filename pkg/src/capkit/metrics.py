"""Captioning metrics: CIDEr-D, SPIDEr aggregation, diversity statistics,
and the cross-referencing top-line.

CIDEr-D here is frozen to the canonical definition: TF-IDF vectors per
n-gram order n in 1..4 with IDF = ln(N / df) (df counted over items, not
captions; absent n-grams clamp df to 1), candidate term frequencies clipped
elementwise at the reference frequencies, a Gaussian length penalty
exp(-(l_c - l_s)^2 / (2 * 6^2)), a final average over the four orders, and
a x10 scale.  Zero-norm vectors contribute 0 for their order.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import TokensLike, tokens_of
from .errors import CapkitError

NGRAM_MAX = 4
LENGTH_PENALTY_SIGMA = 6.0
CIDER_SCALE = 10.0

NGram = tuple[str, ...]


@dataclass(frozen=True)
class NGramIndex:
    """Document frequencies per n-gram order (index 0 holds unigrams) over a
    corpus of ``corpus_size`` items.  An n-gram present in any caption of an
    item contributes exactly 1 to its df."""

    doc_freq: tuple[dict[NGram, int], ...]
    corpus_size: int

    def df(self, gram: NGram) -> int:
        return self.doc_freq[len(gram) - 1].get(gram, 0)


@dataclass(frozen=True)
class TfIdfVector:
    """Sparse TF-IDF weights for one caption at one n-gram order."""

    weights: dict[NGram, float]
    n: int
    length: int  # token count of the underlying caption

    @property
    def norm(self) -> float:
        return math.sqrt(sum(w * w for w in self.weights.values()))


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter[NGram]:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def build_index(
    reference_sets: Sequence[Sequence[TokensLike]], max_n: int = NGRAM_MAX
) -> NGramIndex:
    """Build document frequencies over a corpus of reference sets (one set of
    captions per audio item)."""
    sets = [list(refs) for refs in reference_sets]
    if not sets:
        raise CapkitError("build_index: no reference sets")
    doc_freq: tuple[Counter[NGram], ...] = tuple(Counter() for _ in range(max_n))
    for item, refs in enumerate(sets):
        if not refs:
            raise CapkitError(f"build_index: reference set for item {item} is empty")
        seen: set[NGram] = set()
        for ref in refs:
            toks = tokens_of(ref)
            for n in range(1, max_n + 1):
                for i in range(len(toks) - n + 1):
                    seen.add(tuple(toks[i : i + n]))
        for gram in seen:
            doc_freq[len(gram) - 1][gram] += 1
    return NGramIndex(tuple(dict(c) for c in doc_freq), len(sets))


def tfidf_vector(caption: TokensLike, n: int, index: NGramIndex) -> TfIdfVector:
    tokens = tokens_of(caption)
    weights = {}
    for gram, tf in _ngram_counts(tokens, n).items():
        df = max(1, index.df(gram))
        weights[gram] = tf * math.log(index.corpus_size / df)
    return TfIdfVector(weights, n, len(tokens))


def cider_d(
    candidate: TokensLike,
    references: Sequence[TokensLike],
    index: NGramIndex,
) -> float:
    """Score one candidate against its references; range [0, 10]."""
    refs = [tokens_of(r) for r in references]
    if not refs:
        raise CapkitError("cider_d: references must be non-empty")
    cand = tokens_of(candidate)
    if not cand:
        warnings.warn("cider_d: empty candidate scored 0", stacklevel=2)
        return 0.0
    cand_vecs = [tfidf_vector(cand, n, index) for n in range(1, NGRAM_MAX + 1)]
    total = 0.0
    for ref in refs:
        delta = float(len(cand) - len(ref))
        penalty = math.exp(-(delta * delta) / (2.0 * LENGTH_PENALTY_SIGMA**2))
        acc = 0.0
        for n in range(1, NGRAM_MAX + 1):
            cv = cand_vecs[n - 1]
            rv = tfidf_vector(ref, n, index)
            cn, rn = cv.norm, rv.norm
            if cn == 0.0 or rn == 0.0:
                continue
            num = sum(
                min(w, rv.weights[g]) * rv.weights[g]
                for g, w in cv.weights.items()
                if g in rv.weights
            )
            acc += num / (cn * rn)
        total += penalty * (acc / NGRAM_MAX)
    return CIDER_SCALE * total / len(refs)


def spider(
    cider_scores: Sequence[float], spice_scores: Sequence[float]
) -> tuple[tuple[float, ...], float]:
    """Per-item arithmetic mean of CIDEr-D and SPICE, plus the corpus mean."""
    c = list(cider_scores)
    s = list(spice_scores)
    if len(c) != len(s):
        raise CapkitError(f"spider: length mismatch ({len(c)} vs {len(s)})")
    if not c:
        raise CapkitError("spider: empty score lists")
    per_item = tuple((ci + si) / 2.0 for ci, si in zip(c, s))
    return per_item, sum(per_item) / len(per_item)


def diversity_stats(candidates: Sequence[TokensLike]) -> tuple[int, float]:
    """(#Words, #Sent): unique-token count over all candidates and the mean
    token count per candidate."""
    caps = [tokens_of(c) for c in candidates]
    if not caps:
        raise CapkitError("diversity_stats: empty candidate list")
    vocab: set[str] = set()
    for toks in caps:
        vocab.update(toks)
    return len(vocab), sum(len(t) for t in caps) / len(caps)


@dataclass
class EvalResult:
    """Per-item scores plus corpus means.  ``spider`` is derived and present
    exactly when SPICE scores are."""

    cider_d: tuple[float, ...]
    spice: tuple[float, ...] | None = None
    fense: tuple[float, ...] | None = None
    n_unique_words: float = 0.0
    mean_sentence_length: float = 0.0

    def __post_init__(self) -> None:
        if self.spice is not None and len(self.spice) != len(self.cider_d):
            raise CapkitError("EvalResult: spice/cider_d length mismatch")
        if self.fense is not None and len(self.fense) != len(self.cider_d):
            raise CapkitError("EvalResult: fense/cider_d length mismatch")

    @property
    def spider(self) -> tuple[float, ...] | None:
        if self.spice is None:
            return None
        return spider(self.cider_d, self.spice)[0]

    @staticmethod
    def _mean(values: Sequence[float] | None) -> float | None:
        if values is None:
            return None
        return sum(values) / len(values)

    @property
    def cider_d_mean(self) -> float:
        return sum(self.cider_d) / len(self.cider_d)

    @property
    def spice_mean(self) -> float | None:
        return self._mean(self.spice)

    @property
    def spider_mean(self) -> float | None:
        return self._mean(self.spider)

    @property
    def fense_mean(self) -> float | None:
        return self._mean(self.fense)


def evaluate_corpus(
    candidates: Sequence[TokensLike],
    reference_sets: Sequence[Sequence[TokensLike]],
    spice: Sequence[float] | None = None,
    fense: Sequence[float] | None = None,
) -> EvalResult:
    """Build the index over ``reference_sets`` and score every candidate."""
    if len(candidates) != len(reference_sets):
        raise CapkitError(
            f"evaluate_corpus: {len(candidates)} candidates vs "
            f"{len(reference_sets)} reference sets"
        )
    index = build_index(reference_sets)
    scores = tuple(
        cider_d(cand, refs, index) for cand, refs in zip(candidates, reference_sets)
    )
    n_words, mean_len = diversity_stats(candidates)
    return EvalResult(
        cider_d=scores,
        spice=tuple(spice) if spice is not None else None,
        fense=tuple(fense) if fense is not None else None,
        n_unique_words=float(n_words),
        mean_sentence_length=mean_len,
    )


def cross_reference(
    items: Sequence[Sequence[TokensLike]],
    repetitions: int,
    seed: int,
) -> EvalResult:
    """Inter-annotator top-line: per repetition, hold out one uniformly
    chosen reference per item as the candidate, score it against the rest
    (index rebuilt over the reduced sets), then average over repetitions.

    Hold-out protocol (frozen so independent checkers can replay it): one
    ``rng.integers(len(refs))`` draw per item, items in input order,
    repetition-major, with ``rng = numpy.random.default_rng(seed)``.
    """
    sets = [[tokens_of(r) for r in refs] for refs in items]
    for i, refs in enumerate(sets):
        if len(refs) < 2:
            raise CapkitError(
                f"cross_reference: item {i} has {len(refs)} reference(s), need >= 2"
            )
    if repetitions < 1:
        raise CapkitError("cross_reference: repetitions must be >= 1")
    rng = np.random.default_rng(seed)
    per_item = np.zeros(len(sets))
    n_words_acc = 0.0
    mean_len_acc = 0.0
    for _ in range(repetitions):
        holdout = [int(rng.integers(len(refs))) for refs in sets]
        candidates = [refs[h] for refs, h in zip(sets, holdout)]
        reduced = [
            [r for j, r in enumerate(refs) if j != h]
            for refs, h in zip(sets, holdout)
        ]
        index = build_index(reduced)
        for i, (cand, refs) in enumerate(zip(candidates, reduced)):
            per_item[i] += cider_d(cand, refs, index)
        n_words, mean_len = diversity_stats(candidates)
        n_words_acc += n_words
        mean_len_acc += mean_len
    per_item /= repetitions
    return EvalResult(
        cider_d=tuple(float(x) for x in per_item),
        n_unique_words=n_words_acc / repetitions,
        mean_sentence_length=mean_len_acc / repetitions,
    )
