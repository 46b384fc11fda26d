"""Constrained per-batch beam search over a pluggable next-token scorer.

Decoding constraints, applied by masking token log-probs to -inf before
top-k selection:

* eos is forbidden while fewer than ``min_len`` content tokens exist;
* a token already present in the hypothesis is forbidden unless it is in
  the configured stop-word set;
* once ``max_len`` content tokens exist, only eos remains;
* pad and every bos-type token are always forbidden.

Finished hypotheses are frozen (never re-expanded) and compete at the final
ranking: cumulative log-prob divided by the content-token count, ties going
to the lexicographically smaller token-id sequence.  The eos log-prob is
accrued in the cumulative score (also when eos is forced at ``max_len``)
but eos does not count toward the length used for normalization.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import CapkitError

PAD_TOKEN = "<pad>"
BOS_TOKEN = "<bos>"
EOS_TOKEN = "<eos>"


def te_token(task: str) -> str:
    """The begin-of-sentence replacement token for a task tag."""
    return f"<bos_{task}>"


class Vocabulary:
    """Token <-> id bijection with pad/bos/eos specials and one task-specific
    bos per configured task tag.

    Layout: pad=0, bos=1, eos=2, then one TE id per task (input order), then
    the content tokens in input order.
    """

    def __init__(self, tokens: Sequence[str], tasks: Sequence[str] = ()):
        self.tasks = tuple(tasks)
        specials = [PAD_TOKEN, BOS_TOKEN, EOS_TOKEN] + [te_token(t) for t in self.tasks]
        self._tokens = list(specials) + list(tokens)
        self._ids: dict[str, int] = {}
        for i, tok in enumerate(self._tokens):
            if tok in self._ids:
                raise CapkitError(f"Vocabulary: duplicate token {tok!r}")
            self._ids[tok] = i
        self.pad_id = 0
        self.bos_id = 1
        self.eos_id = 2
        self.task_ids = {t: 3 + i for i, t in enumerate(self.tasks)}
        self.n_special = 3 + len(self.tasks)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise CapkitError(f"Vocabulary: unknown token {token!r}") from None

    def token(self, token_id: int) -> str:
        if not 0 <= token_id < len(self._tokens):
            raise CapkitError(f"Vocabulary: unknown token id {token_id}")
        return self._tokens[token_id]

    def encode(self, tokens: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.id(t) for t in tokens)

    def decode(self, ids: Iterable[int]) -> tuple[str, ...]:
        return tuple(self.token(i) for i in ids)

    def bos_for(self, task: str | None) -> int:
        if task is None:
            return self.bos_id
        try:
            return self.task_ids[task]
        except KeyError:
            raise CapkitError(f"Vocabulary: unknown task tag {task!r}") from None

    def is_special(self, token_id: int) -> bool:
        return 0 <= token_id < self.n_special

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset(range(self.n_special))

    def stop_word_ids(self, words: Iterable[str]) -> frozenset[int]:
        """Ids of the given stop words that exist in this vocabulary."""
        return frozenset(self._ids[w] for w in words if w in self._ids)


class ScorerInterface(ABC):
    """Next-token distribution contract: a full-vocabulary log-probability
    vector given the audio context and the previous token ids."""

    @abstractmethod
    def next_logprobs(self, audio_context, prefix_token_ids) -> np.ndarray: ...

    def next_logprobs_batch(
        self, audio_contexts: Sequence, prefixes: Sequence
    ) -> list[np.ndarray]:
        """Batched convenience hook; the default loops over single calls."""
        return [
            self.next_logprobs(ctx, prefix)
            for ctx, prefix in zip(audio_contexts, prefixes)
        ]


@dataclass(frozen=True)
class BeamHypothesis:
    token_ids: tuple[int, ...]  # starts with a bos/TE id
    cum_logprob: float
    finished: bool = False


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 2
    min_len: int = 3
    max_len: int = 30
    stop_word_ids: frozenset[int] = frozenset()
    task: str | None = None

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise CapkitError(f"DecodeConfig: beam_size must be >= 1, got {self.beam_size}")
        if not 1 <= self.min_len <= self.max_len:
            raise CapkitError(
                f"DecodeConfig: need 1 <= min_len <= max_len, got "
                f"({self.min_len}, {self.max_len})"
            )


@dataclass(frozen=True)
class Decoded:
    """One finished decode: content token ids (bos/eos stripped) plus the
    cumulative and length-normalized log-probs."""

    token_ids: tuple[int, ...]
    cum_logprob: float
    normalized_logprob: float


def _checked_row(row: np.ndarray, vocab_size: int, item: int) -> np.ndarray:
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (vocab_size,):
        raise CapkitError(
            f"scorer returned shape {row.shape} for batch item {item}, "
            f"expected ({vocab_size},)"
        )
    if np.isnan(row).any() or np.isposinf(row).any():
        raise CapkitError(f"scorer returned NaN/+inf log-probs for batch item {item}")
    return row


def _masked_row(
    row: np.ndarray, hyp: BeamHypothesis, vocab: Vocabulary, cfg: DecodeConfig
) -> np.ndarray:
    masked = row.copy()
    gen_len = len(hyp.token_ids) - 1
    for special in vocab.special_ids:
        if special != vocab.eos_id:
            masked[special] = -np.inf
    if gen_len >= cfg.max_len:
        only_eos = np.full_like(masked, -np.inf)
        only_eos[vocab.eos_id] = masked[vocab.eos_id]
        return only_eos
    if gen_len < cfg.min_len:
        masked[vocab.eos_id] = -np.inf
    for used in set(hyp.token_ids[1:]):
        if used not in cfg.stop_word_ids:
            masked[used] = -np.inf
    return masked


def _rank_key(hyp: BeamHypothesis) -> tuple[float, tuple[int, ...]]:
    content = len(hyp.token_ids) - 2  # minus leading bos and trailing eos
    return (-hyp.cum_logprob / content, hyp.token_ids)


def _finalize(hyp: BeamHypothesis) -> Decoded:
    content = hyp.token_ids[1:-1]
    return Decoded(content, hyp.cum_logprob, hyp.cum_logprob / len(content))


class _ItemState:
    def __init__(self, context, start: BeamHypothesis):
        self.context = context
        self.active: list[BeamHypothesis] = [start]
        self.done: list[BeamHypothesis] = []


def beam_search(
    audio_contexts: Sequence,
    scorer: ScorerInterface,
    vocab: Vocabulary,
    cfg: DecodeConfig,
) -> list[Decoded]:
    """Decode a batch of items in lockstep, one expansion step at a time."""
    start = BeamHypothesis((vocab.bos_for(cfg.task),), 0.0)
    states = [_ItemState(ctx, start) for ctx in audio_contexts]
    vocab_size = len(vocab)

    while any(st.active for st in states):
        batch_items: list[int] = []
        batch_hyps: list[BeamHypothesis] = []
        for item, st in enumerate(states):
            for hyp in st.active:
                batch_items.append(item)
                batch_hyps.append(hyp)
        rows = scorer.next_logprobs_batch(
            [states[i].context for i in batch_items],
            [hyp.token_ids for hyp in batch_hyps],
        )

        expansions: dict[int, list[BeamHypothesis]] = {i: [] for i in range(len(states))}
        for item, hyp, row in zip(batch_items, batch_hyps, rows):
            masked = _masked_row(_checked_row(row, vocab_size, item), hyp, vocab, cfg)
            for token_id in np.flatnonzero(masked > -np.inf):
                token_id = int(token_id)
                expansions[item].append(
                    BeamHypothesis(
                        hyp.token_ids + (token_id,),
                        hyp.cum_logprob + float(masked[token_id]),
                        finished=token_id == vocab.eos_id,
                    )
                )

        for item, st in enumerate(states):
            if not st.active:
                continue
            candidates = expansions[item]
            if not candidates:
                if st.done:
                    st.active = []
                    continue
                raise CapkitError(
                    f"beam_search: all tokens forbidden for batch item {item}"
                )
            candidates.sort(key=lambda h: (-h.cum_logprob, h.token_ids))
            kept = candidates[: cfg.beam_size]
            st.active = [h for h in kept if not h.finished]
            st.done.extend(h for h in kept if h.finished)

    results = []
    for item, st in enumerate(states):
        if not st.done:
            raise CapkitError(f"beam_search: no finished hypothesis for batch item {item}")
        best = min(st.done, key=_rank_key)
        results.append(_finalize(best))
    return results


def greedy_decode(
    audio_context, scorer: ScorerInterface, vocab: Vocabulary, cfg: DecodeConfig
) -> Decoded:
    """Beam search with beam size 1."""
    return beam_search([audio_context], scorer, vocab, replace(cfg, beam_size=1))[0]


@dataclass(frozen=True)
class TeCompareReport:
    """Paired decodes of the same items under two task-embedding tags, with
    per-tag diversity statistics (feed the captions to the metrics module
    for cross-scoring)."""

    task_a: str
    task_b: str
    decoded_a: tuple[Decoded, ...]
    decoded_b: tuple[Decoded, ...]
    captions_a: tuple[tuple[str, ...], ...]
    captions_b: tuple[tuple[str, ...], ...]
    n_unique_words_a: int
    n_unique_words_b: int
    mean_sentence_length_a: float
    mean_sentence_length_b: float


def te_compare(
    audio_contexts: Sequence,
    scorer: ScorerInterface,
    vocab: Vocabulary,
    cfg: DecodeConfig,
    tasks: tuple[str, str],
) -> TeCompareReport:
    from .metrics import diversity_stats

    task_a, task_b = tasks
    for task in (task_a, task_b):
        if task not in vocab.task_ids:
            raise CapkitError(f"te_compare: unknown task tag {task!r}")
    decoded_a = beam_search(audio_contexts, scorer, vocab, replace(cfg, task=task_a))
    decoded_b = beam_search(audio_contexts, scorer, vocab, replace(cfg, task=task_b))
    captions_a = tuple(vocab.decode(d.token_ids) for d in decoded_a)
    captions_b = tuple(vocab.decode(d.token_ids) for d in decoded_b)
    words_a, len_a = diversity_stats(captions_a)
    words_b, len_b = diversity_stats(captions_b)
    return TeCompareReport(
        task_a=task_a,
        task_b=task_b,
        decoded_a=tuple(decoded_a),
        decoded_b=tuple(decoded_b),
        captions_a=captions_a,
        captions_b=captions_b,
        n_unique_words_a=words_a,
        n_unique_words_b=words_b,
        mean_sentence_length_a=len_a,
        mean_sentence_length_b=len_b,
    )
