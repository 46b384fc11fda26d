"""Corpus tour: manifests, preprocessing, overlap auditing, balanced epochs.

Run from the repository root:  python demos/01_corpus_audit.py
"""

import numpy as np

from capkit import (
    ClipRecord,
    balanced_epoch,
    corpus_stats,
    ngram_distribution,
    overlap_audit,
    preprocess_caption,
)
from capkit.corpus import tokenize_or_raise

# --- caption preprocessing ---------------------------------------------------
# lowercase, every Unicode punctuation character becomes a space, whitespace
# split; captions longer than a word budget are rejected rather than truncated

print(preprocess_caption("A engine, Revving!").tokens)
print(preprocess_caption("?!...,"))
print(preprocess_caption(" ".join(["word"] * 41), max_words=40))

# --- a small in-memory corpus ------------------------------------------------

rng = np.random.default_rng(0)
clips = []
for i in range(12):
    clips.append(
        ClipRecord(
            id=f"clip-{i:02d}",
            dataset="cl" if i % 3 else "ac",
            subset="train",
            duration_sec=float(rng.uniform(3, 28)),
            captions=(
                "a dog barks at the gate",
                "the dog is barking loudly",
            ),
            source_key=f"upstream-{i:02d}",
        )
    )

stats = corpus_stats(clips)
print(f"\n{stats.n_audio} clips, {stats.audio_hours:.3f} h of audio")
print(f"vocabulary {stats.vocab_size}, {stats.n_words} word tokens")
print(f"caption length {stats.caption_len_min}-{stats.caption_len_max} "
      f"(mean {stats.caption_len_mean:.1f})")

# --- n-gram distributions (stemmed by default) -------------------------------

captions = [tokenize_or_raise(c) for clip in clips for c in clip.captions]
print("\ntop trigrams:")
for gram, count in ngram_distribution(captions, n=3, top_k=3):
    print(f"  {count:3d}  {gram}")

# --- overlap auditing --------------------------------------------------------
# exact source-key matching; the fraction is measured against dataset A

ac_clips = [c for c in clips if c.dataset == "ac"]
shared_keys = [c.source_key for c in ac_clips[:2]] + ["unrelated-key"]
report = overlap_audit(ac_clips, shared_keys, dataset_b="external")
print(f"\noverlap {report.dataset_a}/{report.dataset_b}: {report.overlap_pct:.1f}% "
      f"({len(report.matched_ids)} matches)")

# --- balanced epoch sampling -------------------------------------------------
# the target dataset supplies every one of its clips; the other half is a
# seeded without-replacement sample from everything else

plan = balanced_epoch("ac", clips, seed=7)
from_target = sum(1 for entry in plan.entries if entry[0] == "ac")
print(f"\nepoch plan: {len(plan.entries)} entries, {from_target} from the target")
print("same seed, same plan:", plan == balanced_epoch("ac", clips, seed=7))
