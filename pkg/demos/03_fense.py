"""FENSE tour: the SEMB embedding store, the rule-based fluency detector,
and the gated score.

Run from the repository root:  python demos/03_fense.py
"""

import tempfile
from pathlib import Path

import numpy as np

from capkit import Lexicons, SentenceEmbeddingStore, detect_fluency_errors, sbert_sim
from capkit import fense_score
from capkit.corpus import tokenize_or_raise

lexicons = Lexicons.load()  # packaged defaults; override via CAPKIT_LEXICON_DIR

# --- fluency rules -----------------------------------------------------------

examples = [
    "a dog barks in the yard",
    "a man speaks while a man speaks",   # repeated n-gram
    "rain falling and wind and",         # ends on a conjunction
    "a dog barks meows",                 # two verbs, no conjunction
    "a quiet empty room",                # no verb at all
]
for caption in examples:
    verdict = detect_fluency_errors(tokenize_or_raise(caption), lexicons)
    label = ", ".join(sorted(verdict.triggered_rules)) or "clean"
    print(f"{label:35s} {caption}")

# --- sentence embeddings -----------------------------------------------------
# stores are keyed by the SHA-256 of the caption text, so candidates and
# references share one file; vectors here are synthetic stand-ins for a real
# sentence-embedding model (see the frontend exporter)

rng = np.random.default_rng(1)
captions = examples + ["the dog is barking outside"]
store = SentenceEmbeddingStore.from_captions(
    {c: rng.standard_normal(16).astype(np.float32) for c in captions}
)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.semb"
    store.save(path)
    store = SentenceEmbeddingStore.load(path)
    print(f"\nSEMB store: {len(store.vectors)} vectors, dim {store.dim}")

# --- the gate ----------------------------------------------------------------

candidate = "a man speaks while a man speaks"
references = ["a dog barks in the yard", "the dog is barking outside"]
sim = sbert_sim(
    store.embedding_for(candidate),
    [store.embedding_for(r) for r in references],
)
verdict = detect_fluency_errors(tokenize_or_raise(candidate), lexicons)
print(f"\nSBERT-sim {sim:+.3f}, fluency error: {verdict.has_error}")
print(f"FENSE     {fense_score(sim, verdict):+.3f}  (divided by 10 on error)")
