"""Decoding tour: the scorer contract and the constrained beam search.

Run from the repository root:  python demos/04_beam_search.py
"""

import numpy as np

from capkit import DecodeConfig, ScorerInterface, Vocabulary, beam_search, greedy_decode
from capkit.trainkit import log_softmax

vocab = Vocabulary(["dog", "barks", "a", "loudly"], tasks=("ac", "cl"))
print("vocabulary:", {vocab.token(i): i for i in range(len(vocab))})


class BigramScorer(ScorerInterface):
    """Toy next-token model: a hand-written preference table keyed on the
    previous token, ignoring the audio context."""

    TABLE = {
        "<bos>": {"a": 0.70, "dog": 0.25},
        "<bos_ac>": {"a": 0.9},
        "<bos_cl>": {"dog": 0.9},
        "a": {"dog": 0.8, "loudly": 0.1},
        "dog": {"barks": 0.85},
        "barks": {"loudly": 0.5, "<eos>": 0.45},
        "loudly": {"<eos>": 0.9},
    }

    def next_logprobs(self, audio_context, prefix_token_ids):
        prev = vocab.token(prefix_token_ids[-1])
        probs = np.full(len(vocab), 1e-4)
        for token, p in self.TABLE.get(prev, {}).items():
            probs[vocab.id(token)] = p
        return log_softmax(np.log(probs))


scorer = BigramScorer()
stop_ids = vocab.stop_word_ids(["a", "the"])
cfg = DecodeConfig(beam_size=3, min_len=3, max_len=6, stop_word_ids=stop_ids)

# constraints in play: eos is masked until 3 content tokens exist, non-stop
# words never repeat, and eos is forced once 6 tokens are out
for task in (None, "ac", "cl"):
    out = beam_search([None], scorer, vocab, DecodeConfig(
        beam_size=3, min_len=3, max_len=6, stop_word_ids=stop_ids, task=task,
    ))[0]
    caption = " ".join(vocab.decode(out.token_ids))
    print(f"task={task!s:5s} {caption!r:32s} "
          f"logprob {out.cum_logprob:7.3f}  normalized {out.normalized_logprob:7.3f}")

# beam size 1 is exactly greedy decoding
greedy = greedy_decode(None, scorer, vocab, DecodeConfig(
    beam_size=1, min_len=3, max_len=6, stop_word_ids=stop_ids,
))
assert greedy == beam_search([None], scorer, vocab, DecodeConfig(
    beam_size=1, min_len=3, max_len=6, stop_word_ids=stop_ids,
))[0]
print("\ngreedy == beam(1):", " ".join(vocab.decode(greedy.token_ids)))
