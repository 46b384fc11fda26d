"""Metric tour: CIDEr-D, SPIDEr, diversity, and the cross-referencing
top-line.

Run from the repository root:  python demos/02_metrics.py
"""

from capkit import build_index, cider_d, cross_reference, diversity_stats, spider


def toks(sentence):
    return tuple(sentence.split())


# one reference set per audio item; document frequencies count items
reference_sets = [
    [toks("a dog barks in the yard"), toks("the dog is barking outside")],
    [toks("rain falls on tin roofs"), toks("steady rain drips down")],
    [toks("an engine revs then idles"), toks("a motor runs and stops")],
]
index = build_index(reference_sets)

candidates = [
    toks("a dog barks outside"),
    toks("rain falls steadily"),
    toks("an engine revs then idles"),
]

print("per-item CIDEr-D:")
scores = []
for cand, refs in zip(candidates, reference_sets):
    score = cider_d(cand, refs, index)
    scores.append(score)
    print(f"  {score:6.3f}  {' '.join(cand)}")

# an exact echo of a reference with item-unique n-grams scores the full 10
print("\nverbatim copy of its reference:",
      f"{cider_d(reference_sets[1][0], reference_sets[1], index):.3f}")

# SPIDEr is the plain arithmetic mean with SPICE (supplied externally);
# CIDEr-D ranges to 10, so it dominates
per_item, mean = spider(scores, [0.31, 0.12, 0.55])
print("\nSPIDEr per item:", [round(s, 3) for s in per_item])
print("SPIDEr mean:", round(mean, 3))

n_words, mean_len = diversity_stats(candidates)
print(f"\n#Words {n_words}, mean sentence length {mean_len:.2f}")

# cross-referencing: hold one reference out per item as a pseudo-candidate,
# rebuild the index on the reduced sets, repeat and average
items = [refs + [toks("something makes a noise")] for refs in reference_sets]
result = cross_reference(items, repetitions=5, seed=42)
print(f"\ncross-referencing CIDEr-D mean over 5 repetitions: "
      f"{result.cider_d_mean:.3f}")
print(f"held-out candidates used {result.n_unique_words:.1f} unique words on average")
