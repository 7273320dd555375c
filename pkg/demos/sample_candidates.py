"""
Diverse candidates by top-2 sampling
====================================

At each step keep the two most likely next words and draw one in
proportion to their renormalised probabilities. With probabilities 0.6
and 0.3 the first is drawn two times in three.
"""

from collections import Counter

import numpy as np

from softforce.sampler import BigramScorer, build_candidate_list, greedy_translation, sample_next

rng = np.random.default_rng(0)
draws = Counter(sample_next({"house": 0.6, "home": 0.3, "</s>": 0.1}, rng) for _ in range(10_000))
print("draws:", dict(draws), " share of 'house':", draws["house"] / 10_000)

# a bigram model stands in for the upstream translation model
scorer = BigramScorer(["the house is small", "the house is old", "the dog is small",
                       "a house is a home"])
best = greedy_translation(scorer, ())
cands = build_candidate_list(scorer, (), best, num_samples=1000, rng=np.random.default_rng(1))
print(f"\n{len(cands)} candidates; 1-best {' '.join(best)!r}")
for toks, n in Counter(c.tokens for c in cands).most_common(5):
    print(f"   {n:4d}  {' '.join(toks)}")
