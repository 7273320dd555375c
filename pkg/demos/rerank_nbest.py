"""
Reranking an n-best list
========================

An upstream model prefers a translation that repeats a content word. The
forced-decoding score charges the repetition as an insertion, and adding
it to the upstream score puts the faithful translation on top.
"""

from collections import Counter

from softforce.corpus import UnalignedStats
from softforce.phrase_table import PhraseRule, PhraseTable
from softforce.rerank import Candidate, RerankWeights, rerank_nbest, tune_weights

table = PhraseTable([
    PhraseRule(("ich",), ("i",), 0.8, 0.8),
    PhraseRule(("sehe",), ("see",), 0.8, 0.8),
    PhraseRule(("die", "katze"), ("the", "cat"), 0.8, 0.8),
    PhraseRule(("heute",), ("today",), 0.8, 0.8),
])
stats = UnalignedStats(Counter(), Counter({"cat": 2}), 1000)
source = ("ich", "sehe", "die", "katze", "heute")


def nbest():
    return [Candidate(0, "i see the cat cat today".split(), -2.0, source, rank=0),
            Candidate(0, "i see the cat today".split(), -2.5, source, rank=1)]


for w in [RerankWeights(1, 0, 0), RerankWeights(1, 0.5, 0)]:
    print(f"weights {w.w1, w.w2, w.w_wp}:")
    for c in rerank_nbest(nbest(), table, stats, w):
        print(f"   {' '.join(c.tokens):24s} upstream={c.upstream_logprob:6.2f}"
              f"  forced={c.features['forced_logscore']:7.2f}  combined={c.features['combined']:7.2f}")

# tuning picks the weights that make the dev 1-best match the references
scored = rerank_nbest(nbest(), table, stats, RerankWeights())
w = tune_weights([scored], ["i see the cat today".split()])
print("\ntuned weights:", (w.w1, w.w2, w.w_wp))
