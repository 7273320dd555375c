"""
Phrase extraction from a word-aligned corpus
=============================================

Read a tiny aligned corpus, count the unaligned words, extract every
consistent phrase pair and estimate both translation probabilities.
"""

from softforce.corpus import (SentencePair, compute_unaligned_stats, count_phrase_pairs,
                              estimate_phrase_table, extract_phrase_pairs, parse_alignment)

corpus = [
    ("das haus ist klein", "the house is small", "0-0 1-1 2-2 3-3"),
    ("der hund ist klein", "the dog is small", "0-0 1-1 2-2 3-3"),
    ("ich sehe das haus", "i see the house", "0-0 1-1 2-2 3-3"),
    ("ich sehe es", "i see it", "0-0 1-1"),
]
pairs = []
for src, tgt, links in corpus:
    f, e = src.split(), tgt.split()
    pairs.append(SentencePair(tuple(f), tuple(e), parse_alignment(links, len(f), len(e))))

# "es" and "it" have no links, so they count as unaligned once each
stats = compute_unaligned_stats(pairs)
print("corpus size:", stats.corpus_size)
print("unaligned source:", dict(stats.source_unaligned))
print("unaligned target:", dict(stats.target_unaligned))

# spans are inclusive (first, last) word indices
last = pairs[-1]
print("\nphrase pairs of", " ".join(last.source), "/", " ".join(last.target))
for (j1, j2), (i1, i2) in sorted(extract_phrase_pairs(last, max_phrase_len=3)):
    print("  ", " ".join(last.source[j1:j2 + 1]), "->", " ".join(last.target[i1:i2 + 1]))

table = estimate_phrase_table(count_phrase_pairs(pairs, max_phrase_len=3))
print(f"\n{len(table)} rules; the ones for 'das':")
for r in table.by_source(("das",)):
    print(f"   das -> {' '.join(r.target_phrase)}  p(e|f)={r.direct_prob:.3f}"
          f"  p(f|e)={r.inverse_prob:.3f}  log score={r.log_score:.3f}")
