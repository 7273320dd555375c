"""
Soft forced decoding
====================

Score how well a phrase table explains a given translation. Words the
table cannot produce are inserted, source words it cannot use are
deleted, and both cost twice the log of how often such words go
unaligned in the training data.
"""

from collections import Counter

from softforce.corpus import UnalignedStats
from softforce.decoder import decode_standard, forced_decode
from softforce.phrase_table import PhraseRule, PhraseTable

table = PhraseTable([
    PhraseRule(("das", "haus"), ("the", "house"), 0.9, 0.8),
    PhraseRule(("ist",), ("is",), 0.9, 0.9),
    PhraseRule(("klein",), ("small",), 0.8, 0.7),
    PhraseRule(("klein",), ("little",), 0.2, 0.3),
])
# function words go unaligned often, content words almost never
stats = UnalignedStats(Counter({"ja": 300}), Counter({"very": 150, "the": 250}), 1000)

source = "das haus ist ja klein".split()
for target in ["the house is small", "the house is very small", "the house is house small"]:
    path = forced_decode(source, target.split(), table, stats)
    print(f"{target!r}: {path.total_log_score:.3f}")
    print("   " + path.trace().replace("\n", "\n   "))

# the same table used as an ordinary translator: "ja" has no rule and is copied through
tokens, _ = decode_standard(source, table)
print("\nstandard decoding:", " ".join(tokens))
