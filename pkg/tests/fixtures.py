"""Hand-built n-best lists shared by the rerank and acceptance tests."""

import math
import random
from collections import Counter

from softforce.corpus import UnalignedStats
from softforce.phrase_table import PhraseRule, PhraseTable
from softforce.rerank import FORCED, WORD_PENALTY, Candidate


def scored(sid, rank, hyp, upstream, forced, src="s"):
    return Candidate(sid, hyp.split(), upstream, src.split(),
                     {FORCED: forced, WORD_PENALTY: float(len(hyp.split()))}, rank=rank)


def fixture_lists():
    """Pre-scored lists in upstream order (best first), with exact ties in
    every feature and in combined scores, integer and fractional values."""
    lists = [
        [scored(0, 0, "a b c", -1.0, -3.0), scored(0, 1, "a b", -1.0, -2.0),
         scored(0, 2, "a c", -2.0, -1.0), scored(0, 3, "b", -3.0, -1.0)],
        [scored(1, 0, "x", -0.5, -7.25), scored(1, 1, "x y", -0.5, -7.25),
         scored(1, 2, "x y z", -0.75, -0.1)],
        [scored(2, 0, "only one", -4.0, -4.0)],
    ]
    rng = random.Random(2024)
    for sid in range(3, 13):
        n = rng.randint(2, 30)
        ups = sorted((rng.choice([-1.0, -2.0, -2.5, rng.uniform(-20, 0)]) for _ in range(n)),
                     reverse=True)
        lists.append([scored(sid, k, " ".join("w%d" % rng.randint(0, 5)
                                               for _ in range(rng.randint(1, 8))),
                             u, rng.choice([-3.0, -5.5, rng.uniform(-40, 0)]))
                      for k, u in enumerate(ups)])
    return lists


# ---- adequacy fixture ---------------------------------------------------------
#
# Source "ich sehe katze". The faithful candidate is "i see cat"; the
# over-translating one repeats the content word, "i see cat cat", and the
# upstream model slightly prefers it. "cat" is almost never unaligned in the
# statistics, so generating the second "cat" costs an insertion far below
# CONTENT_WORD_THRESHOLD.

ADEQUACY_SOURCE = ("ich", "sehe", "katze")
FAITHFUL = ("i", "see", "cat")
OVER = ("i", "see", "cat", "cat")
CONTENT_WORD_THRESHOLD = -5.0
UPSTREAM_GAP = 0.5


def adequacy_fixture():
    table = PhraseTable([
        PhraseRule(("ich",), ("i",), 0.8, 0.8),
        PhraseRule(("sehe",), ("see",), 0.8, 0.8),
        PhraseRule(("katze",), ("cat",), 0.8, 0.8),
    ])
    stats = UnalignedStats(Counter({"ich": 50}), Counter({"cat": 2, "the": 400}), 1000)
    nbest = [
        Candidate(0, OVER, -2.0, ADEQUACY_SOURCE, rank=0),
        Candidate(0, FAITHFUL, -2.0 - UPSTREAM_GAP, ADEQUACY_SOURCE, rank=1),
    ]
    return table, stats, nbest


def insertion_penalty_cat():
    # independent of the decoder: squared ratio of unaligned count to corpus size
    return 2 * math.log(2 / 1000)
