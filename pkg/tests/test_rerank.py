import copy
import json
import math
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from softforce.bleu import corpus_bleu
from softforce.corpus import UnalignedStats
from softforce.phrase_table import PhraseTable
from softforce.rerank import (
    FORCED,
    WORD_PENALTY,
    Candidate,
    NotScoredError,
    RerankWeights,
    combined_score,
    default_grid,
    one_best,
    read_moses_nbest,
    read_nbest_jsonl,
    read_weights,
    rerank_nbest,
    score_candidates,
    tune_weights,
    write_nbest_jsonl,
    write_weights,
)

from fixtures import (
    CONTENT_WORD_THRESHOLD,
    FAITHFUL,
    UPSTREAM_GAP,
    adequacy_fixture,
    fixture_lists,
    insertion_penalty_cat,
    scored,
)


def order(nb):
    return [c.rank for c in nb]


def test_combined_arithmetic():
    c = scored(0, 0, "a b c d e", -2.0, -3.0)
    assert combined_score(c, RerankWeights(1, 1, 0.1)) == pytest.approx(-4.5)
    assert combined_score(c, RerankWeights(1, 0, 0)) == -2.0
    assert combined_score(c, RerankWeights(0, 1, 0)) == -3.0


def test_unscored_candidate():
    with pytest.raises(NotScoredError, match="candidate not scored"):
        combined_score(Candidate(0, ("a",), -1.0), RerankWeights())


@pytest.mark.parametrize("w", [(0, 0, 0), (math.nan, 1, 0), (1, math.inf, 0)])
def test_bad_weights(w):
    with pytest.raises(ValueError):
        RerankWeights(*w)


def test_non_finite_upstream_rejected():
    with pytest.raises(ValueError):
        Candidate(0, ("a",), -math.inf)


def test_upstream_only_is_identity():
    for nb in fixture_lists():
        assert order(rerank_nbest(nb, None, None, RerankWeights(1, 0, 0))) == order(nb)
        assert order(rerank_nbest(nb, None, None, RerankWeights(3.5, 0, 0))) == order(nb)


def test_equal_scores_keep_rank():
    nb = [scored(0, 0, "a", -1.0, -2.0), scored(0, 1, "b", -2.0, -1.0), scored(0, 2, "c", -0.5, -2.5)]
    assert order(rerank_nbest(nb, None, None, RerankWeights(1, 1, 0))) == [0, 1, 2]
    assert order(rerank_nbest(list(reversed(nb)), None, None, RerankWeights(1, 1, 0))) == [0, 1, 2]


def test_forced_only():
    nb = fixture_lists()[0]
    got = rerank_nbest(nb, None, None, RerankWeights(0, 1, 0))
    assert [c.features[FORCED] for c in got] == sorted((c.features[FORCED] for c in nb), reverse=True)
    assert order(got) == [2, 3, 1, 0]


@settings(max_examples=200, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2),
       st.floats(1e-6, 1e6, allow_subnormal=False))
def test_scaling_keeps_order(w1, w2, wwp, c):
    if not any((w1, w2, wwp)):
        return
    w = RerankWeights(w1, w2, wwp)
    for nb in fixture_lists():
        assert order(rerank_nbest(copy.deepcopy(nb), None, None, w)) == \
            order(rerank_nbest(copy.deepcopy(nb), None, None, w.scaled(c)))


def test_one_best_agrees_with_rerank():
    lists = fixture_lists()
    w = RerankWeights(1, 0.7, -0.3)
    assert one_best(lists, w) == [rerank_nbest(nb, None, None, w)[0].tokens for nb in lists]


# ---- scoring -------------------------------------------------------------------

def test_score_candidates_attaches_features():
    table, stats, nbest = adequacy_fixture()
    out = score_candidates(nbest, table, stats)
    assert [c.features[WORD_PENALTY] for c in out] == [4.0, 3.0]
    assert out[1].features[FORCED] == pytest.approx(3 * math.log(0.64))
    assert out[0].features[FORCED] == pytest.approx(3 * math.log(0.64) + insertion_penalty_cat())


def test_parallel_scoring_matches_serial():
    table, stats, nbest = adequacy_fixture()
    serial = score_candidates(copy.deepcopy(nbest) * 3, table, stats)
    parallel = score_candidates(copy.deepcopy(nbest) * 3, table, stats, jobs=2)
    assert [c.features[FORCED] for c in serial] == [c.features[FORCED] for c in parallel]


def test_skip_or_abort_on_bad_candidate():
    table = PhraseTable()
    stats = UnalignedStats(Counter(), Counter(), 3)
    nbest = [Candidate(0, ("x",), -1.0, (), rank=0), Candidate(0, ("x",), -1.0, ("a",), rank=1)]
    with pytest.raises(ValueError):
        score_candidates(copy.deepcopy(nbest), table, stats)
    kept = score_candidates(copy.deepcopy(nbest), table, stats, on_error="skip")
    assert [c.rank for c in kept] == [1]


def test_rerank_without_table_needs_scores():
    with pytest.raises(NotScoredError):
        rerank_nbest([Candidate(0, ("a",), -1.0)], None, None, RerankWeights())


# ---- adequacy ------------------------------------------------------------------

def test_adequacy_fixture_construction():
    # the penalty for the repeated word must dominate the upstream preference
    assert insertion_penalty_cat() < CONTENT_WORD_THRESHOLD
    assert -insertion_penalty_cat() * 0.1 > UPSTREAM_GAP


@pytest.mark.parametrize("w2", [w2 for w2, wp in default_grid() if w2 > 0 and wp == 0])
def test_faithful_first_with_upstream(w2):
    table, stats, nbest = adequacy_fixture()
    assert rerank_nbest(nbest, table, stats, RerankWeights(1, w2, 0))[0].tokens == FAITHFUL


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-9, 1e9))
def test_faithful_first_forced_only(w2):
    table, stats, nbest = adequacy_fixture()
    assert rerank_nbest(nbest, table, stats, RerankWeights(0, w2, 0))[0].tokens == FAITHFUL


def test_upstream_alone_prefers_over_translation():
    table, stats, nbest = adequacy_fixture()
    assert rerank_nbest(nbest, table, stats, RerankWeights(1, 0, 0))[0].tokens != FAITHFUL


# ---- tuning --------------------------------------------------------------------

def dev_set():
    # reference is never the upstream 1-best but always has the best forced score
    lists = [
        [scored(0, 0, "the the house is very old", -1.0, -9.0),
         scored(0, 1, "the house is very old", -1.5, -2.0),
         scored(0, 2, "house is old", -3.0, -6.0)],
        [scored(1, 0, "a a small dog barks loudly", -0.8, -10.0),
         scored(1, 1, "a small dog barks loudly", -1.1, -3.0)],
        [scored(2, 0, "it is is good for you", -2.0, -12.0),
         scored(2, 1, "it is good for you", -2.4, -4.0),
         scored(2, 2, "good for you", -5.0, -8.0)],
    ]
    refs = ["the house is very old", "a small dog barks loudly", "it is good for you"]
    return lists, refs


def test_tune_trivial_grid():
    lists, refs = dev_set()
    w = tune_weights(lists, refs, grid=[(0.0, 0.0)])
    assert (w.w1, w.w2, w.w_wp) == (1.0, 0.0, 0.0)
    assert one_best(lists, w) == [nb[0].tokens for nb in lists]


def test_tune_finds_forced_weight():
    lists, refs = dev_set()
    w = tune_weights(lists, refs)
    assert w.w1 == 1.0 and w.w2 > 0
    assert [" ".join(t) for t in one_best(lists, w)] == refs


def test_tune_prefers_smallest_norm_on_ties():
    lists, refs = dev_set()
    # any w2 >= 0.1 recovers every reference here; the smallest norm wins
    assert tune_weights(lists, refs) == RerankWeights(1.0, 0.1, 0.0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_tune_never_worse_than_upstream(seed):
    rng = random.Random(seed)
    lists = fixture_lists()
    refs = [" ".join(rng.choice(nb).tokens) for nb in lists]
    base = corpus_bleu(one_best(lists, RerankWeights()), refs)
    tuned = tune_weights(lists, refs)
    assert corpus_bleu(one_best(lists, tuned), refs) >= base


def test_empty_grid():
    lists, refs = dev_set()
    with pytest.raises(ValueError, match="empty"):
        tune_weights(lists, refs, grid=[])


def test_default_grid_shape():
    grid = default_grid()
    assert len(grid) == 21 * 21
    assert (0.0, -1.0) in grid and (2.0, 1.0) in grid and (1.0, 0.0) in grid


# ---- file formats ----------------------------------------------------------------

def test_jsonl_round_trip(tmp_path):
    p = tmp_path / "nb.jsonl"
    lines = [
        {"id": 7, "src": "a b", "hyp": "x y", "nmt_logprob": -1.25, "note": "keep"},
        {"id": 3, "src": "c", "hyp": "z", "nmt_logprob": -0.5, FORCED: -2.0},
        {"id": 7, "src": "a b", "hyp": "x", "nmt_logprob": -2.0},
    ]
    p.write_text("".join(json.dumps(x) + "\n" for x in lines))
    lists = read_nbest_jsonl(p)
    assert [[c.tokens for c in nb] for nb in lists] == [[("x", "y"), ("x",)], [("z",)]]
    assert [c.rank for c in lists[0]] == [0, 1]
    assert lists[0][0].extra == {"note": "keep"}
    assert lists[1][0].features == {FORCED: -2.0}
    out = tmp_path / "out.jsonl"
    write_nbest_jsonl(lists, out)
    again = read_nbest_jsonl(out)
    assert [[(c.tokens, c.upstream_logprob, c.source, c.extra) for c in nb] for nb in again] == \
        [[(c.tokens, c.upstream_logprob, c.source, c.extra) for c in nb] for nb in lists]


@pytest.mark.parametrize("line", ['{"id": 1, "hyp": "x"}', "not json", '{"id": "q", "hyp": "x", "nmt_logprob": 0}'])
def test_jsonl_errors(tmp_path, line):
    p = tmp_path / "nb.jsonl"
    p.write_text('{"id": 0, "hyp": "a", "nmt_logprob": -1}\n' + line + "\n")
    with pytest.raises(ValueError, match="line 2"):
        read_nbest_jsonl(p)


def test_moses_nbest(tmp_path):
    p = tmp_path / "nb.txt"
    p.write_text("0 ||| the house ||| d: 0 lm: -3 ||| -1.5\n"
                 "0 ||| house ||| d: 0 lm: -4 ||| -2.5\n"
                 "1 ||| small ||| d: 0 lm: -1 ||| -0.7\n")
    lists = read_moses_nbest(p, ["das haus", "klein"])
    assert [[c.upstream_logprob for c in nb] for nb in lists] == [[-1.5, -2.5], [-0.7]]
    assert lists[1][0].source == ("klein",)


def test_weights_round_trip(tmp_path):
    p = tmp_path / "w.tsv"
    w = RerankWeights(1.0, 0.30000000000000004, -0.7)
    write_weights(w, p)
    assert read_weights(p) == w
    p.write_text("1\t2\n")
    with pytest.raises(ValueError, match="line 1"):
        read_weights(p)
