import math
import sys
from collections import Counter

import numpy as np
import pytest

from softforce.sampler import (
    EOS,
    BigramScorer,
    InvalidDistributionError,
    SubprocessScorer,
    TableScorer,
    build_candidate_list,
    format_request,
    format_response,
    greedy_translation,
    parse_request,
    parse_response,
    sample_next,
    sample_translation,
    sequence_logprob,
    top_two,
    validate_distribution,
)


def draw_freq(dist, token, n=10_000, seed=0):
    rng = np.random.default_rng(seed)
    return sum(sample_next(dist, rng) == token for _ in range(n)) / n


def three_sigma(p, n=10_000):
    return 3 * math.sqrt(p * (1 - p) / n)


def test_top_two_renormalised():
    f = draw_freq({"e1": 0.6, "e2": 0.3, EOS: 0.1}, "e1")
    assert abs(f - 2 / 3) <= three_sigma(2 / 3)


def test_equal_pair_is_fair():
    f = draw_freq({"e1": 0.45, "e2": 0.45, EOS: 0.1}, "e1", seed=1)
    assert abs(f - 0.5) <= three_sigma(0.5)


def test_third_token_never_drawn():
    rng = np.random.default_rng(2)
    dist = {"a": 0.3, "b": 0.3, "c": 0.3, EOS: 0.1}
    assert {sample_next(dist, rng) for _ in range(2000)} == {"a", "b"}
    assert top_two(dist) == [("a", 0.3), ("b", 0.3)]


def test_single_token_vocabulary():
    assert sample_next({EOS: 1.0}, np.random.default_rng(0)) == EOS


@pytest.mark.parametrize("dist", [{"a": 0.5}, {"a": 0.5, EOS: 0.4}, {"a": -0.1, EOS: 1.1},
                                  {"a": math.nan, EOS: 1.0}])
def test_invalid_distribution(dist):
    with pytest.raises(InvalidDistributionError):
        validate_distribution(dist)


def test_invalid_scorer_output_raises():
    scorer = TableScorer({}, default={"a": 0.5, EOS: 0.2})
    with pytest.raises(InvalidDistributionError):
        sample_translation(scorer, ("s",), np.random.default_rng(0))


def chain_scorer():
    # a -> b -> </s> with certainty
    return TableScorer({
        (): {"a": 1.0, "b": 0.0, EOS: 0.0},
        ("a",): {"b": 1.0, "a": 0.0, EOS: 0.0},
        ("a", "b"): {EOS: 1.0, "a": 0.0},
    })


def test_eos_first_gives_empty():
    scorer = TableScorer({}, default={EOS: 1.0, "a": 0.0})
    assert sample_translation(scorer, ("s",), np.random.default_rng(0)) == []


def test_deterministic_scorer():
    rng = np.random.default_rng(3)
    outs = {tuple(sample_translation(chain_scorer(), ("s",), rng)) for _ in range(50)}
    assert outs == {("a", "b")}
    assert greedy_translation(chain_scorer(), ("s",)) == ["a", "b"]


def test_max_len_truncates():
    scorer = TableScorer({}, default={"x": 0.5, "y": 0.4, EOS: 0.1})
    out = sample_translation(scorer, ("s",), np.random.default_rng(0), max_len=5)
    assert len(out) == 5


def test_ancestral_can_stop():
    scorer = TableScorer({}, default={"x": 0.5, "y": 0.4, EOS: 0.1})
    rng = np.random.default_rng(0)
    lengths = [len(sample_translation(scorer, (), rng, max_len=50, method="ancestral"))
               for _ in range(200)]
    assert min(lengths) < 50


# ---- bigram chain vs independent simulation --------------------------------------

CORPUS = ["a b", "a b b", "b a", "a", "b b a b"]


def reference_length_distribution(max_len, add_k=0.1):
    """Exact length distribution of top-2 sampling over the add-k bigram chain,
    computed by forward recursion over (previous token) states."""
    vocab = ["a", "b", EOS]
    counts = {}
    for sent in CORPUS:
        toks = sent.split()
        for prev, nxt in zip(["<s>"] + toks, toks + [EOS]):
            counts[(prev, nxt)] = counts.get((prev, nxt), 0) + 1

    def step(prev):
        tot = sum(counts.get((prev, v), 0) for v in vocab) + add_k * len(vocab)
        probs = [(counts.get((prev, v), 0) + add_k) / tot for v in vocab]
        keep = sorted(range(3), key=lambda k: (-probs[k], k))[:2]
        z = sum(probs[k] for k in keep)
        return {vocab[k]: probs[k] / z for k in keep}

    mass = {"<s>": 1.0}
    lengths = Counter()
    for n in range(max_len + 1):
        nxt = Counter()
        for prev, m in mass.items():
            for tok, p in step(prev).items():
                if tok == EOS:
                    lengths[n] += m * p
                elif n < max_len:
                    nxt[tok] += m * p
        mass = nxt
    return lengths


def test_bigram_length_distribution():
    scorer = BigramScorer(CORPUS)
    rng = np.random.default_rng(11)
    n = 4000
    got = Counter(len(sample_translation(scorer, (), rng, max_len=30)) for _ in range(n))
    want = reference_length_distribution(30)
    assert sum(want.values()) == pytest.approx(1.0, abs=1e-6)
    for length in set(got) | {k for k, p in want.items() if p > 1e-3}:
        p = want.get(length, 0.0)
        assert abs(got[length] / n - p) <= 4 * math.sqrt(p * (1 - p) / n) + 1e-3, length


# ---- candidate lists ----------------------------------------------------------------

def test_default_list_size():
    cands = build_candidate_list(chain_scorer(), ("s",), ("a", "b"), rng=np.random.default_rng(0))
    assert len(cands) == 1001
    assert {c.tokens for c in cands} == {("a", "b")}
    assert [c.rank for c in cands] == list(range(1001))


def test_zero_samples():
    cands = build_candidate_list(chain_scorer(), ("s",), ("a", "b"), num_samples=0)
    assert [c.tokens for c in cands] == [("a", "b")]


def test_beam_best_must_be_possible():
    with pytest.raises(ValueError):
        build_candidate_list(chain_scorer(), ("s",), ("b",), num_samples=1)


def test_seeded_determinism():
    scorer = BigramScorer(CORPUS)
    a = build_candidate_list(scorer, (), ("a",), 50, np.random.default_rng(9))
    b = build_candidate_list(scorer, (), ("a",), 50, np.random.default_rng(9))
    assert [(c.tokens, c.upstream_logprob) for c in a] == [(c.tokens, c.upstream_logprob) for c in b]


def test_samples_independent_of_list_length():
    scorer = BigramScorer(CORPUS)
    short = build_candidate_list(scorer, (), ("a",), 5, np.random.default_rng(4))
    long = build_candidate_list(scorer, (), ("a",), 40, np.random.default_rng(4))
    assert [c.tokens for c in short] == [c.tokens for c in long[:6]]


def test_logprobs_recomputable():
    scorer = BigramScorer(CORPUS)
    cands = build_candidate_list(scorer, (), ("a", "b"), 100, np.random.default_rng(5))
    for c in cands:
        toks = list(c.tokens)
        want = sum(math.log(scorer.distribution((), toks[:k])[t])
                   for k, t in enumerate(toks + [EOS]))
        assert c.upstream_logprob == pytest.approx(want, abs=1e-12)
        assert c.upstream_logprob == pytest.approx(sequence_logprob(scorer, (), toks), abs=1e-12)


def test_truncated_sample_omits_eos_step():
    scorer = TableScorer({}, default={"x": 0.5, "y": 0.4, EOS: 0.1})
    beam = ("x",)
    (_, c) = build_candidate_list(scorer, (), beam, 1, np.random.default_rng(0), max_len=3)
    assert len(c.tokens) == 3
    assert c.upstream_logprob == pytest.approx(sequence_logprob(scorer, (), c.tokens, include_eos=False))


def test_dedupe():
    cands = build_candidate_list(chain_scorer(), ("s",), ("a", "b"), 20, np.random.default_rng(0),
                                 dedupe=True)
    assert len(cands) == 1 and cands[0].rank == 0


# ---- external scorer protocol -----------------------------------------------------------

def test_protocol_round_trip():
    line = format_request(("das", "haus"), ("the",))
    assert line == "das haus ||| the\n"
    assert parse_request(line) == (["das", "haus"], ["the"])
    assert parse_request("x ||| \n") == (["x"], [])
    dist = {"a": 0.1, EOS: 0.9}
    assert parse_response(format_response(dist)) == dist


@pytest.mark.parametrize("line", ["", "a 0.5 b", "a x"])
def test_bad_response(line):
    with pytest.raises(InvalidDistributionError):
        parse_response(line)


def test_bad_request():
    with pytest.raises(ValueError):
        parse_request("no separator\n")


def test_subprocess_scorer(tmp_path):
    corpus = tmp_path / "lm.txt"
    corpus.write_text("\n".join(CORPUS) + "\n")
    local = BigramScorer(CORPUS)
    with SubprocessScorer([sys.executable, "-m", "softforce.sampler", str(corpus)]) as remote:
        for prefix in [(), ("a",), ("b", "b")]:
            assert remote.distribution(("src",), prefix) == local.distribution(("src",), prefix)
        a = build_candidate_list(remote, ("src",), ("a",), 10, np.random.default_rng(1))
    b = build_candidate_list(local, ("src",), ("a",), 10, np.random.default_rng(1))
    assert [c.tokens for c in a] == [c.tokens for c in b]
