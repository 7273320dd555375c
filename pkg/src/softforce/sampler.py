"""Diverse candidate lists from a next-token scorer.

At each step only the two most probable tokens are kept and one of them is
drawn in proportion to their renormalised probabilities. A list is the
beam-search 1-best plus ``num_samples`` such samples.

A scorer is anything with ``distribution(source, prefix) -> {token: prob}``.
The mapping's iteration order is the vocabulary order used to break ties.
"""

from __future__ import annotations

import math
import subprocess
import sys
from collections import Counter, defaultdict
from typing import IO, Mapping, Protocol, Sequence

import numpy as np

from .rerank import Candidate

EOS = "</s>"
BOS = "<s>"
DEFAULT_MAX_LEN = 200
DEFAULT_NUM_SAMPLES = 1000


class NextTokenScorer(Protocol):
    def distribution(self, source: Sequence[str], prefix: Sequence[str]) -> Mapping[str, float]:
        ...


class InvalidDistributionError(ValueError):
    pass


def validate_distribution(dist: Mapping[str, float], tol: float = 1e-6) -> None:
    if EOS not in dist:
        raise InvalidDistributionError(f"distribution lacks {EOS}")
    total = 0.0
    for tok, p in dist.items():
        if not (p >= 0.0 and math.isfinite(p)):
            raise InvalidDistributionError(f"bad probability {p!r} for {tok!r}")
        total += p
    if abs(total - 1.0) > tol:
        raise InvalidDistributionError(f"probabilities sum to {total:.9g}")


def top_two(dist: Mapping[str, float]) -> list[tuple[str, float]]:
    """The two most probable entries; equal probabilities go to the earlier token."""
    ranked = sorted(enumerate(dist.items()), key=lambda x: (-x[1][1], x[0]))
    return [item for _, item in ranked[:2]]


def sample_next(dist: Mapping[str, float], rng: np.random.Generator,
                method: str = "top2") -> str:
    if method == "ancestral":
        toks = list(dist)
        p = np.array([dist[t] for t in toks], dtype=float)
        return toks[rng.choice(len(toks), p=p / p.sum())]
    if method != "top2":
        raise ValueError(f"unknown sampling method {method!r}")
    best = top_two(dist)
    if len(best) < 2:
        return best[0][0]
    (e1, p1), (e2, p2) = best
    return e1 if rng.random() * (p1 + p2) < p1 else e2


def _sample(scorer, source, rng, max_len, method):
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    out, logprob = [], 0.0
    while len(out) < max_len:
        dist = scorer.distribution(source, out)
        validate_distribution(dist)
        tok = sample_next(dist, rng, method)
        logprob += math.log(dist[tok])
        if tok == EOS:
            return out, logprob, True
        out.append(tok)
    return out, logprob, False


def sample_translation(scorer: NextTokenScorer, source: Sequence[str], rng: np.random.Generator,
                       max_len: int = DEFAULT_MAX_LEN, method: str = "top2") -> list[str]:
    """Sample until ``</s>`` (not included) or *max_len* tokens."""
    return _sample(scorer, tuple(source), rng, max_len, method)[0]


def sequence_logprob(scorer: NextTokenScorer, source: Sequence[str], tokens: Sequence[str],
                     include_eos: bool = True) -> float:
    source, tokens = tuple(source), list(tokens)
    total = 0.0
    steps = tokens + [EOS] if include_eos else tokens
    for k, tok in enumerate(steps):
        dist = scorer.distribution(source, tokens[:k])
        validate_distribution(dist)
        p = dist.get(tok, 0.0)
        if p <= 0:
            return -math.inf
        total += math.log(p)
    return total


def greedy_translation(scorer: NextTokenScorer, source: Sequence[str],
                       max_len: int = DEFAULT_MAX_LEN) -> list[str]:
    source, out = tuple(source), []
    while len(out) < max_len:
        tok = top_two(scorer.distribution(source, out))[0][0]
        if tok == EOS:
            break
        out.append(tok)
    return out


def build_candidate_list(scorer: NextTokenScorer, source: Sequence[str], beam_best: Sequence[str],
                         num_samples: int = DEFAULT_NUM_SAMPLES, rng: np.random.Generator | None = None,
                         sentence_id: int = 0, max_len: int = DEFAULT_MAX_LEN,
                         method: str = "top2", dedupe: bool = False) -> list[Candidate]:
    """Beam 1-best followed by *num_samples* samples, duplicates kept by default.

    Each sample gets its own generator spawned from *rng*, so the list does
    not depend on the order in which samples are drawn. Scores are sequence
    log probabilities under *scorer*, including the ``</s>`` step (omitted for
    samples cut off at *max_len*).
    """
    if num_samples < 0:
        raise ValueError("num_samples must be >= 0")
    rng = np.random.default_rng() if rng is None else rng
    source = tuple(source)
    best_lp = sequence_logprob(scorer, source, beam_best)
    if not math.isfinite(best_lp):
        raise ValueError("beam 1-best has zero probability under the scorer")
    out = [Candidate(sentence_id, beam_best, best_lp, source, rank=0)]
    for k, stream in enumerate(rng.spawn(num_samples), start=1):
        toks, lp, _ = _sample(scorer, source, stream, max_len, method)
        out.append(Candidate(sentence_id, toks, lp, source, rank=k))
    if dedupe:
        seen, kept = set(), []
        for c in out:
            if c.tokens not in seen:
                seen.add(c.tokens)
                kept.append(c)
        for k, c in enumerate(kept):
            c.rank = k
        out = kept
    return out


class BigramScorer:
    """Add-k smoothed bigram model over target sentences; ignores the source."""

    def __init__(self, sentences, add_k: float = 0.1):
        if add_k <= 0:
            raise ValueError("add_k must be positive")
        counts: dict[str, Counter] = defaultdict(Counter)
        vocab = set()
        for sent in sentences:
            toks = sent.split() if isinstance(sent, str) else list(sent)
            vocab.update(toks)
            for prev, nxt in zip([BOS] + toks, toks + [EOS]):
                counts[prev][nxt] += 1
        self.vocab = sorted(vocab) + [EOS]
        self.add_k = add_k
        self._counts = counts
        self._cache: dict[str, dict[str, float]] = {}

    def distribution(self, source, prefix):
        prev = prefix[-1] if prefix else BOS
        dist = self._cache.get(prev)
        if dist is None:
            c = self._counts.get(prev, Counter())
            denom = sum(c.values()) + self.add_k * len(self.vocab)
            dist = {t: (c[t] + self.add_k) / denom for t in self.vocab}
            self._cache[prev] = dist
        return dist


class TableScorer:
    """Scorer given by an explicit ``{prefix tuple: {token: prob}}`` table, for tests."""

    def __init__(self, table: Mapping[tuple, Mapping[str, float]], default=None):
        self.table = {tuple(k): dict(v) for k, v in table.items()}
        self.default = default

    def distribution(self, source, prefix):
        d = self.table.get(tuple(prefix), self.default)
        if d is None:
            raise KeyError(f"no distribution for prefix {tuple(prefix)}")
        return d


# ---- external scorer protocol ------------------------------------------
#
# request:  "<source tokens> ||| <prefix tokens>\n"
# response: "<token> <prob> <token> <prob> ...\n"  (one line per request)

def format_request(source, prefix) -> str:
    return f"{' '.join(source)} ||| {' '.join(prefix)}\n"


def parse_request(line: str) -> tuple[list[str], list[str]]:
    src, sep, prefix = line.rstrip("\n").partition("|||")
    if not sep:
        raise ValueError(f"malformed scorer request {line!r}")
    return src.split(), prefix.split()


def format_response(dist: Mapping[str, float]) -> str:
    return " ".join(f"{t} {p!r}" for t, p in dist.items()) + "\n"


def parse_response(line: str) -> dict[str, float]:
    fields = line.split()
    if not fields or len(fields) % 2:
        raise InvalidDistributionError(f"malformed scorer response {line.strip()!r}")
    try:
        return {fields[k]: float(fields[k + 1]) for k in range(0, len(fields), 2)}
    except ValueError:
        raise InvalidDistributionError(f"non-numeric probability in {line.strip()!r}") from None


def serve(scorer: NextTokenScorer, stdin: IO[str] = sys.stdin, stdout: IO[str] = sys.stdout) -> None:
    """Answer protocol requests on *stdin* until EOF."""
    for line in stdin:
        if not line.strip():
            continue
        src, prefix = parse_request(line)
        stdout.write(format_response(scorer.distribution(src, prefix)))
        stdout.flush()


class SubprocessScorer:
    """Scorer served by an external command speaking the line protocol above."""

    def __init__(self, cmd: Sequence[str] | str, shell: bool = False):
        self._proc = subprocess.Popen(cmd, shell=shell, stdin=subprocess.PIPE,
                                      stdout=subprocess.PIPE, text=True, encoding="utf-8",
                                      bufsize=1)

    def distribution(self, source, prefix):
        self._proc.stdin.write(format_request(source, prefix))
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError(f"scorer process exited (status {self._proc.poll()})")
        return parse_response(line)

    def close(self):
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


if __name__ == "__main__":
    # python -m softforce.sampler TARGET_TEXT: serve a bigram scorer on stdin/stdout
    with open(sys.argv[1], encoding="utf-8") as f:
        serve(BigramScorer(f.read().splitlines()))
