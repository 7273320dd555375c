"""N-best reranking with a log-linear mix of the upstream model score, the
forced-decoding score and a word penalty, plus grid-search weight tuning.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .bleu import corpus_bleu
from .corpus import UnalignedStats
from .decoder import DEFAULT_BEAM_WIDTH, forced_decode
from .phrase_table import PhraseTable

logger = logging.getLogger(__name__)

FORCED = "forced_logscore"
WORD_PENALTY = "word_penalty"


class NotScoredError(ValueError):
    pass


@dataclass
class Candidate:
    sentence_id: int
    tokens: tuple[str, ...]
    upstream_logprob: float
    source: tuple[str, ...] = ()
    features: dict[str, float] = field(default_factory=dict)
    rank: int = 0                      # position in the input list
    extra: dict = field(default_factory=dict)  # unrecognised JSON fields, kept for output

    def __post_init__(self):
        self.tokens = tuple(self.tokens)
        self.source = tuple(self.source)
        if not math.isfinite(self.upstream_logprob):
            raise ValueError(f"non-finite upstream score for candidate {self.rank} "
                             f"of sentence {self.sentence_id}")


NBestList = list  # list[Candidate], all sharing one sentence_id and source


@dataclass(frozen=True)
class RerankWeights:
    w1: float = 1.0    # upstream log probability
    w2: float = 0.0    # forced-decoding log score
    w_wp: float = 0.0  # word penalty (output length)

    def __post_init__(self):
        vals = (self.w1, self.w2, self.w_wp)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("weights must be finite")
        if not any(vals):
            raise ValueError("weights must not all be zero")

    def scaled(self, c: float) -> "RerankWeights":
        return RerankWeights(c * self.w1, c * self.w2, c * self.w_wp)

    def direction(self) -> tuple[float, float, float]:
        """Weights divided by the largest magnitude, rounded to 12 significant
        digits. Rankings use this, so scaling all weights by c > 0 gives the
        same floats and the same order even on exact ties."""
        vals = (self.w1, self.w2, self.w_wp)
        m = max(abs(v) for v in vals)
        return tuple(float(f"{v / m:.12g}") for v in vals)


def combined_score(c: Candidate, w: RerankWeights) -> float:
    if FORCED not in c.features:
        raise NotScoredError(f"candidate not scored (sentence {c.sentence_id}, rank {c.rank})")
    wp = c.features.get(WORD_PENALTY, len(c.tokens))
    return w.w1 * c.upstream_logprob + w.w2 * c.features[FORCED] + w.w_wp * wp


_worker_state = {}


def _init_worker(table, stats, beam_width):
    _worker_state.update(table=table, stats=stats, beam_width=beam_width)


def _score_one(pair):
    src, hyp = pair
    s = _worker_state
    return forced_decode(src, hyp, s["table"], s["stats"], s["beam_width"]).total_log_score


def forced_scores(pairs: Sequence[tuple[Sequence[str], Sequence[str]]], table: PhraseTable,
                  stats: UnalignedStats, beam_width=DEFAULT_BEAM_WIDTH, jobs: int = 1) -> list[float]:
    """Forced-decoding scores for (source, target) pairs, in input order."""
    if jobs <= 1 or len(pairs) < 2:
        return [forced_decode(f, e, table, stats, beam_width).total_log_score for f, e in pairs]
    with ProcessPoolExecutor(jobs, initializer=_init_worker,
                             initargs=(table, stats, beam_width)) as pool:
        return list(pool.map(_score_one, pairs, chunksize=max(1, len(pairs) // (4 * jobs))))


def score_candidates(nbest: Iterable[Candidate], table: PhraseTable, stats: UnalignedStats,
                     beam_width=DEFAULT_BEAM_WIDTH, on_error: str = "abort",
                     jobs: int = 1, rescore: bool = False) -> list[Candidate]:
    """Attach forced-decoding and word-penalty features.

    Candidates that already carry a forced score are left alone unless
    *rescore* is set. With ``on_error="skip"`` a candidate that cannot be
    scored is dropped with a warning instead of raising.
    """
    if on_error not in ("abort", "skip"):
        raise ValueError(f"on_error must be 'abort' or 'skip', not {on_error!r}")
    nbest = list(nbest)
    todo = [c for c in nbest if rescore or FORCED not in c.features]
    bad = set()
    if on_error == "skip":
        for c in todo:
            try:
                c.features[FORCED] = forced_decode(c.source, c.tokens, table, stats,
                                                   beam_width).total_log_score
            except ValueError as e:
                logger.warning("skipping candidate %d of sentence %d: %s",
                               c.rank, c.sentence_id, e)
                bad.add(id(c))
    else:
        scores = forced_scores([(c.source, c.tokens) for c in todo], table, stats,
                               beam_width, jobs)
        for c, s in zip(todo, scores):
            c.features[FORCED] = s
    out = []
    for c in nbest:
        if id(c) in bad:
            continue
        c.features[WORD_PENALTY] = float(len(c.tokens))
        out.append(c)
    return out


def rerank_nbest(nbest: Iterable[Candidate], table: PhraseTable | None, stats: UnalignedStats | None,
                 weights: RerankWeights, beam_width=DEFAULT_BEAM_WIDTH, **score_kw) -> list[Candidate]:
    """Score (if needed) and sort one n-best list, best first.

    Ties keep the original order. ``features["combined"]`` receives the
    combined score. *table*/*stats* may be None for pre-scored lists.
    """
    nbest = list(nbest)
    if len({c.sentence_id for c in nbest}) > 1:
        raise ValueError("n-best list mixes sentence ids")
    if any(FORCED not in c.features for c in nbest):
        if table is None or stats is None:
            raise NotScoredError("candidates lack forced scores and no table/stats given")
        nbest = score_candidates(nbest, table, stats, beam_width, **score_kw)
    unit = RerankWeights(*weights.direction())
    keys = {}
    for c in nbest:
        c.features.setdefault(WORD_PENALTY, float(len(c.tokens)))
        c.features["combined"] = combined_score(c, weights)
        keys[id(c)] = (-combined_score(c, unit), c.rank)
    return sorted(nbest, key=lambda c: keys[id(c)])


def default_grid() -> list[tuple[float, float]]:
    w2s = [round(0.1 * k, 10) for k in range(21)]
    wps = [round(0.1 * k, 10) for k in range(-10, 11)]
    return [(a, b) for a in w2s for b in wps]


def _feature_arrays(lists):
    out = []
    for nb in lists:
        if not nb:
            raise ValueError("empty n-best list")
        nb = sorted(nb, key=lambda c: c.rank)
        for c in nb:
            if FORCED not in c.features:
                raise NotScoredError(f"candidate not scored (sentence {c.sentence_id}, rank {c.rank})")
        feats = np.array([[c.upstream_logprob, c.features[FORCED],
                           c.features.get(WORD_PENALTY, len(c.tokens))] for c in nb])
        out.append((nb, feats))
    return out


def _combine(feats, w1, w2, w_wp):
    # same operation order as combined_score, so argmax agrees with rerank_nbest
    return w1 * feats[:, 0] + w2 * feats[:, 1] + w_wp * feats[:, 2]


def one_best(lists: Sequence[Sequence[Candidate]], weights: RerankWeights) -> list[tuple[str, ...]]:
    """Top candidate of each list under *weights* (first in original order on ties)."""
    w = weights.direction()
    return [nb[int(np.argmax(_combine(feats, *w)))].tokens for nb, feats in _feature_arrays(lists)]


def tune_weights(dev_lists: Sequence[Sequence[Candidate]], references: Sequence,
                 grid: Iterable[tuple[float, float]] | None = None) -> RerankWeights:
    """Grid search over (w2, w_wp) with w1 fixed at 1, maximising corpus BLEU
    of the 1-best outputs.

    Ties go to the smaller Euclidean norm of (w2, w_wp), then to grid order.
    """
    grid = default_grid() if grid is None else list(grid)
    if not grid:
        raise ValueError("empty weight grid")
    if len(dev_lists) != len(references):
        raise ValueError(f"{len(dev_lists)} n-best lists but {len(references)} references")
    arrays = _feature_arrays(dev_lists)
    best_key, best = None, None
    for w2, wwp in grid:
        w = RerankWeights(1.0, w2, wwp).direction()
        hyps = [nb[int(np.argmax(_combine(feats, *w)))].tokens for nb, feats in arrays]
        score = corpus_bleu(hyps, references)
        key = (-score, math.hypot(w2, wwp))
        if best_key is None or key < best_key:
            best_key, best = key, (w2, wwp)
    logger.info("tuned weights w2=%g wWP=%g dev BLEU=%.4f", best[0], best[1], -best_key[0])
    return RerankWeights(1.0, best[0], best[1])


# ---- file formats -------------------------------------------------------

def read_nbest_jsonl(path) -> list[list[Candidate]]:
    """Read JSON-lines candidates, grouped by ``id`` in order of first appearance."""
    groups: dict[int, list[Candidate]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                sid = int(obj.pop("id"))
                hyp = obj.pop("hyp")
                logprob = float(obj.pop("nmt_logprob"))
                src = obj.pop("src", "")
            except (ValueError, KeyError, TypeError, AttributeError) as e:
                raise ValueError(f"line {lineno}: bad n-best entry ({e})") from None
            feats = {}
            for k in (FORCED, WORD_PENALTY):
                if k in obj:
                    feats[k] = float(obj.pop(k))
            for k in ("combined", "rank"):
                obj.pop(k, None)
            group = groups.setdefault(sid, [])
            group.append(Candidate(sid, hyp.split(), logprob, src.split(), feats,
                                   rank=len(group), extra=obj))
    for sid, group in groups.items():
        if len({c.source for c in group}) > 1:
            raise ValueError(f"sentence {sid}: candidates disagree on the source")
    return list(groups.values())


def read_moses_nbest(path, sources: Sequence[Sequence[str]] | dict) -> list[list[Candidate]]:
    """Read ``id ||| hyp ||| features ||| score`` lines; ``sources[id]`` gives the source."""
    groups: dict[int, list[Candidate]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = [p.strip() for p in line.split("|||")]
            if len(parts) < 4:
                raise ValueError(f"line {lineno}: expected 'id ||| hyp ||| features ||| score'")
            try:
                sid, score = int(parts[0]), float(parts[3])
            except ValueError:
                raise ValueError(f"line {lineno}: bad id or score") from None
            src = sources[sid] if not isinstance(sources, dict) else sources.get(sid, ())
            src = src.split() if isinstance(src, str) else src
            group = groups.setdefault(sid, [])
            group.append(Candidate(sid, parts[1].split(), score, src, rank=len(group)))
    return list(groups.values())


def candidate_to_json(c: Candidate, rank: int | None = None) -> str:
    obj = {"id": c.sentence_id, "src": " ".join(c.source), "hyp": " ".join(c.tokens),
           "nmt_logprob": c.upstream_logprob}
    obj.update(c.extra)
    if FORCED in c.features:
        obj[FORCED] = c.features[FORCED]
    if WORD_PENALTY in c.features:
        obj[WORD_PENALTY] = int(c.features[WORD_PENALTY])
    if "combined" in c.features:
        obj["combined"] = c.features["combined"]
    if rank is not None:
        obj["rank"] = rank
    return json.dumps(obj, ensure_ascii=False)


def write_nbest_jsonl(lists: Iterable[Sequence[Candidate]], path, ranked: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for nb in lists:
            for k, c in enumerate(nb, start=1):
                f.write(candidate_to_json(c, k if ranked else None) + "\n")


def write_weights(w: RerankWeights, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{w.w1!r}\t{w.w2!r}\t{w.w_wp!r}\n")


def read_weights(path) -> RerankWeights:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ValueError(f"line {lineno}: expected 'w1<TAB>w2<TAB>wWP'")
            try:
                return RerankWeights(*(float(x) for x in fields))
            except ValueError as e:
                raise ValueError(f"line {lineno}: {e}") from None
    raise ValueError("weights file has no weights line")
