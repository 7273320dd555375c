"""Stack decoding over a phrase table.

Two searches share one hypothesis representation:

* :func:`decode_standard` translates a source sentence, with stacks indexed
  by the number of covered source words.
* :func:`forced_decode` scores a *given* target sentence. Stacks are indexed
  by the number of target words generated, and besides the phrase rules a
  hypothesis can always insert the next target word (``null -> e``). Source
  words still uncovered at the end are deleted (``f -> null``). Both soft
  rules use the squared unaligned-word ratio as their score, so a path
  always exists.

Everything is in natural-log space. Reordering is free: any uncovered
contiguous source span may be translated next.
"""

from __future__ import annotations

import enum
import gc
import heapq
import math
import operator
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import UnalignedStats
from .phrase_table import PhraseRule, PhraseTable, lookup_target_matches

DEFAULT_BEAM_WIDTH = 100
NULL = "null"


class RuleKind(enum.IntEnum):
    PHRASE = 0
    DELETE_SOURCE = 1
    INSERT_TARGET = 2
    FINAL_DELETE = 3


_KIND_NAMES = {
    RuleKind.PHRASE: "phrase",
    RuleKind.DELETE_SOURCE: "delete",
    RuleKind.INSERT_TARGET: "insert",
    RuleKind.FINAL_DELETE: "final_delete",
}


@dataclass(frozen=True)
class AppliedRule:
    """One step of a decoding path.

    Spans are half-open ``(begin, end)``. Phrase steps carry the
    :class:`PhraseRule`; soft steps carry only the inserted/deleted token.
    """

    kind: RuleKind
    log_score: float
    rule: PhraseRule | None = None
    token: str | None = None
    source_span: tuple[int, int] | None = None
    target_span: tuple[int, int] | None = None
    # derived, cached for the search loop
    mask: int = field(init=False, repr=False, compare=False)
    key: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mask = 0
        if self.source_span is not None:
            b, e = self.source_span
            mask = ((1 << (e - b)) - 1) << b
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "key", (int(self.kind), self.source_span or (-1, -1),
                                         self.target_span or (-1, -1),
                                         self.source_tokens, self.target_tokens))

    @property
    def is_soft(self) -> bool:
        return self.kind != RuleKind.PHRASE

    @property
    def source_tokens(self) -> tuple[str, ...]:
        if self.kind == RuleKind.PHRASE:
            return self.rule.source_phrase
        if self.kind == RuleKind.INSERT_TARGET:
            return ()
        return (self.token,)

    @property
    def target_tokens(self) -> tuple[str, ...]:
        if self.kind == RuleKind.PHRASE:
            return self.rule.target_phrase
        if self.kind == RuleKind.INSERT_TARGET:
            return (self.token,)
        return ()

    def trace_line(self) -> str:
        src = " ".join(self.source_tokens) or NULL
        tgt = " ".join(self.target_tokens) or NULL
        return f"{_KIND_NAMES[self.kind]}\t{src}\t{tgt}\t{self.log_score:.6f}"


class _Trail:
    """Lazy tie-breaker: compares rule sequences only when scores tie."""

    __slots__ = ("h",)

    def __init__(self, h):
        self.h = h

    def __lt__(self, other):
        return self.h.trail() < other.h.trail()

    def __eq__(self, other):
        return self.h.trail() == other.h.trail()


@dataclass(eq=False, slots=True)
class Hypothesis:
    coverage: int            # bit j set = source word j covered
    target_index: int        # target words generated so far
    log_score: float         # sum of applied rule scores
    parent: Hypothesis | None = None
    applied: AppliedRule | None = None
    n_soft: int = 0          # insertions and deletions applied
    last_end: int = 0        # end of the last source span, for the distortion limit
    search_score: float = 0.0  # log_score plus any word-penalty term
    _trail: tuple | None = None

    def rank_key(self):
        # smaller is better: score, then fewer soft rules, then smallest rule sequence
        return (-self.search_score, self.n_soft, _Trail(self))

    def trail(self) -> tuple:
        if self._trail is None:
            self._trail = () if self.parent is None else self.parent.trail() + (self.applied.key,)
        return self._trail

    def extend(self, step: AppliedRule, extra: float = 0.0) -> "Hypothesis":
        is_phrase = step.kind == RuleKind.PHRASE
        return Hypothesis(self.coverage | step.mask, self.target_index + len(step.target_tokens),
                          self.log_score + step.log_score, self, step,
                          self.n_soft + (not is_phrase),
                          step.source_span[1] if is_phrase else self.last_end,
                          self.search_score + step.log_score + extra)

    def steps(self) -> list[AppliedRule]:
        out = []
        h = self
        while h.applied is not None:
            out.append(h.applied)
            h = h.parent
        out.reverse()
        return out

    def covered(self, n: int) -> list[int]:
        return [j for j in range(n) if self.coverage >> j & 1]


@dataclass(frozen=True)
class DecodingPath:
    applied_rules: tuple[AppliedRule, ...]

    @property
    def total_log_score(self) -> float:
        return sum(s.log_score for s in self.applied_rules)

    @property
    def n_soft(self) -> int:
        return sum(s.is_soft for s in self.applied_rules)

    def target_tokens(self) -> tuple[str, ...]:
        return tuple(tok for s in self.applied_rules for tok in s.target_tokens)

    def trace(self) -> str:
        return "\n".join(s.trace_line() for s in self.applied_rules)

    def verify(self, source: Sequence[str], target: Sequence[str] | None = None) -> None:
        """Raise ``ValueError`` unless the path covers *source* exactly once
        and, when given, reproduces *target*."""
        if target is not None and self.target_tokens() != tuple(target):
            raise ValueError("path does not reproduce the target")
        seen = [0] * len(source)
        for s in self.applied_rules:
            if s.source_span is None:
                continue
            b, e = s.source_span
            if tuple(source[b:e]) != s.source_tokens:
                raise ValueError(f"source span {s.source_span} does not match {s.source_tokens}")
            for j in range(b, e):
                seen[j] += 1
        if any(c != 1 for c in seen):
            raise ValueError(f"source coverage counts {seen}, expected all 1")


def deletion_log_score(token: str, stats: UnalignedStats) -> float:
    """Score of ``token -> null``: twice the log of its unaligned rate."""
    return 2.0 * math.log(stats.effective_source(token) / stats.corpus_size)


def insertion_log_score(token: str, stats: UnalignedStats) -> float:
    """Score of ``null -> token``, mirror of :func:`deletion_log_score`."""
    return 2.0 * math.log(stats.effective_target(token) / stats.corpus_size)


class _Expander:
    """Phrase options for one sentence, precomputed from the table.

    Forced-mode options are complete :class:`AppliedRule` steps per target
    position; standard-mode options are ``(rule, begin, end, mask)``.
    """

    def __init__(self, table: PhraseTable, source: Sequence[str],
                 target: Sequence[str] | None, distortion_limit: int | None = None,
                 pass_through: bool = False):
        self.source = tuple(source)
        self.distortion_limit = distortion_limit
        J = len(self.source)
        spans = {}
        for b in range(J):
            for e in range(b + 1, min(J, b + table.max_source_len) + 1):
                spans.setdefault(self.source[b:e], []).append((b, e))

        if target is None:
            opts = []
            for phrase, locs in spans.items():
                for rule in table.by_source(phrase):
                    opts.extend((rule, b, e) for b, e in locs)
            if pass_through:
                for j, tok in enumerate(self.source):
                    if not table.by_source((tok,)):
                        opts.append((PhraseRule((tok,), (tok,), 1.0, 1.0), j, j + 1))
            self.standard = [(r, b, e, _mask(b, e)) for r, b, e in opts]
        else:
            target = tuple(target)
            self.forced = []
            for i in range(len(target)):
                at_i = []
                for rule in lookup_target_matches(table, target, i):
                    n = len(rule.target_phrase)
                    for b, e in spans.get(rule.source_phrase, ()):
                        at_i.append(AppliedRule(RuleKind.PHRASE, rule.log_score, rule=rule,
                                                source_span=(b, e), target_span=(i, i + n)))
                self.forced.append(at_i)

    def _allowed(self, h: Hypothesis, b: int) -> bool:
        return self.distortion_limit is None or abs(b - h.last_end) <= self.distortion_limit

    def children(self, h: Hypothesis, mode: str, wp_weight: float = 0.0) -> list[Hypothesis]:
        out = []
        if mode == "forced":
            if h.target_index >= len(self.forced):
                return out
            for step in self.forced[h.target_index]:
                if not h.coverage & step.mask and self._allowed(h, step.source_span[0]):
                    out.append(h.extend(step))
            return out
        t = h.target_index
        for rule, b, e, mask in self.standard:
            if h.coverage & mask or not self._allowed(h, b):
                continue
            n = len(rule.target_phrase)
            step = AppliedRule(RuleKind.PHRASE, rule.log_score, rule=rule,
                               source_span=(b, e), target_span=(t, t + n))
            out.append(h.extend(step, wp_weight * n))
        return out


def _mask(b, e):
    return ((1 << (e - b)) - 1) << b


def expand(h: Hypothesis, table: PhraseTable, source: Sequence[str],
           target: Sequence[str] | None = None, mode: str = "standard",
           distortion_limit: int | None = None) -> list[Hypothesis]:
    """Children of *h* obtained by applying one phrase rule.

    In ``"forced"`` mode only rules producing the next words of *target*
    are applied. Insertion and deletion are never applied here.
    """
    if mode not in ("standard", "forced"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "forced" and target is None:
        raise ValueError("forced mode needs a target")
    exp = _Expander(table, source, target if mode == "forced" else None, distortion_limit)
    return exp.children(h, mode)


def _state_key(h: Hypothesis, distortion_limit):
    # stacks already fix the target position (forced) or covered count (standard)
    if distortion_limit is None:
        return h.coverage
    return (h.coverage, h.last_end)


def _add(stack: dict, h: Hypothesis, distortion_limit) -> None:
    key = _state_key(h, distortion_limit)
    old = stack.get(key)
    if old is None or h.rank_key() < old.rank_key():
        stack[key] = h


def _prune_key(h):
    return (-h.search_score, h.n_soft)


def _prune(stack: dict, beam_width) -> list[Hypothesis]:
    """Best-first survivors of a stack. The sort is stable, so exact ties at
    the beam edge keep insertion order, which is deterministic."""
    if beam_width is None or beam_width >= len(stack):
        return sorted(stack.values(), key=_prune_key)
    return heapq.nsmallest(beam_width, stack.values(), key=_prune_key)


def _check_beam(beam_width):
    if beam_width is None or beam_width == math.inf:
        return None
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    return int(beam_width)


# Forced decoding keeps its states as plain tuples (cost, n_soft, coverage,
# last_end, parent, step), with cost = -score so pruning sorts on a plain prefix: millions are created per corpus and only the
# winner's chain is ever turned into a path.

def _state_trail(state, memo) -> tuple:
    hit = memo.get(id(state))
    if hit is not None:
        return hit[1]
    parent = state[4]
    trail = () if parent is None else _state_trail(parent, memo) + (state[5].key,)
    # holding the state keeps its id from being reused by a later tuple
    memo[id(state)] = (state, trail)
    return trail


_state_prune_key = operator.itemgetter(0, 1)


def forced_decode(source: Sequence[str], target: Sequence[str], table: PhraseTable,
                  stats: UnalignedStats, beam_width: int | None = DEFAULT_BEAM_WIDTH,
                  distortion_limit: int | None = None) -> DecodingPath:
    """Best decoding path that generates exactly *target* from *source*.

    Pass ``beam_width=None`` (or ``math.inf``) for exact search. States are
    recombined on (coverage, target position), which loses nothing because
    the remaining target words are fixed. Every hypothesis reaching the last
    stack is completed by deleting its uncovered source words.
    """
    source, target = tuple(source), tuple(target)
    if not source:
        raise ValueError("source sentence is empty")
    beam_width = _check_beam(beam_width)
    # the state graph only points back to parents, so refcounting frees it and
    # the cyclic collector would just rescan millions of live tuples
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        return _forced_search(source, target, table, stats, beam_width, distortion_limit)
    finally:
        if was_enabled:
            gc.enable()


def _forced_search(source, target, table, stats, beam_width, distortion_limit) -> DecodingPath:
    J, I = len(source), len(target)
    exp = _Expander(table, source, target, distortion_limit)
    dl = distortion_limit
    memo: dict = {}

    def loses(old, n_soft, parent, step):
        # exact score tie: fewer soft rules, then smaller rule sequence
        if n_soft != old[1]:
            return n_soft > old[1]
        if old[4] is parent:
            return not step.key < old[5].key
        return not _state_trail(parent, memo) + (step.key,) < _state_trail(old, memo)

    stacks: list[dict] = [{} for _ in range(I + 1)]
    stacks[0][0 if dl is None else (0, 0)] = (0.0, 0, 0, 0, None, None)
    for i in range(I):
        insert = AppliedRule(RuleKind.INSERT_TARGET, insertion_log_score(target[i], stats),
                             token=target[i], target_span=(i, i + 1))
        ins_score = insert.log_score
        opts = [(st.mask, stacks[st.target_span[1]], st.log_score, st,
                 st.source_span[0], st.source_span[1]) for st in exp.forced[i]]
        nxt = stacks[i + 1]
        states = stacks[i].values()
        if beam_width is None or beam_width >= len(states):
            survivors = sorted(states, key=_state_prune_key)
        else:
            survivors = heapq.nsmallest(beam_width, states, key=_state_prune_key)
        for h in survivors:
            cost, n_soft, cov, last = h[0], h[1], h[2], h[3]
            for mask, stack, lp, step, b, e in opts:
                if cov & mask:
                    continue
                new_cov = cov | mask
                if dl is None:
                    key = new_cov
                elif abs(b - last) > dl:
                    continue
                else:
                    key = (new_cov, e)
                new_cost = cost - lp
                old = stack.get(key)
                if old is not None and (new_cost > old[0] or (new_cost == old[0]
                                                              and loses(old, n_soft, h, step))):
                    continue
                stack[key] = (new_cost, n_soft, new_cov, e, h, step)
            key = cov if dl is None else (cov, last)
            new_cost = cost - ins_score
            old = nxt.get(key)
            if old is not None and (new_cost > old[0] or (new_cost == old[0]
                                                          and loses(old, n_soft + 1, h, insert))):
                continue
            nxt[key] = (new_cost, n_soft + 1, cov, last, h, insert)

    deletions = [AppliedRule(RuleKind.FINAL_DELETE, deletion_log_score(f, stats), token=f,
                             source_span=(j, j + 1)) for j, f in enumerate(source)]
    best = best_rank = None
    for h in stacks[I].values():
        score, n_soft = -h[0], h[1]
        tail = []
        for j in range(J):
            if not h[2] >> j & 1:
                score += deletions[j].log_score
                n_soft += 1
                tail.append(deletions[j])
        if best is not None:
            if score < best_rank[0] or (score == best_rank[0] and n_soft > best_rank[1]):
                continue
            if score == best_rank[0] and n_soft == best_rank[1]:
                mine = _state_trail(h, memo) + tuple(d.key for d in tail)
                theirs = _state_trail(best[0], memo) + tuple(d.key for d in best[1])
                if not mine < theirs:
                    continue
        best, best_rank = (h, tail), (score, n_soft)

    h, tail = best
    steps = []
    while h[4] is not None:
        steps.append(h[5])
        h = h[4]
    steps.reverse()
    return DecodingPath(tuple(steps + tail))


def forced_score(source, target, table, stats, beam_width=DEFAULT_BEAM_WIDTH, **kw) -> float:
    return forced_decode(source, target, table, stats, beam_width, **kw).total_log_score


def decode_standard(source: Sequence[str], table: PhraseTable,
                    beam_width: int | None = DEFAULT_BEAM_WIDTH,
                    word_penalty_weight: float = 0.0,
                    distortion_limit: int | None = None) -> tuple[tuple[str, ...], DecodingPath]:
    """Translate *source* with the phrase table alone (no language model).

    Search maximises the summed rule log scores plus
    ``word_penalty_weight * len(output)``. Source words with no single-word
    rule are copied through with score 0, which also guarantees a complete
    translation exists. The returned path's
    ``total_log_score`` excludes the word-penalty term.
    """
    source = tuple(source)
    if not source:
        raise ValueError("source sentence is empty")
    beam_width = _check_beam(beam_width)
    J = len(source)
    exp = _Expander(table, source, None, distortion_limit, pass_through=True)

    stacks: list[dict] = [{} for _ in range(J + 1)]
    root = Hypothesis(0, 0, 0.0)
    stacks[0][_state_key(root, distortion_limit)] = root
    for j in range(J):
        for h in _prune(stacks[j], beam_width):
            for child in exp.children(h, "standard", word_penalty_weight):
                _add(stacks[child.coverage.bit_count()], child, distortion_limit)
    finals = stacks[J].values()
    if not finals:
        # only reachable with a distortion limit too tight to finish
        raise RuntimeError("no complete hypothesis; relax the distortion limit")
    best = min(finals, key=Hypothesis.rank_key)
    path = DecodingPath(tuple(best.steps()))
    return path.target_tokens(), path

