"""Translation rule storage with source- and target-side indices.

Rule scores are the product of the direct and inverse phrase translation
probabilities, held in the log domain (natural base).
"""

from __future__ import annotations

import gzip
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

NATIVE_HEADER = "# source\ttarget\tdirect_prob\tinverse_prob"


class TableFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PhraseRule:
    source_phrase: tuple[str, ...]
    target_phrase: tuple[str, ...]
    direct_prob: float   # p(e|f)
    inverse_prob: float  # p(f|e)
    log_score: float = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "source_phrase", tuple(self.source_phrase))
        object.__setattr__(self, "target_phrase", tuple(self.target_phrase))
        if not self.source_phrase or not self.target_phrase:
            raise ValueError("phrases must be non-empty")
        for name in ("direct_prob", "inverse_prob"):
            p = getattr(self, name)
            if not 0.0 < p <= 1.0:
                raise ValueError(f"{name}={p!r} outside (0, 1]")
        object.__setattr__(self, "log_score",
                           math.log(self.direct_prob) + math.log(self.inverse_prob))

    @property
    def score(self) -> float:
        return self.direct_prob * self.inverse_prob

    def __str__(self):
        return f"{' '.join(self.source_phrase)} ||| {' '.join(self.target_phrase)}"


class PhraseTable:
    """Immutable collection of :class:`PhraseRule` objects.

    Duplicate (source, target) pairs keep the rule with the highest
    ``log_score``; on an exact tie the first one seen wins.
    """

    def __init__(self, rules: Iterable[PhraseRule] = ()):
        best: dict[tuple, PhraseRule] = {}
        for r in rules:
            key = (r.source_phrase, r.target_phrase)
            old = best.get(key)
            if old is None or r.log_score > old.log_score:
                best[key] = r
        self._rules = tuple(best.values())
        by_source = defaultdict(list)
        by_target = defaultdict(list)
        for r in self._rules:
            by_source[r.source_phrase].append(r)
            by_target[r.target_phrase].append(r)
        self._by_source = {k: tuple(v) for k, v in by_source.items()}
        self._by_target = {k: tuple(v) for k, v in by_target.items()}
        self.max_source_len = max((len(r.source_phrase) for r in self._rules), default=0)
        self.max_target_len = max((len(r.target_phrase) for r in self._rules), default=0)

    @property
    def rules(self) -> tuple[PhraseRule, ...]:
        return self._rules

    def __len__(self):
        return len(self._rules)

    def __iter__(self):
        return iter(self._rules)

    def __eq__(self, other):
        if not isinstance(other, PhraseTable):
            return NotImplemented
        return set(self._rules) == set(other._rules)

    def __repr__(self):
        return f"PhraseTable({len(self)} rules)"

    def by_source(self, phrase: Sequence[str]) -> tuple[PhraseRule, ...]:
        return self._by_source.get(tuple(phrase), ())

    def by_target(self, phrase: Sequence[str]) -> tuple[PhraseRule, ...]:
        return self._by_target.get(tuple(phrase), ())

    def filter_to(self, source: Sequence[str], target: Sequence[str] | None = None) -> "PhraseTable":
        """Sub-table of rules whose phrases occur contiguously in the given
        sentences. Decoding scores are unaffected."""
        src_grams = _ngrams(source, self.max_source_len)
        tgt_grams = None if target is None else _ngrams(target, self.max_target_len)
        keep = [r for r in self._rules
                if r.source_phrase in src_grams
                and (tgt_grams is None or r.target_phrase in tgt_grams)]
        return PhraseTable(keep)


def _ngrams(tokens, max_len):
    tokens = tuple(tokens)
    return {tokens[a:b] for a in range(len(tokens))
            for b in range(a + 1, min(len(tokens), a + max_len) + 1)}


def lookup_target_matches(table: PhraseTable, target_tokens: Sequence[str],
                          start_index: int) -> list[PhraseRule]:
    """Rules whose target phrase equals ``target_tokens[start_index:start_index+k]``
    for some k, shortest k first."""
    if not 0 <= start_index < len(target_tokens):
        raise IndexError(f"start_index {start_index} outside target of length {len(target_tokens)}")
    target_tokens = tuple(target_tokens)
    out = []
    stop = min(len(target_tokens), start_index + table.max_target_len)
    for end in range(start_index + 1, stop + 1):
        out.extend(table.by_target(target_tokens[start_index:end]))
    return out


def _open_text(path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def read_moses_table(path, column_layout: tuple[int, int] = (0, 2)) -> PhraseTable:
    """Read a Moses ``f ||| e ||| scores ...`` phrase table.

    *column_layout* is ``(inverse_index, direct_index)`` into the score
    field; the default matches the usual four-score layout
    ``p(f|e) lex(f|e) p(e|f) lex(e|f)``. Remaining scores and any trailing
    fields (alignments, counts) are ignored.
    """
    inv_idx, dir_idx = column_layout
    rules = []
    with _open_text(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("|||")
            if len(parts) < 3:
                raise TableFormatError(f"line {lineno}: expected 'f ||| e ||| scores'")
            src, tgt = parts[0].split(), parts[1].split()
            try:
                scores = [float(x) for x in parts[2].split()]
            except ValueError:
                raise TableFormatError(f"line {lineno}: non-numeric score in {parts[2].strip()!r}") from None
            if max(inv_idx, dir_idx) >= len(scores):
                raise TableFormatError(
                    f"line {lineno}: {len(scores)} scores, layout needs index {max(inv_idx, dir_idx)}")
            try:
                rules.append(PhraseRule(src, tgt, direct_prob=scores[dir_idx],
                                        inverse_prob=scores[inv_idx]))
            except ValueError as e:
                raise TableFormatError(f"line {lineno}: {e}") from None
    return PhraseTable(rules)


def write_native_table(table: PhraseTable, path) -> None:
    rows = sorted(table.rules, key=lambda r: (r.source_phrase, r.target_phrase))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(NATIVE_HEADER + "\n")
        for r in rows:
            f.write(f"{' '.join(r.source_phrase)}\t{' '.join(r.target_phrase)}\t"
                    f"{r.direct_prob!r}\t{r.inverse_prob!r}\n")


def read_native_table(path) -> PhraseTable:
    rules = []
    with _open_text(path) as f:
        for lineno, line in enumerate(f, start=1):
            if line.startswith("#") or not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 4:
                raise TableFormatError(f"line {lineno}: expected 4 tab-separated fields, got {len(fields)}")
            try:
                rules.append(PhraseRule(fields[0].split(), fields[1].split(),
                                        direct_prob=float(fields[2]),
                                        inverse_prob=float(fields[3])))
            except ValueError as e:
                raise TableFormatError(f"line {lineno}: {e}") from None
    return PhraseTable(rules)
