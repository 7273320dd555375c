"""Word-aligned parallel corpora: reading, unaligned-word statistics and
phrase-pair extraction.

Alignments use the Pharaoh ``j-i`` convention (source index, target index,
both 0-based).
"""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .phrase_table import PhraseRule, PhraseTable

logger = logging.getLogger(__name__)

DEFAULT_MAX_PHRASE_LEN = 7
DEFAULT_SMOOTHING_FLOOR = 0.5


class CorpusFormatError(ValueError):
    """Raised for malformed corpus, alignment or statistics files."""


@dataclass(frozen=True)
class SentencePair:
    source: tuple[str, ...]
    target: tuple[str, ...]
    alignment: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        for j, i in self.alignment:
            if not (0 <= j < len(self.source) and 0 <= i < len(self.target)):
                raise ValueError(f"alignment link {j}-{i} out of range "
                                 f"for {len(self.source)}x{len(self.target)} pair")


@dataclass
class UnalignedStats:
    """Per-token counts of unaligned occurrences plus corpus size.

    Counts are kept as plain integers so shards can be merged with ``+``.
    """

    source_unaligned: Counter = field(default_factory=Counter)
    target_unaligned: Counter = field(default_factory=Counter)
    corpus_size: int = 0
    smoothing_floor: float = DEFAULT_SMOOTHING_FLOOR

    def __post_init__(self):
        if self.smoothing_floor <= 0:
            raise ValueError("smoothing_floor must be positive")

    def effective_source(self, token: str) -> float:
        return max(self.source_unaligned.get(token, 0), self.smoothing_floor)

    def effective_target(self, token: str) -> float:
        return max(self.target_unaligned.get(token, 0), self.smoothing_floor)

    def __add__(self, other: "UnalignedStats") -> "UnalignedStats":
        return UnalignedStats(self.source_unaligned + other.source_unaligned,
                              self.target_unaligned + other.target_unaligned,
                              self.corpus_size + other.corpus_size,
                              self.smoothing_floor)

    def __eq__(self, other):
        if not isinstance(other, UnalignedStats):
            return NotImplemented
        # Counter equality ignores explicit zero entries
        return (+self.source_unaligned == +other.source_unaligned
                and +self.target_unaligned == +other.target_unaligned
                and self.corpus_size == other.corpus_size
                and self.smoothing_floor == other.smoothing_floor)


@dataclass(frozen=True)
class PhrasePairCount:
    source_phrase: tuple[str, ...]
    target_phrase: tuple[str, ...]
    joint_count: int
    source_marginal: int
    target_marginal: int


def parse_alignment(text: str, source_len: int, target_len: int,
                    lineno: int | None = None) -> frozenset[tuple[int, int]]:
    where = f"line {lineno}: " if lineno is not None else ""
    links = set()
    for item in text.split():
        j, sep, i = item.partition("-")
        try:
            if not sep:
                raise ValueError
            j, i = int(j), int(i)
        except ValueError:
            raise CorpusFormatError(f"{where}malformed alignment link {item!r}") from None
        if not 0 <= j < source_len:
            raise CorpusFormatError(
                f"{where}source index {j} out of range in link {item!r}")
        if not 0 <= i < target_len:
            raise CorpusFormatError(
                f"{where}target index {i} out of range in link {item!r}")
        links.add((j, i))
    return frozenset(links)


def format_alignment(links: Iterable[tuple[int, int]]) -> str:
    return " ".join(f"{j}-{i}" for j, i in sorted(links))


def _open(path):
    return open(path, encoding="utf-8")


def read_parallel_corpus(source_path, target_path, alignment_path,
                         skipped: Counter | None = None) -> Iterator[SentencePair]:
    """Yield one :class:`SentencePair` per line triple.

    Lines where either side is empty are skipped; pass a ``Counter`` as
    *skipped* to receive the count under the key ``"empty"``.
    """
    n_skipped = 0
    with _open(source_path) as fs, _open(target_path) as ft, _open(alignment_path) as fa:
        for lineno, lines in enumerate(itertools.zip_longest(fs, ft, fa), start=1):
            if None in lines:
                missing = [name for name, line in zip(("source", "target", "alignment"), lines)
                           if line is None]
                raise CorpusFormatError(
                    f"line {lineno}: line count mismatch ({', '.join(missing)} ended early)")
            src, tgt = lines[0].split(), lines[1].split()
            if not src or not tgt:
                n_skipped += 1
                continue
            links = parse_alignment(lines[2], len(src), len(tgt), lineno)
            yield SentencePair(tuple(src), tuple(tgt), links)
    if n_skipped:
        logger.warning("skipped %d pairs with an empty side", n_skipped)
    if skipped is not None:
        skipped["empty"] += n_skipped


def compute_unaligned_stats(pairs: Iterable[SentencePair],
                            smoothing_floor: float = DEFAULT_SMOOTHING_FLOOR) -> UnalignedStats:
    stats = UnalignedStats(smoothing_floor=smoothing_floor)
    for pair in pairs:
        aligned_src = {j for j, _ in pair.alignment}
        aligned_tgt = {i for _, i in pair.alignment}
        for j, tok in enumerate(pair.source):
            if j not in aligned_src:
                stats.source_unaligned[tok] += 1
        for i, tok in enumerate(pair.target):
            if i not in aligned_tgt:
                stats.target_unaligned[tok] += 1
        stats.corpus_size += 1
    if stats.corpus_size == 0:
        raise ValueError("empty corpus")
    return stats


def write_stats(stats: UnalignedStats, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"#corpus_size\t{stats.corpus_size}\n")
        for side, counts in (("src", stats.source_unaligned), ("tgt", stats.target_unaligned)):
            for token in sorted(counts):
                if counts[token]:
                    f.write(f"{side}\t{token}\t{counts[token]}\n")


def read_stats(path, smoothing_floor: float = DEFAULT_SMOOTHING_FLOOR) -> UnalignedStats:
    stats = UnalignedStats(smoothing_floor=smoothing_floor)
    size = None
    with _open(path) as f:
        for lineno, line in enumerate(f, start=1):
            fields = line.rstrip("\n").split("\t")
            if lineno == 1:
                if len(fields) != 2 or fields[0] != "#corpus_size":
                    raise CorpusFormatError(f"line 1: expected '#corpus_size<TAB>N' header")
                try:
                    size = int(fields[1])
                except ValueError:
                    raise CorpusFormatError(f"line 1: bad corpus size {fields[1]!r}") from None
                continue
            if not line.strip():
                continue
            if len(fields) != 3 or fields[0] not in ("src", "tgt"):
                raise CorpusFormatError(f"line {lineno}: expected 'src|tgt<TAB>token<TAB>count'")
            try:
                count = int(fields[2])
            except ValueError:
                raise CorpusFormatError(f"line {lineno}: bad count {fields[2]!r}") from None
            if count < 0:
                raise CorpusFormatError(f"line {lineno}: negative count")
            target = stats.source_unaligned if fields[0] == "src" else stats.target_unaligned
            target[fields[1]] += count
    if size is None:
        raise CorpusFormatError("empty stats file")
    if size < 1:
        raise CorpusFormatError("line 1: corpus size must be >= 1")
    stats.corpus_size = size
    return stats


def extract_phrase_pairs(pair: SentencePair, max_phrase_len: int = DEFAULT_MAX_PHRASE_LEN
                         ) -> set[tuple[tuple[int, int], tuple[int, int]]]:
    """Consistent phrase pairs as inclusive ``((j1, j2), (i1, i2))`` spans.

    A span rectangle is consistent when it contains at least one link and
    no link joins a word inside it to a word outside it. Unaligned words at
    the edges are allowed, as in the usual extraction heuristic.
    """
    if max_phrase_len < 1:
        raise ValueError("max_phrase_len must be >= 1")
    J, I = len(pair.source), len(pair.target)
    tgt_of = [[] for _ in range(J)]
    src_of = [[] for _ in range(I)]
    for j, i in pair.alignment:
        tgt_of[j].append(i)
        src_of[i].append(j)

    result = set()
    for j1 in range(J):
        lo, hi = I, -1
        for j2 in range(j1, min(J, j1 + max_phrase_len)):
            for i in tgt_of[j2]:
                lo, hi = min(lo, i), max(hi, i)
            if hi < 0:
                continue
            if hi - lo + 1 > max_phrase_len:
                break
            # target words in [lo, hi] must not link outside [j1, j2]
            if any(not j1 <= j <= j2 for i in range(lo, hi + 1) for j in src_of[i]):
                continue
            # grow over unaligned target words on both edges
            i1 = lo
            while i1 >= 0 and (i1 == lo or not src_of[i1]):
                i2 = hi
                while i2 < I and (i2 == hi or not src_of[i2]) and i2 - i1 + 1 <= max_phrase_len:
                    result.add(((j1, j2), (i1, i2)))
                    i2 += 1
                i1 -= 1
    return result


def count_phrase_pairs(pairs: Iterable[SentencePair],
                       max_phrase_len: int = DEFAULT_MAX_PHRASE_LEN) -> list[PhrasePairCount]:
    """Aggregate extracted phrase pairs into joint and marginal counts.

    Output is sorted by (source, target) so repeated runs are identical.
    """
    joint: Counter = Counter()
    for pair in pairs:
        for (j1, j2), (i1, i2) in extract_phrase_pairs(pair, max_phrase_len):
            joint[pair.source[j1:j2 + 1], pair.target[i1:i2 + 1]] += 1
    src_marg: Counter = Counter()
    tgt_marg: Counter = Counter()
    for (f, e), c in joint.items():
        src_marg[f] += c
        tgt_marg[e] += c
    return [PhrasePairCount(f, e, c, src_marg[f], tgt_marg[e])
            for (f, e), c in sorted(joint.items())]


def estimate_phrase_table(counts: Iterable[PhrasePairCount]) -> PhraseTable:
    rules = []
    for pc in counts:
        if pc.joint_count <= 0:
            continue
        if pc.source_marginal <= 0 or pc.target_marginal <= 0:
            raise AssertionError(f"zero marginal with joint count {pc.joint_count} "
                                 f"for {pc.source_phrase} ||| {pc.target_phrase}")
        if pc.joint_count > min(pc.source_marginal, pc.target_marginal):
            raise AssertionError("joint count exceeds a marginal")
        rules.append(PhraseRule(pc.source_phrase, pc.target_phrase,
                                direct_prob=pc.joint_count / pc.source_marginal,
                                inverse_prob=pc.joint_count / pc.target_marginal))
    return PhraseTable(rules)

