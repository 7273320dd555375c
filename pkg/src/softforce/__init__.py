"""Soft forced decoding with a phrase table, and n-best reranking with the
resulting adequacy score."""

from .corpus import (
    PhrasePairCount,
    SentencePair,
    UnalignedStats,
    compute_unaligned_stats,
    count_phrase_pairs,
    estimate_phrase_table,
    extract_phrase_pairs,
    read_parallel_corpus,
    read_stats,
    write_stats,
)
from .decoder import (
    AppliedRule,
    DecodingPath,
    Hypothesis,
    RuleKind,
    decode_standard,
    deletion_log_score,
    expand,
    forced_decode,
    insertion_log_score,
)
from .phrase_table import (
    PhraseRule,
    PhraseTable,
    lookup_target_matches,
    read_moses_table,
    read_native_table,
    write_native_table,
)

__version__ = "0.1.0"
