"""Command-line entry point: ``softforce <subcommand> [options]``.

Errors are reported as one tab-separated line on stderr,
``error<TAB><kind><TAB><message>``, with a distinct exit status per kind.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import bleu as bleu_mod
from . import corpus, decoder, phrase_table, rerank, sampler

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FORMAT = 4

FORMATS = """\
file formats:
  corpus      one sentence per line, whitespace-tokenized UTF-8
  alignment   per line: "j-i j-i ..." (0-based source-target index pairs)
  table       "# header" then per line: src phrase<TAB>tgt phrase<TAB>p(e|f)<TAB>p(f|e)
  moses table per line: f ||| e ||| s0 s1 s2 s3 [||| ...]  (--layout INV,DIR picks p(f|e), p(e|f))
  stats       "#corpus_size<TAB>N" then per line: src|tgt<TAB>token<TAB>unaligned count
  n-best      JSON lines: {"id": int, "src": str, "hyp": str, "nmt_logprob": float}
  reranked    n-best JSON lines plus "forced_logscore", "word_penalty", "combined", "rank"
  weights     one line: w1<TAB>w2<TAB>wWP
  trace       per rule: kind<TAB>source tokens<TAB>target tokens<TAB>log score; blank line between paths
  config      --config FILE, lines "key=value" with option names (dashes or underscores); flags win
"""


class CliError(Exception):
    def __init__(self, kind, message, status):
        super().__init__(message)
        self.kind, self.status = kind, status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message, EXIT_USAGE)


def _add_table_opts(p, required=True):
    p.add_argument("--table", help="native TSV phrase table")
    p.add_argument("--moses-table", help="Moses phrase table (may be .gz)")
    p.add_argument("--layout", default="0,2", help="Moses score columns INV,DIR (default 0,2)")
    p.add_argument("--stats", help="unaligned-word statistics TSV")
    p.add_argument("--smoothing-floor", type=float, default=corpus.DEFAULT_SMOOTHING_FLOOR)
    p.add_argument("--beam-width", type=int, default=decoder.DEFAULT_BEAM_WIDTH)
    p.add_argument("--distortion-limit", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="softforce", description="Soft forced decoding and n-best reranking.",
                     epilog=FORMATS, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="key=value defaults file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("extract", help="word-aligned corpus -> phrase table + stats")
    p.add_argument("--src")
    p.add_argument("--tgt")
    p.add_argument("--align")
    p.add_argument("--max-phrase-len", type=int, default=corpus.DEFAULT_MAX_PHRASE_LEN)
    p.add_argument("--table-out")
    p.add_argument("--stats-out")

    p = sub.add_parser("score", help="forced-decoding scores for candidates")
    _add_table_opts(p)
    p.add_argument("--src", help="source sentences, one per line")
    p.add_argument("--hyp", help="candidates, line-parallel to --src")
    p.add_argument("--nbest", help="n-best JSON lines instead of --src/--hyp")
    p.add_argument("--trace", help="write rule breakdowns here")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", "-o")

    p = sub.add_parser("rerank", help="rerank n-best lists")
    _add_table_opts(p)
    p.add_argument("--nbest")
    p.add_argument("--weights", help="weights TSV file")
    p.add_argument("--w1", type=float)
    p.add_argument("--w2", type=float)
    p.add_argument("--wwp", type=float)
    p.add_argument("--on-error", choices=("abort", "skip"), default="abort")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", "-o")

    p = sub.add_parser("tune", help="grid-search reranking weights on a dev set")
    _add_table_opts(p)
    p.add_argument("--nbest")
    p.add_argument("--refs", help="references, one per n-best list in order")
    p.add_argument("--grid-w2", default="0:2:0.1", help="START:STOP:STEP (inclusive)")
    p.add_argument("--grid-wwp", default="-1:1:0.1", help="START:STOP:STEP (inclusive)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", "-o")

    p = sub.add_parser("sample", help="sample candidate lists from a scorer")
    p.add_argument("--src")
    p.add_argument("--lm-corpus", help="target text for the built-in bigram scorer")
    p.add_argument("--scorer-cmd", help="external scorer command (line protocol)")
    p.add_argument("--beam-best", help="1-best outputs, line-parallel to --src (default: greedy)")
    p.add_argument("--num-samples", type=int, default=sampler.DEFAULT_NUM_SAMPLES)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-len", type=int, default=sampler.DEFAULT_MAX_LEN)
    p.add_argument("--method", choices=("top2", "ancestral"), default="top2")
    p.add_argument("--dedupe", action="store_true")
    p.add_argument("--output", "-o")

    p = sub.add_parser("decode", help="standard phrase-based decoding")
    _add_table_opts(p)
    p.add_argument("--src")
    p.add_argument("--word-penalty", type=float, default=0.0)
    p.add_argument("--output", "-o")

    p = sub.add_parser("bleu", help="corpus BLEU-4")
    p.add_argument("hyp")
    p.add_argument("ref")
    return parser


def read_config(path) -> dict:
    cfg = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CliError("format", f"{path}:{lineno}: expected key=value", EXIT_FORMAT)
            cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _apply_config(parser, argv, cfg):
    """Re-parse with config values as defaults, so command-line flags win."""
    known = set()
    for action in parser._subparsers._group_actions:
        for name, sp in action.choices.items():
            dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in cfg.items() if k in dests})
            known |= dests
    unknown = set(cfg) - known
    if unknown:
        raise CliError("usage", f"unknown config keys: {', '.join(sorted(unknown))}", EXIT_USAGE)
    return parser.parse_args(argv)


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) in (None, "")]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise CliError("usage", f"{args.command}: missing {flags}", EXIT_USAGE)


def _check_ranges(args):
    if getattr(args, "beam_width", 1) < 1:
        raise CliError("usage", "--beam-width must be >= 1", EXIT_USAGE)
    if getattr(args, "smoothing_floor", 1.0) <= 0:
        raise CliError("usage", "--smoothing-floor must be > 0", EXIT_USAGE)
    if getattr(args, "num_samples", 0) < 0:
        raise CliError("usage", "--num-samples must be >= 0", EXIT_USAGE)
    if getattr(args, "max_phrase_len", 1) < 1:
        raise CliError("usage", "--max-phrase-len must be >= 1", EXIT_USAGE)


def _load_table(args):
    if args.table:
        return phrase_table.read_native_table(args.table)
    if args.moses_table:
        try:
            layout = tuple(int(x) for x in args.layout.split(","))
            if len(layout) != 2:
                raise ValueError
        except ValueError:
            raise CliError("usage", f"--layout must be INV,DIR, got {args.layout!r}", EXIT_USAGE) from None
        return phrase_table.read_moses_table(args.moses_table, layout)
    raise CliError("usage", f"{args.command}: missing --table or --moses-table", EXIT_USAGE)


def _load_model(args):
    _require(args, "stats")
    return _load_table(args), corpus.read_stats(args.stats, args.smoothing_floor)


def _read_lines(path):
    with open(path, encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f]


class _Out:
    def __init__(self, path):
        self.path = path

    def __enter__(self):
        self.f = open(self.path, "w", encoding="utf-8", newline="\n") if self.path else sys.stdout
        return self.f

    def __exit__(self, *exc):
        if self.path:
            self.f.close()


def _grid_axis(text):
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise CliError("usage", f"bad grid {text!r}, want START:STOP:STEP", EXIT_USAGE) from None
    if step <= 0:
        raise CliError("usage", "grid step must be > 0", EXIT_USAGE)
    n = int(round((stop - start) / step))
    return [round(start + k * step, 10) for k in range(n + 1)]


def cmd_extract(args):
    _require(args, "src", "tgt", "align", "table_out", "stats_out")
    pairs = list(corpus.read_parallel_corpus(args.src, args.tgt, args.align))
    stats = corpus.compute_unaligned_stats(pairs)
    table = corpus.estimate_phrase_table(corpus.count_phrase_pairs(pairs, args.max_phrase_len))
    phrase_table.write_native_table(table, args.table_out)
    corpus.write_stats(stats, args.stats_out)
    logging.info("extracted %d rules from %d pairs", len(table), len(pairs))


def cmd_score(args):
    table, stats = _load_model(args)
    if args.nbest:
        lists = rerank.read_nbest_jsonl(args.nbest)
        cands = [c for nb in lists for c in nb]
        pairs = [(c.source, c.tokens) for c in cands]
    else:
        _require(args, "src", "hyp")
        srcs, hyps = _read_lines(args.src), _read_lines(args.hyp)
        if len(srcs) != len(hyps):
            raise CliError("format", f"--src has {len(srcs)} lines, --hyp has {len(hyps)}", EXIT_FORMAT)
        pairs = [(s.split(), h.split()) for s, h in zip(srcs, hyps)]
    for k, (src, _) in enumerate(pairs, start=1):
        if not src:
            raise CliError("format", f"candidate {k}: empty source sentence", EXIT_FORMAT)
    if args.trace:
        paths = [decoder.forced_decode(f, e, table, stats, args.beam_width, args.distortion_limit)
                 for f, e in pairs]
        scores = [p.total_log_score for p in paths]
        with open(args.trace, "w", encoding="utf-8", newline="\n") as f:
            for p in paths:
                f.write(p.trace() + "\n\n")
    elif args.distortion_limit is None:
        scores = rerank.forced_scores(pairs, table, stats, args.beam_width, args.jobs)
    else:
        scores = [decoder.forced_decode(f, e, table, stats, args.beam_width,
                                        args.distortion_limit).total_log_score for f, e in pairs]
    with _Out(args.output) as out:
        if args.nbest:
            for c, s in zip(cands, scores):
                c.features[rerank.FORCED] = s
                c.features[rerank.WORD_PENALTY] = float(len(c.tokens))
                out.write(rerank.candidate_to_json(c) + "\n")
        else:
            for s in scores:
                out.write(f"{s:.6f}\n")


def _weights(args):
    if args.weights:
        if any(v is not None for v in (args.w1, args.w2, args.wwp)):
            raise CliError("usage", "give --weights or --w1/--w2/--wwp, not both", EXIT_USAGE)
        return rerank.read_weights(args.weights)
    w = (1.0 if args.w1 is None else args.w1, args.w2 or 0.0, args.wwp or 0.0)
    try:
        return rerank.RerankWeights(*w)
    except ValueError as e:
        raise CliError("usage", str(e), EXIT_USAGE) from None


def _scored_lists(args):
    lists = rerank.read_nbest_jsonl(args.nbest)
    if all(rerank.FORCED in c.features for nb in lists for c in nb):
        return lists
    table, stats = _load_model(args)
    on_error = getattr(args, "on_error", "abort")
    return [rerank.score_candidates(nb, table, stats, args.beam_width, on_error=on_error,
                                    jobs=args.jobs) for nb in lists]


def cmd_rerank(args):
    _require(args, "nbest")
    w = _weights(args)
    lists = _scored_lists(args)
    ranked = [rerank.rerank_nbest(nb, None, None, w) for nb in lists]
    with _Out(args.output) as out:
        for nb in ranked:
            for k, c in enumerate(nb, start=1):
                out.write(rerank.candidate_to_json(c, k) + "\n")


def cmd_tune(args):
    _require(args, "nbest", "refs")
    lists = _scored_lists(args)
    refs = _read_lines(args.refs)
    if len(refs) != len(lists):
        raise CliError("format", f"{len(lists)} n-best lists but {len(refs)} references", EXIT_FORMAT)
    grid = [(a, b) for a in _grid_axis(args.grid_w2) for b in _grid_axis(args.grid_wwp)]
    w = rerank.tune_weights(lists, [r.split() for r in refs], grid)
    if args.output:
        rerank.write_weights(w, args.output)
    else:
        sys.stdout.write(f"{w.w1!r}\t{w.w2!r}\t{w.w_wp!r}\n")


def cmd_sample(args):
    _require(args, "src", "seed")
    if bool(args.lm_corpus) == bool(args.scorer_cmd):
        raise CliError("usage", "sample: give exactly one of --lm-corpus, --scorer-cmd", EXIT_USAGE)
    sources = [s.split() for s in _read_lines(args.src)]
    beam = [b.split() for b in _read_lines(args.beam_best)] if args.beam_best else None
    if beam is not None and len(beam) != len(sources):
        raise CliError("format", "--beam-best and --src differ in line count", EXIT_FORMAT)
    if args.lm_corpus:
        scorer = sampler.BigramScorer(_read_lines(args.lm_corpus))
    else:
        scorer = sampler.SubprocessScorer(args.scorer_cmd, shell=True)
    rng = np.random.default_rng(args.seed)
    try:
        with _Out(args.output) as out:
            for sid, (src, stream) in enumerate(zip(sources, rng.spawn(len(sources)))):
                best = beam[sid] if beam else sampler.greedy_translation(scorer, src, args.max_len)
                cands = sampler.build_candidate_list(scorer, src, best, args.num_samples, stream,
                                                     sentence_id=sid, max_len=args.max_len,
                                                     method=args.method, dedupe=args.dedupe)
                for c in cands:
                    out.write(rerank.candidate_to_json(c) + "\n")
    finally:
        if isinstance(scorer, sampler.SubprocessScorer):
            scorer.close()


def cmd_decode(args):
    _require(args, "src")
    table = _load_table(args)
    with _Out(args.output) as out:
        for k, line in enumerate(_read_lines(args.src), start=1):
            if not line.split():
                raise CliError("format", f"line {k}: empty source sentence", EXIT_FORMAT)
            tokens, _ = decoder.decode_standard(line.split(), table, args.beam_width,
                                                args.word_penalty, args.distortion_limit)
            out.write(" ".join(tokens) + "\n")


def cmd_bleu(args):
    hyps, refs = _read_lines(args.hyp), _read_lines(args.ref)
    if len(hyps) != len(refs):
        raise CliError("format", f"{len(hyps)} hypotheses but {len(refs)} references", EXIT_FORMAT)
    print(f"{bleu_mod.corpus_bleu(hyps, refs):.4f}")


COMMANDS = {
    "extract": cmd_extract, "score": cmd_score, "rerank": cmd_rerank, "tune": cmd_tune,
    "sample": cmd_sample, "decode": cmd_decode, "bleu": cmd_bleu,
}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        args = _apply_config(build_parser(), argv, read_config(args.config))
    if args.command is None:
        raise CliError("usage", "no command given (see --help)", EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _check_ranges(args)
    COMMANDS[args.command](args)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run(argv)
    except CliError as e:
        err = (e.kind, str(e), e.status)
    except OSError as e:
        err = ("io", f"{e.filename or ''}: {e.strerror or e}".strip(": "), EXIT_IO)
    except (ValueError, KeyError, json.JSONDecodeError) as e:
        err = ("format", str(e), EXIT_FORMAT)
    msg = " ".join(err[1].split())
    sys.stderr.write(f"error\t{err[0]}\t{msg}\n")
    return err[2]


if __name__ == "__main__":
    sys.exit(main())
