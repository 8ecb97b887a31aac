"""Command-line interface.

Subcommands: clean, preprocess, align, extract, lm-train, lm-query,
translit-mine, translit, decode, tune, score, run-grid. Exit codes:
0 success, 1 stage/processing error, 2 configuration error.
"""

import argparse
import logging
import sys
from pathlib import Path

from . import align, decoder, metrics, morpho, ngram_lm, phrase, pipeline, translit
from .corpus import (build_vocabulary, clean_monolingual, load_parallel,
                     read_lines, write_lines)
from .errors import ConfigError, SmtError


def _add_clean(sub):
    p = sub.add_parser("clean", help="strip <s>/</s> markers from monolingual text")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_clean)


def cmd_clean(args):
    write_lines(clean_monolingual(read_lines(args.input)), args.output)


def _add_preprocess(sub):
    p = sub.add_parser("preprocess", help="suffix/compound/preorder transforms")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--steps", required=True,
                   help="comma list from suffix,compound,preorder")
    p.add_argument("--suffix-rules")
    p.add_argument("--preorder-rules")
    p.add_argument("--vocab-from", help="corpus for compound frequencies "
                                        "(default: the input itself)")
    p.add_argument("--min-part-len", type=int, default=3)
    p.add_argument("--min-freq", type=int, default=2)
    p.add_argument("--log", help="write the per-token change log here")
    p.set_defaults(func=cmd_preprocess)


def cmd_preprocess(args):
    steps = tuple(s.strip() for s in args.steps.split(",") if s.strip())
    config = morpho.PreprocessConfig(
        steps=steps,
        suffix_rules=(morpho.load_suffix_rules(args.suffix_rules)
                      if args.suffix_rules else None),
        compound_min_part_len=args.min_part_len,
        compound_min_freq=args.min_freq,
        preorder_rules=(morpho.load_preorder_rules(args.preorder_rules)
                        if args.preorder_rules else []),
    )
    sentences = [line.split() for line in read_lines(args.input)]
    vocab = None
    if args.vocab_from:
        vocab = build_vocabulary(line.split() for line in read_lines(args.vocab_from))
    out, changes = morpho.apply_preprocessing(sentences, config, vocab)
    write_lines((" ".join(s) for s in out), args.output)
    if args.log:
        morpho.write_change_log(changes, args.log)
    print(f"{len(changes)} tokens changed over {len(out)} sentences")


def _add_align(sub):
    p = sub.add_parser("align", help="IBM Model 1 + grow-diag-final alignment")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--output", required=True, help="Pharaoh alignment file")
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--heuristic", default="grow-diag-final",
                   choices=align.HEURISTICS)
    p.add_argument("--stemmer-source", help="stem-factor rules for the source side")
    p.add_argument("--stemmer-target", help="stem-factor rules for the target side")
    p.add_argument("--dump-fwd", help="write t(tgt|src) here")
    p.add_argument("--dump-rev", help="write t(src|tgt) here")
    p.set_defaults(func=cmd_align)


def cmd_align(args):
    corpus = load_parallel(args.source, args.target, assume_tokenized=True)
    stem_src = morpho.load_stemmer(args.stemmer_source) if args.stemmer_source else None
    stem_tgt = morpho.load_stemmer(args.stemmer_target) if args.stemmer_target else None
    matrices, fwd, rev = align.align_corpus(
        corpus.token_pairs(), args.iterations, heuristic=args.heuristic,
        stemmer_src=stem_src, stemmer_tgt=stem_tgt)
    align.write_pharaoh(matrices, args.output)
    if args.dump_fwd:
        fwd.write(args.dump_fwd)
    if args.dump_rev:
        rev.write(args.dump_rev)
    print(f"aligned {len(matrices)} sentence pairs "
          f"(final log-likelihood {fwd.log_likelihoods[-1]:.4f})")


def _add_extract(sub):
    p = sub.add_parser("extract", help="phrase extraction and table scoring")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--alignments", required=True, help="Pharaoh file")
    p.add_argument("--fwd-ttable", required=True)
    p.add_argument("--rev-ttable", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--max-len", type=int, default=phrase.DEFAULT_MAX_PHRASE_LEN)
    p.set_defaults(func=cmd_extract)


def cmd_extract(args):
    corpus = load_parallel(args.source, args.target, assume_tokenized=True)
    pairs = corpus.token_pairs()
    matrices = align.read_pharaoh(
        args.alignments, [(len(s), len(t)) for s, t in pairs])
    fwd = align.TranslationTable.read(args.fwd_ttable)
    rev = align.TranslationTable.read(args.rev_ttable)
    occurrences = phrase.extract_corpus(pairs, matrices, args.max_len)
    table = phrase.score_table(occurrences, fwd, rev)
    table.write(args.output)
    print(f"{len(table)} phrase pairs from {len(occurrences)} occurrences")


def _add_lm_train(sub):
    p = sub.add_parser("lm-train", help="modified Kneser-Ney n-gram model")
    p.add_argument("--input", required=True, help="cleaned monolingual text")
    p.add_argument("--order", type=int, default=ngram_lm.DEFAULT_ORDER)
    p.add_argument("--arpa", required=True)
    p.add_argument("--binary", help="also binarize to this path")
    p.set_defaults(func=cmd_lm_train)


def cmd_lm_train(args):
    counts = ngram_lm.count_ngrams(read_lines(args.input), args.order)
    model = ngram_lm.estimate_mkn(counts)
    ngram_lm.write_arpa(model, args.arpa)
    if args.binary:
        ngram_lm.binarize(ngram_lm.read_arpa(args.arpa), args.binary)
    sizes = ", ".join(f"{n + 1}:{len(t)}" for n, t in enumerate(model.tables))
    print(f"order-{args.order} model trained ({sizes})")


def _add_lm_query(sub):
    p = sub.add_parser("lm-query", help="score text / report perplexity")
    p.add_argument("--model", required=True, help="ARPA or binary model")
    p.add_argument("--input", help="file to score (default: stdin)")
    p.set_defaults(func=cmd_lm_query)


def cmd_lm_query(args):
    model = ngram_lm.load_model(args.model)
    lines = read_lines(args.input) if args.input else [l.rstrip("\n") for l in sys.stdin]
    lines = [l for l in lines if l.strip()]
    total = 0.0
    tokens = 0
    for line in lines:
        lp = model.sentence_logprob(line.split())
        total += lp
        tokens += len(line.split()) + 1
        print(f"{lp:.4f}\t{line}")
    if tokens:
        print(f"perplexity: {10.0 ** (-total / tokens):.4f}")


def _add_translit_mine(sub):
    p = sub.add_parser("translit-mine", help="mine transliteration pairs")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--alignments", required=True, help="Pharaoh file")
    p.add_argument("--output", required=True, help="src<TAB>tgt<TAB>posterior")
    p.add_argument("--rounds", type=int, default=translit.DEFAULT_EM_ROUNDS)
    p.add_argument("--threshold", type=float, default=translit.DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_translit_mine)


def cmd_translit_mine(args):
    corpus = load_parallel(args.source, args.target, assume_tokenized=True)
    pairs = corpus.token_pairs()
    matrices = align.read_pharaoh(
        args.alignments, [(len(s), len(t)) for s, t in pairs])
    harvested = translit.harvest_one_to_one(pairs, matrices)
    mined = translit.mine_pairs(harvested, args.rounds, args.threshold)
    mined.write(args.output)
    print(f"{len(mined.accepted())}/{len(mined.pairs)} pairs accepted "
          f"at threshold {args.threshold}")


def _add_translit(sub):
    p = sub.add_parser("translit", help="transliterate words with a mined model")
    p.add_argument("--pairs", required=True, help="mined pairs file")
    p.add_argument("--words", required=True, help="one word per line")
    p.add_argument("--output", required=True, help="word<TAB>cand<TAB>score")
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--threshold", type=float, default=translit.DEFAULT_THRESHOLD)
    p.set_defaults(func=cmd_translit)


def cmd_translit(args):
    mined = translit.MinedPairSet.read(args.pairs, args.threshold)
    model = translit.train_char_model(mined.accepted())
    rows = []
    for word in read_lines(args.words):
        word = word.strip()
        if word:
            rows.append((word, translit.transliterate(word, model, args.n)))
    translit.write_candidates(rows, args.output)
    print(f"transliterated {len(rows)} words")


def _add_decode(sub):
    p = sub.add_parser("decode", help="beam-search translation")
    p.add_argument("--input", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--weights")
    p.add_argument("--output", help="1-best output file")
    p.add_argument("--nbest", help="n-best list file")
    p.add_argument("--nbest-size", type=int, default=100)
    p.add_argument("--beam", type=int, default=100)
    p.add_argument("--distortion-limit", type=int, default=6)
    p.set_defaults(func=cmd_decode)


def cmd_decode(args):
    table = phrase.PhraseTable.read(args.table)
    lm = ngram_lm.load_model(args.lm)
    weights = decoder.read_weights(args.weights) if args.weights \
        else dict(decoder.DEFAULT_WEIGHTS)
    config = decoder.DecoderConfig(weights=weights, beam_size=args.beam,
                                   distortion_limit=args.distortion_limit,
                                   nbest_size=args.nbest_size)
    nbests = []
    outputs = []
    for sent_id, line in enumerate(read_lines(args.input)):
        nbest = decoder.decode(line.split(), table, lm, config, sent_id=sent_id)
        nbests.append(nbest)
        best = nbest.best()
        outputs.append(" ".join(best.tokens) if best else "")
    if args.output:
        write_lines(outputs, args.output)
    if args.nbest:
        decoder.write_nbest(nbests, args.nbest)
    if not args.output and not args.nbest:
        for line in outputs:
            print(line)


def _add_tune(sub):
    p = sub.add_parser("tune", help="line-search weight tuning on a dev set")
    p.add_argument("--dev-source", required=True)
    p.add_argument("--dev-target", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--output", required=True, help="weights file")
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--beam", type=int, default=20)
    p.set_defaults(func=cmd_tune)


def cmd_tune(args):
    table = phrase.PhraseTable.read(args.table)
    lm = ngram_lm.load_model(args.lm)
    dev = load_parallel(args.dev_source, args.dev_target, assume_tokenized=True)
    config = decoder.DecoderConfig(beam_size=args.beam)
    tuned = decoder.tune_weights(
        [list(p.source) for p in dev.pairs],
        [list(p.target) for p in dev.pairs],
        table, lm, config, rounds=args.rounds)
    decoder.write_weights(tuned.weights, args.output)
    print(f"weights written to {args.output}")


def _add_score(sub):
    p = sub.add_parser("score", help="BLEU/NIST/TER evaluation")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--system", default="")
    p.add_argument("--pair", default="")
    p.add_argument("--output", help="append a TSV row here instead of printing")
    p.set_defaults(func=cmd_score)


def cmd_score(args):
    report = metrics.evaluate_system(args.hyp, args.ref, args.system, args.pair)
    if args.output:
        metrics.write_report([report], args.output)
    print(metrics.format_report([report]))


def _add_run_grid(sub):
    p = sub.add_parser("run-grid", help="train/translate/evaluate experiment grid")
    p.add_argument("--config", nargs="+", required=True,
                   help="experiment config files")
    p.add_argument("--workdir", required=True)
    p.set_defaults(func=cmd_run_grid)


def cmd_run_grid(args):
    configs = [pipeline.load_experiment(path) for path in args.config]
    reports, failures = pipeline.run_grid(configs, args.workdir)
    print(metrics.format_report(reports))
    for config, message in failures:
        print(f"FAILED {config.pair}/{config.system}: {message}", file=sys.stderr)
    if failures:
        return 1
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="smtkit",
        description="phrase-based statistical machine translation toolkit")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log stage progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for adder in (_add_clean, _add_preprocess, _add_align, _add_extract,
                  _add_lm_train, _add_lm_query, _add_translit_mine,
                  _add_translit, _add_decode, _add_tune, _add_score,
                  _add_run_grid):
        adder(sub)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
        return int(result) if result else 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SmtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
