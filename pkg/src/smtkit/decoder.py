"""Stack-based beam-search phrase decoder with n-best output and tuning.

Hypotheses are organized into stacks by the number of covered source
words, recombined on (coverage, LM state, last covered position), and
histogram-pruned to the beam size. Scores are weighted sums over the
feature set below; LM log10 values convert to natural log at this
boundary so every feature lives on the same scale.

Features: four phrase-table scores, the language model, a word penalty
(minus the output length), distance-based distortion (minus the jump
size), and a transliteration score used by OOV expansion.

Source positions with no single-word table entry receive a passthrough
option (plus transliteration candidates when a handler is supplied).
These synthetic options carry a fixed floor on the forward phrase
feature so genuine table entries always dominate them; positions
translated through one are recorded as OOV slots on the candidate.

n-best file format, one candidate per line:
    sent_id ||| tokens ||| feature:name value ... ||| total
Weights files are ``name = value`` lines.
"""

import logging
import math
from dataclasses import dataclass, field, replace

from .errors import ParseError, SmtError
from .metrics import bleu
from .ngram_lm import EOS

log = logging.getLogger(__name__)

LN10 = math.log(10.0)

FEATURES = ("phrase_fwd", "phrase_rev", "lex_fwd", "lex_rev",
            "lm", "word_penalty", "distortion", "translit")

DEFAULT_WEIGHTS = {name: 1.0 for name in FEATURES}

PASSTHROUGH = "passthrough"
OOV_PENALTY = math.log(1e-9)


class DecoderError(SmtError):
    pass


@dataclass
class DecoderConfig:
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    beam_size: int = 100          # None disables pruning
    distortion_limit: int = 6     # None disables the constraint
    nbest_size: int = 100
    translit_n: int = 5           # candidates requested from an OOV handler

    def __post_init__(self):
        if self.beam_size is not None and self.beam_size < 1:
            raise DecoderError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.distortion_limit is not None and self.distortion_limit < 0:
            raise DecoderError(
                f"distortion_limit must be >= 0, got {self.distortion_limit}")
        missing = [f for f in FEATURES if f not in self.weights]
        if missing:
            raise DecoderError(f"weights missing features {missing}")


@dataclass(frozen=True)
class Candidate:
    """One n-best entry: output tokens, per-feature breakdown, total
    weighted score, and which output positions came from OOV spans."""
    tokens: tuple
    features: dict
    total: float
    oov_slots: tuple = ()
    sent_id: int = 0


class NBestList:
    """Candidates sorted by total descending, unique output strings."""

    def __init__(self, candidates=()):
        seen = set()
        items = []
        for c in sorted(candidates, key=lambda c: (-c.total, c.tokens)):
            if c.tokens in seen:
                continue
            seen.add(c.tokens)
            items.append(c)
        self.candidates = items

    @classmethod
    def presorted(cls, candidates):
        out = cls.__new__(cls)
        out.candidates = list(candidates)
        return out

    def __len__(self):
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def __getitem__(self, idx):
        return self.candidates[idx]

    def best(self):
        return self.candidates[0] if self.candidates else None


def total_score(features, weights):
    """Weighted feature sum, accumulated in a fixed feature order."""
    total = 0.0
    for name in FEATURES:
        if name in features:
            total += weights[name] * features[name]
    for name in sorted(features):
        if name not in FEATURES:
            total += weights[name] * features[name]
    return total


@dataclass
class _Hyp:
    coverage: int
    last_end: int
    lm_state: tuple
    tokens: tuple
    features: tuple  # aligned with FEATURES
    score: float
    future: float
    oov_slots: tuple


def span_options(source, table, oov_handler=PASSTHROUGH, translit_n=5):
    """Translation options per (start, end) span.

    Single-word spans lacking a table entry get a passthrough option
    (and, when `oov_handler` is callable, its word -> [(candidate,
    logscore)] suggestions), every synthetic option carrying the OOV
    floor on phrase_fwd. The option tuple is (target tokens, four phrase
    features, is_oov, translit score).
    """
    n = len(source)
    options = {}
    for i in range(n):
        for j in range(i + 1, n + 1):
            opts = table.options(source[i:j])
            if opts:
                options[(i, j)] = [(tgt, feats, False, 0.0) for tgt, feats in opts]
    floor = (OOV_PENALTY, 0.0, 0.0, 0.0)
    for i in range(n):
        if (i, i + 1) not in options:
            word = source[i]
            opts = [((word,), floor, True, 0.0)]
            if callable(oov_handler):
                for cand, score in oov_handler(word, translit_n):
                    opts.append(((cand,), floor, True, score))
            options[(i, i + 1)] = opts
    return options


def future_costs(source, options, lm, weights):
    """Per-span best-option estimate combined over split points by DP.

    The LM part is a context-free per-word estimate (unigram logprob), so
    the result is a heuristic, not an admissible bound.
    """
    n = len(source)
    w = {name: weights[name] for name in FEATURES}
    best = {}
    for (i, j), opts in options.items():
        span_best = None
        for tgt, feats, _, translit in opts:
            est = (w["phrase_fwd"] * feats[0] + w["phrase_rev"] * feats[1]
                   + w["lex_fwd"] * feats[2] + w["lex_rev"] * feats[3]
                   + w["word_penalty"] * -len(tgt) + w["translit"] * translit)
            if lm is not None:
                for tok in tgt:
                    est += w["lm"] * lm.logprob((), tok) * LN10
            if span_best is None or est > span_best:
                span_best = est
        best[(i, j)] = span_best
    fc = [[-math.inf] * (n + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        fc[i][i] = 0.0
    for length in range(1, n + 1):
        for i in range(0, n - length + 1):
            j = i + length
            cand = best.get((i, j), -math.inf)
            for m in range(i + 1, j):
                split = fc[i][m] + fc[m][j]
                if split > cand:
                    cand = split
            fc[i][j] = cand
    return fc


def _hyp_future(coverage, n, fc):
    total = 0.0
    i = 0
    while i < n:
        if coverage >> i & 1:
            i += 1
            continue
        j = i
        while j < n and not (coverage >> j & 1):
            j += 1
        total += fc[i][j]
        i = j
    return total


def decode(source, table, lm, config=None, oov_handler=PASSTHROUGH, sent_id=0):
    """Translate one tokenized source sentence into an NBestList.

    Empty input yields a single empty translation. The best returned
    candidate covers every source word; ties anywhere resolve toward the
    lexicographically smaller output for reproducible runs.
    """
    config = config or DecoderConfig()
    source = tuple(source)
    weights = config.weights
    if not source:
        feats = dict.fromkeys(FEATURES, 0.0)
        feats["lm"] = lm.sentence_logprob(()) * LN10 if lm is not None else 0.0
        return NBestList([Candidate((), feats, total_score(feats, weights),
                                    (), sent_id)])
    n = len(source)
    options = span_options(source, table, oov_handler, config.translit_n)
    fc = future_costs(source, options, lm, weights)
    feat_index = {name: k for k, name in enumerate(FEATURES)}
    wvec = tuple(weights[name] for name in FEATURES)
    begin = lm.begin_state() if lm is not None else ()
    init = _Hyp(0, 0, begin, (), (0.0,) * len(FEATURES), 0.0,
                _hyp_future(0, n, fc), ())
    stacks = [dict() for _ in range(n + 1)]
    stacks[0][(0, begin, 0)] = init
    finals = []
    full = (1 << n) - 1
    for covered in range(n):
        hyps = sorted(stacks[covered].values(),
                      key=lambda h: (-(h.score + h.future), h.tokens))
        if config.beam_size is not None:
            hyps = hyps[:config.beam_size]
        for hyp in hyps:
            for (i, j), opts in options.items():
                span_mask = ((1 << (j - i)) - 1) << i
                if hyp.coverage & span_mask:
                    continue
                jump = abs(i - hyp.last_end)
                if (config.distortion_limit is not None
                        and jump > config.distortion_limit):
                    continue
                new_cov = hyp.coverage | span_mask
                done = new_cov == full
                for tgt, phrase_feats, is_oov, translit in opts:
                    feats = list(hyp.features)
                    for k in range(4):
                        feats[k] += phrase_feats[k]
                    state = hyp.lm_state
                    lm_gain = 0.0
                    if lm is not None:
                        for tok in tgt:
                            lp, state = lm.score(state, tok)
                            lm_gain += lp
                        if done:
                            lp, state = lm.score(state, EOS)
                            lm_gain += lp
                    feats[feat_index["lm"]] += lm_gain * LN10
                    feats[feat_index["word_penalty"]] -= len(tgt)
                    feats[feat_index["distortion"]] -= jump
                    feats[feat_index["translit"]] += translit
                    slots = hyp.oov_slots
                    if is_oov:
                        slots = slots + (len(hyp.tokens),)
                    score = 0.0
                    for w, f in zip(wvec, feats):
                        score += w * f
                    new = _Hyp(new_cov, j, state, hyp.tokens + tgt,
                               tuple(feats), score,
                               0.0 if done else _hyp_future(new_cov, n, fc),
                               slots)
                    if done:
                        finals.append(new)
                        continue
                    key = (new_cov, new.lm_state, j)
                    bucket = stacks[new_cov.bit_count()]
                    old = bucket.get(key)
                    if (old is None or new.score > old.score
                            or (new.score == old.score and new.tokens < old.tokens)):
                        bucket[key] = new
    if not finals:
        raise DecoderError("no complete hypothesis (unreachable: passthrough "
                           "guarantees coverage)")
    finals.sort(key=lambda h: (-h.score, h.tokens))
    candidates = [
        Candidate(h.tokens, dict(zip(FEATURES, h.features)), h.score,
                  h.oov_slots, sent_id)
        for h in finals
    ]
    out = NBestList(candidates)
    out.candidates = out.candidates[:config.nbest_size]
    return out


def rescore_nbest(nbest, weights):
    """Recompute totals as feature-weight dot products and re-rank.

    Stable for ties; raises on weight vectors that do not cover every
    feature present in the candidates.
    """
    for cand in nbest:
        missing = [f for f in cand.features if f not in weights]
        if missing:
            raise DecoderError(f"weight vector missing features {missing}")
    rescored = [replace(c, total=total_score(c.features, weights)) for c in nbest]
    rescored.sort(key=lambda c: -c.total)  # stable
    return NBestList.presorted(rescored)


def _pool_bleu(pools, references, weights):
    selections = []
    for pool in pools:
        best = max(pool, key=lambda c: (total_score(c.features, weights), c.tokens))
        selections.append(list(best.tokens))
    return bleu(selections, references, smooth="add1")


def tune_weights(dev_source, references, table, lm, initial_config=None,
                 rounds=3, grid_points=11, grid_radius=2.0):
    """n-best coordinate line search over the decoder feature weights.

    Each round decodes the dev set, merges candidates into per-sentence
    pools, then sweeps every feature over a grid around its current value
    keeping the pool-BLEU maximizer (ties keep the incumbent). The
    returned config never scores below the initial weights on the final
    pools; rounds=0 returns the initial config unchanged.
    """
    if not dev_source:
        raise DecoderError("empty dev set")
    if len(dev_source) != len(references):
        raise DecoderError(f"dev/reference count mismatch: "
                           f"{len(dev_source)} vs {len(references)}")
    config = initial_config or DecoderConfig()
    weights = dict(config.weights)
    initial_weights = dict(weights)
    pools = [dict() for _ in dev_source]  # tokens -> Candidate
    merged = None
    for _ in range(rounds):
        run_cfg = replace(config, weights=dict(weights))
        for pool, sent in zip(pools, dev_source):
            for cand in decode(sent, table, lm, run_cfg):
                pool.setdefault(cand.tokens, cand)
        merged = [sorted(p.values(), key=lambda c: c.tokens) for p in pools]
        for name in FEATURES:
            current = weights[name]
            best_val = current
            best_bleu = _pool_bleu(merged, references, weights)
            lo = current - grid_radius
            hi = current + grid_radius
            for k in range(grid_points):
                val = lo + (hi - lo) * k / (grid_points - 1)
                trial = dict(weights)
                trial[name] = val
                b = _pool_bleu(merged, references, trial)
                if b > best_bleu:
                    best_bleu = b
                    best_val = val
            weights[name] = best_val
        log.info("tuner round complete: pool BLEU %.2f",
                 _pool_bleu(merged, references, weights))
    if merged is not None and (_pool_bleu(merged, references, weights)
                               < _pool_bleu(merged, references, initial_weights)):
        weights = initial_weights
    return replace(config, weights=weights)


# ---------------------------------------------------------------------------
# n-best / weights file IO
# ---------------------------------------------------------------------------


def write_nbest(nbest_lists, path):
    with open(path, "w", encoding="utf-8") as fh:
        for nbest in nbest_lists:
            for cand in nbest:
                feats = " ".join(f"feature:{name} {cand.features.get(name, 0.0):.6f}"
                                 for name in FEATURES)
                fh.write(f"{cand.sent_id} ||| {' '.join(cand.tokens)} ||| "
                         f"{feats} ||| {cand.total:.6f}\n")


def read_nbest(path):
    lists = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            fields = line.split("|||")
            if len(fields) != 4:
                raise ParseError(f"expected 4 '|||' fields, got {len(fields)}",
                                 path=path, line=lineno)
            try:
                sent_id = int(fields[0])
            except ValueError:
                raise ParseError(f"bad sentence id {fields[0]!r}",
                                 path=path, line=lineno) from None
            tokens = tuple(fields[1].split())
            feats = {}
            parts = fields[2].split()
            if len(parts) % 2:
                raise ParseError("odd feature field count", path=path, line=lineno)
            for k in range(0, len(parts), 2):
                if not parts[k].startswith("feature:"):
                    raise ParseError(f"expected 'feature:name', got {parts[k]!r}",
                                     path=path, line=lineno)
                try:
                    feats[parts[k][len("feature:"):]] = float(parts[k + 1])
                except ValueError:
                    raise ParseError(f"bad feature value {parts[k + 1]!r}",
                                     path=path, line=lineno) from None
            try:
                total = float(fields[3])
            except ValueError:
                raise ParseError(f"bad total {fields[3]!r}", path=path,
                                 line=lineno) from None
            lists.setdefault(sent_id, []).append(
                Candidate(tokens, feats, total, (), sent_id))
    return [NBestList.presorted(lists[sent_id]) for sent_id in sorted(lists)]


def write_weights(weights, path):
    with open(path, "w", encoding="utf-8") as fh:
        for name in FEATURES:
            fh.write(f"{name} = {weights[name]:.6f}\n")


def read_weights(path):
    from .corpus import read_kv_file

    kv = read_kv_file(path).get("", {})
    weights = {}
    for name, value in kv.items():
        try:
            weights[name] = float(value)
        except ValueError:
            raise ParseError(f"bad weight {value!r} for {name}", path=path) from None
    missing = [f for f in FEATURES if f not in weights]
    if missing:
        raise ParseError(f"weights file missing features {missing}", path=path)
    return weights
