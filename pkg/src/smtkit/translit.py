"""Unsupervised transliteration: mining, character models, OOV handling.

Mining classifies 1-1 aligned word pairs with a two-component mixture:
a transliteration component (character-level Model 1, t(target char |
source char) with a NULL char) against a non-transliteration component
(independent target character unigrams). Both share the same source-side
factor, so the posterior only involves the conditional models. The
mixture weight, the character table, and the unigram model are all
updated by (generalized) EM, keeping the data log-likelihood
non-decreasing.

Accepted pairs train the deployable character model: Model 1 in both
directions, a character trigram LM over target words, and a Gaussian
length-ratio model. Transliteration itself is a monotone character beam
search (substitute / insert / delete moves) scored by the character
table, the character LM, and the length model.

File formats:
    mined pairs   src<TAB>tgt<TAB>posterior
    candidates    word<TAB>candidate<TAB>score (n rows per word)
"""

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from . import align, ngram_lm
from .errors import ParseError, SmtError

log = logging.getLogger(__name__)

LN10 = math.log(10.0)
MIN_MINING_PAIRS = 10
DEFAULT_THRESHOLD = 0.5
DEFAULT_EM_ROUNDS = 10
CHAR_LM_ORDER = 3
_DELETE_LOGPROB = math.log(0.01)
# hypotheses kept per sentence while expanding OOV slots
EXPANSION_CAP = 1000


class TranslitError(SmtError):
    pass


@dataclass
class MinedPairSet:
    pairs: list            # (src word, tgt word, posterior)
    threshold: float = DEFAULT_THRESHOLD
    mixture_weight: float = 0.5
    log_likelihoods: list = field(default_factory=list)

    def accepted(self, threshold=None):
        cut = self.threshold if threshold is None else threshold
        return [(s, t) for s, t, p in self.pairs if p >= cut]

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for s, t, p in self.pairs:
                fh.write(f"{s}\t{t}\t{p:.6f}\n")

    @classmethod
    def read(cls, path, threshold=DEFAULT_THRESHOLD):
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line:
                    continue
                fields = line.split("\t")
                if len(fields) != 3:
                    raise ParseError("expected 'src<TAB>tgt<TAB>posterior'",
                                     path=path, line=lineno)
                pairs.append((fields[0], fields[1], float(fields[2])))
        return cls(pairs, threshold)


def _char_model1_prob(src_chars, tgt_chars, t_probs, null_id, char_ids):
    """Model 1 conditional probability of the target character string."""
    logp = 0.0
    src_ids = [null_id] + [char_ids.get(c, -1) for c in src_chars]
    for tc in tgt_chars:
        ti = char_ids.get(tc, -1)
        total = 0.0
        for si in src_ids:
            total += t_probs.get((si, ti), 0.0)
        if total <= 0.0:
            total = 1e-300
        logp += math.log(total) - math.log(len(src_ids))
    return logp


def mine_pairs(word_pairs, em_rounds=DEFAULT_EM_ROUNDS,
               threshold=DEFAULT_THRESHOLD):
    """Mixture-EM posteriors for word pairs being transliterations.

    `word_pairs` is an iterable of (source word, target word) harvested
    from 1-1 alignment links. Raises on fewer than 10 pairs.
    """
    pairs = [(s, t) for s, t in word_pairs if s and t]
    if len(pairs) < MIN_MINING_PAIRS:
        raise TranslitError(
            f"need at least {MIN_MINING_PAIRS} word pairs to mine, got {len(pairs)}")

    chars = sorted({c for s, t in pairs for c in s + t})
    char_ids = {c: i + 1 for i, c in enumerate(chars)}  # 0 = NULL
    null_id = 0

    # transliteration component: char Model 1 over co-occurring chars
    support = {}
    for s, t in pairs:
        sids = [null_id] + [char_ids[c] for c in s]
        for tc in t:
            ti = char_ids[tc]
            for si in sids:
                support.setdefault((si, ti), 0.0)
    fanout = Counter(si for si, _ in support)
    t_probs = {key: 1.0 / fanout[key[0]] for key in support}

    # non-transliteration component: target char unigrams, uniform start
    uni = {char_ids[c]: 0.0 for s, t in pairs for c in t}
    for key in uni:
        uni[key] = 1.0 / len(uni)

    lam = 0.5
    posteriors = [0.5] * len(pairs)
    lls = []
    for _ in range(em_rounds):
        # E-step: responsibilities under current parameters
        ll = 0.0
        logs_t = []
        logs_r = []
        for s, t in pairs:
            lt = _char_model1_prob(s, t, t_probs, null_id, char_ids)
            lr = sum(math.log(max(uni.get(char_ids[c], 0.0), 1e-300)) for c in t)
            logs_t.append(lt)
            logs_r.append(lr)
            m = max(lt + math.log(lam), lr + math.log1p(-lam))
            ll += m + math.log(math.exp(lt + math.log(lam) - m)
                               + math.exp(lr + math.log1p(-lam) - m))
        lls.append(ll)
        for idx in range(len(pairs)):
            a = logs_t[idx] + math.log(lam)
            b = logs_r[idx] + math.log1p(-lam)
            m = max(a, b)
            posteriors[idx] = math.exp(a - m) / (math.exp(a - m) + math.exp(b - m))

        # M-step: mixture weight, unigrams, one weighted Model 1 pass
        lam = sum(posteriors) / len(posteriors)
        lam = min(max(lam, 1e-9), 1.0 - 1e-9)
        uni_counts = defaultdict(float)
        for (s, t), gamma in zip(pairs, posteriors):
            for c in t:
                uni_counts[char_ids[c]] += 1.0 - gamma
        total = sum(uni_counts.values())
        if total > 0:
            uni = {ci: c / total for ci, c in uni_counts.items()}
        t_counts = defaultdict(float)
        src_totals = defaultdict(float)
        for (s, t), gamma in zip(pairs, posteriors):
            if gamma <= 0.0:
                continue
            sids = [null_id] + [char_ids[c] for c in s]
            for tc in t:
                ti = char_ids[tc]
                denom = sum(t_probs.get((si, ti), 0.0) for si in sids)
                if denom <= 0.0:
                    continue
                for si in sids:
                    frac = gamma * t_probs.get((si, ti), 0.0) / denom
                    t_counts[(si, ti)] += frac
                    src_totals[si] += frac
        for key in list(t_probs):
            si = key[0]
            if src_totals[si] > 0.0:
                t_probs[key] = t_counts[key] / src_totals[si]

    result = [(s, t, p) for (s, t), p in zip(pairs, posteriors)]
    return MinedPairSet(result, threshold, lam, lls)


@dataclass
class CharModel:
    fwd: align.TranslationTable      # t(target char | source char)
    rev: align.TranslationTable      # t(source char | target char)
    char_lm: object                  # trigram model over target chars
    length_mean: float
    length_var: float

    def length_logprob(self, src_len, tgt_len):
        ratio = tgt_len / src_len
        var = max(self.length_var, 1e-4)
        return (-0.5 * (ratio - self.length_mean) ** 2 / var
                - 0.5 * math.log(2.0 * math.pi * var))


def train_char_model(accepted_pairs, em_iterations=5):
    """Train the transliteration model on accepted (src, tgt) word pairs."""
    pairs = [(tuple(s), tuple(t)) for s, t in accepted_pairs if s and t]
    if not pairs:
        raise TranslitError("no accepted pairs to train on")
    if len(pairs) < MIN_MINING_PAIRS:
        log.warning("training a character model on only %d pairs", len(pairs))
    fwd = align.train_model1(pairs, em_iterations)
    rev = align.train_model1([(t, s) for s, t in pairs], em_iterations)
    counts = ngram_lm.count_ngrams((t for _, t in pairs), CHAR_LM_ORDER)
    char_lm = ngram_lm.estimate_mkn(counts)
    ratios = [len(t) / len(s) for s, t in pairs]
    mean = sum(ratios) / len(ratios)
    var = sum((r - mean) ** 2 for r in ratios) / len(ratios)
    return CharModel(fwd, rev, char_lm, mean, var)


def transliterate(word, model, n=5, beam_size=None):
    """n-best transliterations of one word, best first.

    Monotone beam search over target characters: each step consumes the
    next source character and emits one character (optionally preceded by
    a NULL-attributed insertion), or deletes it at a fixed penalty.
    Scores combine the character table, the character LM, and the length
    model; candidates are unique and strictly score-sorted.
    """
    if not word:
        raise TranslitError("cannot transliterate an empty word")
    if n < 1:
        raise TranslitError(f"n must be >= 1, got {n}")
    beam_size = beam_size or max(4 * n, 16)
    src = tuple(word)
    emissions = []
    for c in src:
        row = sorted(model.fwd.row(c).items(), key=lambda kv: (-kv[1], kv[0]))
        emissions.append(row[:beam_size])
    null_row = sorted(model.fwd.row(model.fwd.null_token).items(),
                      key=lambda kv: (-kv[1], kv[0]))[:4]

    # state: (consumed, output tuple, lm state, score, inserted-last flag)
    start = (0, (), model.char_lm.begin_state(), 0.0, False)
    beam = [start]
    complete = {}
    while beam:
        grown = []
        for consumed, out, state, score, inserted in beam:
            if consumed == len(src):
                lp, _ = model.char_lm.score(state, ngram_lm.EOS)
                final = (score + lp * LN10
                         + model.length_logprob(len(src), len(out)))
                prev = complete.get(out)
                if prev is None or final > prev:
                    complete[out] = final
                continue
            c = src[consumed]
            row = emissions[consumed]
            if not row:
                row = [(c, 1e-12)]  # unseen source char: copy through
            for tc, p in row:
                lp, new_state = model.char_lm.score(state, tc)
                grown.append((consumed + 1, out + (tc,), new_state,
                              score + math.log(p) + lp * LN10, False))
            # deletion: consume without emitting
            grown.append((consumed + 1, out, state, score + _DELETE_LOGPROB, False))
            if not inserted:
                for tc, p in null_row:
                    lp, new_state = model.char_lm.score(state, tc)
                    grown.append((consumed, out + (tc,), new_state,
                                  score + math.log(p) + lp * LN10, True))
        grown.sort(key=lambda h: (-h[3], h[1]))
        beam = grown[:beam_size]
    ranked = [(out, score) for out, score in
              sorted(complete.items(), key=lambda kv: (-kv[1], kv[0])) if out]
    return [("".join(out), score) for out, score in ranked[:n]]


def make_oov_handler(model, cache=None):
    """Adapter giving the decoder a word -> [(candidate, score)] callable."""
    cache = {} if cache is None else cache

    def handler(word, n):
        key = (word, n)
        if key not in cache:
            try:
                cache[key] = transliterate(word, model, n)
            except TranslitError:
                cache[key] = []
        return cache[key]

    return handler


def integrate_oov(nbest, char_model, word_lm, n=5, weights=None):
    """Expand OOV slots with transliteration candidates and re-rank.

    Every hypothesis keeps its passthrough variant; each OOV slot adds up
    to n transliterations, slots expanding left to right under a partial
    score cap of EXPANSION_CAP hypotheses. The language model feature is
    recomputed over the full sentence and the transliteration feature
    accumulates candidate scores; totals are weighted sums as in the
    decoder.
    """
    from .decoder import DEFAULT_WEIGHTS, Candidate, NBestList, total_score

    weights = weights or dict(DEFAULT_WEIGHTS)
    if not any(c.oov_slots for c in nbest):
        return nbest
    handler = make_oov_handler(char_model)
    expanded = []
    for cand in nbest:
        variants = [(list(cand.tokens), 0.0)]
        for slot in cand.oov_slots:
            word = cand.tokens[slot]
            alternatives = [(word, 0.0)] + handler(word, n)
            grown = []
            for tokens, tl_score in variants:
                for alt, alt_score in alternatives:
                    new = list(tokens)
                    new[slot] = alt
                    grown.append((new, tl_score + alt_score))
            grown.sort(key=lambda v: (-v[1], v[0]))
            variants = grown[:EXPANSION_CAP]
        for tokens, tl_score in variants:
            feats = dict(cand.features)
            feats["translit"] = feats.get("translit", 0.0) + tl_score
            if word_lm is not None:
                feats["lm"] = word_lm.sentence_logprob(tokens) * LN10
            expanded.append(Candidate(tuple(tokens), feats,
                                      total_score(feats, weights),
                                      cand.oov_slots, cand.sent_id))
    return NBestList(expanded)


def write_candidates(per_word, path):
    """`word<TAB>candidate<TAB>score` rows, n per word."""
    with open(path, "w", encoding="utf-8") as fh:
        for word, candidates in per_word:
            for cand, score in candidates:
                fh.write(f"{word}\t{cand}\t{score:.6f}\n")


def harvest_one_to_one(pairs, matrices):
    """1-1 aligned word pairs (types, deduplicated) from symmetrized
    alignments, for the miner."""
    seen = {}
    for (src, tgt), matrix in zip(pairs, matrices):
        src_degree = Counter(i for i, _ in matrix.links)
        tgt_degree = Counter(j for _, j in matrix.links)
        for i, j in sorted(matrix.links):
            if src_degree[i] == 1 and tgt_degree[j] == 1:
                seen.setdefault((src[i], tgt[j]), None)
    return list(seen)
