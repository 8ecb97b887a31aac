"""IBM Model 1 word alignment, symmetrization, and stem-factored alignment.

Model 1 is trained by EM from a uniform initialization over co-occurring
word pairs; the expectation pass runs through the flat-array kernels in
:mod:`smtkit.kernels`. The conditional table t(f|e) gives the probability
of a target word f given a source word e (optionally including a NULL
source); rows normalize to one after every iteration and the corpus
log-likelihood is non-decreasing across iterations.

Alignment output uses the Pharaoh convention: one line per sentence of
space-separated ``src-tgt`` zero-based index pairs.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ParseError, SmtError
from .morpho import stem

log = logging.getLogger(__name__)

NULL_TOKEN = "<NULL>"
PROB_FLOOR = 1e-12
DEFAULT_ITERATIONS = 5
HEURISTICS = ("intersection", "union", "grow-diag-final")


class AlignmentError(SmtError):
    pass


@dataclass
class AlignmentMatrix:
    links: set  # {(source index, target index)}
    source_length: int
    target_length: int
    provenance: str = "forward"

    def __post_init__(self):
        for i, j in self.links:
            if not (0 <= i < self.source_length and 0 <= j < self.target_length):
                raise AlignmentError(
                    f"link ({i},{j}) out of range for {self.source_length}x{self.target_length}")

    def transpose(self):
        return AlignmentMatrix({(j, i) for i, j in self.links},
                               self.target_length, self.source_length, self.provenance)


class TranslationTable:
    """Sparse t(f|e) with vocabularies and an optional NULL source row."""

    def __init__(self, src_words, tgt_words, probs, null_token=NULL_TOKEN,
                 log_likelihoods=None):
        self.src_words = list(src_words)
        self.tgt_words = list(tgt_words)
        self.src_index = {w: i for i, w in enumerate(self.src_words)}
        self.tgt_index = {w: i for i, w in enumerate(self.tgt_words)}
        self.probs = probs  # {(src_id, tgt_id): prob}
        self.null_token = null_token
        self.log_likelihoods = log_likelihoods or []

    def prob(self, src_word, tgt_word, floor=PROB_FLOOR):
        si = self.src_index.get(src_word)
        ti = self.tgt_index.get(tgt_word)
        if si is None or ti is None:
            return floor
        return self.probs.get((si, ti), floor)

    def row(self, src_word):
        si = self.src_index.get(src_word)
        if si is None:
            return {}
        return {self.tgt_words[ti]: p for (s, ti), p in self.probs.items() if s == si}

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for (si, ti) in sorted(self.probs):
                fh.write(f"{self.src_words[si]}\t{self.tgt_words[ti]}\t"
                         f"{self.probs[(si, ti)]:.10g}\n")

    @classmethod
    def read(cls, path, null_token=NULL_TOKEN):
        src_words, tgt_words = [], []
        src_index, tgt_index = {}, {}
        probs = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line:
                    continue
                fields = line.split("\t")
                if len(fields) != 3:
                    raise ParseError("expected 'src<TAB>tgt<TAB>prob'", path=path, line=lineno)
                s, t, p = fields
                if s not in src_index:
                    src_index[s] = len(src_words)
                    src_words.append(s)
                if t not in tgt_index:
                    tgt_index[t] = len(tgt_words)
                    tgt_words.append(t)
                try:
                    probs[(src_index[s], tgt_index[t])] = float(p)
                except ValueError:
                    raise ParseError(f"bad probability {p!r}", path=path, line=lineno) from None
        return cls(src_words, tgt_words, probs, null_token)


@dataclass
class EncodedCorpus:
    """Flat-array corpus encoding consumed by the EM kernels."""
    cells: np.ndarray          # int32, t-parameter index per (src, tgt) cell
    block_starts: np.ndarray   # int64, one block per (sentence, target pos)
    block_sizes: np.ndarray    # int32
    pair_src: np.ndarray       # int32, source word id per t-parameter
    pair_keys: list            # (src id, tgt id) per t-parameter
    sent_spans: list           # (cell offset, n_src, n_tgt) per kept sentence
    src_words: list
    tgt_words: list
    kept_ids: list = field(default_factory=list)


def encode_corpus(pairs, use_null=True):
    """Integer-encode sentence pairs and index co-occurring word pairs.

    Source id 0 is reserved for NULL when use_null is set. Sentences with
    an empty side are skipped with a warning.
    """
    src_index, tgt_index = {}, {}
    src_words, tgt_words = [], []
    if use_null:
        src_index[NULL_TOKEN] = 0
        src_words.append(NULL_TOKEN)
    pair_index = {}
    pair_src = []
    cells = []
    block_starts = []
    block_sizes = []
    sent_spans = []
    kept = []
    offset = 0
    for n, (src, tgt) in enumerate(pairs):
        if not src or not tgt:
            log.warning("sentence pair %d has an empty side; skipped", n)
            continue
        sids = []
        if use_null:
            sids.append(0)
        for w in src:
            if w not in src_index:
                src_index[w] = len(src_words)
                src_words.append(w)
            sids.append(src_index[w])
        tids = []
        for w in tgt:
            if w not in tgt_index:
                tgt_index[w] = len(tgt_words)
                tgt_words.append(w)
            tids.append(tgt_index[w])
        ne = len(sids)
        sent_spans.append((offset, ne, len(tids)))
        kept.append(n)
        for ti in tids:
            block_starts.append(offset)
            block_sizes.append(ne)
            for si in sids:
                key = (si, ti)
                k = pair_index.get(key)
                if k is None:
                    k = len(pair_index)
                    pair_index[key] = k
                    pair_src.append(si)
                cells.append(k)
            offset += ne
    if not sent_spans:
        raise AlignmentError("empty corpus: no usable sentence pairs")
    return EncodedCorpus(
        cells=np.asarray(cells, dtype=np.int32),
        block_starts=np.asarray(block_starts, dtype=np.int64),
        block_sizes=np.asarray(block_sizes, dtype=np.int32),
        pair_src=np.asarray(pair_src, dtype=np.int32),
        pair_keys=list(pair_index),
        sent_spans=sent_spans,
        src_words=src_words,
        tgt_words=tgt_words,
        kept_ids=kept,
    )


def _uniform_init(enc):
    # t(f|e) = 1/(number of target types co-occurring with e)
    fanout = np.bincount(enc.pair_src, minlength=len(enc.src_words)).astype(np.float64)
    return 1.0 / fanout[enc.pair_src]


def train_model1(pairs, iterations=DEFAULT_ITERATIONS, use_null=True):
    """EM-train t(f|e) on (source tokens, target tokens) pairs.

    Reports the corpus log-likelihood of the parameters in force at the
    start of each iteration (uniform-alignment term included).
    """
    pairs = _as_token_pairs(pairs)
    if iterations < 1:
        raise AlignmentError(f"iterations must be >= 1, got {iterations}")
    enc = encode_corpus(pairs, use_null=use_null)
    t_val = _uniform_init(enc)
    lls = []
    for it in range(iterations):
        counts = np.zeros_like(t_val)
        ll = kernels.em_expectation(enc.cells, enc.block_starts, enc.block_sizes,
                                    t_val, counts)
        totals = np.bincount(enc.pair_src, weights=counts,
                             minlength=len(enc.src_words))
        t_val = counts / totals[enc.pair_src]
        lls.append(ll)
        log.info("model1 iteration %d/%d: log-likelihood %.6f", it + 1, iterations, ll)
    probs = {key: float(t_val[k]) for k, key in enumerate(enc.pair_keys)}
    return TranslationTable(enc.src_words, enc.tgt_words, probs,
                            log_likelihoods=lls)


def _as_token_pairs(pairs):
    if hasattr(pairs, "token_pairs"):
        return pairs.token_pairs()
    return list(pairs)


def corpus_log_likelihood(pairs, table, use_null=True, floor=PROB_FLOOR):
    """Model 1 log-likelihood of a corpus under a fixed table."""
    pairs = _as_token_pairs(pairs)
    total = 0.0
    for src, tgt in pairs:
        if not src or not tgt:
            continue
        candidates = ([table.null_token] if use_null else []) + list(src)
        for f in tgt:
            s = sum(table.prob(e, f, floor) for e in candidates)
            total += np.log(s) - np.log(len(candidates))
    return float(total)


def viterbi_align(pair, table, floor=PROB_FLOOR):
    """Best-link alignment: each target word to its argmax source word.

    NULL participates and wins ties (producing no link); ties between
    real source words go to the smaller source index.
    """
    src, tgt = pair
    links = set()
    for j, f in enumerate(tgt):
        best_p = table.prob(table.null_token, f, floor)
        best_i = None
        for i, e in enumerate(src):
            p = table.prob(e, f, floor)
            if p > best_p:
                best_p = p
                best_i = i
        if best_i is not None:
            links.add((best_i, j))
    return AlignmentMatrix(links, len(src), len(tgt), "forward")


_NEIGHBORS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def symmetrize(forward, reverse, heuristic="grow-diag-final"):
    """Merge two directional alignments over the same sentence pair.

    Both arguments are in (source index, target index) orientation; the
    caller transposes the reverse-direction matrix first. grow-diag-final
    starts from the intersection, grows along the union through the
    8-neighborhood of current links while the candidate touches an
    uncovered word, then admits remaining union links covering any still
    unaligned word. Candidate order is lexicographic throughout.
    """
    if (forward.source_length != reverse.source_length
            or forward.target_length != reverse.target_length):
        raise AlignmentError(
            f"mismatched sentence lengths: {forward.source_length}x{forward.target_length}"
            f" vs {reverse.source_length}x{reverse.target_length}")
    if heuristic not in HEURISTICS:
        raise AlignmentError(f"unknown heuristic {heuristic!r}")
    inter = forward.links & reverse.links
    union = forward.links | reverse.links
    if heuristic == "intersection":
        return AlignmentMatrix(set(inter), forward.source_length,
                               forward.target_length, "symmetrized")
    if heuristic == "union":
        return AlignmentMatrix(set(union), forward.source_length,
                               forward.target_length, "symmetrized")

    links = set(inter)
    src_cov = {i for i, _ in links}
    tgt_cov = {j for _, j in links}
    changed = True
    while changed:
        changed = False
        for (i, j) in sorted(links):
            for di, dj in _NEIGHBORS:
                cand = (i + di, j + dj)
                if cand not in union or cand in links:
                    continue
                ci, cj = cand
                if ci not in src_cov or cj not in tgt_cov:
                    links.add(cand)
                    src_cov.add(ci)
                    tgt_cov.add(cj)
                    changed = True
    for cand in sorted(union - links):
        ci, cj = cand
        if ci not in src_cov or cj not in tgt_cov:
            links.add(cand)
            src_cov.add(ci)
            tgt_cov.add(cj)
    return AlignmentMatrix(links, forward.source_length, forward.target_length,
                           "symmetrized")


def align_corpus(pairs, iterations=DEFAULT_ITERATIONS, use_null=True,
                 heuristic="grow-diag-final", stemmer_src=None, stemmer_tgt=None):
    """Train both directions, Viterbi-align, and symmetrize every pair.

    With stemmer profiles given, training and Viterbi run on per-token
    stems (the stem alignment factor); emitted links use the original
    surface indices, which coincide because stemming is per-token.

    Returns (matrices, forward table, reverse table). The tables are in
    surface or stem space depending on the factor.
    """
    pairs = _as_token_pairs(pairs)
    if stemmer_src is not None or stemmer_tgt is not None:
        factored = [
            (tuple(stem(w, stemmer_src) if stemmer_src else w for w in src),
             tuple(stem(w, stemmer_tgt) if stemmer_tgt else w for w in tgt))
            for src, tgt in pairs
        ]
    else:
        factored = pairs
    fwd = train_model1(factored, iterations, use_null)
    rev = train_model1([(t, s) for s, t in factored], iterations, use_null)
    matrices = []
    for (src, tgt) in factored:
        if not src or not tgt:
            continue
        f = viterbi_align((src, tgt), fwd)
        r = viterbi_align((tgt, src), rev).transpose()
        matrices.append(symmetrize(f, r, heuristic))
    return matrices, fwd, rev


def align_factored(pairs, stemmer_src, stemmer_tgt, iterations=DEFAULT_ITERATIONS):
    """Stem-factored alignment; see align_corpus."""
    matrices, _, _ = align_corpus(pairs, iterations,
                                  stemmer_src=stemmer_src, stemmer_tgt=stemmer_tgt)
    return matrices


def write_pharaoh(matrices, path):
    with open(path, "w", encoding="utf-8") as fh:
        for m in matrices:
            fh.write(" ".join(f"{i}-{j}" for i, j in sorted(m.links)))
            fh.write("\n")


def read_pharaoh(path, lengths=None):
    """Read Pharaoh lines; lengths is an optional (src_len, tgt_len) list."""
    matrices = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh):
            links = set()
            line = raw.strip()
            if line:
                for chunk in line.split():
                    try:
                        i, j = chunk.split("-")
                        links.add((int(i), int(j)))
                    except ValueError:
                        raise ParseError(f"bad link {chunk!r}", path=path,
                                         line=lineno + 1) from None
            if lengths is not None:
                slen, tlen = lengths[lineno]
            else:
                slen = 1 + max((i for i, _ in links), default=-1)
                tlen = 1 + max((j for _, j in links), default=-1)
            matrices.append(AlignmentMatrix(links, max(slen, 1), max(tlen, 1),
                                            "symmetrized"))
    return matrices
