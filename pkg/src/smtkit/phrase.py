"""Alignment-consistent phrase pair extraction and phrase table scoring.

A span pair is extracted when it contains at least one alignment link,
no link leaves either span, and both sides respect the length cap;
unaligned boundary words extend pairs per the usual loose-boundary rule
(which the consistency criterion captures directly). Scoring produces
four natural-log features per entry: relative frequencies in both
directions and lexical weights in both directions.

Table file format, one entry per line:
    src tokens ||| tgt tokens ||| f1 f2 f3 f4
"""

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass

from .errors import ParseError

log = logging.getLogger(__name__)

DEFAULT_MAX_PHRASE_LEN = 7
SEP = " ||| "


@dataclass(frozen=True)
class PhrasePair:
    source: tuple
    target: tuple
    # phrase-internal links, indices relative to the spans
    links: tuple = ()


class PhraseTable:
    """Phrase pair -> (log p(t|s), log p(s|t), log lex(t|s), log lex(s|t))."""

    def __init__(self, entries=None):
        self.entries = entries or {}
        self._by_source = None

    def __len__(self):
        return len(self.entries)

    def __contains__(self, key):
        return key in self.entries

    def features(self, source, target):
        return self.entries[(tuple(source), tuple(target))]

    def options(self, source):
        """All (target, features) for a source phrase, best-first."""
        if self._by_source is None:
            index = defaultdict(list)
            for (src, tgt), feats in self.entries.items():
                index[src].append((tgt, feats))
            for src in index:
                index[src].sort(key=lambda e: (-e[1][0], e[0]))
            self._by_source = dict(index)
        return self._by_source.get(tuple(source), [])

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# src ||| tgt ||| logp(t|s) logp(s|t) loglex(t|s) loglex(s|t)\n")
            for (src, tgt) in sorted(self.entries):
                feats = self.entries[(src, tgt)]
                fh.write(" ".join(src) + SEP + " ".join(tgt) + SEP
                         + " ".join(f"{f:.6f}" for f in feats) + "\n")

    @classmethod
    def read(cls, path):
        entries = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                fields = line.split("|||")
                if len(fields) != 3:
                    raise ParseError(f"expected 3 '|||' fields, got {len(fields)}",
                                     path=path, line=lineno)
                src = tuple(fields[0].split())
                tgt = tuple(fields[1].split())
                feats = fields[2].split()
                if len(feats) != 4:
                    raise ParseError(f"expected 4 features, got {len(feats)}",
                                     path=path, line=lineno)
                try:
                    entries[(src, tgt)] = tuple(float(f) for f in feats)
                except ValueError:
                    raise ParseError("non-numeric feature", path=path, line=lineno) from None
        return cls(entries)


def extract_phrases(pair, alignment, max_len=DEFAULT_MAX_PHRASE_LEN):
    """Extract consistent phrase pairs from one aligned sentence pair.

    Returns a set of PhrasePair with phrase-internal links recorded for
    lexical weighting.
    """
    src, tgt = pair
    links = alignment.links
    if not links:
        return set()
    # target links per source index and vice versa
    tgt_of_src = defaultdict(set)
    src_of_tgt = defaultdict(set)
    for i, j in links:
        tgt_of_src[i].add(j)
        src_of_tgt[j].add(i)
    out = set()
    n = len(src)
    for i1 in range(n):
        linked_tgt = set()
        for i2 in range(i1, min(n, i1 + max_len)):
            linked_tgt |= tgt_of_src.get(i2, set())
            if not linked_tgt:
                continue
            j1, j2 = min(linked_tgt), max(linked_tgt)
            # all links from the target window must stay within [i1, i2]
            src_back = set()
            for j in range(j1, j2 + 1):
                src_back |= src_of_tgt.get(j, set())
            if not src_back <= set(range(i1, i2 + 1)):
                continue
            # grow over unaligned target boundary words
            lo = j1
            while lo >= 0 and (lo == j1 or lo not in src_of_tgt):
                hi = j2
                while hi < len(tgt) and (hi == j2 or hi not in src_of_tgt):
                    if hi - lo + 1 <= max_len:
                        internal = tuple(sorted(
                            (i - i1, j - lo)
                            for i, j in links
                            if i1 <= i <= i2 and lo <= j <= hi))
                        out.add(PhrasePair(tuple(src[i1:i2 + 1]),
                                           tuple(tgt[lo:hi + 1]), internal))
                    hi += 1
                lo -= 1
    return out


def _most_frequent_alignment(counter):
    # ties resolved toward the lexicographically smallest link tuple
    best = min(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    return best[0]


def _lexical_weight(src, tgt, links, table):
    """Average-max lexical weight: prod over target words of the mean
    translation probability over their linked source words (NULL when
    unaligned)."""
    linked = defaultdict(list)
    for i, j in links:
        linked[j].append(i)
    weight = 0.0
    for j, f in enumerate(tgt):
        if j in linked:
            p = sum(table.prob(src[i], f) for i in linked[j]) / len(linked[j])
        else:
            p = table.prob(table.null_token, f)
        weight += math.log(p)
    return weight


def score_table(extracted, fwd_table, rev_table):
    """Score occurrences of extracted phrase pairs into a PhraseTable.

    `extracted` is an iterable of PhrasePair occurrences (one per
    extraction event, duplicates meaningful). Relative frequencies come
    from occurrence counts; lexical weights use each pair's most frequent
    internal alignment, with `fwd_table` giving t(target|source) and
    `rev_table` t(source|target).
    """
    joint = Counter()
    src_marginal = Counter()
    tgt_marginal = Counter()
    align_votes = defaultdict(Counter)
    for pp in extracted:
        key = (pp.source, pp.target)
        joint[key] += 1
        src_marginal[pp.source] += 1
        tgt_marginal[pp.target] += 1
        align_votes[key][pp.links] += 1
    entries = {}
    for (src, tgt), count in joint.items():
        p_fwd = count / src_marginal[src]
        p_rev = count / tgt_marginal[tgt]
        links = _most_frequent_alignment(align_votes[(src, tgt)])
        lex_fwd = _lexical_weight(src, tgt, links, fwd_table)
        rev_links = tuple(sorted((j, i) for i, j in links))
        lex_rev = _lexical_weight(tgt, src, rev_links, rev_table)
        entries[(src, tgt)] = (math.log(p_fwd), math.log(p_rev), lex_fwd, lex_rev)
    return PhraseTable(entries)


def extract_corpus(pairs, matrices, max_len=DEFAULT_MAX_PHRASE_LEN):
    """Extraction over a corpus; returns the flat occurrence list."""
    occurrences = []
    for pair, matrix in zip(pairs, matrices):
        occurrences.extend(sorted(extract_phrases(pair, matrix, max_len),
                                  key=lambda pp: (pp.source, pp.target)))
    return occurrences
