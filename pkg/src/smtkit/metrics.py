"""Corpus-level BLEU, NIST, and TER for tokenized text.

All three operate on pre-tokenized sequences (no internal
re-tokenization, a deliberate divergence from official scorers). BLEU is
the corpus-level geometric mean of clipped n-gram precisions times the
brevity penalty, scaled to [0, 100]. NIST sums information-weighted
n-gram matches with its own brevity factor. TER counts word edits plus
greedy block shifts, normalized by reference length.
"""

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import SmtError

BLEU_MAX_N = 4
NIST_MAX_N = 5
TER_MAX_SHIFT_LEN = 10
# NIST brevity: exp(beta * ln(min(c/r,1))**2) with factor 0.5 at c/r = 2/3
_NIST_BETA = math.log(0.5) / math.log(2.0 / 3.0) ** 2


class MetricError(SmtError):
    pass


@dataclass
class EvaluationReport:
    system_id: str
    bleu: float
    nist: float
    ter: float
    language_pair: str = ""

    def row(self):
        return (self.language_pair, self.system_id,
                f"{self.bleu:.2f}", f"{self.nist:.3f}", f"{self.ter:.2f}")


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _as_reference_lists(references):
    """Normalize to one list of reference token sequences per segment."""
    out = []
    for ref in references:
        if ref and isinstance(ref[0], (list, tuple)):
            out.append([list(r) for r in ref])
        else:
            out.append([list(ref)])
    return out


def bleu(hypotheses, references, max_n=BLEU_MAX_N, smooth="none"):
    """Corpus BLEU in [0, 100].

    smooth="none" is the shared-task convention (any order with zero
    matches zeroes the score); smooth="add1" adds one to matched and
    total counts at orders >= 2, for use inside the tuner where candidate
    pools routinely lack higher-order matches.
    """
    if len(hypotheses) != len(references):
        raise MetricError(f"hypothesis/reference count mismatch: "
                          f"{len(hypotheses)} vs {len(references)}")
    if not hypotheses:
        raise MetricError("empty corpus")
    references = _as_reference_lists(references)
    matched = [0] * max_n
    total = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, refs in zip(hypotheses, references):
        hyp = list(hyp)
        hyp_len += len(hyp)
        # closest reference length, ties toward the shorter
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
        for n in range(1, max_n + 1):
            counts = _ngrams(hyp, n)
            if not counts:
                continue
            clip = Counter()
            for r in refs:
                for gram, c in _ngrams(r, n).items():
                    clip[gram] = max(clip[gram], c)
            total[n - 1] += sum(counts.values())
            matched[n - 1] += sum(min(c, clip[g]) for g, c in counts.items())
    log_precisions = 0.0
    for n in range(max_n):
        m, t = matched[n], total[n]
        if smooth == "add1" and n >= 1:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_precisions += math.log(m / t)
    if hyp_len == 0:
        return 0.0
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_precisions / max_n)


def nist(hypotheses, references, max_n=NIST_MAX_N):
    """NIST score: information-weighted n-gram co-occurrence."""
    if len(hypotheses) != len(references):
        raise MetricError(f"hypothesis/reference count mismatch: "
                          f"{len(hypotheses)} vs {len(references)}")
    if not hypotheses:
        raise MetricError("empty corpus")
    references = _as_reference_lists(references)
    # information weights from the pooled reference-set n-gram counts
    ref_counts = [Counter() for _ in range(max_n)]
    for refs in references:
        for r in refs:
            for n in range(1, max_n + 1):
                ref_counts[n - 1].update(_ngrams(r, n))
    total_ref_words = sum(ref_counts[0].values())

    def info(gram):
        n = len(gram)
        c = ref_counts[n - 1].get(gram, 0)
        if c == 0:
            return 0.0
        parent = total_ref_words if n == 1 else ref_counts[n - 2].get(gram[:-1], 0)
        if parent == 0:
            return 0.0
        return math.log2(parent / c)

    score = 0.0
    hyp_len = 0
    ref_len = 0
    info_sums = [0.0] * max_n
    hyp_totals = [0] * max_n
    for hyp, refs in zip(hypotheses, references):
        hyp = list(hyp)
        hyp_len += len(hyp)
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
        for n in range(1, max_n + 1):
            counts = _ngrams(hyp, n)
            hyp_totals[n - 1] += sum(counts.values())
            clip = Counter()
            for r in refs:
                for gram, c in _ngrams(r, n).items():
                    clip[gram] = max(clip[gram], c)
            for gram, c in counts.items():
                m = min(c, clip[gram])
                if m:
                    info_sums[n - 1] += m * info(gram)
    for n in range(max_n):
        if hyp_totals[n]:
            score += info_sums[n] / hyp_totals[n]
    if hyp_len == 0 or ref_len == 0:
        return 0.0
    ratio = min(hyp_len / ref_len, 1.0)
    brevity = math.exp(_NIST_BETA * math.log(ratio) ** 2)
    return score * brevity


def _encode_pair(a, b):
    ids = {}
    enc_a = np.fromiter((ids.setdefault(t, len(ids)) for t in a), dtype=np.int32,
                        count=len(a))
    enc_b = np.fromiter((ids.setdefault(t, len(ids)) for t in b), dtype=np.int32,
                        count=len(b))
    return enc_a, enc_b


def word_edit_distance(hyp, ref):
    """Unit-cost word Levenshtein distance (no shifts)."""
    a, b = _encode_pair(list(hyp), list(ref))
    return kernels.edit_distance(a, b)


def _subsequences(tokens, max_len):
    subs = set()
    for i in range(len(tokens)):
        for l in range(1, min(max_len, len(tokens) - i) + 1):
            subs.add(tuple(tokens[i:i + l]))
    return subs


def ter_details(hypothesis, reference, max_shift_len=TER_MAX_SHIFT_LEN):
    """(edits, shifts, reference length) under greedy best-first shifting.

    Each round scans every block of the current hypothesis that also
    appears contiguously in the reference, tries every other insertion
    point, and applies the move that lowers the edit distance the most
    (first found in block-start, block-length, destination order on
    ties); rounds repeat until no move improves, each applied move
    costing one shift.
    """
    ref = list(reference)
    if not ref:
        raise MetricError("empty reference")
    cur = list(hypothesis)
    ref_subs = _subsequences(ref, max_shift_len)
    shifts = 0
    base = word_edit_distance(cur, ref)
    while base > 0:
        best_gain = 0
        best_seq = None
        n = len(cur)
        for start in range(n):
            for length in range(1, min(max_shift_len, n - start) + 1):
                block = tuple(cur[start:start + length])
                if block not in ref_subs:
                    continue
                rest = cur[:start] + cur[start + length:]
                for dest in range(len(rest) + 1):
                    if dest == start:
                        continue
                    cand = rest[:dest] + list(block) + rest[dest:]
                    d = word_edit_distance(cand, ref)
                    if base - d > best_gain:
                        best_gain = base - d
                        best_seq = (cand, d)
        if best_seq is None:
            break
        cur, base = best_seq
        shifts += 1
    return base, shifts, len(ref)


def ter(hypothesis, reference):
    """Translation error rate: (edits + shifts) / reference length."""
    edits, shifts, ref_len = ter_details(hypothesis, reference)
    return (edits + shifts) / ref_len


def evaluate_corpus(hypotheses, references, system_id="", language_pair=""):
    """Corpus-level report: BLEU and NIST as defined above; TER as total
    (edits + shifts) over total reference length, scaled by 100."""
    if len(hypotheses) != len(references):
        raise MetricError(f"hypothesis/reference count mismatch: "
                          f"{len(hypotheses)} vs {len(references)}")
    bleu_score = bleu(hypotheses, references)
    nist_score = nist(hypotheses, references)
    refs = _as_reference_lists(references)
    total_cost = 0
    total_len = 0
    for hyp, rlist in zip(hypotheses, refs):
        edits, shifts, rlen = ter_details(hyp, rlist[0])
        total_cost += edits + shifts
        total_len += rlen
    ter_score = 100.0 * total_cost / total_len
    return EvaluationReport(system_id, bleu_score, nist_score, ter_score,
                            language_pair)


def evaluate_system(hyp_path, ref_path, system_id="", language_pair=""):
    """Score a hypothesis file against a reference file (tokenized text,
    one sentence per line)."""
    from .corpus import read_lines

    hyp_lines = [l.split() for l in read_lines(hyp_path)]
    ref_lines = [l.split() for l in read_lines(ref_path)]
    if len(hyp_lines) != len(ref_lines):
        raise MetricError(f"{hyp_path} has {len(hyp_lines)} lines but "
                          f"{ref_path} has {len(ref_lines)}")
    return evaluate_corpus(hyp_lines, ref_lines, system_id, language_pair)


def write_report(reports, path):
    """UTF-8 TSV with columns pair, system, BLEU, NIST, TER."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("pair\tsystem\tBLEU\tNIST\tTER\n")
        for rep in reports:
            fh.write("\t".join(rep.row()) + "\n")


def format_report(reports):
    """Pretty-printed fixed-width table of report rows."""
    header = ("pair", "system", "BLEU", "NIST", "TER")
    rows = [header] + [r.row() for r in reports]
    widths = [max(len(row[c]) for row in rows) for c in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)
