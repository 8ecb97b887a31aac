"""Order-k n-gram language modeling with interpolated modified Kneser-Ney.

Pipeline: count_ngrams -> estimate_mkn -> ARPA text and/or compact binary.
Counting pads each sentence with a single begin symbol and an end symbol
and streams line by line, so memory tracks distinct n-grams rather than
corpus size. Estimation uses the three-discount formulation: per order,

    Y   = n1 / (n1 + 2 n2)
    D1  = 1 - 2 Y n2 / n1
    D2  = 2 - 3 Y n3 / n2
    D3+ = 3 - 4 Y n4 / n3

computed from the count-of-adjusted-count statistics n1..n4. Lower
orders use continuation counts (number of distinct left extensions);
n-grams starting with the begin symbol keep raw counts since nothing can
precede them. Degenerate statistics fall back to a single discount
Y = n1/(n1+2 n2), and to an absolute discount of 0.5 when that is also
unusable; fallbacks are logged.

Probabilities and backoff weights are stored base-10 (the ARPA
convention). The unknown word receives exactly the unigram interpolation
mass of a zero-count word: p(unk) = gamma(empty context) / |V| with V the
predictable vocabulary (seen words, the end symbol, and unk itself). The
begin symbol is never predicted; it is written with log10 p = -99.

ARPA layout: a ``\\data\\`` header of ``ngram N=count`` lines, per-order
``\\N-grams:`` sections of ``log10prob<TAB>ngram[<TAB>log10backoff]``,
then ``\\end\\``.

Binary layout (little-endian, magic ``MSLM1``):
    magic           5 bytes  b"MSLM1"
    version         u8       1
    order           u32
    entry counts    u64 * order
    vocab size      u32
    vocab blob      u32 length + UTF-8 bytes per word, sorted; the word
                    id is its position in this list
    per order n (1..k), entries sorted by (parent index, word id):
        word_id     u32[count_n]
        logp        f64[count_n]
        backoff     f64[count_n]        (orders < k only; 0.0 when absent)
        child_start u32[count_n + 1]    (orders < k: range into order n+1)
Values are stored unquantized, so queries agree exactly with the
dict-backed model the file was built from. Loading memory-maps the file
and exposes read-only array views.
"""

import logging
import math
import struct
from collections import defaultdict

import mmap

import numpy as np

from .errors import ParseError, SmtError

log = logging.getLogger(__name__)

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
DEFAULT_ORDER = 5
_LOG10_BOS = -99.0
_MAGIC = b"MSLM1"
_VERSION = 1


class LmError(SmtError):
    pass


class CountTable:
    """Raw and adjusted (continuation) counts per order, 1..k."""

    def __init__(self, order):
        if order < 1:
            raise LmError(f"order must be >= 1, got {order}")
        self.order = order
        self.raw = [defaultdict(int) for _ in range(order)]
        self.adjusted = [None] * order

    def add_sentence(self, tokens):
        padded = (BOS,) + tuple(tokens) + (EOS,)
        for n in range(1, self.order + 1):
            table = self.raw[n - 1]
            for i in range(len(padded) - n + 1):
                table[padded[i:i + n]] += 1

    def finalize(self):
        """Derive adjusted counts: continuation counts below the top
        order, raw counts at the top order and for begin-symbol-initial
        n-grams."""
        k = self.order
        for n in range(1, k + 1):
            if n == k:
                self.adjusted[n - 1] = dict(self.raw[n - 1])
                continue
            continuation = defaultdict(int)
            for gram in self.raw[n]:
                continuation[gram[1:]] += 1
            adj = {}
            for gram, count in self.raw[n - 1].items():
                if gram[0] == BOS:
                    adj[gram] = count
                else:
                    adj[gram] = continuation.get(gram, 0)
            self.adjusted[n - 1] = adj
        return self

    def count_of_counts(self, n):
        """(n1, n2, n3, n4) over adjusted counts at order n; the lone
        begin-symbol unigram is not an estimation event."""
        stats = [0, 0, 0, 0]
        for gram, count in self.adjusted[n - 1].items():
            if n == 1 and gram[0] == BOS:
                continue
            if 1 <= count <= 4:
                stats[count - 1] += 1
        return tuple(stats)


def count_ngrams(lines, order=DEFAULT_ORDER):
    """Count padded n-grams of every order from an iterable of lines
    (strings or pre-split token sequences)."""
    table = CountTable(order)
    for line in lines:
        tokens = line.split() if isinstance(line, str) else list(line)
        if tokens:
            table.add_sentence(tokens)
    return table.finalize()


def _discounts(cocs, order_n):
    """Per-order discounts for adjusted counts 1, 2, and 3+, plus the
    scheme used ("mkn", "kn", or "abs")."""
    n1, n2, n3, n4 = cocs
    if n1 > 0 and n2 > 0 and n3 > 0 and n4 > 0:
        y = n1 / (n1 + 2.0 * n2)
        d1 = 1.0 - 2.0 * y * n2 / n1
        d2 = 2.0 - 3.0 * y * n3 / n2
        d3 = 3.0 - 4.0 * y * n4 / n3
        if 0.0 <= d1 <= 1.0 and 0.0 <= d2 <= 2.0 and 0.0 <= d3 <= 3.0:
            return (d1, d2, d3), "mkn"
    if n1 > 0 and n2 > 0:
        d = n1 / (n1 + 2.0 * n2)
        log.warning("order %d: degenerate count-of-counts %s; using single "
                    "Kneser-Ney discount %.4f", order_n, cocs, d)
        return (d, d, d), "kn"
    log.warning("order %d: count-of-counts %s unusable; using absolute "
                "discount 0.5", order_n, cocs)
    return (0.5, 0.5, 0.5), "abs"


def _discount_for(count, d123):
    if count >= 3:
        return d123[2]
    return d123[count - 1]


class NgramModel:
    """Backoff model: per order, ngram -> (log10 prob, log10 backoff|None)."""

    def __init__(self, order, tables, discounts=None):
        self.order = order
        self.tables = tables  # list of dicts, index 0 = unigrams
        self.discounts = discounts or {}
        self.vocab = sorted(w for (w,) in tables[0])

    @property
    def predicted_vocab(self):
        """Words the model assigns probability to (begin symbol excluded)."""
        return [w for w in self.vocab if w != BOS]

    def lookup(self, gram):
        n = len(gram)
        if n > self.order:
            return None
        return self.tables[n - 1].get(tuple(gram))

    def logprob(self, context, word):
        """Backed-off log10 p(word | context); unknown words fall back to
        the unk symbol."""
        context = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        while True:
            entry = self.tables[len(context)].get(context + (word,))
            if entry is not None:
                return entry[0]
            if not context:
                unk = self.tables[0].get((UNK,))
                if unk is None:
                    raise LmError("closed-vocabulary model has no <unk> entry")
                return unk[0]
            bo = self.tables[len(context) - 1].get(context)
            backoff = bo[1] if bo is not None and bo[1] is not None else 0.0
            return backoff + self.logprob(context[1:], word)

    def score(self, state, word):
        """(log10 prob, next state); the state is the usable context."""
        lp = self.logprob(state, word)
        return lp, self.next_state(state, word)

    def next_state(self, state, word):
        cand = (tuple(state) + (word,))[-(self.order - 1):] if self.order > 1 else ()
        while cand and cand not in self.tables[len(cand) - 1]:
            cand = cand[1:]
        return cand

    def begin_state(self):
        return (BOS,) if self.order > 1 and (BOS,) in self.tables[0] else ()

    def sentence_logprob(self, tokens):
        """Chained log10 probability of tokens plus the end symbol."""
        state = self.begin_state()
        total = 0.0
        for word in tuple(tokens) + (EOS,):
            lp, state = self.score(state, word)
            total += lp
        return total


def estimate_mkn(counts):
    """Estimate an interpolated modified Kneser-Ney model from counts."""
    k = counts.order
    if not counts.adjusted[0]:
        raise LmError("cannot estimate a model from empty counts")
    d123 = {}
    schemes = {}
    for n in range(1, k + 1):
        if not counts.adjusted[n - 1]:
            d123[n] = (0.5, 0.5, 0.5)
            schemes[n] = "abs"
            continue
        d123[n], schemes[n] = _discounts(counts.count_of_counts(n), n)

    tables = [dict() for _ in range(k)]

    # context -> (denominator, N1, N2, N3+) per order
    def context_stats(n):
        stats = defaultdict(lambda: [0.0, 0, 0, 0])
        for gram, count in counts.adjusted[n - 1].items():
            if n == 1 and gram[0] == BOS:
                continue
            ctx = gram[:-1]
            s = stats[ctx]
            s[0] += count
            if count == 1:
                s[1] += 1
            elif count == 2:
                s[2] += 1
            else:
                s[3] += 1
        return stats

    # unigrams: interpolate with the uniform distribution over the
    # predictable vocabulary (seen words except BOS, plus UNK)
    uni_stats = context_stats(1)[()]
    denom, c1, c2, c3 = uni_stats
    d = d123[1]
    gamma1 = (d[0] * c1 + d[1] * c2 + d[2] * c3) / denom
    vocab_size = sum(1 for (w,) in counts.adjusted[0] if w != BOS) + 1  # + UNK
    uniform = 1.0 / vocab_size
    probs1 = {}
    for (w,), count in counts.adjusted[0].items():
        if w == BOS:
            continue
        u = (count - _discount_for(count, d)) / denom
        probs1[(w,)] = u + gamma1 * uniform
    probs1[(UNK,)] = gamma1 * uniform

    for gram, p in probs1.items():
        tables[0][gram] = [math.log10(p), None]
    if (BOS,) in counts.adjusted[0]:
        tables[0][(BOS,)] = [_LOG10_BOS, None]

    # higher orders, bottom-up so lower-order probs are available
    prob_cache = {g: p for g, p in probs1.items()}
    for n in range(2, k + 1):
        stats = context_stats(n)
        d = d123[n]
        new_probs = {}
        for gram, count in sorted(counts.adjusted[n - 1].items()):
            ctx = gram[:-1]
            denom, c1, c2, c3 = stats[ctx]
            u = (count - _discount_for(count, d)) / denom
            gamma = (d[0] * c1 + d[1] * c2 + d[2] * c3) / denom
            lower = prob_cache.get(gram[1:])
            if lower is None:
                # suffix must exist by prefix closure; UNK guard regardless
                lower = probs1[(UNK,)]
            p = u + gamma * lower
            new_probs[gram] = p
            tables[n - 1][gram] = [math.log10(p), None]
        # store backoff weights on the (n-1)-gram context entries
        for ctx, (denom, c1, c2, c3) in stats.items():
            gamma = (d[0] * c1 + d[1] * c2 + d[2] * c3) / denom
            entry = tables[n - 2].get(ctx)
            if entry is None:
                # context exists in counts by prefix closure but may be
                # the BOS unigram, which is stored with the sentinel prob
                tables[n - 2][ctx] = [_LOG10_BOS, math.log10(gamma)]
            else:
                entry[1] = math.log10(gamma)
        prob_cache = new_probs

    tables = [{g: (v[0], v[1]) for g, v in tbl.items()} for tbl in tables]
    model = NgramModel(k, tables, discounts={n: d123[n] for n in d123})
    model.discount_schemes = schemes
    return model


def perplexity(model, lines):
    """10 ** (mean negative log10 probability per scored token, end
    symbols included)."""
    total = 0.0
    count = 0
    for line in lines:
        tokens = line.split() if isinstance(line, str) else list(line)
        if not tokens:
            continue
        total += model.sentence_logprob(tokens)
        count += len(tokens) + 1
    if count == 0:
        raise LmError("perplexity of an empty corpus is undefined")
    return 10.0 ** (-total / count)


# ---------------------------------------------------------------------------
# ARPA
# ---------------------------------------------------------------------------


def write_arpa(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\\data\\\n")
        for n in range(1, model.order + 1):
            fh.write(f"ngram {n}={len(model.tables[n - 1])}\n")
        for n in range(1, model.order + 1):
            fh.write(f"\n\\{n}-grams:\n")
            for gram in sorted(model.tables[n - 1]):
                logp, bo = model.tables[n - 1][gram]
                line = f"{logp:.6f}\t{' '.join(gram)}"
                if bo is not None:
                    line += f"\t{bo:.6f}"
                fh.write(line + "\n")
        fh.write("\n\\end\\\n")


def read_arpa(path):
    declared = {}
    tables = []
    order = 0
    section = None
    seen_data = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line == "\\data\\":
                seen_data = True
                continue
            if line == "\\end\\":
                section = "end"
                continue
            if not seen_data:
                raise ParseError("missing \\data\\ header", path=path, line=lineno)
            if line.startswith("ngram "):
                try:
                    spec_n, spec_count = line[len("ngram "):].split("=")
                    declared[int(spec_n)] = int(spec_count)
                except ValueError:
                    raise ParseError(f"bad count declaration {line!r}",
                                     path=path, line=lineno) from None
                continue
            if line.endswith("-grams:") and line.startswith("\\"):
                n = int(line[1:].split("-")[0])
                if n != len(tables) + 1:
                    raise ParseError(
                        f"section \\{n}-grams: out of order (expected "
                        f"\\{len(tables) + 1}-grams:)", path=path, line=lineno)
                tables.append({})
                order = n
                section = n
                continue
            if section is None or section == "end":
                raise ParseError(f"unexpected line {line!r}", path=path, line=lineno)
            fields = raw.rstrip("\n").split("\t")
            if len(fields) == 2:
                logp, gram_text = fields
                bo = None
            elif len(fields) == 3:
                logp, gram_text, bo = fields
            else:
                raise ParseError(f"expected 2 or 3 tab-separated fields, got "
                                 f"{len(fields)}", path=path, line=lineno)
            gram = tuple(gram_text.split())
            if len(gram) != section:
                raise ParseError(
                    f"{len(gram)}-gram in \\{section}-grams: section",
                    path=path, line=lineno)
            try:
                tables[-1][gram] = (float(logp), float(bo) if bo is not None else None)
            except ValueError:
                raise ParseError("non-numeric probability", path=path,
                                 line=lineno) from None
    if not seen_data:
        raise ParseError("missing \\data\\ header", path=path)
    for n in range(1, order + 1):
        if declared.get(n) is not None and declared[n] != len(tables[n - 1]):
            raise ParseError(
                f"section \\{n}-grams: declares {declared[n]} entries but "
                f"lists {len(tables[n - 1])}", path=path)
    if order == 0:
        raise ParseError("no n-gram sections", path=path)
    return NgramModel(order, tables)


# ---------------------------------------------------------------------------
# Binary backend
# ---------------------------------------------------------------------------


def binarize(model, path):
    """Write the sorted-array trie binary image of a model."""
    vocab = sorted({w for tbl in model.tables for g in tbl for w in g})
    word_id = {w: i for i, w in enumerate(vocab)}

    # entry layout per order: sorted by (parent index, word id); parents
    # exist for every entry because prefixes of stored n-grams are stored
    index_of = [{} for _ in range(model.order)]
    arrays = []
    for n in range(1, model.order + 1):
        table = model.tables[n - 1]
        rows = []
        for gram, (logp, bo) in table.items():
            parent = 0 if n == 1 else index_of[n - 2][gram[:-1]]
            rows.append((parent, word_id[gram[-1]], logp,
                         bo if bo is not None else 0.0, gram))
        rows.sort(key=lambda r: (r[0], r[1]))
        for pos, row in enumerate(rows):
            index_of[n - 1][row[4]] = pos
        arrays.append(rows)

    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BI", _VERSION, model.order))
        for rows in arrays:
            fh.write(struct.pack("<Q", len(rows)))
        fh.write(struct.pack("<I", len(vocab)))
        for w in vocab:
            blob = w.encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
        for n, rows in enumerate(arrays, start=1):
            wid = np.array([r[1] for r in rows], dtype=np.uint32)
            logp = np.array([r[2] for r in rows], dtype=np.float64)
            fh.write(wid.tobytes())
            fh.write(logp.tobytes())
            if n < model.order:
                bo = np.array([r[3] for r in rows], dtype=np.float64)
                fh.write(bo.tobytes())
                parents = np.array([r[0] for r in arrays[n]], dtype=np.int64)
                child_start = np.searchsorted(
                    parents, np.arange(len(rows) + 1)).astype(np.uint32)
                fh.write(child_start.tobytes())
    return path


class BinaryNgramModel:
    """Read-only, memory-mapped query backend with the NgramModel duck
    interface (lookup/logprob/score/next_state/begin_state/...)."""

    def __init__(self, path):
        self._fh = open(path, "rb")
        try:
            self._mm = mmap.mmap(self._fh.fileno(), 0, access=mmap.ACCESS_READ)
        except ValueError:
            self._fh.close()
            raise LmError(f"{path}: empty or truncated binary model") from None
        buf = memoryview(self._mm)
        if len(buf) < len(_MAGIC) + 5:
            raise LmError(f"{path}: truncated header")
        if bytes(buf[:5]) != _MAGIC:
            raise LmError(f"{path}: bad magic {bytes(buf[:5])!r} (expected {_MAGIC!r})")
        version, order = struct.unpack_from("<BI", buf, 5)
        if version != _VERSION:
            raise LmError(f"{path}: unsupported version {version}")
        self.order = order
        off = 10
        counts = []
        for _ in range(order):
            counts.append(struct.unpack_from("<Q", buf, off)[0])
            off += 8
        (nvocab,) = struct.unpack_from("<I", buf, off)
        off += 4
        vocab = []
        for _ in range(nvocab):
            (blen,) = struct.unpack_from("<I", buf, off)
            off += 4
            vocab.append(bytes(buf[off:off + blen]).decode("utf-8"))
            off += blen
        self.vocab_words = vocab
        self.word_id = {w: i for i, w in enumerate(vocab)}
        self.wid = []
        self.logp = []
        self.bo = []
        self.child_start = []
        for n in range(1, order + 1):
            cnt = counts[n - 1]
            need = cnt * (4 + 8)
            if n < order:
                need += 8 * cnt + 4 * (cnt + 1)
            if off + need > len(buf):
                raise LmError(f"{path}: truncated order-{n} section")
            self.wid.append(np.frombuffer(buf, dtype=np.uint32, count=cnt, offset=off))
            off += 4 * cnt
            self.logp.append(np.frombuffer(buf, dtype=np.float64, count=cnt, offset=off))
            off += 8 * cnt
            if n < order:
                self.bo.append(np.frombuffer(buf, dtype=np.float64, count=cnt, offset=off))
                off += 8 * cnt
                self.child_start.append(
                    np.frombuffer(buf, dtype=np.uint32, count=cnt + 1, offset=off))
                off += 4 * (cnt + 1)
            else:
                self.bo.append(None)
                self.child_start.append(None)

    def close(self):
        self._mm.close()
        self._fh.close()

    @property
    def vocab(self):
        return list(self.vocab_words)

    @property
    def predicted_vocab(self):
        return [w for w in self.vocab_words if w != BOS]

    def _find(self, gram):
        """Entry (order index, position) of an exact n-gram, or None."""
        ids = []
        for w in gram:
            wid = self.word_id.get(w)
            if wid is None:
                return None
            ids.append(wid)
        pos = None
        for n, wid in enumerate(ids, start=1):
            if n == 1:
                lo, hi = 0, len(self.wid[0])
            else:
                starts = self.child_start[n - 2]
                lo, hi = int(starts[pos]), int(starts[pos + 1])
            arr = self.wid[n - 1]
            at = lo + int(np.searchsorted(arr[lo:hi], np.uint32(wid)))
            if at >= hi or arr[at] != wid:
                return None
            pos = at
        return len(ids), pos

    def lookup(self, gram):
        hit = self._find(tuple(gram))
        if hit is None:
            return None
        n, pos = hit
        if n == self.order:
            return (float(self.logp[n - 1][pos]), None)
        return (float(self.logp[n - 1][pos]), float(self.bo[n - 1][pos]))

    def logprob(self, context, word):
        context = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        while True:
            hit = self._find(context + (word,))
            if hit is not None:
                n, pos = hit
                return float(self.logp[n - 1][pos])
            if not context:
                unk = self._find((UNK,))
                if unk is None:
                    raise LmError("binary model has no <unk> entry")
                return float(self.logp[0][unk[1]])
            ctx_hit = self._find(context)
            backoff = float(self.bo[len(context) - 1][ctx_hit[1]]) if ctx_hit else 0.0
            return backoff + self.logprob(context[1:], word)

    def score(self, state, word):
        return self.logprob(state, word), self.next_state(state, word)

    def next_state(self, state, word):
        cand = (tuple(state) + (word,))[-(self.order - 1):] if self.order > 1 else ()
        while cand and self._find(cand) is None:
            cand = cand[1:]
        return cand

    def begin_state(self):
        return (BOS,) if self.order > 1 and self._find((BOS,)) else ()

    def sentence_logprob(self, tokens):
        state = self.begin_state()
        total = 0.0
        for word in tuple(tokens) + (EOS,):
            lp, state = self.score(state, word)
            total += lp
        return total


def load_binary(path):
    return BinaryNgramModel(path)


def load_model(path):
    """Open either backend by sniffing the magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(5)
    if head == _MAGIC:
        return load_binary(path)
    return read_arpa(path)
