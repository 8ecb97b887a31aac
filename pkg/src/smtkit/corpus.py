"""Corpus ingestion, cleaning, tokenization, manifests and vocabularies.

Corpus files are UTF-8 plain text, LF line endings, one sentence per line.
Manifests (and experiment configs, which share the grammar) are
line-oriented ``key = value`` files with optional ``[section]`` headers
and ``#`` comments.
"""

import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field

from .errors import ConfigError, ParseError, SmtError

log = logging.getLogger(__name__)

SCRIPT_PROFILES = ("latin", "indic")
DANDA = "।"
_TERMINAL_PUNCT = {
    "latin": ".!?,;:",
    "indic": ".!?,;:" + DANDA + "॥",
}

DOMAINS = ("health", "tourism", "general")
SPLITS = ("train-tm", "train-lm", "test1", "test2")


class CorpusError(SmtError):
    pass


@dataclass(frozen=True)
class SentencePair:
    source: tuple
    target: tuple
    pair_id: int


@dataclass
class CorpusManifest:
    language_pair: tuple
    domain: str
    split: str
    source: str
    target: str = ""
    line_count: int = -1

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r} (expected one of {DOMAINS})")
        if self.split not in SPLITS:
            raise ConfigError(f"unknown split {self.split!r} (expected one of {SPLITS})")

    @property
    def is_dev(self):
        # test1 doubles as the tuning/development split
        return self.split == "test1"


@dataclass
class Vocabulary:
    counts: Counter = field(default_factory=Counter)
    total_tokens: int = 0

    def __contains__(self, token):
        return token in self.counts

    def __getitem__(self, token):
        return self.counts.get(token, 0)

    def __len__(self):
        return len(self.counts)

    def add(self, tokens):
        self.counts.update(tokens)
        self.total_tokens += len(tokens)

    def merge(self, other):
        self.counts.update(other.counts)
        self.total_tokens += other.total_tokens


class ParallelCorpus:
    """Aligned sentence pairs plus the verbatim input lines."""

    def __init__(self, pairs, source_lines, target_lines, manifest=None):
        self.pairs = pairs
        self.source_lines = source_lines
        self.target_lines = target_lines
        self.manifest = manifest

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def token_pairs(self):
        return [(p.source, p.target) for p in self.pairs]

    def filter_long(self, limit=80):
        """Drop pairs with either side longer than `limit` tokens.

        Returns (filtered corpus, list of dropped pair ids). Intended for
        TM training only; the verbatim lines of survivors are kept.
        """
        kept, src, tgt, dropped = [], [], [], []
        for p in self.pairs:
            if len(p.source) > limit or len(p.target) > limit:
                dropped.append(p.pair_id)
                continue
            kept.append(p)
            src.append(self.source_lines[p.pair_id])
            tgt.append(self.target_lines[p.pair_id])
        if dropped:
            log.info("dropped %d pairs longer than %d tokens: ids %s",
                     len(dropped), limit, dropped[:20])
        return ParallelCorpus(kept, src, tgt, self.manifest), dropped


def read_lines(path):
    """Read UTF-8 lines without trailing newlines; decode errors carry the line number."""
    lines = []
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                text = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CorpusError(f"{path}: undecodable UTF-8 at line {lineno}: {exc}") from None
            lines.append(text.rstrip("\n").rstrip("\r"))
    return lines


def write_lines(lines, path):
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def tokenize(line, script_profile="latin"):
    """Split on Unicode whitespace, detaching trailing punctuation.

    Terminal punctuation (and the Devanagari danda under the "indic"
    profile) is emitted as separate tokens; empty tokens are never
    produced.
    """
    if script_profile not in SCRIPT_PROFILES:
        raise ConfigError(f"unknown script profile {script_profile!r}")
    punct = _TERMINAL_PUNCT[script_profile]
    out = []
    for word in line.split():
        tail = []
        while len(word) > 1 and word[-1] in punct:
            tail.append(word[-1])
            word = word[:-1]
        out.append(word)
        out.extend(reversed(tail))
    return out


def clean_monolingual(lines):
    """Remove literal <s> and </s> tokens; drop lines left empty.

    Lines without the markers pass through byte-identical; on lines that
    do carry them, whitespace between the surviving tokens is normalized
    to single spaces. Idempotent.
    """
    cleaned = []
    for line in lines:
        if "<s>" not in line and "</s>" not in line:
            if line.strip():
                cleaned.append(line)
            continue
        kept = [t for t in line.split() if t not in ("<s>", "</s>")]
        if kept:
            cleaned.append(" ".join(kept))
    return cleaned


def build_vocabulary(corpus_side):
    """Count tokens over an iterable of token sequences."""
    vocab = Vocabulary()
    for tokens in corpus_side:
        vocab.add(tokens)
    return vocab


def load_parallel(source_path, target_path, manifest=None, script_profile="latin",
                  assume_tokenized=False):
    """Zip two one-sentence-per-line files into a ParallelCorpus.

    Raises CorpusError when line counts differ or on undecodable input.
    Pairs where either side is empty after tokenization are kept out of
    `pairs` but their verbatim lines are preserved.
    """
    src_lines = read_lines(source_path)
    tgt_lines = read_lines(target_path)
    if len(src_lines) != len(tgt_lines):
        raise CorpusError(
            f"line-count mismatch between {source_path} and {target_path}: "
            f"{len(src_lines)} vs {len(tgt_lines)}")
    if manifest is not None and manifest.line_count >= 0 and manifest.line_count != len(src_lines):
        raise CorpusError(
            f"manifest declares {manifest.line_count} lines but {source_path} "
            f"has {len(src_lines)}")
    pairs = []
    for i, (s, t) in enumerate(zip(src_lines, tgt_lines)):
        if assume_tokenized:
            stoks, ttoks = s.split(), t.split()
        else:
            stoks = tokenize(s, script_profile)
            ttoks = tokenize(t, script_profile)
        if not stoks or not ttoks:
            log.warning("pair %d has an empty side after tokenization; skipped", i)
            continue
        pairs.append(SentencePair(tuple(stoks), tuple(ttoks), i))
    return ParallelCorpus(pairs, src_lines, tgt_lines, manifest)


def normalize_nfc(line):
    return unicodedata.normalize("NFC", line)


# ---------------------------------------------------------------------------
# key = value files (corpus manifests and experiment configs)
# ---------------------------------------------------------------------------


def read_kv_file(path):
    """Parse a `key = value` file into {section: {key: value}}.

    Keys before any [section] header land in section "". `#` starts a
    comment; blank lines are ignored.
    """
    sections = {"": {}}
    current = ""
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                sections.setdefault(current, {})
                continue
            if "=" not in line:
                raise ParseError("expected 'key = value'", path=path, line=lineno)
            key, value = line.split("=", 1)
            sections[current][key.strip()] = value.strip()
    return sections


def write_kv_file(sections, path):
    with open(path, "w", encoding="utf-8") as fh:
        for section in sections:
            if section:
                fh.write(f"[{section}]\n")
            for key, value in sections[section].items():
                fh.write(f"{key} = {value}\n")


def load_manifest(path):
    kv = read_kv_file(path).get("", {})
    required = ("pair", "domain", "split", "source")
    missing = [k for k in required if k not in kv]
    if missing:
        raise ConfigError(f"{path}: manifest missing keys {missing}")
    pair = tuple(kv["pair"].replace("->", "-").split("-"))
    if len(pair) != 2:
        raise ConfigError(f"{path}: pair must be 'src-tgt', got {kv['pair']!r}")
    return CorpusManifest(
        language_pair=pair,
        domain=kv["domain"],
        split=kv["split"],
        source=kv["source"],
        target=kv.get("target", ""),
        line_count=int(kv.get("lines", -1)),
    )
