"""Source-side morphological preprocessing and lightweight stemming.

Four per-token/per-sentence transforms, all pure over immutable rule
sets: suffix separation (detach one inflectional suffix as a marked
token), corpus-driven two-part compound splitting, pattern-based
preordering, and longest-suffix-strip stemming.

Rule file formats:
  suffix / stemmer rules   one rule per line: ``suffix<TAB>min_stem_len``
  preorder rules           ``CLASS1 CLASS2 ... -> i j k`` per line
  token-class annotations  parallel to the corpus, one class sequence per line
`#` starts a comment in all of them.
"""

import logging
import math
from dataclasses import dataclass, field

from .corpus import build_vocabulary
from .errors import ConfigError

log = logging.getLogger(__name__)

DEFAULT_MARKER = "+"


@dataclass
class SuffixRuleSet:
    language: str
    rules: list  # (suffix, min_stem_len), sorted by descending suffix length
    marker: str = DEFAULT_MARKER

    def __post_init__(self):
        for suffix, min_stem in self.rules:
            if not suffix:
                raise ConfigError("empty suffix in rule set")
            if min_stem < 2:
                raise ConfigError(f"min stem length {min_stem} < 2 for suffix {suffix!r}")
        self.rules = sorted(self.rules, key=lambda r: (-len(r[0]), r[0]))


@dataclass
class StemmerProfile:
    """Same shape as a SuffixRuleSet; stripping instead of detaching."""
    language: str
    rules: list

    def __post_init__(self):
        self.rules = sorted(self.rules, key=lambda r: (-len(r[0]), r[0]))


@dataclass
class SplitDecision:
    word: str
    parts: list
    kind: str  # suffix | compound | none
    score: float = 0.0


@dataclass
class PreorderRule:
    pattern: tuple  # class labels
    permutation: tuple  # indices into pattern

    def __post_init__(self):
        if sorted(self.permutation) != list(range(len(self.pattern))):
            raise ConfigError(
                f"rule '{' '.join(self.pattern)} -> "
                f"{' '.join(map(str, self.permutation))}': permutation is not a "
                f"bijection on pattern indices")


def load_suffix_rules(path, language="", marker=DEFAULT_MARKER):
    rules = _read_rule_lines(path)
    return SuffixRuleSet(language, rules, marker)


def load_stemmer(path, language=""):
    return StemmerProfile(language, _read_rule_lines(path))


def _read_rule_lines(path):
    rules = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) == 1:
                fields = line.split()
            if len(fields) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'suffix<TAB>min_stem_len'")
            try:
                rules.append((fields[0], int(fields[1])))
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad min stem length {fields[1]!r}") from None
    return rules


def load_preorder_rules(path):
    rules = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "->" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'CLASSES -> indices'")
            lhs, rhs = line.split("->", 1)
            pattern = tuple(lhs.split())
            try:
                perm = tuple(int(x) for x in rhs.split())
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-integer permutation") from None
            try:
                rules.append(PreorderRule(pattern, perm))
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return rules


def separate_suffix(word, ruleset):
    """Detach the longest matching suffix as a marker-prefixed token.

    A rule (suffix, min_stem) matches when stripping leaves at least
    min_stem characters. At most one suffix is detached.
    """
    for suffix, min_stem in ruleset.rules:
        if word.endswith(suffix) and len(word) - len(suffix) >= min_stem:
            stem = word[:-len(suffix)]
            return SplitDecision(word, [stem, ruleset.marker + suffix], "suffix")
    return SplitDecision(word, [word], "none")


def join_suffix(parts, marker=DEFAULT_MARKER):
    """Inverse of separate_suffix: concatenate after removing the marker."""
    out = parts[0]
    for part in parts[1:]:
        out += part[len(marker):] if part.startswith(marker) else part
    return out


def split_compound(word, vocabulary, min_part_len=3, min_freq=2):
    """Two-part split maximizing the geometric mean of part frequencies.

    Splits only when that mean strictly exceeds the whole word's own
    frequency; ties (including among equal-scoring split points, resolved
    toward the leftmost) go to not splitting.
    """
    best = None  # (gm, split_point)
    for cut in range(min_part_len, len(word) - min_part_len + 1):
        left, right = word[:cut], word[cut:]
        fl, fr = vocabulary[left], vocabulary[right]
        if fl < min_freq or fr < min_freq:
            continue
        gm = math.sqrt(fl * fr)
        if best is None or gm > best[0]:
            best = (gm, cut)
    if best is not None and best[0] > vocabulary[word]:
        gm, cut = best
        return SplitDecision(word, [word[:cut], word[cut:]], "compound", gm)
    return SplitDecision(word, [word], "none")


def stem(word, profile):
    """Strip the single longest listed suffix leaving enough stem."""
    for suffix, min_stem in profile.rules:
        if word.endswith(suffix) and len(word) - len(suffix) >= min_stem:
            return word[:-len(suffix)]
    return word


def preorder(sentence, token_classes, rules):
    """Permute leftmost-longest non-overlapping pattern matches.

    `token_classes` is a parallel sequence of class labels. The token
    multiset is preserved; an empty rule set is the identity.
    """
    if len(token_classes) != len(sentence):
        raise ConfigError(
            f"class annotation length {len(token_classes)} != sentence length {len(sentence)}")
    if not rules:
        return list(sentence)
    by_len = sorted(rules, key=lambda r: -len(r.pattern))
    out = []
    i = 0
    n = len(sentence)
    while i < n:
        matched = None
        for rule in by_len:
            k = len(rule.pattern)
            if i + k <= n and tuple(token_classes[i:i + k]) == rule.pattern:
                matched = rule
                break
        if matched is None:
            out.append(sentence[i])
            i += 1
        else:
            window = sentence[i:i + len(matched.pattern)]
            out.extend(window[src] for src in matched.permutation)
            i += len(matched.pattern)
    return out


@dataclass
class PreprocessConfig:
    """Which transforms to apply, in order, with their resources.

    steps is an ordered subset of {"compound", "suffix", "preorder"};
    the default order (compound then suffix) is a toolkit choice.
    """
    steps: tuple = ()
    suffix_rules: SuffixRuleSet = None
    compound_min_part_len: int = 3
    compound_min_freq: int = 2
    preorder_rules: list = field(default_factory=list)
    token_classes: dict = field(default_factory=dict)  # token -> class
    default_class: str = "X"

    def __post_init__(self):
        for step in self.steps:
            if step not in ("suffix", "compound", "preorder"):
                raise ConfigError(f"unknown preprocessing step {step!r}")
        if "suffix" in self.steps and self.suffix_rules is None:
            raise ConfigError("suffix step requested but no suffix rules given")
        if "preorder" in self.steps and not self.preorder_rules:
            raise ConfigError("preorder step requested but no preorder rules given")


def classify_tokens(tokens, config):
    return [config.token_classes.get(t, config.default_class) for t in tokens]


def apply_preprocessing(sentences, config, vocabulary=None):
    """Apply the configured transform composition to every sentence.

    Returns (new sentences, change log). The log records one
    (sentence index, original token, parts) entry per changed token and
    one (sentence index, "<preorder>", permuted sentence) entry per
    sentence reordered. Deterministic; sentence count is preserved.
    """
    if "compound" in config.steps and vocabulary is None:
        vocabulary = build_vocabulary(sentences)
    changes = []
    out = []
    for idx, tokens in enumerate(sentences):
        current = list(tokens)
        for step in config.steps:
            if step == "compound":
                expanded = []
                for tok in current:
                    decision = split_compound(tok, vocabulary,
                                              config.compound_min_part_len,
                                              config.compound_min_freq)
                    if decision.kind == "compound":
                        changes.append((idx, tok, list(decision.parts)))
                    expanded.extend(decision.parts)
                current = expanded
            elif step == "suffix":
                expanded = []
                for tok in current:
                    decision = separate_suffix(tok, config.suffix_rules)
                    if decision.kind == "suffix":
                        changes.append((idx, tok, list(decision.parts)))
                    expanded.extend(decision.parts)
                current = expanded
            elif step == "preorder":
                classes = classify_tokens(current, config)
                reordered = preorder(current, classes, config.preorder_rules)
                if reordered != current:
                    changes.append((idx, "<preorder>", list(reordered)))
                current = reordered
        out.append(current)
    return out, changes


def write_change_log(changes, path):
    with open(path, "w", encoding="utf-8") as fh:
        for idx, token, parts in changes:
            fh.write(f"{idx}\t{token}\t{' '.join(parts)}\n")
