"""Deterministic synthetic bilingual fixtures for tests and demos.

The toy world pairs an agglutinative source language (Latin-letter stems
optionally fused with one of 30 suffixes) with an isolating target
language (Greek-letter words; fused suffixes surface as separate
particle tokens). Names are transliterated through a fixed character
cipher from the source script into the target script, giving a
verifiable ground truth for mining and OOV transliteration: training
sentences carry names from one pool, test sentences from a disjoint
pool, and the extra LM text contains the cipher forms of the test names.

Everything is driven by random.Random(seed), so a given seed always
yields byte-identical corpora.
"""

import random
from dataclasses import dataclass, field
from pathlib import Path

SRC_CONSONANTS = "bdgklmnprst"
SRC_VOWELS = "aeiou"
TGT_CONSONANTS = "βγδθκλμνπρστφχ"
TGT_VOWELS = "αεηιουω"

# character cipher for transliteration: source letters -> target letters
CIPHER = dict(zip(SRC_CONSONANTS + SRC_VOWELS, "βγδθκλμνπρσ" + "αεηιο"))

N_SUFFIXES = 30


def cipher_word(word):
    return "".join(CIPHER[c] for c in word)


def _syllable(rng, consonants, vowels):
    return rng.choice(consonants) + rng.choice(vowels)


def _make_word(rng, consonants, vowels, syllables):
    return "".join(_syllable(rng, consonants, vowels) for _ in range(syllables))


@dataclass
class ToyWorld:
    seed: int
    stems: list
    suffixes: list
    stem_map: dict       # source stem -> target word
    suffix_map: dict     # source suffix -> target particle
    train_names: list
    test_names: list
    rng: random.Random = field(repr=False, default=None)


def build_world(seed=13, n_stems=120, n_train_names=80, n_test_names=40):
    rng = random.Random(seed)
    suffixes = []
    while len(suffixes) < N_SUFFIXES:
        suf = rng.choice(SRC_VOWELS) + rng.choice(SRC_CONSONANTS)
        if rng.random() < 0.4:
            suf += rng.choice(SRC_VOWELS)
        if suf not in suffixes:
            suffixes.append(suf)
    stems = []
    while len(stems) < n_stems:
        stem = _make_word(rng, SRC_CONSONANTS, SRC_VOWELS, rng.choice((2, 3)))
        # keep suffix separation unambiguous on bare stems
        if any(stem.endswith(s) for s in suffixes):
            continue
        if stem not in stems:
            stems.append(stem)
    stem_map = {}
    used = set()
    for stem in stems:
        while True:
            word = _make_word(rng, TGT_CONSONANTS, TGT_VOWELS, rng.choice((2, 3)))
            if word not in used:
                used.add(word)
                stem_map[stem] = word
                break
    suffix_map = {}
    for suf in suffixes:
        while True:
            particle = _syllable(rng, TGT_CONSONANTS, TGT_VOWELS)
            if particle not in used:
                used.add(particle)
                suffix_map[suf] = particle
                break
    names = set()
    while len(names) < n_train_names + n_test_names:
        name = _make_word(rng, SRC_CONSONANTS, SRC_VOWELS, rng.choice((2, 3, 3)))
        if name not in stems:
            names.add(name)
    names = sorted(names)
    rng.shuffle(names)
    return ToyWorld(seed, stems, suffixes, stem_map, suffix_map,
                    names[:n_train_names], names[n_train_names:], rng)


def make_sentence(world, rng, name_pool=None):
    """One (source tokens, target tokens) pair, monotone alignment."""
    length = rng.randint(3, 8)
    src, tgt = [], []
    name_at = rng.randrange(length) if name_pool else -1
    for pos in range(length):
        if pos == name_at:
            name = rng.choice(name_pool)
            src.append(name)
            tgt.append(cipher_word(name))
            continue
        stem = rng.choice(world.stems)
        if rng.random() < 0.3:
            suf = rng.choice(world.suffixes)
            src.append(stem + suf)
            tgt.append(world.stem_map[stem])
            tgt.append(world.suffix_map[suf])
        else:
            src.append(stem)
            tgt.append(world.stem_map[stem])
    return src, tgt


@dataclass
class ToyCorpus:
    world: ToyWorld
    train: list   # (src tokens, tgt tokens)
    dev: list
    test: list
    lm_extra: list  # extra target-side lines (test-name cipher forms included)


def build_corpus(seed=13, n_train=2000, n_dev=80, n_test=120,
                 name_sentence_rate=0.12):
    world = build_world(seed)
    rng = world.rng
    train = []
    for _ in range(n_train):
        pool = world.train_names if rng.random() < name_sentence_rate else None
        train.append(make_sentence(world, rng, pool))
    dev = [make_sentence(world, rng) for _ in range(n_dev)]
    test = []
    for _ in range(n_test):
        pool = world.test_names if rng.random() < 0.35 else None
        test.append(make_sentence(world, rng, pool))
    lm_extra = []
    for name in world.test_names * 4:
        sent = make_sentence(world, rng)[1]
        at = rng.randrange(len(sent) + 1)
        lm_extra.append(sent[:at] + [cipher_word(name)] + sent[at:])
    rng.shuffle(lm_extra)
    return ToyCorpus(world, train, dev, test, lm_extra)


def write_fixture(corpus, outdir):
    """Write corpus files, suffix rules, and a grid-ready layout."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    def dump(pairs, stem_name):
        with open(outdir / f"{stem_name}.src", "w", encoding="utf-8") as fs, \
                open(outdir / f"{stem_name}.tgt", "w", encoding="utf-8") as ft:
            for src, tgt in pairs:
                fs.write(" ".join(src) + "\n")
                ft.write(" ".join(tgt) + "\n")

    dump(corpus.train, "train")
    dump(corpus.dev, "dev")
    dump(corpus.test, "test")
    with open(outdir / "lm_extra.tgt", "w", encoding="utf-8") as fh:
        for tokens in corpus.lm_extra:
            fh.write(" ".join(tokens) + "\n")
    with open(outdir / "suffix.rules", "w", encoding="utf-8") as fh:
        fh.write("# suffix rules for the toy agglutinative language\n")
        for suf in sorted(corpus.world.suffixes, key=lambda s: (-len(s), s)):
            fh.write(f"{suf}\t3\n")
    return outdir


def make_cipher_pairs(seed, n_true, n_random, word_len=(4, 8)):
    """Labeled mining fixture: n_true cipher pairs and n_random unrelated
    pairs. Returns (pairs, labels) with label True for transliterations."""
    rng = random.Random(seed)
    pairs, labels = [], []
    seen = set()
    while sum(labels) < n_true:
        w = _make_word(rng, SRC_CONSONANTS, SRC_VOWELS, rng.choice((2, 3, 4)))
        if w in seen:
            continue
        seen.add(w)
        pairs.append((w, cipher_word(w)))
        labels.append(True)
    while len(labels) < n_true + n_random:
        w = _make_word(rng, SRC_CONSONANTS, SRC_VOWELS, rng.choice((2, 3, 4)))
        t = _make_word(rng, TGT_CONSONANTS, TGT_VOWELS, rng.choice((2, 3, 4)))
        if (w, t) in seen or t == cipher_word(w):
            continue
        seen.add((w, t))
        pairs.append((w, t))
        labels.append(False)
    order = list(range(len(pairs)))
    rng.shuffle(order)
    return [pairs[i] for i in order], [labels[i] for i in order]
