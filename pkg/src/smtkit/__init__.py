"""smtkit: a small phrase-based statistical machine translation toolkit.

Provides corpus handling, morphological preprocessing, IBM Model 1 word
alignment, phrase extraction and scoring, modified Kneser-Ney n-gram
language models (ARPA and binary backends), a stack-based beam decoder,
unsupervised transliteration for OOV words, BLEU/NIST/TER evaluation, and
an experiment harness tying the stages together.
"""

__version__ = "0.1.0"
