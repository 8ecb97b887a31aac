"""Hot numeric kernels with numba and pure-numpy implementations.

Two inner loops dominate runtime: the Model 1 EM expectation pass (word
and character alignment training) and the word-level edit-distance DP
(TER, once per candidate shift). Both are provided as an ``@njit`` kernel
and an equivalent vectorized-numpy fallback.

Backend selection: the environment variable ``SMTKIT_NUMBA`` ("0"/"false"
disables numba) is read at import time; numpy is also used automatically
when numba is not importable. Both variants are exported so tests and
``benchmarks/bench_kernels.py`` can compare them directly.
"""

import os

import numpy as np

_flag = os.environ.get("SMTKIT_NUMBA", "1").strip().lower()
_want_numba = _flag not in ("0", "false", "no", "off")

if _want_numba:
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA


# ---------------------------------------------------------------------------
# Model 1 EM expectation pass.
#
# The corpus is pre-encoded once (see align.encode_corpus) into flat arrays:
#   cells        int32[n_cells]   index into the t-parameter vector for every
#                                 (source word, target word) cell, laid out
#                                 block by block
#   block_starts int64[n_blocks]  start offset of each block in `cells`;
#                                 one block per (sentence, target position),
#                                 covering that sentence's source words
#   block_sizes  int32[n_blocks]  length of each block (source length)
#
# A pass accumulates fractional counts into `counts` (same length as
# `t_val`, caller-zeroed) and returns the corpus log-likelihood under the
# *current* parameters, including the uniform 1/(l+1) alignment term.
# ---------------------------------------------------------------------------


def em_expectation_numpy(cells, block_starts, block_sizes, t_val, counts):
    tv = t_val[cells]
    denom = np.add.reduceat(tv, block_starts)
    weights = tv / np.repeat(denom, block_sizes)
    counts += np.bincount(cells, weights=weights, minlength=t_val.size)
    return float(np.log(denom).sum() - np.log(block_sizes).sum())


def _em_expectation_py(cells, block_starts, block_sizes, t_val, counts):
    ll = 0.0
    for b in range(block_starts.size):
        base = block_starts[b]
        n = block_sizes[b]
        denom = 0.0
        for i in range(n):
            denom += t_val[cells[base + i]]
        inv = 1.0 / denom
        for i in range(n):
            k = cells[base + i]
            counts[k] += t_val[k] * inv
        ll += np.log(denom) - np.log(n)
    return ll


if HAVE_NUMBA:
    em_expectation_numba = njit(cache=True, nogil=True)(_em_expectation_py)
else:
    em_expectation_numba = None


def em_expectation(cells, block_starts, block_sizes, t_val, counts):
    """One EM expectation pass; dispatches to the selected backend."""
    if USE_NUMBA:
        return em_expectation_numba(cells, block_starts, block_sizes, t_val, counts)
    return em_expectation_numpy(cells, block_starts, block_sizes, t_val, counts)


# ---------------------------------------------------------------------------
# Word-level Levenshtein distance over int32 id sequences.
#
# Unit costs for insert/delete/substitute. The numpy variant runs the DP
# row-wise; the within-row insertion dependency is restored with the
# cumulative-minimum trick on (row - column index).
# ---------------------------------------------------------------------------


def edit_distance_numpy(a, b):
    if a.size == 0:
        return int(b.size)
    if b.size == 0:
        return int(a.size)
    cols = np.arange(b.size + 1, dtype=np.int64)
    prev = cols.copy()
    cur = np.empty_like(prev)
    for i in range(a.size):
        cur[0] = i + 1
        cur[1:] = np.minimum(prev[1:] + 1, prev[:-1] + (b != a[i]))
        # enforce cur[j] <= cur[j-1] + 1 in one vectorized pass
        d = np.minimum.accumulate(cur - cols)
        cur = d + cols
        prev, cur = cur, prev
    return int(prev[-1])


def _edit_distance_py(a, b):
    la = a.size
    lb = b.size
    if la == 0:
        return lb
    if lb == 0:
        return la
    prev = np.arange(lb + 1)
    cur = np.zeros(lb + 1, dtype=np.int64)
    for i in range(la):
        cur[0] = i + 1
        ai = a[i]
        for j in range(1, lb + 1):
            cost = 0 if b[j - 1] == ai else 1
            best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            if prev[j - 1] + cost < best:
                best = prev[j - 1] + cost
            cur[j] = best
        prev, cur = cur, prev
    return int(prev[lb])


if HAVE_NUMBA:
    edit_distance_numba = njit(cache=True, nogil=True)(_edit_distance_py)
else:
    edit_distance_numba = None


def edit_distance(a, b):
    """Levenshtein distance between two int32 arrays."""
    if USE_NUMBA:
        return int(edit_distance_numba(a, b))
    return edit_distance_numpy(a, b)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
