"""Pure-Python intersection kernels.

Reference implementation of the compiled ``_kernels`` extension; every
function has the same signature and returns ``(result, ops)`` where ``ops`` is
the number of element comparisons / word operations performed.
"""

from __future__ import annotations

from bisect import bisect_right

import numpy as np

BACKEND = "python"

_U32 = np.uint32
_U64 = np.uint64


def merge(a: np.ndarray, b: np.ndarray):
    """Linear merge intersection of two sorted uint32 arrays."""
    la = a.tolist()
    lb = b.tolist()
    na, nb = len(la), len(lb)
    i = j = ops = 0
    out = []
    while i < na and j < nb:
        x = la[i]
        y = lb[j]
        ops += 1
        if x == y:
            out.append(x)
            i += 1
            j += 1
        elif x < y:
            i += 1
        else:
            j += 1
    return np.array(out, dtype=_U32), ops


def gallop(small: np.ndarray, large: np.ndarray):
    """Exponential search of each element of ``small`` inside ``large``."""
    ls = small.tolist()
    ll = large.tolist()
    n = len(ll)
    lo = ops = 0
    out = []
    for x in ls:
        if lo >= n:
            break
        # exponential probe for the first index whose value is >= x
        step = 1
        hi = lo
        while True:
            ops += 1
            if hi >= n or ll[hi] >= x:
                break
            lo = hi + 1
            hi = lo + step
            step <<= 1
        if hi > n:
            hi = n
        # binary search in [lo, hi)
        while lo < hi:
            mid = (lo + hi) >> 1
            ops += 1
            if ll[mid] < x:
                lo = mid + 1
            else:
                hi = mid
        if lo < n:
            ops += 1
            if ll[lo] == x:
                out.append(x)
                lo += 1
    return np.array(out, dtype=_U32), ops


def intersect_uint(a: np.ndarray, b: np.ndarray, threshold: int = 32):
    """Dispatch between merge and galloping.  Returns (arr, ops, galloped)."""
    na, nb = len(a), len(b)
    if na > nb:
        a, b = b, a
        na, nb = nb, na
    if na == 0:
        return np.empty(0, dtype=_U32), 0, False
    if nb > threshold * na:
        out, ops = gallop(a, b)
        return out, ops, True
    out, ops = merge(a, b)
    return out, ops, False


def probe(values: np.ndarray, offsets: np.ndarray, words: np.ndarray,
          block_words: int):
    """Probe sorted uint values against a bitset made of equal-size blocks."""
    vals = values.tolist()
    offs = offsets.tolist()
    ws = words.tolist()
    nblocks = len(offs)
    block_bits = block_words * 64
    out = []
    ops = 0
    if nblocks == 0 or not vals:
        return np.empty(0, dtype=_U32), 0
    if nblocks > 32 * len(vals):
        for v in vals:
            j = bisect_right(offs, v) - 1
            ops += max(1, nblocks.bit_length())
            if j < 0:
                continue
            d = v - offs[j]
            if d >= block_bits:
                continue
            ops += 1
            if (ws[j * block_words + (d >> 6)] >> (d & 63)) & 1:
                out.append(v)
        return np.array(out, dtype=_U32), ops
    j = 0
    for v in vals:
        while j < nblocks and offs[j] + block_bits <= v:
            j += 1
            ops += 1
        if j == nblocks:
            break
        d = v - offs[j]
        ops += 1
        if d < 0:
            continue
        if (ws[j * block_words + (d >> 6)] >> (d & 63)) & 1:
            out.append(v)
    return np.array(out, dtype=_U32), ops


def and_aligned(offs_a: np.ndarray, words_a: np.ndarray,
                offs_b: np.ndarray, words_b: np.ndarray, block_words: int):
    """Intersect two bitsets sharing a block size: match offsets, AND words."""
    common, ops, _ = intersect_uint(offs_a, offs_b)
    if len(common) == 0:
        return np.empty(0, dtype=_U32), np.empty(0, dtype=_U64), ops
    ia = np.searchsorted(offs_a, common)
    ib = np.searchsorted(offs_b, common)
    wa = words_a.reshape(-1, block_words)[ia]
    wb = words_b.reshape(-1, block_words)[ib]
    anded = wa & wb
    ops += anded.size
    keep = anded.any(axis=1)
    return common[keep], anded[keep].reshape(-1), ops


def popcount(words: np.ndarray) -> int:
    return int(sum(bin(w).count("1") for w in words.tolist()))
