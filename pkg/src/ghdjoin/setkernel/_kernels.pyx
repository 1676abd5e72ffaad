# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled intersection kernels.  Mirrors ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint32_t, uint64_t, int64_t

cnp.import_array()

BACKEND = "cython"


cdef inline Py_ssize_t _bitlen(Py_ssize_t n) nogil:
    cdef Py_ssize_t k = 0
    while n > 0:
        k += 1
        n >>= 1
    return k


def merge(const uint32_t[::1] a, const uint32_t[::1] b):
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0]
    cdef Py_ssize_t i = 0, j = 0, k = 0
    cdef int64_t ops = 0
    cdef uint32_t x, y
    out = np.empty(min(na, nb), dtype=np.uint32)
    cdef uint32_t[::1] o = out
    with nogil:
        while i < na and j < nb:
            x = a[i]
            y = b[j]
            ops += 1
            if x == y:
                o[k] = x
                k += 1
                i += 1
                j += 1
            elif x < y:
                i += 1
            else:
                j += 1
    return out[:k], ops


def gallop(const uint32_t[::1] small, const uint32_t[::1] large):
    cdef Py_ssize_t ns = small.shape[0], n = large.shape[0]
    cdef Py_ssize_t s, lo = 0, hi, mid, step, k = 0
    cdef int64_t ops = 0
    cdef uint32_t x
    out = np.empty(min(ns, n), dtype=np.uint32)
    cdef uint32_t[::1] o = out
    with nogil:
        for s in range(ns):
            if lo >= n:
                break
            x = small[s]
            step = 1
            hi = lo
            while True:
                ops += 1
                if hi >= n or large[hi] >= x:
                    break
                lo = hi + 1
                hi = lo + step
                step <<= 1
            if hi > n:
                hi = n
            while lo < hi:
                mid = (lo + hi) >> 1
                ops += 1
                if large[mid] < x:
                    lo = mid + 1
                else:
                    hi = mid
            if lo < n:
                ops += 1
                if large[lo] == x:
                    o[k] = x
                    k += 1
                    lo += 1
    return out[:k], ops


def intersect_uint(a, b, int threshold=32):
    cdef Py_ssize_t na = len(a), nb = len(b)
    if na > nb:
        a, b = b, a
        na, nb = nb, na
    if na == 0:
        return np.empty(0, dtype=np.uint32), 0, False
    if nb > threshold * na:
        out, ops = gallop(a, b)
        return out, ops, True
    out, ops = merge(a, b)
    return out, ops, False


def probe(const uint32_t[::1] values, const uint32_t[::1] offsets,
          const uint64_t[::1] words, Py_ssize_t block_words):
    cdef Py_ssize_t nv = values.shape[0], nblocks = offsets.shape[0]
    cdef Py_ssize_t block_bits = block_words * 64
    cdef Py_ssize_t i, j = 0, k = 0, lo, hi, mid, lg
    cdef int64_t ops = 0, d
    cdef uint32_t v
    out = np.empty(nv, dtype=np.uint32)
    cdef uint32_t[::1] o = out
    if nblocks == 0 or nv == 0:
        return out[:0], 0
    with nogil:
        if nblocks > 32 * nv:
            lg = _bitlen(nblocks)
            if lg < 1:
                lg = 1
            for i in range(nv):
                v = values[i]
                lo = 0
                hi = nblocks
                while lo < hi:
                    mid = (lo + hi) >> 1
                    if offsets[mid] <= v:
                        lo = mid + 1
                    else:
                        hi = mid
                ops += lg
                j = lo - 1
                if j < 0:
                    continue
                d = <int64_t>v - <int64_t>offsets[j]
                if d >= block_bits:
                    continue
                ops += 1
                if (words[j * block_words + (d >> 6)] >> (d & 63)) & 1:
                    o[k] = v
                    k += 1
        else:
            for i in range(nv):
                v = values[i]
                while j < nblocks and <int64_t>offsets[j] + block_bits <= <int64_t>v:
                    j += 1
                    ops += 1
                if j == nblocks:
                    break
                d = <int64_t>v - <int64_t>offsets[j]
                ops += 1
                if d < 0:
                    continue
                if (words[j * block_words + (d >> 6)] >> (d & 63)) & 1:
                    o[k] = v
                    k += 1
    return out[:k], ops


def and_aligned(offs_a, words_a, offs_b, words_b, Py_ssize_t block_words):
    common, ops0, _ = intersect_uint(offs_a, offs_b)
    cdef Py_ssize_t m = len(common)
    if m == 0:
        return np.empty(0, dtype=np.uint32), np.empty(0, dtype=np.uint64), ops0
    cdef cnp.intp_t[::1] ia = np.searchsorted(offs_a, common).astype(np.intp)
    cdef cnp.intp_t[::1] ib = np.searchsorted(offs_b, common).astype(np.intp)
    cdef const uint32_t[::1] cm = common
    cdef const uint64_t[::1] wa = words_a
    cdef const uint64_t[::1] wb = words_b
    cdef Py_ssize_t t, w, k = 0
    cdef int64_t ops = ops0
    cdef uint64_t acc, x
    offs = np.empty(m, dtype=np.uint32)
    words = np.empty(m * block_words, dtype=np.uint64)
    cdef uint32_t[::1] oo = offs
    cdef uint64_t[::1] ow = words
    with nogil:
        for t in range(m):
            acc = 0
            for w in range(block_words):
                x = wa[ia[t] * block_words + w] & wb[ib[t] * block_words + w]
                ow[k * block_words + w] = x
                acc |= x
            ops += block_words
            if acc != 0:
                oo[k] = cm[t]
                k += 1
    return offs[:k], words[:k * block_words], ops


def popcount(const uint64_t[::1] words):
    cdef Py_ssize_t i, n = words.shape[0]
    cdef int64_t total = 0
    cdef uint64_t x
    with nogil:
        for i in range(n):
            x = words[i]
            while x:
                x &= x - 1
                total += 1
    return total
