"""Skew-adaptive sorted sets of 32-bit ids and their intersection kernels.

Three layouts are supported:

* ``UINT``: a sorted ``uint32`` array.
* ``BITSET``: ``n`` blocks, each a block start offset plus a run of 64-bit
  words.  Sets chosen at the set level use one block spanning the set's own
  range (rounded out to whole words).
* ``COMPOSITE``: the id domain cut into fixed-size blocks, each block stored
  independently as ``UINT`` or ``BITSET``.

The compiled kernels in ``_kernels`` are used when importable; setting
``GHDJOIN_PURE_PYTHON=1`` forces the pure-Python reference kernels.
"""

from __future__ import annotations

import enum
import os
from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from ghdjoin.errors import ElementAbsent

from . import _pykernels

if os.environ.get("GHDJOIN_PURE_PYTHON"):
    _native = None
else:
    try:
        from . import _kernels as _native
    except ImportError:  # extension not built
        _native = None

kernels = _native if _native is not None else _pykernels
BACKEND: str = kernels.BACKEND

WORD_BITS = 64
DEFAULT_WIDTH = 256           # bits in one AVX register
DEFAULT_BLOCK_SIZE = 256
DEFAULT_BLOCK_WIDTH = 32      # bits per element of a uint array
GALLOP_RATIO = 32

_U32 = np.uint32
_U64 = np.uint64
_EMPTY_U32 = np.empty(0, dtype=_U32)
_EMPTY_U64 = np.empty(0, dtype=_U64)


def use_backend(name: str) -> str:
    """Switch the kernel backend at runtime (``"cython"`` or ``"python"``).

    Returns the previously active backend name.
    """
    global kernels, BACKEND
    prev = BACKEND
    if name == "python":
        kernels = _pykernels
    elif name == "cython":
        if _native is None:
            raise RuntimeError("compiled kernels are not available")
        kernels = _native
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = kernels.BACKEND
    return prev


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _native is not None else [])


class Layout(enum.Enum):
    UINT = "uint"
    BITSET = "bitset"
    COMPOSITE = "composite"


class Granularity(enum.Enum):
    RELATION = "relation"
    SET = "set"
    BLOCK = "block"


class Algorithm(enum.Enum):
    EMPTY = "empty"
    MERGE = "merge"
    GALLOP = "gallop"
    BITSET_AND = "bitset_and"
    PROBE = "uint_bitset_probe"
    COMPOSITE = "composite"


class IntersectStats:
    """Counters filled by every kernel call that receives this object."""

    __slots__ = ("calls", "comparisons", "output_cardinality", "by_algorithm",
                 "last_algorithm", "last_comparisons")

    def __init__(self):
        self.calls = 0
        self.comparisons = 0
        self.output_cardinality = 0
        self.by_algorithm: Counter = Counter()
        self.last_algorithm: Algorithm | None = None
        self.last_comparisons = 0

    def record(self, algorithm: Algorithm, ops: int, out_card: int) -> None:
        self.calls += 1
        self.comparisons += int(ops)
        self.output_cardinality += out_card
        self.by_algorithm[algorithm.value] += 1
        self.last_algorithm = algorithm
        self.last_comparisons = int(ops)

    def merge(self, other: "IntersectStats") -> None:
        self.calls += other.calls
        self.comparisons += other.comparisons
        self.output_cardinality += other.output_cardinality
        self.by_algorithm.update(other.by_algorithm)

    def as_dict(self) -> dict:
        return {
            "calls": self.calls,
            "comparisons": self.comparisons,
            "output_cardinality": self.output_cardinality,
            "by_algorithm": dict(sorted(self.by_algorithm.items())),
        }


class SetView:
    """An immutable sorted set of 32-bit ids in one physical layout."""

    __slots__ = ("layout", "cardinality", "values", "offsets", "words",
                 "block_bits", "blocks", "block_size", "assoc", "_list")

    def __init__(self, layout, cardinality, values=None, offsets=None,
                 words=None, block_bits=0, blocks=None, block_size=0,
                 assoc=None):
        self.layout = layout
        self.cardinality = cardinality
        self.values = values
        self.offsets = offsets
        self.words = words
        self.block_bits = block_bits
        self.blocks = blocks
        self.block_size = block_size
        self.assoc = assoc
        self._list = None

    # -- construction -----------------------------------------------------

    @classmethod
    def uint(cls, values, assoc=None) -> "SetView":
        arr = np.ascontiguousarray(values, dtype=_U32)
        return cls(Layout.UINT, len(arr), values=arr, assoc=assoc)

    @classmethod
    def bitset(cls, ids, block_bits: int | None = None, assoc=None) -> "SetView":
        """Bitset over ``ids``.

        With ``block_bits=None`` a single block spans the set's range.  Otherwise
        blocks of ``block_bits`` (a multiple of 64) are aligned to multiples of
        the block size.
        """
        ids = np.ascontiguousarray(ids, dtype=_U32)
        if len(ids) == 0:
            return cls(Layout.BITSET, 0, offsets=_EMPTY_U32, words=_EMPTY_U64,
                       block_bits=block_bits or WORD_BITS)
        ids64 = ids.astype(np.int64)
        if block_bits is None:
            lo = int(ids64[0]) & ~(WORD_BITS - 1)
            nwords = (int(ids64[-1]) - lo) // WORD_BITS + 1
            block_bits = nwords * WORD_BITS
            offsets = np.array([lo], dtype=_U32)
            rel = ids64 - lo
            block_idx = np.zeros(len(ids), dtype=np.int64)
        else:
            if block_bits % WORD_BITS:
                raise ValueError("block_bits must be a multiple of 64")
            starts = (ids64 // block_bits) * block_bits
            uniq, block_idx = np.unique(starts, return_inverse=True)
            offsets = uniq.astype(_U32)
            rel = ids64 - starts
        bw = block_bits // WORD_BITS
        words = np.zeros(len(offsets) * bw, dtype=_U64)
        word_pos = block_idx * bw + (rel >> 6)
        np.bitwise_or.at(words, word_pos, np.left_shift(np.uint64(1), (rel & 63).astype(_U64)))
        dense = None
        if assoc is not None:
            assoc = np.asarray(assoc)
            dense = np.zeros(len(offsets) * block_bits, dtype=assoc.dtype)
            dense[block_idx * block_bits + rel] = assoc
        return cls(Layout.BITSET, len(ids), offsets=offsets, words=words,
                   block_bits=block_bits, assoc=dense)

    @classmethod
    def composite(cls, blocks: Sequence[tuple[int, "SetView"]], block_size: int) -> "SetView":
        blocks = tuple((k, v) for k, v in blocks if v.cardinality)
        card = sum(v.cardinality for _, v in blocks)
        return cls(Layout.COMPOSITE, card, blocks=blocks, block_size=block_size)

    # -- access -----------------------------------------------------------

    def ids(self) -> np.ndarray:
        """Decode to a sorted ``uint32`` array."""
        if self.layout is Layout.UINT:
            return self.values
        if self.layout is Layout.BITSET:
            return _decode_bitset(self.offsets, self.words, self.block_bits)
        if not self.blocks:
            return _EMPTY_U32
        return np.concatenate([v.ids() for _, v in self.blocks]).astype(_U32, copy=False)

    def tolist(self) -> list[int]:
        if self._list is None:
            self._list = self.ids().tolist()
        return self._list

    def __len__(self) -> int:
        return self.cardinality

    def __iter__(self):
        return iter(self.tolist())

    def __contains__(self, x) -> bool:
        return _contains(self, int(x))

    def __repr__(self) -> str:
        items = self.tolist()
        shown = items if len(items) <= 8 else items[:8] + ["..."]
        return f"SetView({self.layout.value}, {shown})"

    @property
    def min(self) -> int:
        return int(self.ids()[0])

    @property
    def max(self) -> int:
        return int(self.ids()[-1])

    @property
    def universe_range(self) -> int:
        if self.cardinality == 0:
            return 0
        ids = self.ids()
        return int(ids[-1]) - int(ids[0]) + 1

    def layout_counts(self) -> Counter:
        """Number of uint/bitset containers inside this view."""
        if self.layout is Layout.COMPOSITE:
            c: Counter = Counter()
            for _, v in self.blocks:
                c[v.layout.value] += 1
            return c
        return Counter({self.layout.value: 1})


_EMPTY_BITSET = SetView(Layout.BITSET, 0, offsets=_EMPTY_U32, words=_EMPTY_U64,
                        block_bits=WORD_BITS)


def _decode_bitset(offsets: np.ndarray, words: np.ndarray, block_bits: int) -> np.ndarray:
    if len(offsets) == 0:
        return _EMPTY_U32
    nblocks = len(offsets)
    bits = np.unpackbits(words.view(np.uint8), bitorder="little").reshape(nblocks, block_bits)
    blk, pos = np.nonzero(bits)
    return (offsets.astype(np.int64)[blk] + pos).astype(_U32)


def _contains(s: SetView, x: int) -> bool:
    if s.layout is Layout.UINT:
        i = int(np.searchsorted(s.values, x))
        return i < len(s.values) and int(s.values[i]) == x
    if s.layout is Layout.BITSET:
        slot = _bitset_slot(s, x)
        return slot is not None
    for k, v in s.blocks:
        if k == x // s.block_size:
            return _contains(v, x)
    return False


def _bitset_slot(s: SetView, x: int) -> int | None:
    """Dense-vector slot of ``x`` inside a bitset, or None when absent."""
    if len(s.offsets) == 0:
        return None
    j = int(np.searchsorted(s.offsets, x, side="right")) - 1
    if j < 0:
        return None
    d = x - int(s.offsets[j])
    if d >= s.block_bits:
        return None
    bw = s.block_bits // WORD_BITS
    w = int(s.words[j * bw + (d >> 6)])
    if (w >> (d & 63)) & 1:
        return j * s.block_bits + d
    return None


# -- layout selection -------------------------------------------------------

def choose_layout(cardinality: int, range_: int, width: int = DEFAULT_WIDTH) -> Layout:
    """Bitset when each member costs at most ``width`` bits of bitset space."""
    if cardinality < 1:
        raise ValueError("cardinality must be >= 1")
    if range_ < cardinality:
        raise ValueError("range must be >= cardinality")
    return Layout.BITSET if range_ <= width * cardinality else Layout.UINT


def materialize_set(ids, granularity: Granularity = Granularity.SET, *,
                    block_size: int = DEFAULT_BLOCK_SIZE,
                    width: int = DEFAULT_WIDTH,
                    block_width: int = DEFAULT_BLOCK_WIDTH,
                    assoc=None) -> SetView:
    """Build a SetView for sorted, duplicate-free ``ids``.

    ``assoc`` (aligned with ``ids``) becomes a sparse vector for uint sets and a
    dense vector for bitsets.
    """
    ids = np.ascontiguousarray(ids, dtype=_U32)
    if assoc is not None:
        assoc = np.asarray(assoc)
        if len(assoc) != len(ids):
            raise ValueError("assoc must align with ids")
    if granularity is Granularity.RELATION or len(ids) == 0:
        return SetView.uint(ids, assoc=assoc)
    if granularity is Granularity.SET:
        rng = int(ids[-1]) - int(ids[0]) + 1
        if choose_layout(len(ids), rng, width) is Layout.BITSET:
            return SetView.bitset(ids, assoc=assoc)
        return SetView.uint(ids, assoc=assoc)
    if block_size % WORD_BITS:
        raise ValueError("block_size must be a multiple of 64")
    keys = ids // block_size
    cuts = np.flatnonzero(np.diff(keys)) + 1
    bounds = [0, *cuts.tolist(), len(ids)]
    blocks = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        part = ids[lo:hi]
        part_assoc = None if assoc is None else assoc[lo:hi]
        k = int(keys[lo])
        if choose_layout(len(part), block_size, block_width) is Layout.BITSET:
            blocks.append((k, SetView.bitset(part, block_bits=block_size, assoc=part_assoc)))
        else:
            blocks.append((k, SetView.uint(part, assoc=part_assoc)))
    return SetView.composite(blocks, block_size)


def assoc_lookup(s: SetView, element: int):
    """Associated value of ``element``.

    Bitsets index their dense vector by id; uint sets index their sparse
    vector by the element's position.
    """
    element = int(element)
    if s.layout is Layout.COMPOSITE:
        k = element // s.block_size
        for bk, v in s.blocks:
            if bk == k:
                return assoc_lookup(v, element)
        raise ElementAbsent(element)
    if s.assoc is None:
        raise ValueError("set carries no associated values")
    if s.layout is Layout.UINT:
        i = int(np.searchsorted(s.values, element))
        if i < len(s.values) and int(s.values[i]) == element:
            return s.assoc[i].item()
        raise ElementAbsent(element)
    slot = _bitset_slot(s, element)
    if slot is None:
        raise ElementAbsent(element)
    return s.assoc[slot].item()


# -- intersections ----------------------------------------------------------

def intersect_uint_uint(a: SetView, b: SetView, stats: IntersectStats | None = None,
                        *, force: Algorithm | None = None) -> SetView:
    """Merge for similar sizes, galloping beyond a 32:1 cardinality ratio."""
    small, large = (a, b) if a.cardinality <= b.cardinality else (b, a)
    if small.cardinality == 0:
        if stats is not None:
            stats.record(Algorithm.EMPTY, 0, 0)
        return SetView.uint(_EMPTY_U32)
    if force is Algorithm.MERGE:
        out, ops = kernels.merge(small.values, large.values)
        alg = Algorithm.MERGE
    elif force is Algorithm.GALLOP:
        out, ops = kernels.gallop(small.values, large.values)
        alg = Algorithm.GALLOP
    else:
        out, ops, galloped = kernels.intersect_uint(small.values, large.values, GALLOP_RATIO)
        alg = Algorithm.GALLOP if galloped else Algorithm.MERGE
    if stats is not None:
        stats.record(alg, ops, len(out))
    return SetView.uint(out)


def uint_algorithm(na: int, nb: int) -> Algorithm:
    """The algorithm the uint dispatcher picks for operand sizes na, nb."""
    lo, hi = min(na, nb), max(na, nb)
    if lo == 0:
        return Algorithm.EMPTY
    return Algorithm.GALLOP if hi > GALLOP_RATIO * lo else Algorithm.MERGE


def _aligned(a: SetView, b: SetView) -> bool:
    if a.block_bits != b.block_bits:
        return False
    bb = a.block_bits
    if bb & (bb - 1) == 0:
        return not (np.any(a.offsets % bb) or np.any(b.offsets % bb))
    return len(a.offsets) == 1 and len(b.offsets) == 1 and a.offsets[0] == b.offsets[0]


def intersect_bitset_bitset(a: SetView, b: SetView, stats: IntersectStats | None = None) -> SetView:
    """Intersect block offsets with the uint kernel, then AND matched words."""
    if a.cardinality == 0 or b.cardinality == 0:
        if stats is not None:
            stats.record(Algorithm.EMPTY, 0, 0)
        return SetView.bitset(_EMPTY_U32, block_bits=a.block_bits or WORD_BITS)
    if _aligned(a, b):
        offs, words, ops = kernels.and_aligned(a.offsets, a.words, b.offsets, b.words,
                                               a.block_bits // WORD_BITS)
        card = int(kernels.popcount(words)) if len(words) else 0
        out = SetView(Layout.BITSET, card, offsets=offs, words=words, block_bits=a.block_bits)
    else:
        out, ops = _and_overlapping(a, b)
    if stats is not None:
        stats.record(Algorithm.BITSET_AND, ops, out.cardinality)
    return out


def _and_overlapping(a: SetView, b: SetView):
    """Word-level AND of bitsets whose blocks differ in size or alignment."""
    bwa = a.block_bits // WORD_BITS
    bwb = b.block_bits // WORD_BITS
    if len(a.offsets) == 1 and len(b.offsets) == 1:
        return _and_single(a, b, bwa, bwb)
    oa = (a.offsets.astype(np.int64) // WORD_BITS).tolist()
    ob = (b.offsets.astype(np.int64) // WORD_BITS).tolist()
    i = j = ops = 0
    pieces: list[tuple[int, np.ndarray]] = []
    while i < len(oa) and j < len(ob):
        ops += 1
        lo = max(oa[i], ob[j])
        hi = min(oa[i] + bwa, ob[j] + bwb)
        if lo < hi:
            wa = a.words[i * bwa + (lo - oa[i]): i * bwa + (hi - oa[i])]
            wb = b.words[j * bwb + (lo - ob[j]): j * bwb + (hi - ob[j])]
            anded = wa & wb
            ops += hi - lo
            if anded.any():
                pieces.append((lo, anded))
        if oa[i] + bwa <= ob[j] + bwb:
            i += 1
        else:
            j += 1
    if not pieces:
        return SetView.bitset(_EMPTY_U32), ops
    first = pieces[0][0] + int(np.flatnonzero(pieces[0][1])[0])
    last = pieces[-1][0] + int(np.flatnonzero(pieces[-1][1])[-1])
    words = np.zeros(last - first + 1, dtype=_U64)
    for lo, w in pieces:
        s = max(lo, first)
        e = min(lo + len(w), last + 1)
        if s < e:
            words[s - first:e - first] = w[s - lo:e - lo]
    card = int(kernels.popcount(words))
    out = SetView(Layout.BITSET, card, offsets=np.array([first * WORD_BITS], dtype=_U32),
                  words=words, block_bits=len(words) * WORD_BITS)
    return out, ops


def _and_single(a: SetView, b: SetView, bwa: int, bwb: int):
    # one block each: the general walk does a single step, so ops match it
    oa = int(a.offsets[0]) // WORD_BITS
    ob = int(b.offsets[0]) // WORD_BITS
    lo, hi = max(oa, ob), min(oa + bwa, ob + bwb)
    if lo >= hi:
        return _EMPTY_BITSET, 1
    ops = 1 + hi - lo
    wa = a.words[lo - oa:hi - oa].tolist()
    wb = b.words[lo - ob:hi - ob].tolist()
    anded = [x & y for x, y in zip(wa, wb)]
    nz = [i for i, w in enumerate(anded) if w]
    if not nz:
        return _EMPTY_BITSET, ops
    first, last = nz[0], nz[-1]
    kept = anded[first:last + 1]
    card = sum(w.bit_count() for w in kept)
    out = SetView(Layout.BITSET, card, offsets=np.array([(lo + first) * WORD_BITS], dtype=_U32),
                  words=np.array(kept, dtype=_U64), block_bits=len(kept) * WORD_BITS)
    return out, ops


def intersect_uint_bitset(a: SetView, b: SetView, stats: IntersectStats | None = None) -> SetView:
    """Probe each uint value in its candidate bitset block; result is uint."""
    if a.layout is Layout.BITSET and b.layout is Layout.UINT:
        a, b = b, a
    if a.cardinality == 0 or b.cardinality == 0:
        if stats is not None:
            stats.record(Algorithm.EMPTY, 0, 0)
        return SetView.uint(_EMPTY_U32)
    out, ops = kernels.probe(a.values, b.offsets, b.words, b.block_bits // WORD_BITS)
    if stats is not None:
        stats.record(Algorithm.PROBE, ops, len(out))
    return SetView.uint(out)


def _split_blocks(s: SetView, block_size: int) -> dict[int, SetView]:
    """Cut a non-composite view at ``block_size`` boundaries."""
    if s.cardinality == 0:
        return {}
    if s.layout is Layout.UINT:
        keys = s.values // block_size
        cuts = np.flatnonzero(np.diff(keys)) + 1
        bounds = [0, *cuts.tolist(), len(s.values)]
        return {int(keys[lo]): SetView.uint(s.values[lo:hi])
                for lo, hi in zip(bounds[:-1], bounds[1:])}
    bw = s.block_bits // WORD_BITS
    kw = block_size // WORD_BITS
    nblocks = len(s.offsets)
    blk = np.repeat(np.arange(nblocks), bw)
    gw = np.repeat(s.offsets.astype(np.int64) // WORD_BITS, bw) + np.tile(np.arange(bw), nblocks)
    key = gw // kw
    # a piece is a maximal run of words sharing both source block and target key
    starts = np.flatnonzero(np.r_[True, (key[1:] != key[:-1]) | (blk[1:] != blk[:-1])])
    cards = np.add.reduceat(np.bitwise_count(s.words).astype(np.int64), starts)
    ends = np.r_[starts[1:], len(s.words)]
    out: dict[int, SetView] = {}
    for p in np.flatnonzero(cards).tolist():
        lo, hi = int(starts[p]), int(ends[p])
        k = int(key[lo])
        piece = SetView(Layout.BITSET, int(cards[p]),
                        offsets=np.array([gw[lo] * WORD_BITS], dtype=_U32),
                        words=s.words[lo:hi], block_bits=(hi - lo) * WORD_BITS)
        prev = out.get(k)
        if prev is not None:
            # source blocks smaller than the target block: merge into one span
            piece = SetView.bitset(np.concatenate([prev.ids(), piece.ids()]))
        out[k] = piece
    return out


def intersect_composite(a: SetView, b: SetView, stats: IntersectStats | None = None) -> SetView:
    """Blockwise intersection; non-composite operands are cut into blocks."""
    bs = a.block_size if a.layout is Layout.COMPOSITE else b.block_size
    ba = dict(a.blocks) if a.layout is Layout.COMPOSITE and a.block_size == bs else _split_any(a, bs)
    bb = dict(b.blocks) if b.layout is Layout.COMPOSITE and b.block_size == bs else _split_any(b, bs)
    if len(ba) > len(bb):
        ba, bb = bb, ba
    blocks = []
    for k in sorted(ba):
        other = bb.get(k)
        if other is not None:
            r = _intersect_flat(ba[k], other, stats)
            if r.cardinality:
                blocks.append((k, r))
    return SetView.composite(blocks, bs)


def _split_any(s: SetView, block_size: int) -> dict[int, SetView]:
    if s.layout is Layout.COMPOSITE:
        return _split_blocks(SetView.uint(s.ids()), block_size)
    return _split_blocks(s, block_size)


def _intersect_flat(a: SetView, b: SetView, stats: IntersectStats | None) -> SetView:
    la, lb = a.layout, b.layout
    if la is Layout.UINT and lb is Layout.UINT:
        return intersect_uint_uint(a, b, stats)
    if la is Layout.BITSET and lb is Layout.BITSET:
        return intersect_bitset_bitset(a, b, stats)
    return intersect_uint_bitset(a, b, stats)


def intersect(a: SetView, b: SetView, stats: IntersectStats | None = None) -> SetView:
    """Intersect two views of any layouts."""
    if a.layout is Layout.COMPOSITE or b.layout is Layout.COMPOSITE:
        return intersect_composite(a, b, stats)
    return _intersect_flat(a, b, stats)


def intersect_all(views: Iterable[SetView], stats: IntersectStats | None = None) -> SetView:
    """Fold ``intersect`` over views, smallest first."""
    if isinstance(views, list) and len(views) == 2:
        a, b = views
        if b.cardinality < a.cardinality:
            a, b = b, a
        return a if a.cardinality == 0 else intersect(a, b, stats)
    vs = sorted(views, key=lambda v: v.cardinality)
    if not vs:
        raise ValueError("need at least one set")
    acc = vs[0]
    for v in vs[1:]:
        if acc.cardinality == 0:
            break
        acc = intersect(acc, v, stats)
    return acc


def merge_oracle(a: Iterable[int], b: Iterable[int]) -> list[int]:
    """Textbook sorted-merge intersection over decoded members (test oracle)."""
    a = list(a)
    b = list(b)
    i = j = 0
    out = []
    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            out.append(a[i])
            i += 1
            j += 1
        elif a[i] < b[j]:
            i += 1
        else:
            j += 1
    return out


from .oracle import OracleReport, oracle_optimize  # noqa: E402

__all__ = [
    "Algorithm", "BACKEND", "Granularity", "IntersectStats", "Layout",
    "OracleReport", "SetView", "assoc_lookup", "available_backends",
    "choose_layout", "intersect", "intersect_all", "intersect_bitset_bitset",
    "intersect_composite", "intersect_uint_bitset", "intersect_uint_uint",
    "materialize_set", "merge_oracle", "oracle_optimize", "uint_algorithm",
    "use_backend",
]
