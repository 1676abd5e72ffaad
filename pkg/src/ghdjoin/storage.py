"""Relation ingestion, dictionary encoding, node ordering and trie indexes."""

from __future__ import annotations

import enum
import json
import threading
from bisect import bisect_left
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ghdjoin.errors import (AnnotationConflict, DegenerateDistribution, IoError,
                            OrderViolation, Overflow, RowArityMismatch, SnapshotError)
from ghdjoin.setkernel import (DEFAULT_BLOCK_SIZE, DEFAULT_WIDTH, Granularity, SetView,
                               materialize_set)

MAX_IDS = 2 ** 32
SNAPSHOT_FORMAT = "ghdjoin-snapshot"
SNAPSHOT_VERSION = 1

# -- ingestion --------------------------------------------------------------


@dataclass
class RawRelation:
    """Undecoded tuples as read from a file."""
    name: str
    arity: int
    tuples: list[tuple[str, ...]]
    annotations: list[float] | None = None
    annotation_type: str | None = None
    path: str = ""

    def __len__(self) -> int:
        return len(self.tuples)


def _parse_number(text: str, kind: str):
    return float(text) if kind == "float" else int(text)


def load_relation(path, schema: int | Sequence[str] = 2, *, name: str | None = None,
                  annotated: bool = False, annotation_type: str = "float") -> RawRelation:
    """Read a whitespace-separated relation file.

    ``schema`` is an arity or a sequence of attribute type names.  With
    ``annotated`` each row carries one extra trailing numeric column.
    Lines that are blank or start with ``#`` are skipped.
    """
    arity = schema if isinstance(schema, int) else len(schema)
    path = Path(path)
    want = arity + (1 if annotated else 0)
    tuples: list[tuple[str, ...]] = []
    anns: list | None = [] if annotated else None
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e.strerror or e}") from e
    with fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            fields = s.split()
            if len(fields) != want:
                raise RowArityMismatch(lineno, want, len(fields), str(path))
            tuples.append(tuple(fields[:arity]))
            if annotated:
                try:
                    anns.append(_parse_number(fields[arity], annotation_type))
                except ValueError:
                    raise RowArityMismatch(lineno, want, len(fields), str(path)) from None
    return RawRelation(name or path.stem, arity, tuples, anns,
                       annotation_type if annotated else None, str(path))


# -- dictionary -------------------------------------------------------------

@dataclass
class Dictionary:
    """Bijection between raw values and dense ids ``0..n-1``."""
    values: list[str] = field(default_factory=list)   # id -> value
    index: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.values)

    def encode(self, value: str) -> int | None:
        return self.index.get(value)

    def decode(self, i: int) -> str:
        return self.values[i]

    def add(self, value: str) -> int:
        i = self.index.get(value)
        if i is None:
            if len(self.values) >= MAX_IDS:
                raise Overflow("more than 2^32 distinct values")
            i = len(self.values)
            self.index[value] = i
            self.values.append(value)
        return i

    def encode_many(self, values: Iterable[str]) -> np.ndarray:
        return np.fromiter((self.add(v) for v in values), dtype=np.uint32)

    def decode_many(self, ids: Iterable[int]) -> list[str]:
        vs = self.values
        return [vs[i] for i in ids]


def build_dictionary(values: Iterable, ordering: Sequence[int] | np.ndarray | None = None) -> Dictionary:
    """Assign ids in first-seen order, then relabel id ``i`` as ``ordering[i]``."""
    first: dict = {}
    for v in values:
        if v not in first:
            if len(first) >= MAX_IDS:
                raise Overflow("more than 2^32 distinct values")
            first[v] = len(first)
    seen = list(first)
    if ordering is None:
        return Dictionary(seen, first)
    perm = np.asarray(ordering, dtype=np.int64)
    if len(perm) != len(seen) or not _is_permutation(perm):
        raise ValueError("ordering must be a permutation of the first-seen ids")
    inv: list = [None] * len(seen)
    for old, v in enumerate(seen):
        inv[int(perm[old])] = v
    return Dictionary(inv, {v: i for i, v in enumerate(inv)})


def _is_permutation(p: np.ndarray) -> bool:
    n = len(p)
    return n == 0 or (p.min() >= 0 and p.max() < n and len(np.unique(p)) == n)


# -- graphs and orderings ---------------------------------------------------

class Ordering(enum.Enum):
    NONE = "none"
    RANDOM = "random"
    BFS = "bfs"
    STRONG_RUNS = "strongruns"
    DEGREE = "degree"
    REV_DEGREE = "revdegree"
    SHINGLE = "shingle"
    HYBRID = "hybrid"


def adjacency(edges: np.ndarray | Sequence[tuple[int, int]], n: int | None = None) -> list[list[int]]:
    """Undirected adjacency (sorted, duplicate-free, no self loops) of an edge list."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if n is None:
        n = int(e.max()) + 1 if len(e) else 0
    nbrs: list[set[int]] = [set() for _ in range(n)]
    for a, b in e.tolist():
        if a != b:
            nbrs[a].add(b)
            nbrs[b].add(a)
    return [sorted(s) for s in nbrs]


def _degrees(adj: Sequence[Sequence[int]]) -> list[int]:
    return [len(x) for x in adj]


def _labels_from_sequence(seq: Sequence[int], n: int) -> np.ndarray:
    """``seq`` lists old ids in new-id order; returns perm with perm[old] = new."""
    perm = np.empty(n, dtype=np.int64)
    perm[np.asarray(seq, dtype=np.int64)] = np.arange(n)
    return perm


def _bfs_sequence(adj, deg) -> list[int]:
    n = len(adj)
    seen = [False] * n
    seq: list[int] = []
    for start in sorted(range(n), key=lambda v: (-deg[v], v)):
        if seen[start]:
            continue
        seen[start] = True
        q = deque([start])
        while q:
            u = q.popleft()
            seq.append(u)
            for w in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    q.append(w)
    return seq


def _shingles(adj, seed: int) -> list[int]:
    # one minhash over each open neighborhood
    p = (1 << 61) - 1
    rng = np.random.default_rng(seed)
    a = int(rng.integers(1, p))
    b = int(rng.integers(0, p))
    return [min(((a * w + b) % p for w in nb), default=p) for nb in adj]


def order_nodes(adj: Sequence[Sequence[int]], strategy: Ordering | str = Ordering.DEGREE,
                seed: int = 0) -> np.ndarray:
    """Return ``perm`` with ``perm[old_id] = new_id`` for the chosen strategy."""
    strategy = Ordering(strategy)
    n = len(adj)
    deg = _degrees(adj)
    ids = range(n)
    if strategy is Ordering.NONE:
        return np.arange(n, dtype=np.int64)
    if strategy is Ordering.RANDOM:
        return np.random.default_rng(seed).permutation(n).astype(np.int64)
    if strategy is Ordering.DEGREE:
        seq = sorted(ids, key=lambda v: (-deg[v], v))
    elif strategy is Ordering.REV_DEGREE:
        seq = sorted(ids, key=lambda v: (deg[v], v))
    elif strategy is Ordering.BFS:
        seq = _bfs_sequence(adj, deg)
    elif strategy is Ordering.HYBRID:
        bfs = _bfs_sequence(adj, deg)
        seq = sorted(bfs, key=lambda v: -deg[v])  # stable: BFS order within equal degree
    elif strategy is Ordering.STRONG_RUNS:
        labeled = [False] * n
        seq = []
        for v in sorted(ids, key=lambda v: (-deg[v], v)):
            if not labeled[v]:
                labeled[v] = True
                seq.append(v)
            for w in adj[v]:
                if not labeled[w]:
                    labeled[w] = True
                    seq.append(w)
    else:  # SHINGLE
        sh = _shingles(adj, seed)
        seq = sorted(ids, key=lambda v: (sh[v], v))
    return _labels_from_sequence(seq, n)


def prune_symmetric(edges: np.ndarray) -> np.ndarray:
    """Keep only edges whose source id is greater than the destination id."""
    e = np.asarray(edges).reshape(-1, 2)
    return e[e[:, 0] > e[:, 1]]


def symmetric_closure(edges: np.ndarray) -> np.ndarray:
    e = np.asarray(edges).reshape(-1, 2)
    both = np.concatenate([e, e[:, ::-1]]) if len(e) else e
    return np.unique(both, axis=0) if len(both) else both


def degree_skew(degrees: Sequence[int]) -> float:
    """Pearson's first skewness coefficient ``3 (mean - mode) / sigma``.

    The mode is the smallest most-frequent value; sigma is the population
    standard deviation.
    """
    d = np.asarray(degrees, dtype=np.float64)
    if len(d) == 0:
        raise DegenerateDistribution("empty degree distribution")
    sigma = float(d.std())
    if sigma == 0.0:
        raise DegenerateDistribution("all degrees are equal")
    counts = Counter(d.tolist())
    top = max(counts.values())
    mode = min(v for v, c in counts.items() if c == top)
    return 3.0 * (float(d.mean()) - mode) / sigma


def density_skew(adj: Sequence[Sequence[int]]) -> float:
    """Density skew of a graph, computed over its degree distribution."""
    return degree_skew(_degrees(adj))


# -- tries ------------------------------------------------------------------

class Trie:
    """Multi-level sorted-set index over encoded tuples.

    Level ``l`` stores the flattened child values ``values[l]`` and offsets
    ``offsets[l]`` where entry ``p`` of level ``l-1`` (or the single root when
    ``l == 0``) owns ``values[l][offsets[l][p]:offsets[l][p+1]]``.  The leaf
    level may carry an annotation array aligned with ``values[-1]``.
    """

    def __init__(self, tuples: np.ndarray, annotations: np.ndarray | None,
                 order: tuple[int, ...], granularity: Granularity = Granularity.SET,
                 block_size: int = DEFAULT_BLOCK_SIZE, width: int = DEFAULT_WIDTH):
        self.order = tuple(order)
        self.depth = len(order)
        self.granularity = granularity
        self.block_size = block_size
        self.width = width
        self._lock = threading.Lock()
        self._pending: list[tuple[np.ndarray, np.ndarray | None]] = []
        self._set(tuples, annotations)

    def _set(self, tuples: np.ndarray, annotations: np.ndarray | None) -> None:
        self.tuples = tuples            # sorted, unique rows in trie column order
        self.annotations = annotations
        self.values, self.offsets = _build_levels(tuples, self.depth)
        self._lists = [v.tolist() for v in self.values]
        self._sets = [self._materialize_level(l) for l in range(self.depth)]

    def _materialize_level(self, l: int) -> list[SetView]:
        vals = self.values[l]
        offs = self.offsets[l].tolist()
        leaf = l == self.depth - 1
        out = []
        for p in range(len(offs) - 1):
            lo, hi = offs[p], offs[p + 1]
            assoc = self.annotations[lo:hi] if (leaf and self.annotations is not None) else None
            out.append(materialize_set(vals[lo:hi], self.granularity,
                                       block_size=self.block_size, width=self.width, assoc=assoc))
        return out

    def _flush(self) -> None:
        if not self._pending:
            return
        with self._lock:
            if not self._pending:
                return
            rows = [self.tuples] + [r for r, _ in self._pending]
            anns = None
            if self.annotations is not None:
                anns = np.concatenate([self.annotations] + [a for _, a in self._pending])
            self._pending = []
            tuples = np.concatenate(rows)
            tuples, anns = _sort_dedup(tuples, anns, keep="first")
            self._set(tuples, anns)

    # -- navigation -------------------------------------------------------

    @property
    def cardinality(self) -> int:
        self._flush()
        return len(self.tuples)

    def __len__(self) -> int:
        return self.cardinality

    def find(self, level: int, parent: int, value: int) -> int:
        """Position of ``value`` among the children of ``parent`` or -1."""
        offs = self.offsets[level]
        lo, hi = int(offs[parent]), int(offs[parent + 1])
        lst = self._lists[level]
        i = bisect_left(lst, value, lo, hi)
        if i < hi and lst[i] == value:
            return i
        return -1

    def child_set(self, level: int, parent: int) -> SetView:
        """Children of entry ``parent`` of level ``level-1`` (``parent=0`` for the root)."""
        return self._sets[level][parent]

    def child_range(self, level: int, parent: int) -> tuple[int, int]:
        offs = self.offsets[level]
        return int(offs[parent]), int(offs[parent + 1])

    def prefix_position(self, prefix: Sequence[int]) -> int:
        """Entry position of ``prefix`` at level ``len(prefix)-1``, or -1."""
        self._flush()
        pos = 0
        for l, v in enumerate(prefix):
            pos = self.find(l, pos, int(v))
            if pos < 0:
                return -1
        return pos

    def lookup(self, prefix: Sequence[int] = ()) -> SetView:
        self._flush()
        if len(prefix) >= self.depth:
            raise ValueError("prefix must be shorter than the trie depth")
        pos = self.prefix_position(prefix) if prefix else 0
        if pos < 0:
            return materialize_set(np.empty(0, dtype=np.uint32))
        return self._sets[len(prefix)][pos]

    def annotation_at(self, leaf_pos: int):
        return None if self.annotations is None else self.annotations[leaf_pos]

    def paths(self) -> np.ndarray:
        """All root-to-leaf paths in trie column order."""
        self._flush()
        return self.tuples

    def layout_counts(self) -> Counter:
        self._flush()
        c: Counter = Counter()
        for level in self._sets:
            for s in level:
                c.update(s.layout_counts())
        return c

    def append(self, prefix: Sequence[int], xs, annotations=None) -> None:
        if len(prefix) != self.depth - 1:
            raise ValueError("append needs a prefix one shorter than the trie depth")
        ids = xs.tolist() if isinstance(xs, SetView) else [int(x) for x in xs]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise OrderViolation("appended elements must be strictly increasing")
        if not ids:
            return
        rows = np.empty((len(ids), self.depth), dtype=np.uint32)
        rows[:, :-1] = np.asarray(prefix, dtype=np.uint32)
        rows[:, -1] = ids
        anns = None
        if self.annotations is not None:
            if annotations is None:
                annotations = np.ones(len(ids), dtype=self.annotations.dtype)
            anns = np.asarray(annotations, dtype=self.annotations.dtype)
        with self._lock:
            self._pending.append((rows, anns))


def _build_levels(tuples: np.ndarray, depth: int):
    m = len(tuples)
    values: list[np.ndarray] = []
    offsets: list[np.ndarray] = []
    # new_prefix[l][i]: row i starts a new distinct prefix of length l+1
    prev_new = np.zeros(m, dtype=bool)
    if m:
        prev_new[0] = True
    parent_count = 1
    parent_idx = np.zeros(m, dtype=np.int64)
    for l in range(depth):
        col = tuples[:, l] if m else np.empty(0, dtype=np.uint32)
        new = prev_new.copy()
        if m > 1:
            new[1:] |= col[1:] != col[:-1]
        vals = col[new].astype(np.uint32)
        parents = parent_idx[new]
        offs = np.searchsorted(parents, np.arange(parent_count + 1)).astype(np.int64)
        values.append(vals)
        offsets.append(offs)
        parent_idx = np.cumsum(new) - 1
        parent_count = len(vals)
        prev_new = new
    return values, offsets


def _sort_dedup(tuples: np.ndarray, annotations: np.ndarray | None, keep: str = "check"):
    if len(tuples) == 0:
        return tuples.reshape(0, tuples.shape[1] if tuples.ndim == 2 else 0), annotations
    keys = tuple(tuples[:, c] for c in reversed(range(tuples.shape[1])))
    # lexsort is stable, so earlier rows win among duplicates for keep="first"
    idx = np.lexsort(keys) if keys else np.arange(len(tuples))
    t = tuples[idx]
    first = np.ones(len(t), dtype=bool)
    if len(t) > 1:
        first[1:] = np.any(t[1:] != t[:-1], axis=1)
    if annotations is not None:
        a = np.asarray(annotations)[idx]
        if keep == "check":
            grp = np.cumsum(first) - 1
            ref = a[first][grp]
            if not np.array_equal(ref, a):
                bad = int(np.flatnonzero(ref != a)[0])
                raise AnnotationConflict(f"tuple {t[bad].tolist()} has conflicting annotations")
        annotations = a[first]
    return t[first], annotations


def build_trie(tuples, attr_order: Sequence[int] | None = None, annotation=None, *,
               granularity: Granularity = Granularity.SET, block_size: int = DEFAULT_BLOCK_SIZE,
               width: int = DEFAULT_WIDTH) -> Trie:
    """Sort, deduplicate and index ``tuples`` in ``attr_order`` column order."""
    t = np.asarray(tuples, dtype=np.int64)
    if t.ndim == 1:
        t = t.reshape(-1, 1) if len(t) else t.reshape(0, len(attr_order or (0,)))
    if len(t) and (t.min() < 0 or t.max() >= MAX_IDS):
        raise Overflow("tuple ids must fit in 32 bits")
    k = t.shape[1]
    order = tuple(range(k)) if attr_order is None else tuple(attr_order)
    if sorted(order) != list(range(k)):
        raise ValueError(f"attr_order {order} is not a permutation of {k} columns")
    t = t[:, list(order)].astype(np.uint32)
    ann = None if annotation is None else np.asarray(annotation)
    if ann is not None and len(ann) != len(t):
        raise ValueError("annotation column must align with tuples")
    t, ann = _sort_dedup(t, ann)
    return Trie(t, ann, order, granularity, block_size, width)


def trie_lookup(trie: Trie, t: Sequence[int] = ()) -> SetView:
    return trie.lookup(t)


def trie_append(trie: Trie, t: Sequence[int], xs, annotations=None) -> None:
    trie.append(t, xs, annotations)


# -- catalog ----------------------------------------------------------------

@dataclass
class StoredRelation:
    name: str
    arity: int
    tuples: np.ndarray                         # (m, arity) uint32, deduplicated
    annotations: np.ndarray | None = None
    annotation_type: str | None = None
    intensional: bool = False
    tries: dict[tuple[int, ...], Trie] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tuples)


def _natural_key(s: str):
    try:
        return (0, float(s), s)
    except ValueError:
        return (1, 0.0, s)


class Catalog:
    """Named relations sharing one dictionary, with cached trie indexes."""

    def __init__(self, dictionary: Dictionary | None = None, *,
                 granularity: Granularity = Granularity.SET,
                 block_size: int = DEFAULT_BLOCK_SIZE, width: int = DEFAULT_WIDTH,
                 parent: "Catalog | None" = None):
        self.dictionary = dictionary if dictionary is not None else Dictionary()
        self.granularity = granularity
        self.block_size = block_size
        self.width = width
        self.parent = parent
        self.relations: dict[str, StoredRelation] = {}
        self.aliases: dict[str, str] = {}
        self.meta: dict = {}
        self._lock = threading.RLock()

    # -- schema -----------------------------------------------------------

    def resolve(self, name: str) -> str:
        seen = set()
        cat: Catalog | None = self
        while cat is not None:
            if name in cat.relations:
                return name
            if name in cat.aliases and name not in seen:
                seen.add(name)
                name = cat.aliases[name]
                cat = self
                continue
            cat = cat.parent
        return name

    def get(self, name: str) -> StoredRelation | None:
        name = self.resolve(name)
        cat: Catalog | None = self
        while cat is not None:
            if name in cat.relations:
                return cat.relations[name]
            cat = cat.parent
        return None

    def relation(self, name: str) -> StoredRelation:
        rel = self.get(name)
        if rel is None:
            raise KeyError(name)
        return rel

    def has_relation(self, name: str) -> bool:
        return self.get(name) is not None

    def arity(self, name: str) -> int:
        return self.relation(name).arity

    def annotation_type(self, name: str) -> str | None:
        return self.relation(name).annotation_type

    def encode_constant(self, value: str) -> int | None:
        return self.dictionary.encode(value)

    def names(self) -> list[str]:
        out: dict[str, None] = {}
        cat: Catalog | None = self
        while cat is not None:
            out.update(dict.fromkeys(cat.relations))
            cat = cat.parent
        return sorted(out)

    def add_alias(self, alias: str, target: str) -> None:
        self.aliases[alias] = target

    def overlay(self) -> "Catalog":
        """A child catalog that sees this one's relations but stores its own."""
        return Catalog(self.dictionary, granularity=self.granularity,
                       block_size=self.block_size, width=self.width, parent=self)

    # -- relations --------------------------------------------------------

    def add_relation(self, name: str, tuples, annotations=None, annotation_type: str | None = None,
                     *, intensional: bool = False, build_orders: bool = True) -> StoredRelation:
        t = np.asarray(tuples, dtype=np.int64)
        arity = t.shape[1] if t.ndim == 2 else 0
        if t.ndim != 2:
            t = t.reshape(len(t), -1) if len(t) else t.reshape(0, 0)
            arity = t.shape[1]
        if arity == 0:
            # scalar relation: zero or one empty tuple
            t = np.zeros((min(len(t), 1), 0), dtype=np.uint32)
            ann = None if annotations is None else np.asarray(annotations)[:len(t)]
            rel = StoredRelation(name, 0, t, ann, annotation_type, intensional)
        else:
            t, ann = _sort_dedup(t.astype(np.uint32), None if annotations is None
                                 else np.asarray(annotations))
            rel = StoredRelation(name, arity, t, ann, annotation_type, intensional)
        with self._lock:
            self.relations[name] = rel
        if build_orders and arity == 2:
            self.trie(name, (0, 1))
            self.trie(name, (1, 0))
        return rel

    def add_raw(self, raw: RawRelation, name: str | None = None) -> StoredRelation:
        ids = self.dictionary.encode_many(v for row in raw.tuples for v in row)
        t = ids.reshape(len(raw.tuples), raw.arity)
        ann = None if raw.annotations is None else np.asarray(raw.annotations)
        return self.add_relation(name or raw.name, t, ann, raw.annotation_type)

    def trie(self, name: str, order: Sequence[int]) -> Trie:
        rel = self.relation(name)
        order = tuple(order)
        tr = rel.tries.get(order)
        if tr is None:
            with self._lock:
                tr = rel.tries.get(order)
                if tr is None:
                    tr = build_trie(rel.tuples, order, rel.annotations, granularity=self.granularity,
                                    block_size=self.block_size, width=self.width)
                    rel.tries[order] = tr
        return tr

    def set_granularity(self, granularity: Granularity) -> None:
        """Change the set layout granularity, dropping cached tries."""
        self.granularity = granularity
        cat: Catalog | None = self
        while cat is not None:
            cat.granularity = granularity
            for rel in cat.relations.values():
                rel.tries.clear()
            cat = cat.parent

    def decode(self, ids: Iterable[int]) -> list[str]:
        return self.dictionary.decode_many(ids)

    def decoded_rows(self, name: str) -> list[tuple]:
        """Rows of a relation as decoded values plus annotation, naturally sorted."""
        rel = self.relation(name)
        vs = self.dictionary.values
        rows = []
        for i, row in enumerate(rel.tuples.tolist()):
            key = tuple(vs[x] for x in row)
            if rel.annotations is not None:
                rows.append(key + (rel.annotations[i].item(),))
            else:
                rows.append(key)
        k = rel.arity
        rows.sort(key=lambda r: tuple(_natural_key(x) for x in r[:k]))
        return rows

    def stats(self) -> dict:
        out = {"dictionary_size": len(self.dictionary), "granularity": self.granularity.value,
               "relations": {}}
        for name in self.names():
            rel = self.relation(name)
            out["relations"][name] = {"arity": rel.arity, "tuples": len(rel),
                                      "annotation": rel.annotation_type,
                                      "orders": [list(o) for o in sorted(rel.tries)]}
        out["aliases"] = dict(sorted(self.aliases.items()))
        return out

    # -- construction -----------------------------------------------------

    @classmethod
    def from_edge_list(cls, raw: RawRelation, *, name: str = "Edge",
                       ordering: Ordering | str = Ordering.NONE, prune: bool = False, seed: int = 0,
                       granularity: Granularity = Granularity.SET,
                       block_size: int = DEFAULT_BLOCK_SIZE, width: int = DEFAULT_WIDTH) -> "Catalog":
        """Encode a graph, relabel its nodes by ``ordering`` and index it.

        With ``prune`` only edges with source id greater than destination id are
        kept (intended for symmetric inputs).
        """
        if raw.arity != 2:
            raise ValueError("edge lists must have arity 2")
        first = build_dictionary(v for row in raw.tuples for v in row)
        n = len(first)
        e = np.array([[first.index[a], first.index[b]] for a, b in raw.tuples],
                     dtype=np.int64).reshape(-1, 2)
        perm = order_nodes(adjacency(e, n), ordering, seed)
        dictionary = build_dictionary(first.values, perm)
        cat = cls(dictionary, granularity=granularity, block_size=block_size, width=width)
        e = perm[e] if len(e) else e
        ann = None if raw.annotations is None else np.asarray(raw.annotations)
        if prune:
            keep = e[:, 0] > e[:, 1]
            e = e[keep]
            ann = None if ann is None else ann[keep]
        cat.add_relation(name, e, ann, raw.annotation_type)
        cat.meta.update({"ordering": Ordering(ordering).value, "prune": prune, "seed": seed,
                         "source": raw.path})
        return cat

    # -- snapshot ---------------------------------------------------------

    def save(self, path) -> None:
        """Write a versioned, self-describing ``.npz`` snapshot."""
        arrays: dict[str, np.ndarray] = {}
        rels = []
        for i, (name, rel) in enumerate(sorted(self.relations.items())):
            entry = {"name": name, "arity": rel.arity, "annotation_type": rel.annotation_type,
                     "tuples": f"r{i}_tuples", "orders": []}
            arrays[f"r{i}_tuples"] = rel.tuples
            if rel.annotations is not None:
                entry["annotations"] = f"r{i}_ann"
                arrays[f"r{i}_ann"] = rel.annotations
            for j, (order, tr) in enumerate(sorted(rel.tries.items())):
                tr._flush()
                levels = []
                for l in range(tr.depth):
                    vk, ok = f"r{i}_t{j}_v{l}", f"r{i}_t{j}_o{l}"
                    arrays[vk] = tr.values[l]
                    arrays[ok] = tr.offsets[l]
                    levels.append([vk, ok])
                entry["orders"].append({"order": list(order), "levels": levels})
            rels.append(entry)
        header = {"format": SNAPSHOT_FORMAT, "version": SNAPSHOT_VERSION,
                  "dictionary": self.dictionary.values, "relations": rels,
                  "aliases": self.aliases, "granularity": self.granularity.value,
                  "block_size": self.block_size, "width": self.width, "meta": self.meta}
        arrays["header"] = np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)
        try:
            with open(path, "wb") as fh:
                np.savez_compressed(fh, **arrays)
        except OSError as e:
            raise IoError(f"cannot write {path}: {e.strerror or e}") from e

    @classmethod
    def load(cls, path) -> "Catalog":
        try:
            data = np.load(path, allow_pickle=False)
        except OSError as e:
            raise IoError(f"cannot read {path}: {e.strerror or e}") from e
        except ValueError as e:
            raise SnapshotError(f"{path} is not a snapshot: {e}") from e
        with data:
            if "header" not in data:
                raise SnapshotError(f"{path} has no snapshot header")
            header = json.loads(bytes(data["header"]).decode("utf-8"))
            if header.get("format") != SNAPSHOT_FORMAT:
                raise SnapshotError(f"{path}: unknown format {header.get('format')!r}")
            if header.get("version") != SNAPSHOT_VERSION:
                raise SnapshotError(f"{path}: unsupported snapshot version {header.get('version')}")
            values = header["dictionary"]
            cat = cls(Dictionary(values, {v: i for i, v in enumerate(values)}),
                      granularity=Granularity(header["granularity"]),
                      block_size=header["block_size"], width=header["width"])
            cat.aliases = dict(header.get("aliases", {}))
            cat.meta = dict(header.get("meta", {}))
            for entry in header["relations"]:
                t = data[entry["tuples"]]
                ann = data[entry["annotations"]] if "annotations" in entry else None
                rel = StoredRelation(entry["name"], entry["arity"], t, ann, entry["annotation_type"])
                for o in entry["orders"]:
                    order = tuple(o["order"])
                    tuples = t[:, list(order)] if len(t) else t
                    tann = ann
                    if len(t):
                        # stored rows are in (0..k) order; reorder for this trie
                        tuples, tann = _sort_dedup(np.ascontiguousarray(tuples), ann)
                    tr = Trie.__new__(Trie)
                    tr.order, tr.depth = order, len(order)
                    tr.granularity, tr.block_size, tr.width = cat.granularity, cat.block_size, cat.width
                    tr._lock, tr._pending = threading.Lock(), []
                    tr.tuples, tr.annotations = tuples, tann
                    tr.values = [data[v] for v, _ in o["levels"]]
                    tr.offsets = [data[k] for _, k in o["levels"]]
                    tr._lists = [v.tolist() for v in tr.values]
                    tr._sets = [tr._materialize_level(l) for l in range(tr.depth)]
                    rel.tries[order] = tr
                cat.relations[rel.name] = rel
        return cat


__all__ = [
    "Catalog", "Dictionary", "Ordering", "RawRelation", "StoredRelation", "Trie",
    "adjacency", "build_dictionary", "build_trie", "degree_skew", "density_skew",
    "load_relation", "order_nodes", "prune_symmetric", "symmetric_closure",
    "trie_append", "trie_lookup",
]
