import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_catalog
from ghdjoin.errors import (AnnotationConflict, DegenerateDistribution, IoError, OrderViolation,
                            RowArityMismatch, SnapshotError)
from ghdjoin.setkernel import Granularity
from ghdjoin.storage import (Catalog, Ordering, RawRelation, adjacency, build_dictionary,
                             build_trie, degree_skew, load_relation, order_nodes,
                             prune_symmetric, symmetric_closure)

_tuples = st.lists(st.tuples(st.integers(0, 40), st.integers(0, 40), st.integers(0, 40)),
                   max_size=60)


# -- ingestion --------------------------------------------------------------

def test_load_edge_list(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("# comment\n1 2\n\n2 3\n")
    raw = load_relation(p)
    assert raw.tuples == [("1", "2"), ("2", "3")]
    assert raw.name == "g" and raw.annotations is None


def test_load_weighted(tmp_path):
    p = tmp_path / "w.txt"
    p.write_text("a b 0.5\nb c 2\n")
    raw = load_relation(p, 2, annotated=True)
    assert raw.annotations == [0.5, 2.0]
    assert raw.annotation_type == "float"


@pytest.mark.parametrize("body, line", [("1 2\n3\n", 2), ("1 2 3\n", 1), ("\n# c\n1\n", 3)])
def test_row_arity_mismatch(tmp_path, body, line):
    p = tmp_path / "bad.txt"
    p.write_text(body)
    with pytest.raises(RowArityMismatch) as ei:
        load_relation(p)
    assert ei.value.line == line and ei.value.expected == 2


def test_missing_file(tmp_path):
    with pytest.raises(IoError):
        load_relation(tmp_path / "nope.txt")


# -- dictionary and orderings -----------------------------------------------

@given(st.lists(st.text(min_size=1, max_size=3), max_size=30))
def test_dictionary_bijection(values):
    d = build_dictionary(values)
    uniq = list(dict.fromkeys(values))
    assert d.values == uniq
    assert all(d.decode(d.encode(v)) == v for v in uniq)


def test_dictionary_relabel():
    d = build_dictionary(["a", "b", "c"], [2, 0, 1])
    assert [d.encode(v) for v in "abc"] == [2, 0, 1]
    with pytest.raises(ValueError):
        build_dictionary(["a", "b"], [0, 0])


def _graph(rng, n, p):
    e = [(a, b) for a, b in itertools.combinations(range(n), 2) if rng.random() < p]
    return adjacency(symmetric_closure(np.array(e, dtype=np.int64).reshape(-1, 2)), n)


@pytest.mark.parametrize("strategy", list(Ordering))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_orderings_are_permutations(strategy, seed):
    adj = _graph(np.random.default_rng(seed), 30, 0.2)
    perm = order_nodes(adj, strategy, seed)
    assert sorted(perm.tolist()) == list(range(30))
    assert order_nodes(adj, strategy, seed).tolist() == perm.tolist()


def test_degree_ordering_puts_hubs_first():
    adj = adjacency(symmetric_closure(np.array([(0, i) for i in range(1, 6)] + [(1, 2)])))
    deg = [len(a) for a in adj]
    perm = order_nodes(adj, Ordering.DEGREE)
    by_new = sorted(range(len(adj)), key=lambda v: perm[v])
    assert [deg[v] for v in by_new] == sorted(deg, reverse=True)
    rev = order_nodes(adj, Ordering.REV_DEGREE)
    assert rev[0] == len(adj) - 1


def test_prune_and_closure():
    e = np.array([[0, 1], [1, 0], [2, 1]])
    assert prune_symmetric(e).tolist() == [[1, 0], [2, 1]]
    assert symmetric_closure(np.array([[0, 1]])).tolist() == [[0, 1], [1, 0]]


def test_degree_skew():
    assert degree_skew([1, 1, 1, 4]) == pytest.approx(3 * (1.75 - 1) / np.std([1, 1, 1, 4]))
    assert degree_skew([1, 1, 1, 10]) > 0
    with pytest.raises(DegenerateDistribution):
        degree_skew([3, 3, 3])
    with pytest.raises(DegenerateDistribution):
        degree_skew([])


# -- tries ------------------------------------------------------------------

@pytest.mark.parametrize("gran", list(Granularity))
@given(rows=_tuples, order=st.permutations([0, 1, 2]))
def test_trie_paths_and_lookup(gran, rows, order):
    t = build_trie(np.array(rows, dtype=np.int64).reshape(-1, 3), order, granularity=gran)
    expect = sorted({tuple(r[c] for c in order) for r in rows})
    assert [tuple(p) for p in t.paths().tolist()] == expect
    assert t.cardinality == len(expect)
    assert t.lookup().tolist() == sorted({r[0] for r in expect})
    for a in {r[0] for r in expect}:
        assert t.lookup([a]).tolist() == sorted({r[1] for r in expect if r[0] == a})
        for b in {r[1] for r in expect if r[0] == a}:
            got = t.lookup([a, b]).tolist()
            assert got == sorted(r[2] for r in expect if r[:2] == (a, b))
    assert t.lookup([99]).tolist() == []


def test_trie_annotations_and_conflicts():
    t = build_trie([[1, 2], [0, 5], [1, 2]], annotation=[0.5, 1.0, 0.5])
    assert t.paths().tolist() == [[0, 5], [1, 2]]
    assert t.annotations.tolist() == [1.0, 0.5]
    with pytest.raises(AnnotationConflict):
        build_trie([[1, 2], [1, 2]], annotation=[0.5, 0.7])


def test_trie_append():
    t = build_trie([[0, 1], [2, 3]])
    t.append([0], [4, 7])
    assert t.lookup([0]).tolist() == [1, 4, 7]
    with pytest.raises(OrderViolation):
        t.append([0], [9, 8])
    with pytest.raises(ValueError):
        t.append([], [1])


# -- catalog ----------------------------------------------------------------

def test_catalog_from_edge_list_prune():
    cat = make_catalog([("a", "b"), ("b", "a"), ("b", "c"), ("c", "b")], prune=True)
    rel = cat.relation("Edge")
    assert len(rel) == 2
    assert all(a > b for a, b in rel.tuples.tolist())
    assert set(rel.tries) == {(0, 1), (1, 0)}


def test_overlay_isolated():
    cat = make_catalog([("a", "b")])
    child = cat.overlay()
    child.add_relation("T", np.array([[0, 1]]))
    assert child.has_relation("T") and child.has_relation("Edge")
    assert not cat.has_relation("T")


def test_alias_resolution():
    cat = make_catalog([("a", "b")])
    cat.add_alias("R", "Edge")
    assert cat.relation("R") is cat.relation("Edge")


@pytest.mark.parametrize("gran", list(Granularity))
def test_snapshot_round_trip(tmp_path, gran):
    raw = RawRelation("Edge", 2, [("x", "y"), ("y", "z"), ("z", "x")], [1.0, 2.0, 3.0], "float")
    cat = Catalog.from_edge_list(raw, ordering="degree", granularity=gran)
    cat.add_relation("Start", np.array([[cat.encode_constant("x")]]))
    cat.add_alias("R", "Edge")
    path = tmp_path / "snap.npz"
    cat.save(path)
    back = Catalog.load(path)
    assert back.dictionary.values == cat.dictionary.values
    assert back.granularity is gran
    assert back.aliases == {"R": "Edge"}
    assert back.meta["ordering"] == "degree"
    for name in ("Edge", "Start"):
        assert back.decoded_rows(name) == cat.decoded_rows(name)
    for order in ((0, 1), (1, 0)):
        a, b = cat.trie("Edge", order), back.trie("Edge", order)
        assert a.paths().tolist() == b.paths().tolist()
        assert a.lookup().tolist() == b.lookup().tolist()


def test_snapshot_rejects_garbage(tmp_path):
    p = tmp_path / "bad.npz"
    np.savez(p, x=np.zeros(3))
    with pytest.raises(SnapshotError):
        Catalog.load(p)
    with pytest.raises(IoError):
        Catalog.load(tmp_path / "missing.npz")
