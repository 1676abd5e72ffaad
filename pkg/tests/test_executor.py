import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_catalog, query_text, random_graph, run_query, symmetric
from ghdjoin.errors import EvalError, NonMonotoneAggregate
from ghdjoin.executor import (MAX, MIN, SUM, ExecOptions, Metrics, RuleRun, _Context,
                              execute, plan_program, run_seminaive)
from ghdjoin.frontend import parse_program, validate
from ghdjoin.storage import Catalog, RawRelation
from oracles import bfs_distances, run_program

_edges = st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), max_size=40).map(symmetric)

BODIES = [
    "Q(x,y) :- Edge(x,y).",
    "Q(x,z) :- Edge(x,y),Edge(y,z).",
    "Q(x,y,z) :- Edge(x,y),Edge(y,z),Edge(x,z).",
    "Q(x) :- Edge(x,y),Edge(y,z),Edge(x,z).",
    "Q(;c:long) :- Edge(x,y),Edge(y,z),Edge(x,z); c=<<COUNT(*)>>.",
    "Q(x;c:int) :- Edge(x,y),Edge(y,z); c=<<COUNT(z)>>.",
    "Q(x;c:int) :- Edge(x,y),Edge(y,z),Edge(z,w); c=<<COUNT(*)>>.",
    'Q(y) :- Edge("1",y),Edge(y,z),Edge("1",z).',
    "Q(x,w) :- Edge(x,y),Edge(y,z),Edge(x,z),Edge(x,w).",
    "Q(x) :- Edge(x,x).",
    "Q(x,y) :- Edge(x,y),Edge(y,x),Edge(x,x).",
]


@pytest.mark.parametrize("text", BODIES)
@settings(max_examples=25)
@given(edges=_edges)
def test_matches_nested_loop_oracle(text, edges):
    cat = make_catalog(edges)
    got = run_query(text, cat).decoded()
    exp = run_program(text, edges)["Q"]
    assert sorted(got) == sorted(k + (v,) if v is not None else k for k, v in exp.items())


@pytest.mark.parametrize("name", ["triangle", "4clique", "lollipop", "barbell",
                                  "count_triangle", "s4clique", "sbarbell"])
@pytest.mark.parametrize("threads", [1, 3])
def test_bundled_queries_match_oracle(name, threads):
    rng = np.random.default_rng(7)
    edges = random_graph(rng, 14, 0.35, names=["start", "node"])
    text = query_text(name)
    cat = make_catalog(edges, prune=name == "count_triangle")
    got = run_query(text, cat, threads=threads)
    oracle_edges = [(a, b) for a, b in edges if name != "count_triangle" or
                    cat.encode_constant(a) > cat.encode_constant(b)]
    exp = run_program(text, oracle_edges)[got.last]
    rel = got.relation()
    assert {tuple(cat.decode(k)): v for k, v in rel.rows.items()} == exp


@pytest.mark.parametrize("opts", [dict(ghd=False), dict(dedup=False), dict(pushdown=False),
                                  dict(threads=4), dict(chunk_size=1)])
def test_option_invariance(opts):
    rng = np.random.default_rng(3)
    edges = random_graph(rng, 16, 0.4, names=["start", "node"])
    cat = make_catalog(edges)
    for name in ("barbell", "sbarbell", "lollipop"):
        base = run_query(query_text(name), cat).decoded()
        assert run_query(query_text(name), cat, cache_plans=False, **opts).decoded() == base


# -- semirings ---------------------------------------------------------------

_nums = st.integers(-50, 50)


@pytest.mark.parametrize("ring", [SUM, MIN, MAX])
@given(a=_nums, b=_nums, c=_nums)
def test_semiring_laws(ring, a, b, c):
    p, t = ring.plus, ring.times
    assert p(a, b) == p(b, a)
    assert p(p(a, b), c) == p(a, p(b, c))
    assert t(a, ring.one) == a
    if ring is not MAX:   # max-times distributes only over non-negatives
        assert t(a, p(b, c)) == p(t(a, b), t(a, c))


def test_weighted_aggregates():
    raw = RawRelation("Edge", 2, [("a", "b"), ("b", "c"), ("a", "c")], [2.0, 3.0, 7.0], "float")
    cat = Catalog.from_edge_list(raw)
    text = ("P(x,z;w:float) :- Edge(x,y),Edge(y,z); w=<<SUM(y)>>.\n"
            "M(x;w:float) :- Edge(x,y); w=<<MIN(y)>>.\n"
            "X(x;w:float) :- Edge(x,y); w=<<MAX(y)>>*2.\n")
    res = execute(parse_program(text), cat)
    assert res.decoded("P") == [("a", "c", 6.0)]
    assert res.decoded("M") == [("a", 2.0), ("b", 3.0)]
    assert res.decoded("X") == [("a", 14.0), ("b", 6.0)]


def test_repeated_head_merges():
    cat = make_catalog([("a", "b"), ("b", "c")])
    text = ("C(x;n:int) :- Edge(x,y); n=<<COUNT(*)>>.\n"
            "C(x;n:int) :- Edge(y,x); n=<<COUNT(*)>>.\n")
    assert run_query(text, cat).decoded() == [("a", 1), ("b", 2), ("c", 1)]


# -- empty inputs and errors -------------------------------------------------

def test_empty_relation():
    cat = make_catalog([])
    assert run_query("Q(x,y,z) :- Edge(x,y),Edge(y,z),Edge(x,z).", cat).decoded() == []
    assert run_query("Q(;c:long) :- Edge(x,y); c=<<COUNT(*)>>.", cat).scalar() == 0


def test_unknown_selection_constant():
    cat = make_catalog([("a", "b")])
    assert run_query('Q(y) :- Edge("zzz",y).', cat).decoded() == []


def test_division_by_zero():
    cat = make_catalog([("a", "b")])
    with pytest.raises(EvalError):
        run_query("Q(x;v:float) :- Edge(x,y); v=1/(<<COUNT(*)>>-1).", cat)


def test_non_converging_fixpoint():
    cat = make_catalog([("a", "b"), ("b", "a")])
    text = ("C(x;n:int) :- Edge(x,y); n=<<COUNT(*)>>.\n"
            "C(x;n:int)* :- Edge(x,y),C(y); n=<<SUM(y)>>+1.\n")
    with pytest.raises(EvalError):
        run_query(text, cat, max_rounds=50)


def test_seminaive_requires_min_or_max():
    cat = make_catalog([("a", "b")])
    irs = validate(parse_program("C(x;n:int) :- Edge(x,y); n=<<COUNT(*)>>.\n"
                                 "C(x;n:int)* :- Edge(x,y),C(y); n=<<SUM(y)>>.\n"), cat)
    opts = ExecOptions()
    plan = plan_program(irs, cat, opts)[1]
    ctx = _Context(cat.overlay(), opts, Metrics())
    with pytest.raises(NonMonotoneAggregate):
        run_seminaive(ctx, RuleRun(irs[1], plan), "k")


# -- recursion -----------------------------------------------------------------

def test_literal_sssp_rule():
    # seed rule gives start neighbours 1, recursion adds one per hop;
    # the start itself is reached through a neighbour at distance 2
    edges = symmetric([("start", "a"), ("a", "b"), ("b", "c")])
    res = run_query(query_text("sssp"), make_catalog(edges))
    assert dict((k, v) for k, v in res.decoded()) == {"a": 1, "start": 2, "b": 2, "c": 3}
    exp = run_program(query_text("sssp"), edges)["SSSP"]
    assert {k[0]: v for k, v in exp.items()} == {"a": 1, "start": 2, "b": 2, "c": 3}


@pytest.mark.parametrize("naive", [False, True])
def test_seeded_sssp_is_bfs(naive):
    rng = np.random.default_rng(11)
    edges = random_graph(rng, 25, 0.12, names=["start"])
    cat = make_catalog(edges, extra={"Start": [("start",)]})
    res = run_query(query_text("sssp_seeded"), cat, naive=naive)
    dist = bfs_distances(edges, "start")
    assert dict(res.decoded()) == {v: d + 1 for v, d in dist.items()}


def test_naive_iteration_count():
    cat = make_catalog(symmetric([("a", "b"), ("b", "c")]))
    res = run_query(query_text("pagerank"), cat)
    assert list(res.metrics.rounds.values()) == [5]


def test_metrics_schema():
    cat = make_catalog(symmetric([("a", "b"), ("b", "c"), ("a", "c")]))
    m = run_query(query_text("triangle"), cat).metrics.as_dict()
    assert m["schema"] == "ghdjoin-metrics/1"
    assert {"iterations", "node_evaluations", "intersections", "wall_time_s"} <= set(m)
    assert "wall_time_s" not in run_query(query_text("triangle"), cat).metrics.as_dict(
        include_time=False)
