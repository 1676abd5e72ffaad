"""Reference implementations the engine is checked against.

Nothing here touches tries, set layouts, hypergraphs or GHDs: joins are
index nested loops over decoded string tuples.
"""

from __future__ import annotations

import itertools
from collections import defaultdict, deque
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog

from ghdjoin.frontend import (Agg, AggOp, BinOp, Const, Neg, Num, RecursionKind, Ref,
                              parse_program)

# -- nested-loop datalog ----------------------------------------------------


class Rel:
    """rows: tuple(str) -> annotation (None when unannotated)."""

    def __init__(self, rows=None, annotated=False):
        self.rows = dict(rows or {})
        self.annotated = annotated
        self._idx = {}

    def index(self, col):
        if col not in self._idx:
            d = defaultdict(list)
            for t in self.rows:
                d[t[col]].append(t)
            self._idx[col] = d
        return self._idx[col]


def _expr(e, agg, scalars):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Agg):
        return agg
    if isinstance(e, Ref):
        return scalars[e.name]
    if isinstance(e, Neg):
        return -_expr(e.operand, agg, scalars)
    a, b = _expr(e.left, agg, scalars), _expr(e.right, agg, scalars)
    return {"+": a + b, "-": a - b, "*": a * b}[e.op] if e.op != "/" else a / b


def _bindings(atoms, rels):
    """Yield (binding, [annotation of each annotated atom])."""
    order = []
    bound = set()
    remaining = list(range(len(atoms)))
    while remaining:
        # next atom: one sharing a bound variable or holding a constant, else the first
        pick = next((i for i in remaining if any(
            isinstance(t, Const) or t.name in bound for t in atoms[i][1].terms)), remaining[0])
        remaining.remove(pick)
        order.append(pick)
        bound |= {t.name for t in atoms[pick][1].terms if not isinstance(t, Const)}

    def rec(k, b, anns):
        if k == len(order):
            yield dict(b), list(anns)
            return
        rel, atom = atoms[order[k]]
        key_col = None
        for c, t in enumerate(atom.terms):
            if isinstance(t, Const) or t.name in b:
                key_col = c
                break
        if key_col is None:
            cands = list(rel.rows)
        else:
            t = atom.terms[key_col]
            v = t.value if isinstance(t, Const) else b[t.name]
            cands = rel.index(key_col).get(v, [])
        for tup in cands:
            nb = dict(b)
            ok = True
            for c, t in enumerate(atom.terms):
                if isinstance(t, Const):
                    ok = tup[c] == t.value
                elif t.name in nb:
                    ok = nb[t.name] == tup[c]
                else:
                    nb[t.name] = tup[c]
                if not ok:
                    break
            if ok:
                a = anns + ([rel.rows[tup]] if rel.annotated else [])
                yield from rec(k + 1, nb, a)

    yield from rec(0, {}, [])


def _cast(v, typ):
    if typ is None or v is None:
        return v
    return float(v) if typ == "float" else int(v)


def eval_rule(rule, rels, scalars):
    atoms = [(rels[a.relation], a) for a in rule.body]
    keys = rule.head_keys
    typ = rule.head_annotation.type if rule.head_annotation else None
    expr = rule.annotation_expr
    agg = None
    if expr is not None:
        stack = [expr]
        while stack:
            e = stack.pop()
            if isinstance(e, Agg):
                agg = e
            elif isinstance(e, BinOp):
                stack += [e.left, e.right]
            elif isinstance(e, Neg):
                stack.append(e.operand)
    groups = defaultdict(list)
    for b, anns in _bindings(atoms, rels):
        groups[tuple(b[k] for k in keys)].append((b, anns))
    out = {}
    if agg is None:
        for k in groups:
            out[k] = _cast(_expr(expr, None, scalars), typ) if expr is not None else None
        return out
    if not keys and not groups and agg.op in (AggOp.COUNT, AggOp.SUM):
        groups[()] = []
    for k, items in groups.items():
        if agg.op is AggOp.COUNT:
            val = len(items) if agg.var is None else len({b[agg.var] for b, _ in items})
        elif agg.op is AggOp.SUM:
            val = sum(float(np.prod(a)) if a else 1 for _, a in items) if items else 0
            if all(isinstance(x, int) for _, a in items for x in a):
                val = sum(int(np.prod(a)) if a else 1 for _, a in items)
        elif agg.op is AggOp.MIN:
            val = min(sum(a) for _, a in items)
        else:
            val = max(float(np.prod(a)) if a else 1 for _, a in items)
        out[k] = _cast(_expr(expr, val, scalars), typ)
    return out


def _merge(old, new, op):
    rows = dict(old)
    for k, v in new.items():
        if k in rows and op is not None and rows[k] is not None and v is not None:
            if op is AggOp.MIN:
                rows[k] = min(rows[k], v)
            elif op is AggOp.MAX:
                rows[k] = max(rows[k], v)
            else:
                rows[k] = rows[k] + v
        else:
            rows[k] = v
    return rows


def _agg_op(rule):
    e = rule.annotation_expr
    stack = [e] if e is not None else []
    while stack:
        x = stack.pop()
        if isinstance(x, Agg):
            return x.op
        if isinstance(x, BinOp):
            stack += [x.left, x.right]
        elif isinstance(x, Neg):
            stack.append(x.operand)
    return None


def run_program(text: str, edges, extra: dict | None = None, max_rounds: int = 10_000):
    """Evaluate a program over string edge tuples.

    Unknown binary body relations read ``Edge``; ``InvDeg`` is 1/out-degree.
    Returns {head name: {key tuple: value}}.
    """
    prog = parse_program(text)
    edge = Rel({tuple(map(str, e)): None for e in edges})
    base = {"Edge": edge}
    for name, rows in (extra or {}).items():
        base[name] = Rel({tuple(map(str, r)): None for r in rows})
    deg = defaultdict(int)
    for a, _ in edge.rows:
        deg[a] += 1
    base["InvDeg"] = Rel({(v,): 1.0 / d for v, d in deg.items()}, annotated=True)
    derived: dict[str, dict] = {}
    heads = {r.head_name for r in prog}

    def rels_now():
        out = dict(base)
        for r in prog:
            for a in r.body:
                if a.relation not in out and a.relation not in heads:
                    out[a.relation] = edge
        for name, rows in derived.items():
            out[name] = Rel(rows, annotated=any(v is not None for v in rows.values()))
        for name in heads:
            out.setdefault(name, Rel({}))
        return out

    def scalars():
        return {n: next(iter(r.values())) for n, r in derived.items()
                if r and all(len(k) == 0 for k in r)}

    for rule in prog:
        op = _agg_op(rule)
        name = rule.head_name
        kind = rule.recursion.kind
        if kind is RecursionKind.NONE:
            new = eval_rule(rule, rels_now(), scalars())
            derived[name] = _merge(derived[name], new, op) if name in derived else new
        elif kind is RecursionKind.NAIVE:
            for _ in range(rule.recursion.iterations):
                new = eval_rule(rule, rels_now(), scalars())
                if op in (AggOp.MIN, AggOp.MAX) or rule.head_annotation is None:
                    new = _merge(derived.get(name, {}), new, op)
                derived[name] = new
        else:
            for _ in range(max_rounds):
                new = eval_rule(rule, rels_now(), scalars())
                new = _merge(derived.get(name, {}), new, op)
                if new == derived.get(name, {}):
                    break
                derived[name] = new
            else:
                raise RuntimeError("no fixpoint")
    return derived


# -- graph algorithms -------------------------------------------------------

def bfs_distances(edges, start):
    adj = defaultdict(list)
    for a, b in edges:
        adj[str(a)].append(str(b))
    dist = {str(start): 0}
    q = deque([str(start)])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def dense_pagerank(edges, iterations=5):
    """Power iteration with numpy matrices, PageRank rule semantics."""
    nodes = sorted({str(a) for a, _ in edges} | {str(b) for _, b in edges})
    pos = {v: i for i, v in enumerate(nodes)}
    n = len(nodes)
    A = np.zeros((n, n))
    for a, b in edges:
        A[pos[str(a)], pos[str(b)]] = 1.0
    out_deg = A.sum(axis=1)
    sources = out_deg > 0
    N = int(sources.sum())
    inv = np.where(sources, 1.0 / np.where(sources, out_deg, 1), 0.0)
    p = np.where(sources, 1.0 / N, np.nan)
    for _ in range(iterations):
        contrib = np.where(sources, p * inv, 0.0)
        p = np.where(sources, 0.15 + 0.85 * (A @ np.nan_to_num(contrib)), np.nan)
    return {nodes[i]: float(p[i]) for i in range(n) if sources[i]}


# -- planning oracles -------------------------------------------------------

def lp_cover(edges: list[frozenset], vertices) -> Fraction:
    """Fractional edge cover number via scipy, rationalised."""
    vertices = sorted(vertices)
    if not vertices:
        return Fraction(0)
    A = np.array([[-1.0 if v in e else 0.0 for e in edges] for v in vertices])
    res = linprog(np.ones(len(edges)), A_ub=A, b_ub=-np.ones(len(vertices)),
                  bounds=[(0, None)] * len(edges), method="highs")
    assert res.status == 0
    return Fraction(res.fun).limit_denominator(64)


def _alpha_acyclic(bags: list[frozenset]) -> bool:
    """GYO reduction."""
    bags = [set(b) for b in bags]
    changed = True
    while changed and len(bags) > 1:
        changed = False
        counts = defaultdict(int)
        for b in bags:
            for v in b:
                counts[v] += 1
        for b in bags:
            lone = {v for v in b if counts[v] == 1}
            if lone:
                b -= lone
                changed = True
        for i, b in enumerate(bags):
            if any(j != i and b <= c for j, c in enumerate(bags)):
                bags.pop(i)
                changed = True
                break
    return len(bags) <= 1


def _partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for p in _partitions(rest):
        for i in range(len(p)):
            yield p[:i] + [[first] + p[i]] + p[i + 1:]
        yield [[first]] + p


def brute_force_fhw(edges: list[frozenset]) -> Fraction:
    """Min over edge partitions with an acyclic bag structure of the max bag cover."""
    best = None
    for part in _partitions(list(range(len(edges)))):
        bags = [frozenset().union(*(edges[i] for i in blk)) for blk in part]
        if not _alpha_acyclic(bags):
            continue
        w = max(lp_cover([edges[i] for i in blk], bags[k]) for k, blk in enumerate(part))
        if best is None or w < best:
            best = w
    return best


def triangle_edges():
    return [frozenset("xy"), frozenset("yz"), frozenset("xz")]


def clique_edges(k):
    vs = [f"v{i}" for i in range(k)]
    return [frozenset(p) for p in itertools.combinations(vs, 2)]
