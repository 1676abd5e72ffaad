"""Plan interpretation: Generic-Join inside GHD nodes, Yannakakis across them.

Each node joins the tries of its atoms plus the messages of its children.
Children whose subtree carries no output attribute missing from the node are
folded in as annotated inputs (early aggregation).  Children that do carry such
attributes act as semijoin filters on the way up and are joined back in a
top-down pass.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ghdjoin.errors import EvalError, MissingIndex, NonMonotoneAggregate
from ghdjoin.frontend import (Agg, AggOp, AtomIR, BinOp, Expr, Neg, Num, Program,
                              RecursionKind, Ref, RuleIR, validate)
from ghdjoin.planner import GHDNode, GHDPlan, plan_rule
from ghdjoin.setkernel import IntersectStats, SetView, intersect_all, materialize_set
from ghdjoin.storage import Catalog, Trie, build_trie

METRICS_SCHEMA = "ghdjoin-metrics/1"
CHUNK_SIZE = 32

# -- semirings --------------------------------------------------------------


@dataclass(frozen=True)
class Semiring:
    name: str
    plus: Callable
    times: Callable
    one: object

    def scale(self, value, count: int):
        """⊕ of ``count`` copies of ``value``."""
        if self.name == "sum":
            return value * count
        return value


def _add(a, b):
    return a + b


def _mul(a, b):
    return a * b


SUM = Semiring("sum", _add, _mul, 1)
MIN = Semiring("min", min, _add, 0)
MAX = Semiring("max", max, _mul, 1)


def semiring_for(op: AggOp | None) -> Semiring:
    if op is AggOp.MIN:
        return MIN
    if op is AggOp.MAX:
        return MAX
    return SUM


# -- options and metrics ----------------------------------------------------

@dataclass
class ExecOptions:
    threads: int = 1
    ghd: bool = True
    dedup: bool = True
    pushdown: bool = True
    naive: bool = False
    max_rounds: int = 10_000
    chunk_size: int = CHUNK_SIZE
    record_pairs: int = 0          # keep up to this many intersection operand pairs


@dataclass
class NodeMetrics:
    rule: str
    node: int
    iterations: int = 0
    materialized: int = 0
    evaluated: bool = True
    dedup_of: int | None = None


@dataclass
class Metrics:
    iterations: int = 0
    node_evaluations: int = 0
    materialized: int = 0
    rounds: dict = field(default_factory=dict)
    nodes: list = field(default_factory=list)
    intersections: IntersectStats = field(default_factory=IntersectStats)
    wall_time: float = 0.0
    pairs: list = field(default_factory=list)

    def as_dict(self, include_time: bool = True) -> dict:
        d = {
            "schema": METRICS_SCHEMA,
            "iterations": self.iterations,
            "node_evaluations": self.node_evaluations,
            "materialized_tuples": self.materialized,
            "recursion_rounds": dict(self.rounds),
            "nodes": [vars(n) for n in self.nodes],
            "intersections": self.intersections.as_dict(),
        }
        if include_time:
            d["wall_time_s"] = self.wall_time
        return d


# -- expression evaluation --------------------------------------------------

def eval_expr(expr: Expr, agg_value, scalars: dict[str, object]):
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Agg):
        return agg_value
    if isinstance(expr, Ref):
        if expr.name not in scalars:
            raise EvalError(f"scalar relation {expr.name!r} has no value")
        return scalars[expr.name]
    if isinstance(expr, Neg):
        return -eval_expr(expr.operand, agg_value, scalars)
    a = eval_expr(expr.left, agg_value, scalars)
    b = eval_expr(expr.right, agg_value, scalars)
    try:
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        return a / b
    except ZeroDivisionError:
        raise EvalError("division by zero in annotation expression") from None
    except OverflowError as e:
        raise EvalError(str(e)) from None


def fold_annotation(values: Sequence, expr: Expr | None = None, semiring: Semiring = SUM,
                    scalars: dict | None = None):
    """⊕-fold per-binding products, then apply the rule expression."""
    acc = None
    for v in values:
        acc = v if acc is None else semiring.plus(acc, v)
    if acc is None and semiring is SUM:
        acc = 0
    if expr is None:
        return acc
    return eval_expr(expr, acc, scalars or {})


def _cast(value, ann_type: str | None):
    if ann_type is None or value is None:
        return value
    if ann_type == "float":
        return float(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            return value
        return int(value)
    return int(value)


# -- relations --------------------------------------------------------------

@dataclass
class Relation:
    """A computed relation: key tuple -> annotation (None when unannotated)."""
    name: str
    keys: tuple[str, ...]
    rows: dict
    annotation_type: str | None = None

    def __len__(self) -> int:
        return len(self.rows)


def _store(cat: Catalog, rel: Relation) -> None:
    k = len(rel.keys)
    items = sorted(rel.rows.items())
    t = np.array([key for key, _ in items], dtype=np.int64).reshape(len(items), k)
    ann = None
    if rel.annotation_type is not None:
        dt = np.float64 if rel.annotation_type == "float" else object
        vals = [v for _, v in items]
        if dt is object and all(isinstance(v, int) and abs(v) < 2 ** 62 for v in vals):
            dt = np.int64
        ann = np.array(vals, dtype=dt)
    cat.add_relation(rel.name, t, ann, rel.annotation_type, intensional=True, build_orders=False)


def _load(cat: Catalog, name: str, keys: tuple[str, ...]) -> Relation:
    rel = cat.get(name)
    if rel is None:
        return Relation(name, keys, {}, None)
    rows = {}
    anns = None if rel.annotations is None else rel.annotations.tolist()
    for i, row in enumerate(rel.tuples.tolist()):
        rows[tuple(row)] = None if anns is None else anns[i]
    return Relation(name, keys, rows, rel.annotation_type)


# -- participants -----------------------------------------------------------

@dataclass
class _Part:
    trie: Trie
    vars: tuple[str, ...]      # variables in trie level order after the prefix
    start_level: int
    start_pos: int
    annotated: bool
    label: str
    const: object = None       # folded value of a participant with no free variables

    def level_of(self, v: str) -> int:
        return self.start_level + self.vars.index(v)


def _empty_trie(depth: int) -> Trie:
    return build_trie(np.zeros((0, depth), dtype=np.int64), tuple(range(depth)))


class _Context:
    """Per-execution state: catalog view, derived relations and metrics."""

    def __init__(self, catalog: Catalog, options: ExecOptions, metrics: Metrics):
        self.catalog = catalog
        self.options = options
        self.metrics = metrics
        self._derived: dict = {}
        self.pool = ThreadPoolExecutor(options.threads) if options.threads > 1 else None

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def trie_for(self, tuples: np.ndarray, ann, order, key=None) -> Trie:
        cat = self.catalog
        if key is not None and key in self._derived:
            return self._derived[key]
        tr = build_trie(tuples, order, ann, granularity=cat.granularity,
                        block_size=cat.block_size, width=cat.width)
        if key is not None:
            self._derived[key] = tr
        return tr

    def derived_relation(self, atom: AtomIR):
        key = ("derived", atom.derived, self.catalog.resolve(atom.derived_from))
        if key in self._derived:
            return self._derived[key]
        src = self.catalog.relation(atom.derived_from)
        if atom.derived != "inverse_degree":
            raise MissingIndex(f"unknown derived relation {atom.derived}")
        col = src.tuples[:, 0] if len(src.tuples) else np.empty(0, dtype=np.uint32)
        ids, counts = np.unique(col, return_counts=True)
        out = (ids.reshape(-1, 1).astype(np.int64), 1.0 / counts.astype(np.float64))
        self._derived[key] = out
        return out

    def atom_part(self, atom: AtomIR, order: Sequence[str], annotated: bool,
                  label: str) -> _Part | None:
        """Trie accessor for ``atom`` whose variable levels follow ``order``.

        Returns None when a selection constant is absent (empty input).
        """
        pos = {v: i for i, v in enumerate(order)}
        distinct = atom.variables
        sel_cols = [c for c, _, _ in atom.selections]
        if any(enc < 0 for _, _, enc in atom.selections):
            return None
        repeated = len(distinct) != sum(1 for v in atom.vars if v is not None)
        var_order = tuple(sorted(distinct, key=pos.__getitem__))
        if atom.derived is not None:
            t, ann = self.derived_relation(atom)
            tr = self.trie_for(t, ann, (0,), key=("derived-trie", atom.derived,
                                                  self.catalog.resolve(atom.derived_from)))
            return _Part(tr, var_order, 0, 0, annotated, label)
        rel = self.catalog.get(atom.relation)
        if rel is None:
            raise MissingIndex(f"relation {atom.relation} is not in the catalog")
        if repeated:
            t = rel.tuples.astype(np.int64)
            keep = np.ones(len(t), dtype=bool)
            for c, _, enc in atom.selections:
                keep &= t[:, c] == enc
            first_col = {}
            for c, v in enumerate(atom.vars):
                if v is None:
                    continue
                if v in first_col:
                    keep &= t[:, c] == t[:, first_col[v]]
                else:
                    first_col[v] = c
            cols = [first_col[v] for v in distinct]
            sub = t[keep][:, cols]
            ann = None if rel.annotations is None else rel.annotations[keep]
            order_idx = tuple(distinct.index(v) for v in var_order)
            tr = self.trie_for(sub, ann, order_idx)
            return _Part(tr, var_order, 0, 0, annotated and ann is not None, label)
        col_of = {v: c for c, v in enumerate(atom.vars) if v is not None}
        trie_order = tuple(sel_cols) + tuple(col_of[v] for v in var_order)
        tr = self.catalog.trie(atom.relation, trie_order)
        prefix = [enc for _, _, enc in atom.selections]
        start = 0
        if prefix:
            start = tr.prefix_position(prefix)
            if start < 0:
                return None
        return _Part(tr, var_order, len(prefix), start,
                     annotated and rel.annotations is not None, label)

    def message_part(self, rel: Relation, vars_: tuple[str, ...], order: Sequence[str],
                     annotated: bool, label: str) -> _Part:
        if not vars_:
            acc = None
            for val in rel.rows.values():
                acc = val if acc is None else self._plus(acc, val)
            return _Part(None, (), 0, 0, annotated, label, acc)
        pos = {v: i for i, v in enumerate(order)}
        var_order = tuple(sorted(vars_, key=pos.__getitem__))
        idx = [rel.keys.index(v) for v in vars_]
        rows: dict = {}
        for key, val in rel.rows.items():
            k = tuple(key[i] for i in idx)
            if annotated:
                rows[k] = val if k not in rows else self._plus(rows[k], val)
            else:
                rows[k] = None
        items = sorted(rows.items())
        t = np.array([k for k, _ in items], dtype=np.int64).reshape(len(items), len(vars_))
        ann = np.array([v for _, v in items], dtype=object) if annotated else None
        order_idx = tuple(vars_.index(v) for v in var_order)
        tr = self.trie_for(t, ann, order_idx)
        return _Part(tr, var_order, 0, 0, annotated, label)

    _plus = staticmethod(_add)


# -- generic join -----------------------------------------------------------

def generic_join(parts: Sequence[_Part], order: Sequence[str], keep: Sequence[str],
                 semiring: Semiring, *, stats: IntersectStats | None = None, chunk_size: int = CHUNK_SIZE,
                 pool: ThreadPoolExecutor | None = None, pairs: list | None = None,
                 pair_limit: int = 0):
    """Attribute-at-a-time worst-case optimal join over trie participants.

    Returns ``(rows, iterations)`` where ``rows`` maps the ``keep`` values of
    every binding to the ⊕ of the ⊗-products of participant annotations.
    Attributes outside ``keep`` are aggregated away as they are bound.
    """
    stats = stats if stats is not None else IntersectStats()
    order = tuple(order)
    n = len(order)
    base = semiring.one
    live = []
    for p in parts:
        if not p.vars:
            # fully bound by its prefix: contributes a constant factor
            if p.annotated:
                val = p.const if p.trie is None else _leaf_value(p.trie, p.start_pos)
                base = semiring.times(base, val)
            continue
        live.append(p)
    # per depth: participants binding the attribute and those completing there
    at = [[i for i, p in enumerate(live) if order[d] in p.vars] for d in range(n)]
    if any(not a for a in at):
        missing = [order[d] for d in range(n) if not at[d]]
        raise MissingIndex(f"no participant binds {missing}")
    levels = [[live[i].level_of(order[d]) for i in at[d]] for d in range(n)]
    done = [[i for i in at[d] if live[i].vars[-1] == order[d] and live[i].annotated]
            for d in range(n)]
    keep_idx = [order.index(v) for v in keep]
    in_keep = [v in keep for v in order]
    # trailing attributes that are neither kept nor annotated can be counted, not looped
    foldable = [not in_keep[d] and not done[d] for d in range(n)]
    times, plus, scale = semiring.times, semiring.plus, semiring.scale

    if n == 0:
        return {(): base}, 0

    def run(first_values: list[int] | None, positions: list[int]):
        out: dict = {}
        binding = [0] * n
        its = 0
        local_stats = IntersectStats()

        def rec(d: int, pos: list[int], prod):
            nonlocal its
            idx = at[d]
            if first_values is not None and d == 0:
                vals = first_values
            else:
                sets = [live[i].trie.child_set(lv, pos[i]) for i, lv in zip(idx, levels[d])]
                if len(sets) == 1:
                    s = sets[0]
                else:
                    if pairs is not None and len(pairs) < pair_limit:
                        pairs.append((sets[0].ids().copy(), sets[1].ids().copy()))
                    s = intersect_all(sets, local_stats)
                if s.cardinality == 0:
                    return
                if d == n - 1 and foldable[d]:
                    its += s.cardinality
                    key = tuple(binding[k] for k in keep_idx)
                    val = scale(prod, s.cardinality)
                    out[key] = val if key not in out else plus(out[key], val)
                    return
                vals = s.tolist()
            its += len(vals)
            last = d == n - 1
            lv = levels[d]
            fin = done[d]
            for v in vals:
                saved = [pos[i] for i in idx]
                ok = True
                for i, l in zip(idx, lv):
                    q = live[i].trie.find(l, pos[i], v)
                    if q < 0:
                        ok = False
                        break
                    pos[i] = q
                if ok:
                    p2 = prod
                    for i in fin:
                        p2 = times(p2, _leaf_value(live[i].trie, pos[i]))
                    binding[d] = v
                    if last:
                        key = tuple(binding[k] for k in keep_idx)
                        out[key] = p2 if key not in out else plus(out[key], p2)
                    else:
                        rec(d + 1, pos, p2)
                for i, s_ in zip(idx, saved):
                    pos[i] = s_
        rec(0, positions, base)
        return out, its, local_stats

    start = [p.start_pos for p in live]
    # outermost candidates are split into fixed chunks so that results and
    # counters do not depend on the worker count
    sets0 = [live[i].trie.child_set(lv, start[i]) for i, lv in zip(at[0], levels[0])]
    if len(sets0) == 1:
        s0 = sets0[0]
    else:
        if pairs is not None and len(pairs) < pair_limit:
            pairs.append((sets0[0].ids().copy(), sets0[1].ids().copy()))
        s0 = intersect_all(sets0, stats)
    if s0.cardinality == 0:
        return {}, 0
    if n == 1 and foldable[0]:
        return {(): scale(base, s0.cardinality)}, s0.cardinality
    first = s0.tolist()
    chunks = [first[i:i + chunk_size] for i in range(0, len(first), chunk_size)]
    if pool is not None and len(chunks) > 1:
        results = list(pool.map(lambda c: run(c, list(start)), chunks))
    else:
        results = [run(c, list(start)) for c in chunks]
    out: dict = {}
    total = 0
    for part_out, its, st in results:
        total += its
        stats.merge(st)
        for k, v in part_out.items():
            out[k] = v if k not in out else plus(out[k], v)
    return out, total


def _leaf_value(trie: Trie, pos: int):
    v = trie.annotations[pos]
    return v.item() if hasattr(v, "item") else v


# -- Yannakakis -------------------------------------------------------------

def _rename(rel_rows: dict, src_keys: tuple, mapping: dict, dst_keys: tuple) -> dict:
    idx = [src_keys.index(_inverse(mapping, v)) for v in dst_keys]
    return {tuple(k[i] for i in idx): v for k, v in rel_rows.items()}


def _inverse(mapping: dict, v: str) -> str:
    for a, b in mapping.items():
        if b == v:
            return a
    raise KeyError(v)


def evaluate_node(ctx: _Context, ir: RuleIR, plan: GHDPlan, node: GHDNode, results: dict,
                  semiring: Semiring, use_annotations: bool) -> dict:
    rule, h = ir, plan.hypergraph
    parts: list[_Part] = []
    for e in node.edges:
        a = rule.atoms[h.edges[e].atom]
        owner = e in node.lam
        p = ctx.atom_part(a, node.order, owner and use_annotations, h.edges[e].label(rule))
        if p is None:
            return {}
        parts.append(p)
    for c in node.children:
        child = plan.nodes[c]
        shared = tuple(v for v in child.keep if v in node.chi)
        rows = results[c]
        if not rows:
            return {}
        if not child.expand:
            rel = Relation(f"v{c}", child.keep, rows)
            parts.append(ctx.message_part(rel, shared, node.order, True, f"v{c}"))
        else:
            rel = Relation(f"v{c}", child.keep, rows)
            parts.append(ctx.message_part(rel, shared, node.order, False, f"v{c}"))
    ctx._plus = semiring.plus
    rows, its = generic_join(parts, node.order, node.keep, semiring, stats=ctx.metrics.intersections,
                             chunk_size=ctx.options.chunk_size, pool=ctx.pool,
                             pairs=ctx.metrics.pairs if ctx.options.record_pairs else None,
                             pair_limit=ctx.options.record_pairs)
    nm = NodeMetrics(rule.head_name, node.id, its, len(rows))
    ctx.metrics.nodes.append(nm)
    ctx.metrics.iterations += its
    ctx.metrics.node_evaluations += 1
    ctx.metrics.materialized += len(rows)
    return rows


def yannakakis(ctx: _Context, ir: RuleIR, plan: GHDPlan, semiring: Semiring,
               out_vars: Sequence[str], use_annotations: bool = True) -> dict:
    """Bottom-up node evaluation, then a top-down join of the expanding nodes.

    ``plan`` only fixes the tree shape; atoms are read from ``ir`` so one plan
    can serve several catalogs.  Returns rows keyed by ``out_vars``.
    """
    results: dict[int, dict] = {}
    for node in plan.postorder():
        if node.dedup_of is not None and node.dedup_of in results:
            src = plan.nodes[node.dedup_of]
            results[node.id] = _rename(results[src.id], src.keep, node.dedup_map, node.keep)
            ctx.metrics.nodes.append(NodeMetrics(ir.head_name, node.id, 0,
                                                 len(results[node.id]), False, src.id))
            continue
        results[node.id] = evaluate_node(ctx, ir, plan, node, results, semiring, use_annotations)
    root = plan.root
    cur_vars = list(root.keep)
    cur = results[root.id]
    if plan.topdown:
        stack = [c for c in reversed(root.children)]
        while stack:
            c = plan.nodes[stack.pop()]
            if not c.expand:
                continue
            stack.extend(reversed(c.children))
            shared = [v for v in c.keep if v in cur_vars]
            extra = [v for v in c.keep if v not in cur_vars]
            si = [c.keep.index(v) for v in shared]
            ei = [c.keep.index(v) for v in extra]
            index: dict = {}
            for k, val in results[c.id].items():
                index.setdefault(tuple(k[i] for i in si), []).append((tuple(k[i] for i in ei), val))
            ci = [cur_vars.index(v) for v in shared]
            nxt: dict = {}
            times, plus = semiring.times, semiring.plus
            for k, val in cur.items():
                for ext, v2 in index.get(tuple(k[i] for i in ci), ()):
                    nk = k + ext
                    nv = times(val, v2)
                    nxt[nk] = nv if nk not in nxt else plus(nxt[nk], nv)
            cur, cur_vars = nxt, cur_vars + extra
    idx = [cur_vars.index(v) for v in out_vars]
    if idx == list(range(len(cur_vars))):
        return cur
    out: dict = {}
    for k, v in cur.items():
        nk = tuple(k[i] for i in idx)
        out[nk] = v if nk not in out else semiring.plus(out[nk], v)
    return out


# -- rules ------------------------------------------------------------------

@dataclass
class RuleRun:
    ir: RuleIR
    plan: GHDPlan


def _scalars(ctx: _Context, ir: RuleIR) -> dict:
    out = {}
    for name in ir.scalar_refs:
        rel = ctx.catalog.get(name)
        if rel is None or len(rel.tuples) == 0 or rel.annotations is None:
            raise EvalError(f"scalar relation {name!r} is empty")
        v = rel.annotations[0]
        out[name] = v.item() if hasattr(v, "item") else v
    return out


def eval_rule(ctx: _Context, run: RuleRun) -> Relation:
    """Evaluate one rule body against the current catalog state."""
    ir, plan = run.ir, run.plan
    agg = ir.aggregate
    keys = tuple(ir.head_keys)
    scalars = _scalars(ctx, ir)
    if agg is not None and agg.op is AggOp.COUNT:
        # COUNT(*) counts bindings; COUNT(v) counts distinct v per group
        out_vars = keys if agg.var is None else keys + (agg.var,)
        rows = yannakakis(ctx, ir, plan, SUM, out_vars, use_annotations=False)
        counts: dict = {}
        if agg.var is None:
            counts = dict(rows)
        else:
            for k in rows:
                counts[k[:len(keys)]] = counts.get(k[:len(keys)], 0) + 1
        if not keys and not counts:
            counts = {(): 0}
        vals = {k: _cast(eval_expr(ir.expr, c, scalars), ir.annotation_type)
                for k, c in counts.items()}
        return Relation(ir.head_name, keys, vals, ir.annotation_type)
    if agg is not None:
        ring = semiring_for(agg.op)
        rows = yannakakis(ctx, ir, plan, ring, keys, use_annotations=True)
        if not keys and not rows and ring is SUM:
            rows = {(): 0}
        vals = {k: _cast(eval_expr(ir.expr, v, scalars), ir.annotation_type)
                for k, v in rows.items()}
        return Relation(ir.head_name, keys, vals, ir.annotation_type)
    rows = yannakakis(ctx, ir, plan, SUM, keys, use_annotations=False)
    if ir.expr is not None:
        val = _cast(eval_expr(ir.expr, None, scalars), ir.annotation_type)
        return Relation(ir.head_name, keys, {k: val for k in rows}, ir.annotation_type)
    return Relation(ir.head_name, keys, {k: None for k in rows}, None)


def _merge(old: Relation, new: Relation, op: AggOp | None) -> Relation:
    """Union two results for one head; shared keys combine with the rule's ⊕."""
    rows = dict(old.rows)
    ring = semiring_for(op) if op is not None else None
    for k, v in new.rows.items():
        if ring is not None and rows.get(k) is not None and v is not None:
            rows[k] = ring.plus(rows[k], v)
        else:
            rows[k] = v
    return Relation(new.name, new.keys, rows, new.annotation_type or old.annotation_type)


def _improved(old, new, op: AggOp) -> bool:
    if old is None:
        return True
    return new < old if op is AggOp.MIN else new > old


def run_naive(ctx: _Context, run: RuleRun, k: int | None, metrics_key: str) -> Relation:
    """Apply a recursive rule ``k`` times (or to convergence when ``k`` is None)."""
    ir = run.ir
    cur = _load(ctx.catalog, ir.head_name, ir.head_keys)
    cur.annotation_type = ir.annotation_type if cur.annotation_type is None else cur.annotation_type
    op = ir.aggregate.op if ir.aggregate is not None else None
    rounds = 0
    limit = k if k is not None else ctx.options.max_rounds
    while rounds < limit:
        new = eval_rule(ctx, run)
        rounds += 1
        if op in (AggOp.MIN, AggOp.MAX):
            new = _merge(cur, new, op)
        elif ir.annotation_type is None:
            new = _merge(cur, new, None)
        changed = new.rows != cur.rows
        cur = new
        _store(ctx.catalog, cur)
        if k is None and not changed:
            break
    else:
        if k is None:
            raise EvalError(f"{ir.head_name}: no fixpoint after {limit} rounds")
    ctx.metrics.rounds[metrics_key] = rounds
    return cur


def run_seminaive(ctx: _Context, run: RuleRun, metrics_key: str, k: int | None = None) -> Relation:
    """Fixpoint for MIN/MAX rules driven by the keys improved last round."""
    ir = run.ir
    if ir.aggregate is None or ir.aggregate.op not in (AggOp.MIN, AggOp.MAX):
        raise NonMonotoneAggregate(f"{ir.head_name}: seminaive evaluation needs MIN or MAX")
    op = ir.aggregate.op
    cur = _load(ctx.catalog, ir.head_name, ir.head_keys)
    cur.annotation_type = ir.annotation_type
    delta = dict(cur.rows)
    rec_atoms = [i for i, a in enumerate(ir.atoms) if a.recursive]
    delta_name = f"__delta_{ir.head_name}"
    variants = []
    for j in rec_atoms:
        atoms = list(ir.atoms)
        a = atoms[j]
        atoms[j] = AtomIR(delta_name, a.vars, a.selections, intensional=True, recursive=True)
        v_ir = RuleIR(**{**vars(ir), "atoms": tuple(atoms)})
        o = ctx.options
        variants.append(RuleRun(v_ir, plan_rule(v_ir, ghd=o.ghd, dedup=o.dedup, pushdown=o.pushdown,
                                                resolve=ctx.catalog.resolve)))
    rounds = 0
    limit = k if k is not None else ctx.options.max_rounds
    while delta and rounds < limit:
        rounds += 1
        _store(ctx.catalog, Relation(delta_name, cur.keys, delta, ir.annotation_type))
        _store(ctx.catalog, cur)
        cand: dict = {}
        for var in variants:
            out = eval_rule(ctx, var)
            for key, val in out.rows.items():
                if key not in cand or _improved(cand[key], val, op):
                    cand[key] = val
        delta = {}
        rows = dict(cur.rows)
        for key, val in cand.items():
            if _improved(rows.get(key), val, op):
                rows[key] = val
                delta[key] = val
        cur = Relation(cur.name, cur.keys, rows, ir.annotation_type)
    if delta and k is None:
        raise EvalError(f"{ir.head_name}: no fixpoint after {limit} rounds")
    _store(ctx.catalog, cur)
    ctx.metrics.rounds[metrics_key] = rounds
    return cur


# -- programs ---------------------------------------------------------------

@dataclass
class ExecutionResult:
    catalog: Catalog
    relations: dict[str, Relation]
    last: str
    metrics: Metrics
    plans: list[GHDPlan]

    def relation(self, name: str | None = None) -> Relation:
        return self.relations[name or self.last]

    def decoded(self, name: str | None = None) -> list[tuple]:
        rel = self.relation(name)
        vs = self.catalog.dictionary.values
        rows = []
        for k, v in rel.rows.items():
            key = tuple(vs[i] for i in k)
            rows.append(key if rel.annotation_type is None else key + (v,))
        rows.sort(key=lambda r: tuple(_natural_key(x) for x in r[:len(rel.keys)]))
        return rows

    def scalar(self, name: str | None = None):
        rel = self.relation(name)
        if rel.keys:
            raise ValueError(f"{rel.name} is not a scalar relation")
        return rel.rows.get((), None)


def _natural_key(s: str):
    try:
        return (0, float(s), s)
    except ValueError:
        return (1, 0.0, s)


def plan_program(irs: Sequence[RuleIR], catalog: Catalog, options: ExecOptions) -> list[GHDPlan]:
    return [plan_rule(ir, ghd=options.ghd, dedup=options.dedup, pushdown=options.pushdown,
                      resolve=catalog.resolve) for ir in irs]


def execute(program: Program | Sequence[RuleIR], catalog: Catalog,
            options: ExecOptions | None = None, plans: Sequence[GHDPlan] | None = None) -> ExecutionResult:
    """Run every rule in order; intensional results live in an overlay catalog."""
    options = options or ExecOptions()
    t0 = time.perf_counter()
    irs = validate(program, catalog) if isinstance(program, Program) else list(program)
    if plans is None:
        plans = plan_program(irs, catalog, options)
    metrics = Metrics()
    overlay = catalog.overlay()
    ctx = _Context(overlay, options, metrics)
    relations: dict[str, Relation] = {}
    defined: set[str] = set()
    try:
        for ir, plan in zip(irs, plans):
            run = RuleRun(ir, plan)
            key = f"{ir.index}:{ir.head_name}"
            if ir.recursion.kind is RecursionKind.NONE:
                rel = eval_rule(ctx, run)
                if ir.head_name in defined:
                    op = ir.aggregate.op if ir.aggregate is not None else None
                    rel = _merge(relations[ir.head_name], rel, op)
                _store(overlay, rel)
            elif ir.recursion.kind is RecursionKind.NAIVE:
                rel = run_naive(ctx, run, ir.recursion.iterations, key)
            elif ir.seminaive and not options.naive:
                rel = run_seminaive(ctx, run, key)
            else:
                rel = run_naive(ctx, run, None, key)
            relations[ir.head_name] = rel
            defined.add(ir.head_name)
    finally:
        ctx.close()
    metrics.wall_time = time.perf_counter() - t0
    return ExecutionResult(overlay, relations, irs[-1].head_name if irs else "", metrics, list(plans))


__all__ = [
    "ExecOptions", "ExecutionResult", "MAX", "MIN", "Metrics", "Relation", "SUM",
    "Semiring", "eval_expr", "eval_rule", "execute", "fold_annotation", "generic_join",
    "plan_program", "run_naive", "run_seminaive", "semiring_for", "yannakakis",
]
