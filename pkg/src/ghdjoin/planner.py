"""Logical planning: hypergraphs, AGM exponents and GHD selection.

Fractional edge covers are solved exactly.  Candidate basic solutions are
screened in floating point and the survivors re-solved with ``Fraction``
arithmetic, so reported widths are exact rationals.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from ghdjoin.errors import Infeasible, QueryTooLarge
from ghdjoin.frontend import AtomIR, RuleIR

DEFAULT_EDGE_CAP = 8
PSEUDO_PREFIX = "#"

# -- hypergraph -------------------------------------------------------------


@dataclass(frozen=True)
class HyperEdge:
    id: int
    atom: int                                    # index into RuleIR.atoms
    relation: str
    vars: frozenset[str]
    selections: tuple[tuple[int, str, int], ...] = ()

    @property
    def selected(self) -> bool:
        return bool(self.selections)

    def label(self, rule: RuleIR | None = None) -> str:
        if rule is None:
            return f"{self.relation}#{self.id}"
        a = rule.atoms[self.atom]
        sel = {c: raw for c, raw, _ in a.selections}
        terms = [v if v is not None else f"'{sel[c]}'" for c, v in enumerate(a.vars)]
        return f"{a.relation}({','.join(terms)})"


@dataclass(frozen=True)
class Hypergraph:
    vertices: tuple[str, ...]
    edges: tuple[HyperEdge, ...]

    def edge_vars(self, ids: Iterable[int]) -> frozenset[str]:
        out: set[str] = set()
        for i in ids:
            out |= self.edges[i].vars
        return frozenset(out)


def build_hypergraph(rule: RuleIR, pseudo_selections: bool = False) -> Hypergraph:
    """One vertex per variable and one edge per body atom.

    With ``pseudo_selections`` each selection constant becomes an extra vertex
    named ``#<value>`` so atoms selecting the same constant are connected.
    """
    edges = []
    verts = list(rule.variables)
    for i, a in enumerate(rule.atoms):
        vs = set(v for v in a.vars if v is not None)
        if pseudo_selections:
            for _, raw, _ in a.selections:
                p = PSEUDO_PREFIX + raw
                vs.add(p)
                if p not in verts:
                    verts.append(p)
        edges.append(HyperEdge(i, i, a.relation, frozenset(vs), a.selections))
    return Hypergraph(tuple(verts), tuple(edges))


# -- AGM exponent -----------------------------------------------------------

def _reduce(edge_sets: Iterable[frozenset], S: frozenset) -> list[frozenset]:
    es = {e & S for e in edge_sets}
    es.discard(frozenset())
    # an edge contained in another never helps a minimum cover
    return sorted((e for e in es if not any(e < f for f in es)), key=sorted)


def _components(edges: list[frozenset]) -> list[list[frozenset]]:
    comps: list[list[frozenset]] = []
    verts: list[set] = []
    for e in edges:
        hit = [i for i, vs in enumerate(verts) if vs & e]
        merged_e = [e]
        merged_v = set(e)
        for i in reversed(hit):
            merged_e += comps.pop(i)
            merged_v |= verts.pop(i)
        comps.append(merged_e)
        verts.append(merged_v)
    return comps


def _exact_solve(A: list[list[int]]) -> list[Fraction] | None:
    """Solve ``A x = 1`` exactly; None when singular."""
    n = len(A)
    M = [[Fraction(v) for v in row] + [Fraction(1)] for row in A]
    for c in range(n):
        p = next((r for r in range(c, n) if M[r][c] != 0), None)
        if p is None:
            return None
        M[c], M[p] = M[p], M[c]
        piv = M[c][c]
        M[c] = [v / piv for v in M[c]]
        for r in range(n):
            if r != c and M[r][c] != 0:
                f = M[r][c]
                M[r] = [a - f * b for a, b in zip(M[r], M[c])]
    return [M[r][n] for r in range(n)]


@lru_cache(maxsize=4096)
def _component_cover(edges: tuple[frozenset, ...]) -> Fraction:
    verts = sorted(set().union(*edges))
    if any(verts_set >= set(verts) for verts_set in edges):
        return Fraction(1)
    vidx = {v: i for i, v in enumerate(verts)}
    full = np.zeros((len(verts), len(edges)))
    for j, e in enumerate(edges):
        for v in e:
            full[vidx[v], j] = 1.0
    best = None
    cands: list[tuple[float, tuple, tuple]] = []
    for k in range(1, min(len(edges), len(verts)) + 1):
        for F in itertools.combinations(range(len(edges)), k):
            sub = full[:, F]
            for T in itertools.combinations(range(len(verts)), k):
                A = sub[T, :]
                if abs(np.linalg.det(A)) < 1e-9:
                    continue
                x = np.linalg.solve(A, np.ones(k))
                if (x < -1e-9).any():
                    continue
                if (sub @ x < 1 - 1e-9).any():
                    continue
                obj = float(x.sum())
                cands.append((obj, F, T))
                if best is None or obj < best:
                    best = obj
    if best is None:
        raise Infeasible("no feasible fractional cover")
    exact = None
    for obj, F, T in cands:
        if obj > best + 1e-7:
            continue
        A = [[int(full[t, f]) for f in F] for t in T]
        x = _exact_solve(A)
        if x is None or any(v < 0 for v in x):
            continue
        cover = [sum((x[i] for i, f in enumerate(F) if full[vi, f]), Fraction(0))
                 for vi in range(len(verts))]
        if any(c < 1 for c in cover):
            continue
        val = sum(x, Fraction(0))
        if exact is None or val < exact:
            exact = val
    return exact


def agm_exponent(h: Hypergraph, S: Iterable[str] | None = None,
                 edges: Iterable[int] | None = None) -> Fraction:
    """Minimum total weight of a fractional edge cover of ``S``.

    ``edges`` restricts the cover to a subset of edge ids (a GHD node's λ).
    Vertices whose name starts with ``#`` are ordinary vertices here.
    """
    S = frozenset(h.vertices if S is None else S)
    ids = range(len(h.edges)) if edges is None else edges
    sets = [h.edges[i].vars for i in ids]
    covered = frozenset().union(*sets) if sets else frozenset()
    missing = S - covered
    if missing:
        raise Infeasible(f"vertices {sorted(missing)} are not covered by any edge")
    return cover_exponent(sets, S)


def cover_exponent(edge_sets: Iterable[frozenset], S: frozenset) -> Fraction:
    if not S:
        return Fraction(0)
    red = _reduce(edge_sets, S)
    total = Fraction(0)
    for comp in _components(red):
        total += _component_cover(tuple(sorted(comp, key=sorted)))
    return total


# -- GHD enumeration --------------------------------------------------------

@dataclass(frozen=True)
class GHD:
    """A rooted GHD skeleton: λ of the root plus child subtrees."""
    lam: frozenset[int]
    children: tuple["GHD", ...] = ()

    def canonical(self) -> str:
        kids = ",".join(sorted(c.canonical() for c in self.children))
        return f"[{','.join(map(str, sorted(self.lam)))}]({kids})"

    def nodes(self) -> list["GHD"]:
        out = [self]
        for c in self.children:
            out.extend(c.nodes())
        return out

    def all_edges(self) -> frozenset[int]:
        return frozenset().union(*(n.lam for n in self.nodes()))

    @property
    def height(self) -> int:
        return 1 + max((c.height for c in self.children), default=0)


def _split(h: Hypergraph, rest: frozenset[int], chi: frozenset[str]) -> list[frozenset[int]]:
    """Components of ``rest`` connected through vertices outside ``chi``."""
    rest_l = sorted(rest)
    parent = {e: e for e in rest_l}

    def find(e):
        while parent[e] != e:
            parent[e] = parent[parent[e]]
            e = parent[e]
        return e

    owner: dict[str, int] = {}
    for e in rest_l:
        for v in h.edges[e].vars - chi:
            if v in owner:
                parent[find(e)] = find(owner[v])
            else:
                owner[v] = e
    groups: dict[int, list[int]] = {}
    for e in rest_l:
        groups.setdefault(find(e), []).append(e)
    return sorted((frozenset(g) for g in groups.values()), key=lambda g: sorted(g))


def enumerate_ghds(h: Hypergraph, cap: int = DEFAULT_EDGE_CAP,
                   max_width: Fraction | None = None) -> list[GHD]:
    """All GHDs produced by recursive decomposition, deduplicated.

    Each node's χ is the set of variables of its λ.  Child subtrees are built
    from the connected components of the remaining edges; a child is accepted
    only when its root covers every parent attribute its subtree mentions,
    which is exactly the running intersection property.  ``max_width`` prunes
    nodes wider than the bound.
    """
    ids = frozenset(e.id for e in h.edges if e.vars)
    if len(ids) > cap:
        raise QueryTooLarge(f"{len(ids)} edges exceeds the GHD search cap of {cap}")
    memo: dict[frozenset[int], list[GHD]] = {}

    def width_ok(lam: frozenset[int]) -> bool:
        if max_width is None:
            return True
        return agm_exponent(h, h.edge_vars(lam), lam) <= max_width

    def decompose(E: frozenset[int]) -> list[GHD]:
        if E in memo:
            return memo[E]
        out: dict[str, GHD] = {}
        elist = sorted(E)
        for k in range(1, len(elist) + 1):
            for lam_t in itertools.combinations(elist, k):
                lam = frozenset(lam_t)
                if not width_ok(lam):
                    continue
                chi = h.edge_vars(lam)
                rest = E - lam
                options = []
                for comp in _split(h, rest, chi):
                    need = h.edge_vars(comp) & chi
                    opts = [t for t in decompose(comp) if need <= h.edge_vars(t.lam)]
                    if not opts:
                        break
                    options.append(opts)
                else:
                    for kids in itertools.product(*options):
                        g = GHD(lam, tuple(sorted(kids, key=GHD.canonical)))
                        out.setdefault(g.canonical(), g)
        res = list(out.values())
        memo[E] = res
        return res

    if not ids:
        return [GHD(frozenset())]
    trees = [t for t in decompose(ids) if is_valid_ghd(h, t)]
    return sorted(trees, key=GHD.canonical)


def is_valid_ghd(h: Hypergraph, t: GHD) -> bool:
    """Check edge coverage, running intersection and χ ⊆ ∪λ."""
    nodes = t.nodes()
    chis = [h.edge_vars(n.lam) for n in nodes]
    # 1. every edge lies inside some χ
    for e in h.edges:
        if e.vars and not any(e.vars <= c for c in chis):
            return False
    # 2. running intersection: each vertex enters the tree at exactly one node
    entries: dict[str, int] = {}

    def walk(node: GHD, parent_chi: frozenset[str]) -> None:
        chi = h.edge_vars(node.lam)
        for v in chi - parent_chi:
            entries[v] = entries.get(v, 0) + 1
        for c in node.children:
            walk(c, chi)

    walk(t, frozenset())
    if any(n > 1 for n in entries.values()):
        return False
    # 3. holds by construction (χ = vars of λ)
    return True


# -- plans ------------------------------------------------------------------

@dataclass
class GHDNode:
    id: int
    lam: tuple[int, ...]                   # owned edge ids
    copies: tuple[int, ...]                # duplicated selection edges (filters)
    chi: tuple[str, ...]
    width: Fraction
    parent: int | None
    children: list[int]
    depth: int
    keep: tuple[str, ...] = ()
    order: tuple[str, ...] = ()
    expand: bool = False                   # subtree carries head keys absent above
    dedup_of: int | None = None
    dedup_map: dict[str, str] | None = None

    @property
    def edges(self) -> tuple[int, ...]:
        return self.lam + self.copies


@dataclass
class GHDPlan:
    rule: RuleIR
    hypergraph: Hypergraph
    nodes: list[GHDNode]                   # pre-order; nodes[0] is the root
    attribute_order: tuple[str, ...] = ()
    topdown: bool = False
    mode: str = "ghd"                      # ghd | single | no-pushdown
    candidates: int = 0
    agm: Fraction = Fraction(0)

    @property
    def root(self) -> GHDNode:
        return self.nodes[0]

    @property
    def width(self) -> Fraction:
        return max((n.width for n in self.nodes), default=Fraction(0))

    @property
    def cost(self) -> Fraction:
        return sum((n.width for n in self.nodes), Fraction(0))

    @property
    def selection_depth(self) -> int:
        return _sel_depth(self.hypergraph, self.nodes)

    def postorder(self) -> list[GHDNode]:
        out: list[GHDNode] = []

        def walk(i):
            for c in self.nodes[i].children:
                walk(c)
            out.append(self.nodes[i])
        walk(0)
        return out

    def skeleton(self) -> GHD:
        def build(i):
            n = self.nodes[i]
            return GHD(frozenset(n.lam), tuple(build(c) for c in n.children))
        return build(0)


def _materialize(h: Hypergraph, tree: GHD, duplicate_selections: bool) -> list[GHDNode]:
    nodes: list[GHDNode] = []

    def walk(t: GHD, parent: int | None, depth: int) -> int:
        i = len(nodes)
        lam = tuple(sorted(t.lam))
        chi_set = h.edge_vars(t.lam)
        node = GHDNode(i, lam, (), tuple(sorted(chi_set)),
                       agm_exponent(h, chi_set, lam) if lam else Fraction(0),
                       parent, [], depth)
        nodes.append(node)
        for c in t.children:
            node.children.append(walk(c, i, depth + 1))
        return i

    walk(tree, None, 0)
    # constant-only atoms have no vertices; they filter at the root
    empties = tuple(e.id for e in h.edges if not e.vars)
    if empties:
        nodes[0].lam = tuple(sorted(nodes[0].lam + empties))
    if duplicate_selections:
        for n in nodes:
            extra = []
            for e in h.edges:
                if not e.selected or e.id in n.lam or not e.vars:
                    continue
                if any(not h.edges[o].selected and e.vars <= h.edges[o].vars for o in n.lam):
                    extra.append(e.id)
            n.copies = tuple(extra)
    return nodes


def _sel_depth(h: Hypergraph, nodes: list[GHDNode]) -> int:
    # distance from each selection atom's owning node to the root
    return sum(n.depth for n in nodes for e in n.lam if h.edges[e].selected)


def _height(nodes: list[GHDNode]) -> int:
    return 1 + max(n.depth for n in nodes)


def _plan_key(h: Hypergraph, rule: RuleIR, tree: GHD, nodes: list[GHDNode], sel_sign: int):
    width = max(n.width for n in nodes)
    cost = sum((n.width for n in nodes), Fraction(0))
    heads = len(set(rule.head_keys) & set(nodes[0].chi))
    return (width, sel_sign * _sel_depth(h, nodes), cost, len(nodes), _height(nodes),
            -heads, -len(nodes[0].lam), tree.canonical())


def _redundant_split(h: Hypergraph, nodes: list[GHDNode]) -> bool:
    def plain(n: GHDNode) -> bool:
        return not any(h.edges[e].selected for e in n.lam)
    for n in nodes:
        if n.parent is None:
            continue
        p = nodes[n.parent]
        if plain(n) and set(n.chi) <= set(p.chi):
            return True
        if plain(p) and set(p.chi) <= set(n.chi):
            return True
    return False


def choose_ghd(candidates: Sequence[GHD], rule: RuleIR, h: Hypergraph | None = None, *,
               pushdown: bool = True) -> GHDPlan:
    """Pick the plan minimizing the total tie-break order.

    The order is width, then (only when the rule has selections) maximal
    selection depth, exponent sum, node count, tree height, more head keys at
    the root, larger root λ and finally the canonical form.  Under pushdown,
    trees where a node without selections has its χ inside a neighbour's χ
    are skipped: such a node only splits a join and inflates the depth.  With
    ``pushdown=False`` minimal selection depth is preferred instead and
    selection atoms are not duplicated.
    """
    if not candidates:
        raise ValueError("no candidate GHDs")
    h = h or build_hypergraph(rule)
    has_sel = any(e.selected for e in h.edges)
    sel_sign = (-1 if pushdown else 1) if has_sel else 0
    best = None
    pool = [(t, _materialize(h, t, pushdown and has_sel)) for t in candidates]
    if pushdown and has_sel:
        pool = [c for c in pool if not _redundant_split(h, c[1])] or pool
    for t, nodes in pool:
        key = _plan_key(h, rule, t, nodes, sel_sign)
        if best is None or key < best[0]:
            best = (key, nodes)
    plan = GHDPlan(rule, h, best[1], mode="ghd" if pushdown else "no-pushdown",
                   candidates=len(candidates))
    return _finish(plan)


def single_node_plan(rule: RuleIR) -> GHDPlan:
    """The GHD with one node holding every atom (plain Generic-Join)."""
    h = build_hypergraph(rule)
    t = GHD(frozenset(e.id for e in h.edges if e.vars))
    return _finish(GHDPlan(rule, h, _materialize(h, t, False), mode="single", candidates=1))


def _finish(plan: GHDPlan) -> GHDPlan:
    h, rule = plan.hypergraph, plan.rule
    # pseudo vertices only shape the search; execution binds real variables
    for n in plan.nodes:
        n.chi = tuple(v for v in n.chi if not v.startswith(PSEUDO_PREFIX))
    plan.attribute_order = attribute_order(plan)
    pos = {v: i for i, v in enumerate(plan.attribute_order)}
    for n in plan.nodes:
        n.chi = tuple(sorted(n.chi, key=pos.__getitem__))
        n.order = n.chi
    _assign_keep(plan)
    plan.topdown = needs_topdown(plan, rule.head_keys)
    plan.agm = agm_exponent(h)
    return plan


def _output_vars(rule: RuleIR) -> set[str]:
    out = set(rule.head_keys)
    agg = rule.aggregate
    if agg is not None and agg.var is not None and agg.op.value == "COUNT":
        out.add(agg.var)   # COUNT(v) counts distinct v per group
    return out


def _assign_keep(plan: GHDPlan) -> None:
    out = _output_vars(plan.rule)
    subtree_vars: dict[int, set[str]] = {}
    for n in plan.postorder():
        s = set(n.chi)
        for c in n.children:
            s |= subtree_vars[c]
        subtree_vars[n.id] = s
    for n in plan.nodes:
        parent_chi = set(plan.nodes[n.parent].chi) if n.parent is not None else set()
        n.expand = n.parent is not None and bool((subtree_vars[n.id] & out) - parent_chi)
    for n in plan.nodes:
        parent_chi = set(plan.nodes[n.parent].chi) if n.parent is not None else set()
        need = parent_chi | out
        for c in n.children:
            if plan.nodes[c].expand:
                need |= set(plan.nodes[c].chi)
        n.keep = tuple(v for v in n.chi if v in need)


def attribute_order(plan: GHDPlan) -> tuple[str, ...]:
    """Selected attributes first, then a pre-order walk over the nodes.

    Putting selected attributes at the front of the global order keeps them
    first inside every node that joins on them.
    """
    rule, h = plan.rule, plan.hypergraph
    first = {v: i for i, v in enumerate(rule.variables)}
    order: list[str] = []
    pre = [plan.nodes[0]]
    stack = list(reversed(plan.nodes[0].children))
    while stack:
        n = plan.nodes[stack.pop()]
        pre.append(n)
        stack.extend(reversed(n.children))
    for n in pre:
        for e in n.edges:
            if h.edges[e].selected:
                for v in sorted(h.edges[e].vars, key=lambda v: first.get(v, len(first))):
                    if v not in order and not v.startswith(PSEUDO_PREFIX):
                        order.append(v)
    for n in pre:
        for v in sorted(n.chi, key=lambda v: first.get(v, len(first))):
            if v not in order and not v.startswith(PSEUDO_PREFIX):
                order.append(v)
    for v in rule.variables:
        if v not in order:
            order.append(v)
    return tuple(order)


def needs_topdown(plan: GHDPlan, head_attrs: Iterable[str]) -> bool:
    """True unless every output attribute is already present at the root."""
    need = set(head_attrs)
    agg = plan.rule.aggregate
    if agg is not None and agg.var is not None and agg.op.value == "COUNT":
        need.add(agg.var)
    return not need <= set(plan.root.chi)


# -- redundancy elimination -------------------------------------------------

def _atom_sig(rule: RuleIR, h: Hypergraph, e: int, copy: bool, resolve) -> tuple:
    a = rule.atoms[h.edges[e].atom]
    sels = tuple((c, raw) for c, raw, _ in a.selections)
    return (resolve(a.relation), a.derived, a.derived_from and resolve(a.derived_from), sels, copy)


def _node_equiv(plan: GHDPlan, u: GHDNode, v: GHDNode, fixed: dict[str, str], resolve) -> dict | None:
    rule, h = plan.rule, plan.hypergraph
    if len(u.chi) != len(v.chi) or len(u.edges) != len(v.edges) or len(u.children) != len(v.children):
        return None
    if len(u.keep) != len(v.keep):
        return None
    agg_var = rule.aggregate.var if rule.aggregate is not None else None
    outs = _output_vars(rule)
    ua = [(e, _atom_sig(rule, h, e, e in u.copies, resolve)) for e in u.edges]
    va = [(e, _atom_sig(rule, h, e, e in v.copies, resolve)) for e in v.edges]
    if sorted(s for _, s in ua) != sorted(s for _, s in va):
        return None
    free_u = [x for x in u.chi if x not in fixed]
    free_v = [x for x in v.chi if x not in fixed.values()]
    if len(free_u) != len(free_v):
        return None
    for perm in itertools.permutations(free_v):
        phi = dict(fixed)
        phi.update(zip(free_u, perm))
        if any(phi.get(x) is None for x in u.chi):
            continue
        # keep sets, output roles and the aggregate variable must correspond
        if {phi[x] for x in u.keep} != set(v.keep):
            continue
        if any((x in outs) != (phi[x] in outs) for x in u.keep):
            continue
        if agg_var is not None and any((x == agg_var) != (phi[x] == agg_var) for x in u.chi):
            continue
        mapped = sorted((s, tuple(phi[x] if x is not None else None
                                  for x in rule.atoms[h.edges[e].atom].vars)) for e, s in ua)
        target = sorted((s, rule.atoms[h.edges[e].atom].vars) for e, s in va)
        if mapped != target:
            continue
        ok = _children_equiv(plan, u, v, phi, resolve)
        if ok is not None:
            return ok
    return None


def _children_equiv(plan, u, v, phi, resolve) -> dict | None:
    uc = [plan.nodes[c] for c in u.children]
    vc = [plan.nodes[c] for c in v.children]
    for perm in itertools.permutations(vc):
        full = dict(phi)
        good = True
        for a, b in zip(uc, perm):
            fixed = {x: full[x] for x in a.chi if x in full}
            sub = _node_equiv(plan, a, b, fixed, resolve)
            if sub is None:
                good = False
                break
            full.update(sub)
        if good:
            return full
    return None


def dedup_nodes(plan: GHDPlan, resolve=lambda name: name) -> GHDPlan:
    """Link nodes whose bottom-up results are identical up to renaming.

    ``resolve`` maps relation aliases to base relations.  A node is linked to
    an earlier node in bottom-up order when both join the same relations in
    the same pattern, share selections, projections and aggregation roles,
    and have equivalent subtrees.  The link records the variable renaming.
    """
    done: list[GHDNode] = []
    for n in plan.postorder():
        n.dedup_of, n.dedup_map = None, None
        if n.parent is None:
            done.append(n)
            continue
        for m in done:
            if m.parent is None or m.dedup_of is not None:
                continue
            if m.expand != n.expand:
                continue
            phi = _node_equiv(plan, m, n, {}, resolve)
            if phi is not None:
                n.dedup_of = m.id
                n.dedup_map = {k: phi[k] for k in m.chi}
                break
        done.append(n)
    return plan


# -- entry point ------------------------------------------------------------

def plan_rule(rule: RuleIR, *, ghd: bool = True, dedup: bool = True, pushdown: bool = True,
              cap: int = DEFAULT_EDGE_CAP, resolve=lambda name: name) -> GHDPlan:
    """Plan one validated rule."""
    if not ghd:
        plan = single_node_plan(rule)
    else:
        h = build_hypergraph(rule, pseudo_selections=not pushdown)
        plan = choose_ghd(enumerate_ghds(h, cap), rule, h, pushdown=pushdown)
    if dedup:
        dedup_nodes(plan, resolve)
    return plan


# -- explain ----------------------------------------------------------------

def _fmt_frac(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def loop_nest(plan: GHDPlan, node: GHDNode) -> list[str]:
    h, rule = plan.hypergraph, plan.rule
    lines = []
    bound: list[str] = []
    for depth, v in enumerate(node.order):
        parts = []
        for e in node.edges:
            a = rule.atoms[h.edges[e].atom]
            if v in a.vars:
                prior = [x for x in a.vars if x is not None and x in bound]
                idx = ",".join(f"t_{x}" for x in prior)
                parts.append(f"π_{v} {a.relation}[{idx}]" if prior else f"π_{v} {a.relation}")
        for c in node.children:
            if v in plan.nodes[c].chi:
                parts.append(f"π_{v} v{c}")
        lines.append("  " * depth + f"for t_{v} ∈ {' ∩ '.join(parts)}")
        bound.append(v)
    return lines


def explain_dict(plan: GHDPlan) -> dict:
    h, rule = plan.hypergraph, plan.rule
    nodes = []
    for n in plan.nodes:
        nodes.append({
            "id": n.id,
            "parent": n.parent,
            "children": list(n.children),
            "chi": list(n.chi),
            "lambda": [h.edges[e].label(rule) for e in n.lam],
            "selection_copies": [h.edges[e].label(rule) for e in n.copies],
            "width": _fmt_frac(n.width),
            "keep": list(n.keep),
            "order": list(n.order),
            "dedup_of": n.dedup_of,
            "dedup_map": n.dedup_map,
            "loop_nest": loop_nest(plan, n),
        })
    return {
        "rule": rule.head_name,
        "mode": plan.mode,
        "agm": _fmt_frac(plan.agm),
        "fhw": _fmt_frac(plan.width),
        "cost": _fmt_frac(plan.cost),
        "nodes": nodes,
        "attribute_order": list(plan.attribute_order),
        "topdown": plan.topdown,
        "selection_depth": plan.selection_depth,
        "candidates": plan.candidates,
    }


def explain_json(plan: GHDPlan) -> str:
    return json.dumps(explain_dict(plan), indent=2, ensure_ascii=False)


def explain_text(plan: GHDPlan) -> str:
    d = explain_dict(plan)
    out = [f"rule {d['rule']}: {len(d['nodes'])} node(s), fhw {d['fhw']}, agm {d['agm']}, "
           f"mode {d['mode']}",
           f"attribute order: {', '.join(d['attribute_order']) or '-'}",
           f"topdown: {'yes' if d['topdown'] else 'no'}"]
    for n in d["nodes"]:
        depth = plan.nodes[n["id"]].depth
        pad = "  " * depth
        line = (f"{pad}v{n['id']}: chi={{{','.join(n['chi'])}}} lambda=[{', '.join(n['lambda'])}] "
                f"width={n['width']} keep={{{','.join(n['keep'])}}}")
        if n["selection_copies"]:
            line += f" copies=[{', '.join(n['selection_copies'])}]"
        if n["dedup_of"] is not None:
            m = ",".join(f"{a}->{b}" for a, b in n["dedup_map"].items())
            line += f" dedup-of=v{n['dedup_of']} {{{m}}}"
        out.append(line)
    out.append("loop nest:")
    for n in d["nodes"]:
        out.append(f"  v{n['id']}:" + ("" if n["loop_nest"] else " (no attributes)"))
        out.extend("    " + l for l in n["loop_nest"])
    return "\n".join(out)


__all__ = [
    "GHD", "GHDNode", "GHDPlan", "HyperEdge", "Hypergraph", "agm_exponent",
    "attribute_order", "build_hypergraph", "choose_ghd", "cover_exponent",
    "dedup_nodes", "enumerate_ghds", "explain_dict", "explain_json", "explain_text",
    "is_valid_ghd", "needs_topdown", "plan_rule", "single_node_plan",
]
