"""Brute-force layout oracle.

For each intersection in a workload every layout pair (and, for uint pairs,
both algorithms) is executed with instrumentation; the oracle keeps only the
cheapest combination.  Cost is the kernel operation count, so reports are
deterministic.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import (Algorithm, Granularity, IntersectStats, Layout, SetView,
               intersect, intersect_uint_uint, materialize_set)

_LAYOUTS = ("uint", "bitset", "composite")


def _as_layout(ids: np.ndarray, name: str) -> SetView:
    if name == "uint":
        return SetView.uint(ids)
    if name == "bitset":
        return SetView.bitset(ids)
    return materialize_set(ids, Granularity.BLOCK)


def _combinations(a: np.ndarray, b: np.ndarray):
    views_a = {n: _as_layout(a, n) for n in _LAYOUTS}
    views_b = {n: _as_layout(b, n) for n in _LAYOUTS}
    for na in _LAYOUTS:
        for nb in _LAYOUTS:
            va, vb = views_a[na], views_b[nb]
            if na == nb == "uint":
                for alg in (Algorithm.MERGE, Algorithm.GALLOP):
                    yield f"uint*uint/{alg.value}", va, vb, alg
            else:
                yield f"{na}*{nb}", va, vb, None


def _cost(va: SetView, vb: SetView, force) -> tuple[int, list[int]]:
    st = IntersectStats()
    if force is not None:
        out = intersect_uint_uint(va, vb, st, force=force)
    else:
        out = intersect(va, vb, st)
    return st.comparisons, out.tolist()


def granularity_cost(a: np.ndarray, b: np.ndarray, granularity: Granularity) -> int:
    st = IntersectStats()
    intersect(materialize_set(a, granularity), materialize_set(b, granularity), st)
    return st.comparisons


@dataclass
class OracleReport:
    pairs: int = 0
    oracle_cost: int = 0
    granularity_cost: dict = field(default_factory=dict)
    combination_cost: dict = field(default_factory=dict)
    best_counts: Counter = field(default_factory=Counter)

    def relative(self) -> dict:
        """Cost of each granularity relative to the oracle."""
        if self.oracle_cost == 0:
            return {g: (1.0 if c == 0 else float("inf")) for g, c in self.granularity_cost.items()}
        return {g: c / self.oracle_cost for g, c in self.granularity_cost.items()}

    def as_dict(self) -> dict:
        return {
            "pairs": self.pairs,
            "oracle_cost": self.oracle_cost,
            "granularity_cost": dict(self.granularity_cost),
            "relative_to_oracle": self.relative(),
            "combination_cost": dict(sorted(self.combination_cost.items())),
            "best_counts": dict(sorted(self.best_counts.items())),
        }

    def table(self) -> str:
        rel = self.relative()
        lines = ["granularity  cost        relative"]
        for g in ("relation", "set", "block"):
            if g in self.granularity_cost:
                lines.append(f"{g:<12} {self.granularity_cost[g]:<11d} {rel[g]:.2f}x")
        lines.append(f"{'oracle':<12} {self.oracle_cost:<11d} 1.00x")
        return "\n".join(lines)


def oracle_optimize(workload: Iterable[tuple[Sequence[int], Sequence[int]]]) -> OracleReport:
    """Run every layout/algorithm combination on each pair of sorted id lists."""
    report = OracleReport()
    for g in Granularity:
        report.granularity_cost[g.value] = 0
    for a, b in workload:
        a = np.asarray(a, dtype=np.uint32)
        b = np.asarray(b, dtype=np.uint32)
        report.pairs += 1
        best_name, best_cost, expect = None, None, None
        for name, va, vb, force in _combinations(a, b):
            cost, result = _cost(va, vb, force)
            if expect is None:
                expect = result
            elif result != expect:
                raise AssertionError(f"combination {name} disagrees")
            report.combination_cost[name] = report.combination_cost.get(name, 0) + cost
            if best_cost is None or cost < best_cost:
                best_name, best_cost = name, cost
        report.oracle_cost += best_cost
        report.best_counts[best_name] += 1
        for g in Granularity:
            report.granularity_cost[g.value] += granularity_cost(a, b, g)
    return report


__all__ = ["OracleReport", "granularity_cost", "oracle_optimize", "Layout"]
