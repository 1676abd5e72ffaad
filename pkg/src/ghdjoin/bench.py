"""Timing helpers for queries and intersection kernels."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ghdjoin import setkernel
from ghdjoin.setkernel import SetView


@dataclass
class Timing:
    samples: list[float]
    kept: list[float]

    @property
    def mean(self) -> float:
        return statistics.fmean(self.kept) if self.kept else 0.0

    def as_dict(self) -> dict:
        return {"samples_s": self.samples, "kept_s": self.kept, "mean_s": self.mean}


def trimmed(samples: list[float]) -> list[float]:
    """Drop one lowest and one highest sample when at least three exist."""
    if len(samples) < 3:
        return list(samples)
    s = sorted(samples)
    return s[1:-1]


def time_repeated(fn: Callable[[], object], repeat: int = 7) -> tuple[Timing, object]:
    samples, last = [], None
    for _ in range(max(1, repeat)):
        t0 = time.perf_counter()
        last = fn()
        samples.append(time.perf_counter() - t0)
    return Timing(samples, trimmed(samples)), last


@dataclass
class KernelBench:
    pairs: int
    backends: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"pairs": self.pairs, "backends": self.backends}

    def table(self) -> str:
        lines = ["backend   mean_s     speedup"]
        base = self.backends.get("python", {}).get("mean_s")
        for name, d in sorted(self.backends.items()):
            sp = f"{base / d['mean_s']:.1f}x" if base and d["mean_s"] else "-"
            lines.append(f"{name:<9} {d['mean_s']:<10.4f} {sp}")
        return "\n".join(lines)


def random_pairs(n: int, seed: int = 0, universe: int = 1 << 16, max_len: int = 2000):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        la, lb = rng.integers(1, max_len, size=2)
        if rng.random() < 0.3:
            lb = max(1, la // int(rng.integers(33, 200)))
        a = np.unique(rng.integers(0, universe, size=la)).astype(np.uint32)
        b = np.unique(rng.integers(0, universe, size=lb)).astype(np.uint32)
        out.append((a, b))
    return out


def bench_kernels(pairs: int = 200, repeat: int = 7, seed: int = 0) -> KernelBench:
    """Time uint*uint intersections under each available kernel backend."""
    work = [(SetView.uint(a), SetView.uint(b)) for a, b in random_pairs(pairs, seed)]
    report = KernelBench(pairs)
    previous = setkernel.BACKEND
    try:
        for name in setkernel.available_backends():
            setkernel.use_backend(name)

            def run():
                st = setkernel.IntersectStats()
                for a, b in work:
                    setkernel.intersect_uint_uint(a, b, st)
                return st.comparisons
            timing, ops = time_repeated(run, repeat)
            report.backends[name] = {**timing.as_dict(), "comparisons": ops}
    finally:
        setkernel.use_backend(previous)
    return report


__all__ = ["KernelBench", "Timing", "bench_kernels", "random_pairs", "time_repeated", "trimmed"]
