from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ghdjoin.cli import alias_unknown
from ghdjoin.executor import ExecOptions, execute, plan_program
from ghdjoin.frontend import parse_program, validate
from ghdjoin.storage import Catalog, RawRelation

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

QUERIES = Path(__file__).resolve().parents[1] / "src" / "ghdjoin" / "queries"


def query_text(name: str) -> str:
    return (QUERIES / f"{name}.dl").read_text()


def symmetric(edges):
    out = {(str(a), str(b)) for a, b in edges if a != b}
    return sorted(out | {(b, a) for a, b in out})


def make_catalog(edges, *, ordering="none", prune=False, seed=0, granularity=None,
                 extra: dict | None = None) -> Catalog:
    raw = RawRelation("Edge", 2, [tuple(map(str, e)) for e in edges], None, None, None)
    kw = {} if granularity is None else {"granularity": granularity}
    cat = Catalog.from_edge_list(raw, ordering=ordering, prune=prune, seed=seed, **kw)
    for name, rows in (extra or {}).items():
        ids = [[cat.dictionary.add(str(v)) for v in r] for r in rows]
        cat.add_relation(name, np.array(ids, dtype=np.int64).reshape(len(ids), -1))
    return cat


_plan_cache: dict = {}


def run_query(text: str, cat: Catalog, *, cache_plans: bool = True, **opts):
    """Validate and execute ``text``; plans are cached per (text, options)."""
    prog = parse_program(text)
    alias_unknown(prog, cat)
    irs = validate(prog, cat)
    options = ExecOptions(**opts)
    key = (text, options.ghd, options.dedup, options.pushdown)
    plans = _plan_cache.get(key) if cache_plans else None
    if plans is None:
        plans = plan_program(irs, cat, options)
        if cache_plans:
            _plan_cache[key] = plans
    return execute(irs, cat, options, plans)


def random_graph(rng: np.random.Generator, n: int, p: float, names=()):
    """Undirected G(n, p) as symmetric string pairs; ``names`` relabel vertices 0, 1, ..."""
    label = {i: str(i) for i in range(n)}
    for i, nm in enumerate(names):
        if i < n:
            label[i] = nm
    edges = [(label[a], label[b]) for a, b in itertools.combinations(range(n), 2)
             if rng.random() < p]
    return symmetric(edges)


def connected_graph(rng: np.random.Generator, n: int, extra: float):
    """Random spanning tree plus extra G(n, p) edges."""
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    edges += [(a, b) for a, b in itertools.combinations(range(n), 2) if rng.random() < extra]
    return symmetric(edges)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ---------------------------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, text = mark.args
    if rep.when == "call" or (rep.failed and n not in _CRITERIA):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _CRITERIA[n] = (text, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        text, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {text}")
