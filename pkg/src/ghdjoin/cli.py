"""Command-line entry point.

Exit codes: 0 on success, 1 on runtime errors, 2 on usage or query errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from ghdjoin import bench as benchmod
from ghdjoin.errors import GhdJoinError, QuerySyntaxError, ValidationError
from ghdjoin.executor import ExecOptions, execute, plan_program
from ghdjoin.frontend import DERIVED_RELATIONS, Program, parse_program, validate
from ghdjoin.planner import explain_dict, explain_text
from ghdjoin.setkernel import Granularity, oracle_optimize
from ghdjoin.storage import Catalog, Ordering, load_relation

ORDERINGS = [o.value for o in Ordering]
LAYOUTS = ["relation", "set", "block", "oracle"]


class UsageError(Exception):
    pass


# -- catalog setup ----------------------------------------------------------

def _sniff_arity(path: str) -> int:
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                s = line.strip()
                if s and not s.startswith("#"):
                    return len(s.split())
    except OSError:
        return 2
    return 2


def _granularity(layout: str) -> Granularity:
    # the oracle runs on top of set-level layouts
    return Granularity.SET if layout == "oracle" else Granularity(layout)


def build_catalog(args) -> Catalog:
    gran = _granularity(getattr(args, "layout", "set"))
    if getattr(args, "snapshot", None):
        cat = Catalog.load(args.snapshot)
        if cat.granularity is not gran:
            cat.set_granularity(gran)
    elif getattr(args, "dataset", None):
        raw = load_relation(args.dataset, 2, name="Edge", annotated=args.weighted)
        cat = Catalog.from_edge_list(raw, ordering=args.ordering, prune=args.prune,
                                     seed=args.seed, granularity=gran)
    else:
        cat = Catalog(granularity=gran)
        cat.add_relation("Edge", np.zeros((0, 2), dtype=np.int64))
    for item in getattr(args, "relation", None) or []:
        if "=" not in item:
            raise UsageError(f"--relation expects NAME=PATH, got {item!r}")
        name, path = item.split("=", 1)
        raw = load_relation(path, _sniff_arity(path), name=name)
        cat.add_raw(raw, name)
    return cat


def alias_unknown(program: Program, catalog: Catalog, target: str = "Edge") -> list[str]:
    """Point every unknown binary body relation at ``target``."""
    heads = {r.head_name for r in program}
    added = []
    if not catalog.has_relation(target):
        return added
    for rule in program:
        for atom in rule.body:
            name = atom.relation
            if (name in heads or name in DERIVED_RELATIONS or catalog.has_relation(name)
                    or len(atom.terms) != 2):
                continue
            catalog.add_alias(name, target)
            added.append(name)
    return added


def read_program(path: str) -> Program:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read query file {path}: {e.strerror or e}") from e
    return parse_program(text)


def _options(args) -> ExecOptions:
    return ExecOptions(threads=args.threads, ghd=not args.no_ghd, dedup=not args.no_dedup,
                       pushdown=not getattr(args, "no_pushdown", False), naive=args.naive)


def _prepare(args):
    program = read_program(args.query)
    cat = build_catalog(args)
    alias_unknown(program, cat)
    irs = validate(program, cat)
    return program, cat, irs


# -- output -----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        r = repr(v)
        return r[:-2] if r.endswith(".0") else r
    return str(v)


def format_results(result, fmt: str, head: str | None = None) -> str:
    rel = result.relation(head)
    rows = result.decoded(head)
    if fmt == "json":
        doc = {"relation": rel.name, "keys": list(rel.keys),
               "annotation": rel.annotation_type, "rows": [list(r) for r in rows]}
        return json.dumps(doc, ensure_ascii=False) + "\n"
    return "".join("\t".join(_fmt(x) for x in r) + "\n" for r in rows)


def _write_metrics(path: str | None, doc: dict) -> None:
    if not path:
        return
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path == "-":
        sys.stderr.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


# -- commands ---------------------------------------------------------------

def cmd_load(args) -> int:
    cat = build_catalog(args)
    cat.save(args.output)
    st = cat.stats()
    print(f"wrote {args.output}: {json.dumps(st, sort_keys=True)}")
    return 0


def cmd_query(args) -> int:
    if args.layout == "oracle":
        raise UsageError("--layout oracle is only valid for bench")
    _, cat, irs = _prepare(args)
    result = execute(irs, cat, _options(args))
    sys.stdout.write(format_results(result, args.output, args.head))
    _write_metrics(args.metrics, result.metrics.as_dict())
    return 0


def cmd_explain(args) -> int:
    _, cat, irs = _prepare(args)
    plans = plan_program(irs, cat, _options(args))
    if args.format == "json":
        print(json.dumps([explain_dict(p) for p in plans], indent=2, ensure_ascii=False))
    else:
        print("\n\n".join(explain_text(p) for p in plans))
    return 0


def cmd_bench(args) -> int:
    _, cat, irs = _prepare(args)
    opts = _options(args)
    plans = plan_program(irs, cat, opts)
    timing, result = benchmod.time_repeated(lambda: execute(irs, cat, opts, plans), args.repeat)
    report = {"query": args.query, "repeat": args.repeat, "timing": timing.as_dict(),
              "metrics": result.metrics.as_dict(include_time=False)}
    if args.layout == "oracle":
        opts.record_pairs = args.pairs
        traced = execute(irs, cat, opts, plans)
        oracle = oracle_optimize(traced.metrics.pairs)
        report["oracle"] = oracle.as_dict()
        per_layout = {}
        for g in Granularity:
            cat.set_granularity(g)
            t, r = benchmod.time_repeated(lambda: execute(irs, cat, ExecOptions(
                threads=opts.threads, ghd=opts.ghd, dedup=opts.dedup, pushdown=opts.pushdown,
                naive=opts.naive), plans), args.repeat)
            per_layout[g.value] = {"mean_s": t.mean,
                                   "comparisons": r.metrics.intersections.comparisons}
        report["granularity"] = per_layout
        print(oracle.table())
    print(f"mean over {len(timing.kept)} of {len(timing.samples)} runs: {timing.mean:.6f} s")
    _write_metrics(args.metrics, report)
    return 0


def cmd_bench_kernels(args) -> int:
    rep = benchmod.bench_kernels(args.pairs, args.repeat, args.seed)
    print(rep.table())
    _write_metrics(args.metrics, rep.as_dict())
    return 0


# -- parser -----------------------------------------------------------------

def _data_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=False)
    src.add_argument("-d", "--dataset", help="edge list loaded as relation Edge")
    src.add_argument("-s", "--snapshot", help="snapshot written by 'load'")
    p.add_argument("--relation", action="append", metavar="NAME=PATH",
                   help="extra relation file (repeatable)")
    p.add_argument("--weighted", action="store_true", help="edge list has a weight column")
    p.add_argument("--ordering", choices=ORDERINGS, default="none")
    p.add_argument("--prune", action="store_true", help="keep only edges with src > dst")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layout", choices=LAYOUTS, default="set")


def _exec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-ghd", action="store_true", help="force a single-node plan")
    p.add_argument("--no-dedup", action="store_true")
    p.add_argument("--no-pushdown", action="store_true")
    p.add_argument("--naive", action="store_true", help="naive recursion to convergence")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ghdjoin", description="Worst-case optimal join engine")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("load", help="ingest an edge list into a snapshot")
    p.add_argument("dataset")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--relation", action="append", metavar="NAME=PATH")
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--ordering", choices=ORDERINGS, default="none")
    p.add_argument("--prune", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layout", choices=LAYOUTS[:3], default="set")
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("query", help="run a query program")
    p.add_argument("query")
    _data_flags(p)
    _exec_flags(p)
    p.add_argument("--output", choices=["tsv", "json"], default="tsv")
    p.add_argument("--head", help="relation to print (default: last rule)")
    p.add_argument("--metrics", help="write metrics JSON to this path ('-' for stderr)")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("explain", help="print the chosen plan")
    p.add_argument("query")
    _data_flags(p)
    _exec_flags(p)
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("bench", help="time a query")
    p.add_argument("query")
    _data_flags(p)
    _exec_flags(p)
    p.add_argument("--repeat", type=int, default=7)
    p.add_argument("--pairs", type=int, default=10_000, help="intersections traced for the oracle")
    p.add_argument("--metrics")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("bench-kernels", help="compare kernel backends")
    p.add_argument("--pairs", type=int, default=200)
    p.add_argument("--repeat", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--metrics")
    p.set_defaults(func=cmd_bench_kernels)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (UsageError, QuerySyntaxError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except GhdJoinError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        return 0


if __name__ == "__main__":
    sys.exit(main())
