import json

import pytest

from conftest import QUERIES
from ghdjoin.cli import main


@pytest.fixture
def graph(tmp_path):
    p = tmp_path / "g.txt"
    pairs = ["1 2", "2 3", "1 3", "3 4", "4 5", "5 3", "start 1", "node 2"]
    rev = [" ".join(reversed(x.split())) for x in pairs]
    p.write_text("\n".join(pairs + rev) + "\n")
    return str(p)


def q(name):
    return str(QUERIES / f"{name}.dl")


def test_query_tsv(graph, capsys):
    assert main(["query", q("triangle"), "-d", graph]) == 0
    rows = [l.split("\t") for l in capsys.readouterr().out.splitlines()]
    assert len(rows) == 12 and all(len(r) == 3 for r in rows)
    assert rows == sorted(rows, key=lambda r: [int(x) for x in r])


def test_query_count_pruned(graph, capsys):
    assert main(["query", q("count_triangle"), "-d", graph, "--prune"]) == 0
    assert capsys.readouterr().out == "2\n"


def test_query_json_and_metrics(graph, tmp_path, capsys):
    mpath = tmp_path / "m.json"
    assert main(["query", q("triangle"), "-d", graph, "--output", "json",
                 "--metrics", str(mpath), "--threads", "2"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["relation"] == "Triangle" and doc["keys"] == ["x", "y", "z"]
    assert doc["annotation"] is None and len(doc["rows"]) == 12
    m = json.loads(mpath.read_text())
    assert m["schema"] == "ghdjoin-metrics/1" and m["iterations"] > 0


def test_relation_flag_and_head(graph, tmp_path, capsys):
    start = tmp_path / "start.txt"
    start.write_text("start\n")
    assert main(["query", q("sssp_seeded"), "-d", graph, "--relation", f"Start={start}",
                 "--head", "SSSP"]) == 0
    out = dict(l.split("\t") for l in capsys.readouterr().out.splitlines())
    assert out["start"] == "1" and out["1"] == "2" and out["5"] == "4"


def test_load_then_query_snapshot(graph, tmp_path, capsys):
    snap = str(tmp_path / "g.npz")
    assert main(["load", graph, "-o", snap, "--ordering", "degree"]) == 0
    capsys.readouterr()
    assert main(["query", q("triangle"), "-s", snap]) == 0
    from_snap = capsys.readouterr().out
    assert main(["query", q("triangle"), "-d", graph]) == 0
    assert from_snap == capsys.readouterr().out


@pytest.mark.parametrize("fmt", ["text", "json"])
def test_explain(graph, capsys, fmt):
    assert main(["explain", q("barbell"), "-d", graph, "--format", fmt]) == 0
    out = capsys.readouterr().out
    if fmt == "json":
        (plan,) = json.loads(out)
        assert len(plan["nodes"]) == 3 and plan["fhw"] == "3/2"
    else:
        assert "3 node(s)" in out and "dedup-of=v1" in out


def test_explain_no_ghd(graph, capsys):
    assert main(["explain", q("barbell"), "-d", graph, "--no-ghd"]) == 0
    assert "1 node(s), fhw 3," in capsys.readouterr().out


def test_bench_trims(graph, tmp_path, capsys):
    mpath = tmp_path / "b.json"
    assert main(["bench", q("triangle"), "-d", graph, "--repeat", "7",
                 "--metrics", str(mpath)]) == 0
    assert "mean over 5 of 7 runs" in capsys.readouterr().out
    rep = json.loads(mpath.read_text())
    assert len(rep["timing"]["samples_s"]) == 7 and len(rep["timing"]["kept_s"]) == 5


def test_bench_oracle_layout(graph, capsys):
    assert main(["bench", q("triangle"), "-d", graph, "--repeat", "1",
                 "--layout", "oracle", "--metrics", "-"]) == 0
    out = capsys.readouterr()
    assert "oracle" in out.out
    rep = json.loads(out.err)
    assert set(rep["granularity"]) == {"relation", "set", "block"}


def test_bench_kernels(capsys):
    assert main(["bench-kernels", "--pairs", "5", "--repeat", "3"]) == 0
    assert "python" in capsys.readouterr().out


@pytest.mark.parametrize("argv, code", [
    (["query", "missing.dl"], 2),
    (["query", q("triangle"), "-d", "missing.txt"], 1),
    (["query", q("triangle"), "--layout", "oracle"], 2),
    (["frobnicate"], 2),
    (["query", q("triangle"), "--relation", "nonsense"], 2),
])
def test_exit_codes(argv, code, capsys):
    assert main(argv) == code


def test_syntax_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.dl"
    bad.write_text("Q(x) :- Edge(x,y)\n")
    assert main(["query", str(bad)]) == 2
    assert "line 2, column 1" in capsys.readouterr().err


def test_validation_error_exit(tmp_path, graph, capsys):
    bad = tmp_path / "bad.dl"
    bad.write_text("Q(z) :- Edge(x,y).\n")
    assert main(["query", str(bad), "-d", graph]) == 2
    assert "error:" in capsys.readouterr().err


def test_bad_row_exit(tmp_path, capsys):
    g = tmp_path / "g.txt"
    g.write_text("1 2\n3\n")
    assert main(["query", q("triangle"), "-d", str(g)]) == 1
    assert ":2:" in capsys.readouterr().err
