import csv
import io
import json

import pytest

from frontreuse import cli
from frontreuse.frontal_solver import SingularFrontError
from frontreuse.verify import mesh_checks, run_invariant_suite

HEADER = "schema_version,l,mode,N,flops_new,flops_back,nnz_new,peak_front,wall_time_ns,error_L2,error_H1"


def read_report(path):
    text = path.read_text()
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    summary = dict(ln[2:].split(",", 1) for ln in text.splitlines() if ln.startswith("# ") and "," in ln)
    return body[0], list(csv.DictReader(io.StringIO("\n".join(body)))), summary


def test_sequence_all_modes(tmp_path):
    out = tmp_path / "r.csv"
    code = cli.main(["sequence", "--problem", "radical1", "--p", "2", "--levels", "8",
                     "--mode", "all", "--out", str(out)])
    assert code == 0
    header, rows, summary = read_report(out)
    assert header == HEADER
    assert len(rows) == 24
    assert {r["mode"] for r in rows} == {"reuse", "noreuse", "oracle"}
    assert summary["verdict"] == "True"
    for key in ("fit.c1", "fit.c2", "fit.c7", "totals.reuse.flops_new", "totals.noreuse.flops_new"):
        assert key in summary
    reuse = [int(r["flops_new"]) for r in rows if r["mode"] == "reuse"]
    assert len(set(reuse[2:])) == 1


def test_single_level_rows_match(tmp_path):
    out = tmp_path / "r.csv"
    assert cli.main(["sequence", "--levels", "1", "--mode", "all", "--out", str(out)]) == 0
    _, rows, _ = read_report(out)
    by = {r["mode"]: r for r in rows}
    for k in ("N", "flops_new", "flops_back", "nnz_new", "peak_front", "error_L2", "error_H1"):
        assert by["reuse"][k] == by["noreuse"][k]


def test_report_is_deterministic_except_time(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        cli.main(["sequence", "--problem", "lshape", "--p", "1", "--levels", "3",
                  "--mode", "reuse", "--out", str(path)])
    ra, rb = read_report(a)[1], read_report(b)[1]
    for x, y in zip(ra, rb):
        x.pop("wall_time_ns"), y.pop("wall_time_ns")
        assert x == y


def test_json_format(tmp_path):
    out = tmp_path / "r.json"
    assert cli.main(["sequence", "--levels", "3", "--mode", "noreuse", "--format", "json",
                     "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["schema_version"] == 1 and len(doc["rows"]) == 3
    assert list(doc["rows"][0]) == HEADER.split(",")
    assert "verdict" not in doc["summary"]


@pytest.mark.parametrize("argv", [
    ["sequence", "--problem", "square"],
    ["sequence", "--p", "0"],
    ["sequence", "--levels", "0"],
    ["sequence", "--mode", "fast"],
    ["sequence", "--format", "xml"],
    ["sequence", "--alpha", "3"],
    ["sequence", "--levels", "64", "--p", "10"],
    ["sequence", "--bogus"],
    ["launch"],
])
def test_usage_errors(tmp_path, argv, capsys):
    out = tmp_path / "never.csv"
    assert cli.main(argv + ["--out", str(out)]) == 1
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_verify_passes(capsys):
    assert cli.main(["verify", "--problem", "radical1", "--p", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 8 and all(ln.startswith("PASS") for ln in lines)


def test_verify_radical2_p3():
    assert all(r.ok for r in run_invariant_suite("radical2", 3, 6))


def test_irregular_fixture_fails_only_irregularity(irregular_mesh, monkeypatch, capsys):
    results = mesh_checks(irregular_mesh)
    assert [r.name for r in results if not r.ok] == ["mesh_1_irregular"]
    monkeypatch.setattr(cli, "run_invariant_suite", lambda *a, **k: results)
    assert cli.main(["verify"]) == 2
    fails = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("FAIL")]
    assert len(fails) == 1 and "mesh_1_irregular" in fails[0]


def test_numerical_failure_exit_code(monkeypatch, capsys):
    def boom(self):
        raise SingularFrontError(3, 0.0)

    monkeypatch.setattr(cli.SequenceSolver, "step", boom)
    assert cli.main(["sequence", "--mode", "reuse", "--levels", "2"]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_dump_mesh(capsys):
    assert cli.main(["dump-mesh", "--problem", "radical1", "--levels", "2"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert sum(e["active"] for e in doc["elements"]) == 14
    assert cli.main(["dump-mesh", "--levels", "0"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["elements"]) == 2 and all(e["active"] for e in doc["elements"])
    for levels in (1, 4, 7):
        cli.main(["dump-mesh", "--levels", str(levels)])
        doc = json.loads(capsys.readouterr().out)
        assert sum(e["active"] for e in doc["elements"]) == 6 * levels + 2


def test_dump_mesh_to_file(tmp_path):
    out = tmp_path / "m.json"
    assert cli.main(["dump-mesh", "--problem", "lshape", "--levels", "1", "--out", str(out)]) == 0
    assert sum(e["active"] for e in json.loads(out.read_text())["elements"]) == 12
