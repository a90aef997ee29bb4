import json
import subprocess
import sys

import pytest

from rwrange.cli import DEFAULTS, resolve_config, run
from rwrange.errors import ConfigInvalid
from rwrange.graph import load_edgelist


def _run(capsys, *argv):
    code = run(list(argv))
    out = capsys.readouterr().out
    return code, out


def _json(capsys, *argv):
    code, out = _run(capsys, *argv)
    assert code == 0, out
    return json.loads(out)


def test_oracle_triangle(capsys):
    rep = _json(capsys, "oracle", "--graph", "triangle", "--n", "3")
    assert rep["result"]["expected_range"] == "5/2"
    assert rep["result"]["range_law"] == {"2": "1/2", "3": "1/2"}


def test_resist_t4(capsys):
    rep = _json(capsys, "resist", "--family", "t4", "--n-max", "50")
    lo, hi = rep["result"]["limit_interval"]
    assert lo <= 3 / 8 <= hi and hi - lo < 1e-15
    assert rep["result"]["profile"]["rows"][0]["rho"] == 0.25


def test_resist_explicit(capsys):
    rep = _json(capsys, "resist", "--family", "lattice", "--dim", "1", "--size", "11", "--n-max", "3")
    assert [r["rho"] for r in rep["result"]["profile"]["rows"]][:2] == pytest.approx([0.5, 1.0])


def test_build_prints_edgelist(capsys, tmp_path):
    code, out = _run(capsys, "build", "--family", "gasket", "--level", "1", "--out", str(tmp_path))
    assert code == 0
    path = tmp_path / "graph.edgelist"
    assert path.read_text() == out
    g = load_edgelist(path)
    assert (g.vertex_count, g.edge_count) == (6, 9)
    assert json.loads((tmp_path / "report.json").read_text())["result"]["edges"] == 9


def test_build_truncated_tree(capsys):
    code, out = _run(capsys, "build", "--family", "ttilde", "--N", "3", "--depth", "2")
    assert code == 0 and "# artificial: 3 4 5 6" in out


def test_walk_outputs(capsys, tmp_path):
    args = ["walk", "--family", "t3", "--n", "200", "--trials", "100", "--seed", "5",
            "--out", str(tmp_path), "--trials-csv"]
    first = _json(capsys, *args)
    assert first["result"]["trials"] == 100 and "out" not in first["config"]
    assert (tmp_path / "trials.csv").read_text().startswith("trial,n,R_n,final_distance\n")
    assert (tmp_path / "summary.csv").exists()
    report = (tmp_path / "report.json").read_text()
    _json(capsys, *args, "--jobs", "2")
    assert (tmp_path / "report.json").read_text() == report
    assert len((tmp_path / "run.log").read_text().splitlines()) == 2


def test_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"graph": "square", "n": 6, "seed": 3}))
    rep = _json(capsys, "oracle", "--config", str(cfg), "--n", "4")
    assert rep["config"]["n"] == 4 and rep["config"]["seed"] == 3
    assert rep["result"]["n"] == 4


def test_resolve_defaults():
    cfg = resolve_config(["walk", "--family", "t3"])
    assert cfg["trials"] == DEFAULTS["trials"] and cfg["command"] == "walk"


@pytest.mark.parametrize("payload", [{"bogus": 1}, {"n": "ten"}, {"epsilon": "x"}, [1, 2]])
def test_bad_config(tmp_path, payload):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(payload))
    with pytest.raises(ConfigInvalid):
        resolve_config(["walk", "--config", str(cfg)])


@pytest.mark.parametrize(
    "argv",
    [
        ["walk", "--family", "nosuch"],
        ["walk"],
        ["walk", "--family", "t3", "--trials", "0"],
        ["walk", "--family", "t3", "--x", "7"],
        ["fluct", "--n1", "4", "--n2", "9"],
        ["laws", "--graph", "path5", "--x", "2", "--kind", "bridge", "--n", "5"],
        ["laws", "--family", "t3", "--band", "0.9,0.1"],
        ["oracle", "--graph", "nosuch.txt"],
        ["walk", "--no-such-flag"],
        ["resist", "--config", "/nonexistent.json"],
    ],
)
def test_invalid_exit_code(capsys, argv):
    assert run(argv) == 2
    assert "invalid input" in capsys.readouterr().err


def test_fluct_budget_partial(capsys, tmp_path):
    code, out = _run(capsys, "fluct", "--k1", "8", "--stages", "2", "--trials", "200",
                     "--budget-steps", "20", "--out", str(tmp_path))
    assert code == 3
    rep = json.loads(out)
    assert rep["partial"]["complete"] is False
    assert (tmp_path / "stages.csv").read_text().startswith("stage,k,estimate,ci_lo,ci_hi,target")


def test_walk_memory_budget(capsys, monkeypatch):
    monkeypatch.setenv("RWRANGE_BUDGET_MB", "1")
    assert run(["walk", "--family", "t3", "--n", "10000000", "--trials", "100"]) == 3


def test_laws_kinds(capsys):
    weak = _json(capsys, "laws", "--family", "t3", "--n", "2000", "--trials", "200")
    assert weak["result"]["extra"]["band"] == pytest.approx([0.5, 0.5])
    alt = _json(capsys, "laws", "--family", "alt", "--radii", "3,7", "--n", "500", "--trials", "100")
    assert alt["result"]["extra"]["band"] == pytest.approx([2 / 3, 6 / 7])
    bridge = _json(capsys, "laws", "--kind", "bridge", "--graph", "square", "--n", "4", "--trials", "500")
    assert bridge["result"]["accepted"] == 500 and "exact" in bridge["result"]["extra"]
    tail = _json(capsys, "laws", "--kind", "tail", "--family", "t4", "--grid", "10,20,40")
    assert tail["result"]["delta"] > 1


def test_ucheck_kinds(capsys):
    sweep = _json(capsys, "ucheck", "--family", "alt", "--radii", "3", "--n-max", "10")
    assert sweep["result"]["mode"] == "certified"
    rec = _json(capsys, "ucheck", "--kind", "recurrence", "--family", "lattice", "--size", "15", "--n", "6")
    assert rec["result"]["inequality_holds"]
    alpha = _json(capsys, "ucheck", "--kind", "alpha", "--family", "lattice", "--dim", "1",
                  "--size", "201", "--k-max", "80")
    assert 0.8 <= alpha["result"]["alpha"] <= 1.2
    proxy = _json(capsys, "ucheck", "--family", "vicsek", "--level", "2", "--n-max", "4")
    assert proxy["result"]["mode"] == "proxy"


def test_ucheck_rejects_tree_for_alpha(capsys):
    assert run(["ucheck", "--kind", "alpha", "--family", "t3"]) == 2


def test_yn_walk(capsys):
    rep = _json(capsys, "walk", "--family", "yn", "--N", "4", "--n", "100", "--trials", "100")
    assert 0 < rep["result"]["mean"] <= 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rwrange", "oracle", "--graph", "edge", "--n", "3"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["result"]["range_law"] == {"2": "1"}
