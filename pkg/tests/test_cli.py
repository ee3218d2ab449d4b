import json

import pytest

from ensemblefuzz.cli import main

CHAIN = "a b\nb c\na c2\nc2 c\n"


@pytest.fixture
def chain_files(tmp_path):
    (tmp_path / "cg.txt").write_text("main a\na b\nb c\n")
    (tmp_path / "entries.txt").write_text("main\n")
    (tmp_path / "map.txt").write_text("1 main\n2 a\n3 c\n")
    return tmp_path


def test_depths_text(chain_files, capsys):
    rc = main(["depths", "--callgraph", str(chain_files / "cg.txt"),
               "--entries", str(chain_files / "entries.txt"),
               "--edge-map", str(chain_files / "map.txt")])
    out = capsys.readouterr().out
    assert rc == 0
    assert out.splitlines()[0] == "d_μ=1.5, threshold=2.25, deep={c}"
    assert "deep edges: 3" in out


def test_depths_json(chain_files, tmp_path):
    out = tmp_path / "d.json"
    assert main(["depths", "--callgraph", str(chain_files / "cg.txt"), "--format", "json",
                 "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["deep_functions"] == ["c"] and d["depths"]["main"] == 0


def test_simulate_is_repeatable(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert main(["simulate", "--scenario", "finetune", "--seed", "3", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["config"]["seed"] == 3


def test_env_seed_wins(tmp_path, monkeypatch):
    monkeypatch.setenv("ENSEMBLE_SEED", "11")
    out = tmp_path / "r.json"
    assert main(["simulate", "--scenario", "finetune", "--seed", "3", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["config"]["seed"] == 11
    monkeypatch.setenv("ENSEMBLE_SEED", "eleven")
    assert main(["simulate", "--scenario", "finetune", "--out", str(out)]) == 2


def test_report_round_trip(tmp_path):
    logs, first, again = tmp_path / "r.jsonl", tmp_path / "a.json", tmp_path / "b.json"
    assert main(["simulate", "--scenario", "finetune", "--rounds", "4", "--logs", str(logs),
                 "--out", str(first)]) == 0
    assert main(["report", "--logs", str(logs), "--out", str(again)]) == 0
    assert first.read_bytes() == again.read_bytes()
    csv_out = tmp_path / "r.csv"
    assert main(["report", "--logs", str(first), "--format", "csv", "--out", str(csv_out)]) == 0
    assert len(csv_out.read_text().splitlines()) == 1 + 4 * 2


def test_compare(tmp_path, capsys):
    table = tmp_path / "t.json"
    rc = main(["compare", "--scenario", "finetune", "--policies", "legion,ns", "--seeds", "1..3",
               "--rounds", "2", "--reports-dir", str(tmp_path / "reports"), "--out", str(table)])
    assert rc == 0
    assert "legion >= ns: " in capsys.readouterr().out
    assert len(json.loads(table.read_text())["rows"]) == 3
    assert len(list((tmp_path / "reports").glob("*.json"))) == 6


@pytest.mark.parametrize("argv", [
    ["simulate", "--scenario", "no-such-scenario"],
    ["simulate", "--scenario", "finetune", "--policy", "bogus"],
    ["simulate", "--scenario", "finetune", "--units", "0"],
    ["compare", "--scenario", "finetune", "--seeds", "5..1"],
    ["compare", "--scenario", "finetune", "--policies", "legion,legion"],
    ["depths", "--callgraph", "/nonexistent/cg.txt"],
    ["report", "--logs", "/nonexistent/log.jsonl"],
    ["run", "--config", "/nonexistent/config.toml"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "ensemblefuzz" in capsys.readouterr().err


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_run_without_workdir(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[target]\npath = "t"\nrunner = "r"\n[adapters.a]\ncmd = "x {target} {in} {out}"\n')
    assert main(["run", "--config", str(cfg)]) == 2
