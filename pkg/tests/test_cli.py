"""Command-line driver: subcommands, exit codes, output formats."""
import json
import os

import pytest

from hytccp.cli import main
from hytccp.parser import parse_program


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_run_stop_model(tmp_path, capsys):
    out = str(tmp_path / "trace.jsonl")
    assert main(["run", "models/stop.hyt", "--out", out]) == 0
    lines = open(out).read().strip().split("\n")
    assert json.loads(lines[-1])["cause"] == "all_stop"
    assert "terminal=all_stop" in capsys.readouterr().err


def test_run_missing_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.hyt")]) == 1
    assert "missing.hyt" in capsys.readouterr().err


def test_run_parse_error(tmp_path, capsys):
    path = write(tmp_path, "bad.hyt", "init :- tell(X = ).")
    assert main(["run", path]) == 1
    err = capsys.readouterr().err
    assert "bad.hyt" in err and "1:" in err


def test_run_timelock_exits_2(tmp_path):
    path = write(tmp_path, "lock.hyt", "init :- change(T, 0, der(T) = 1) || (ask(T = 5) -> stop).")
    out = str(tmp_path / "t.jsonl")
    assert main(["run", path, "--out", out]) == 2


def test_run_divergence_budget_env(tmp_path, monkeypatch):
    path = write(tmp_path, "loop.hyt", "loop :- tell(X = a) || loop. init :- loop.")
    monkeypatch.setenv("HYTCCP_DIVERGENCE_BUDGET", "10")
    out = str(tmp_path / "t.jsonl")
    assert main(["run", path, "--out", out]) == 2
    assert json.loads(open(out).read().strip().split("\n")[-1])["cause"] == "instant_divergence"


def test_run_csv_format(tmp_path):
    out = str(tmp_path / "trace.csv")
    assert main(["run", "models/timer.hyt", "--max-time", "120", "--format", "csv", "--out", out]) == 0
    rows = open(out).read().strip().split("\n")
    assert rows[0] == "t,var,value,flow_a,flow_b"
    assert rows[1].startswith("60,T,")


def test_run_dam_four_periods(tmp_path):
    out = str(tmp_path / "dam.jsonl")
    assert main(["run", "models/dam.hyt", "--seed", "42", "--max-time", "14400", "--out", out]) == 0
    events = [json.loads(l) for l in open(out).read().strip().split("\n")[1:]]
    resets = [e["t"] for e in events if e["kind"] == "discrete" and any(c[0] == "T" for c in e.get("changes", []))]
    assert resets == ["0", "3600", "7200", "10800", "14400"]


def test_explore_subcommand(tmp_path):
    out = str(tmp_path / "reach.json")
    assert main(["explore", "models/stop.hyt", "--depth", "3", "--out", out]) == 0
    payload = json.loads(open(out).read())
    assert payload["kind"] == "reachability" and payload["state_count"] >= 1


def test_check_ok(capsys):
    assert main(["check", "models/dam.hyt"]) == 0
    assert "OK" in capsys.readouterr().err


def test_check_flags_uninitialized_continuous_variable(tmp_path, capsys):
    path = write(tmp_path, "bad.hyt", "init :- change(Vol, _, der(Vol) = 1).")
    assert main(["check", path]) == 1
    assert "uninitialized continuous variable Vol" in capsys.readouterr().err


def test_check_empty_file(tmp_path):
    path = write(tmp_path, "empty.hyt", "")
    assert main(["check", path]) == 1


def test_parse_output_reparses(tmp_path):
    out = str(tmp_path / "pretty.hyt")
    assert main(["parse", "models/dam.hyt", "--out", out]) == 0
    original = parse_program(open("models/dam.hyt").read())
    reparsed = parse_program(open(out).read())
    assert {d.name for d in reparsed.declarations} == {d.name for d in original.declarations}
    for decl in original.declarations:
        assert reparsed.lookup(decl.name, len(decl.params))[0].body == decl.body
