"""Scheduling loop, trace formats, canonical keys, bounded exploration."""
import json
from fractions import Fraction

import pytest

from hytccp.constraints import reset_fresh_counter
from hytccp.parser import parse_program
from hytccp.semantics import Configuration
from hytccp.simulator import (
    ContinuousEvent,
    DiscreteEvent,
    RunOptions,
    TerminalEvent,
    canonical_key,
    explore,
    run,
)


def program(text):
    return parse_program(text, source=text)


def load(name):
    with open(f"models/{name}") as fh:
        text = fh.read()
    return parse_program(text, source=text)


# --- terminals


def test_stop_terminates_all_stop_at_zero():
    trace = run(program("init :- stop."), RunOptions())
    assert trace.terminal.kind == "all_stop" and trace.terminal.clock == 0


def test_unsatisfiable_ask_suspends_at_zero():
    trace = run(program("init :- ask(X = a) -> stop."), RunOptions())
    assert trace.terminal.kind == "suspended" and trace.terminal.clock == 0


def test_watched_guard_without_invariant_is_a_timelock():
    trace = run(program("init :- change(T, 0, der(T) = 1) || (ask(T = 5) -> stop)."), RunOptions())
    assert trace.terminal.kind == "timelock"


def test_instant_divergence_is_detected():
    trace = run(
        program("loop :- tell(X = a) || loop. init :- loop."),
        RunOptions(divergence_budget=50),
    )
    assert trace.terminal.kind == "instant_divergence" and trace.terminal.clock == 0


def test_max_time_reached():
    trace = run(load("timer.hyt"), RunOptions(max_time=Fraction(150)))
    assert trace.terminal.kind == "max_time" and trace.terminal.clock == 150


# --- traces


def test_timer_fires_at_exact_periods():
    trace = run(load("timer.hyt"), RunOptions(max_time=Fraction(180)))
    resets = [ev.clock for ev in trace.events if isinstance(ev, DiscreteEvent) and ev.changes]
    assert resets == [Fraction(0), Fraction(60), Fraction(120), Fraction(180)]


def test_clock_soundness():
    trace = run(load("timer.hyt"), RunOptions(max_time=Fraction(200)))
    total = sum((ev.tau for ev in trace.events if isinstance(ev, ContinuousEvent)), Fraction(0))
    assert total == trace.terminal.clock


def test_horizon_caps_single_steps():
    trace = run(load("timer.hyt"), RunOptions(max_time=Fraction(60), horizon=Fraction(25)))
    taus = [ev.tau for ev in trace.events if isinstance(ev, ContinuousEvent)]
    assert taus == [Fraction(25), Fraction(25), Fraction(10)]
    assert trace.terminal.clock == 60


def test_jsonl_trace_schema():
    trace = run(load("timer.hyt"), RunOptions(max_time=Fraction(60)))
    lines = trace.to_jsonl().strip().split("\n")
    header = json.loads(lines[0])
    assert header["kind"] == "header" and header["seed"] == 0
    kinds = [json.loads(l)["kind"] for l in lines[1:]]
    assert kinds[-1] == "terminal" and "continuous" in kinds and "discrete" in kinds
    cont = next(json.loads(l) for l in lines[1:] if json.loads(l)["kind"] == "continuous")
    assert cont["tau"] == "60" and cont["vars"]["T"] == {"v": "60", "flow": "1+0*x"}


def test_csv_matches_jsonl_events():
    trace = run(load("timer.hyt"), RunOptions(max_time=Fraction(120)))
    rows = trace.to_csv().strip().split("\n")
    assert rows[0] == "t,var,value,flow_a,flow_b"
    cont_events = [ev for ev in trace.events if isinstance(ev, ContinuousEvent)]
    assert len(rows) - 1 == sum(len(ev.after) for ev in cont_events)
    assert rows[1] == "60,T,60,1,0"


def test_scheduler_choice_is_recorded():
    prog = program("init :- ask(X = a) -> tell(Y = 1) + ask(X = a) -> tell(Y = 2) || tell(X = a).")
    trace = run(prog, RunOptions())
    picks = [c for ev in trace.events if isinstance(ev, DiscreteEvent) for c in ev.choices]
    assert any(c.site == ("scheduler",) and c.alternatives == 2 for c in picks)


def test_random_policy_is_seeded():
    prog = program("init :- ask(X = a) -> tell(Y = 1) + ask(X = a) -> tell(Y = 2) || tell(X = a).")
    a = run(prog, RunOptions(policy="random", seed=5)).to_jsonl()
    b = run(prog, RunOptions(policy="random", seed=5)).to_jsonl()
    assert a == b


def test_identical_options_give_identical_traces():
    prog = load("dam.hyt")
    options = RunOptions(max_time=Fraction(7200), seed=3)
    assert run(prog, options).to_jsonl() == run(prog, options).to_jsonl()


# --- canonical keys


def test_canonical_key_identifies_renamed_configurations():
    prog = program("init :- exists X (tell(X = [a|Y])).")
    reset_fresh_counter()
    (c1, _), = __import__("hytccp.semantics", fromlist=["discrete_successors"]).discrete_successors(
        Configuration(prog.initial), prog
    )
    k1 = canonical_key(c1)
    reset_fresh_counter()
    for _ in range(3):  # burn generated names so the numbering differs
        from hytccp.constraints import fresh_var

        fresh_var("Q")
    (c2, _), = __import__("hytccp.semantics", fromlist=["discrete_successors"]).discrete_successors(
        Configuration(prog.initial), prog
    )
    assert canonical_key(c2) == k1


# --- exploration


def test_explore_merges_parallel_tells_in_one_step():
    report = explore(program("init :- tell(X = a) || tell(Y = b)."), depth=1)
    assert len(report.states) == 2  # the initial state and the joint result
    assert report.complete


def test_explore_enumerates_choice_branches():
    report = explore(
        program("init :- ask(X = a) -> tell(Y = 1) + ask(X = a) -> tell(Y = 2) || tell(X = a)."),
        depth=4,
    )
    states = {repr(s) for s in report.states}
    assert any("Y=1" in s for s in states) and any("Y=2" in s for s in states)


def test_explore_takes_continuous_steps():
    report = explore(load("timer.hyt"), depth=4)
    assert any("'60'" in repr(s) or "60" in repr(s) for s in report.states)
    assert report.complete


def test_explore_respects_state_cap():
    prog = program("loop(X) :- exists Y (tell(X = [a|Y]) || loop(Y)). init :- exists X (loop(X)).")
    report = explore(prog, depth=50, state_cap=20)
    assert not report.complete
    assert len(report.states) == 20


def test_report_json_round_trips():
    report = explore(program("init :- tell(X = a)."), depth=2)
    payload = json.loads(json.dumps(report.to_json()))
    assert payload["state_count"] == len(report.states)
    assert payload["complete"] is True
