"""Transition engine: discrete step rules, hiding, continuous steps, delays."""
import random
from fractions import Fraction

import pytest

from hytccp.constraints import (
    TRUE,
    LinCmp,
    conj,
    entails,
    reset_fresh_counter,
)
from hytccp.flows import DelayCause, EMPTY_STORE, apply_change
from hytccp.parser import parse_agent, parse_constraint, parse_program
from hytccp.semantics import (
    Configuration,
    EvaluationError,
    compute_delay,
    continuous_step,
    discrete_successors,
    is_all_stop,
    step_agent,
)
from hytccp.syntax import Flow, Hide, Parallel, Program, STOP, Stop, Tell, pretty

EMPTY_PROGRAM = Program({}, (), STOP)


def cfg_of(agent_text, store_text="true", cont=EMPTY_STORE):
    return Configuration(parse_agent(agent_text), parse_constraint(store_text), cont)


def succs(cfg, program=EMPTY_PROGRAM):
    return discrete_successors(cfg, program)


def timer_store(value=0, slope=1):
    return apply_change(EMPTY_STORE, "T", Fraction(value), Flow(Fraction(slope), Fraction(0)))


# --- basic rules


def test_stop_has_no_step():
    assert succs(cfg_of("stop")) == []


def test_tell_adds_to_the_store_and_stops():
    (nxt, outcome), = succs(cfg_of("tell(X = a)", "Y = b"))
    assert nxt.agent is STOP
    assert entails(nxt.discrete, parse_constraint("X = a /\\ Y = b"))
    assert outcome.told == parse_constraint("X = a")


def test_discrete_step_is_instantaneous():
    (nxt, _), = succs(cfg_of("tell(X = a)"))
    assert nxt.clock == 0 and nxt.continuous is EMPTY_STORE


def test_parallel_is_maximal():
    # both effects in one step: the store gains the binding and the flow resets
    cfg = Configuration(
        parse_agent("change(Vol, _, der(Vol) = -5) || tell(G = [open|H])"),
        TRUE,
        apply_change(EMPTY_STORE, "Vol", Fraction(1000), Flow(Fraction(0), Fraction(0))),
    )
    (nxt, _), = succs(cfg)
    assert entails(nxt.discrete, parse_constraint("G = [open|H]"))
    assert nxt.continuous.get("Vol").flow == Flow(Fraction(-5), Fraction(0))
    assert is_all_stop(nxt.agent)


def test_parallel_one_sided_when_other_suspends():
    (nxt, _), = succs(cfg_of("tell(X = a) || (ask(Y = b) -> stop)"))
    assert entails(nxt.discrete, parse_constraint("X = a"))
    assert not is_all_stop(nxt.agent)


def test_choice_takes_exactly_the_entailed_branches():
    cfg = cfg_of("ask(X = a) -> stop + ask(X = b) -> tell(Y = 1)", "X = a")
    (nxt, outcome), = succs(cfg)
    assert nxt.agent is STOP
    assert outcome.choices[0].picked == 0 and outcome.choices[0].alternatives == 2


def test_choice_with_two_enabled_branches_has_two_successors():
    cfg = cfg_of("ask(X = a) -> stop + ask(Y = b) -> tell(Z = 1)", "X = a /\\ Y = b")
    assert len(succs(cfg)) == 2


def test_choice_guard_on_continuous_snapshot():
    cfg = Configuration(parse_agent("ask(T = 60) -> stop"), TRUE, timer_store(60))
    (nxt, _), = succs(cfg)
    assert nxt.agent is STOP
    assert succs(Configuration(cfg.agent, TRUE, timer_store(59))) == []


def test_now_then_else_and_unwrapping():
    (nxt, _), = succs(cfg_of("now X = a then tell(Y = 1) else tell(Y = 2)", "X = a"))
    assert entails(nxt.discrete, parse_constraint("Y = 1"))
    (nxt, _), = succs(cfg_of("now X = a then tell(Y = 1) else tell(Y = 2)"))
    assert entails(nxt.discrete, parse_constraint("Y = 2"))
    # a suspended branch is unwrapped so the now does not re-test its guard
    (nxt, _), = succs(cfg_of("now X = a then stop else (ask(X = a) -> stop)"))
    assert pretty(nxt.agent) == "ask(X = a) -> stop"


def test_call_unfolds_with_parameter_substitution():
    prog = parse_program("p(A) :- tell(A = done). init :- exists V (p(V)).")
    cfg = Configuration(prog.initial)
    (cfg, _), = succs(cfg, prog)  # init -> body
    (cfg, _), = succs(cfg, prog)  # hide steps the call
    (cfg, _), = succs(cfg, prog)  # tell fires
    from hytccp.constraints import Atom, TermEq, is_fresh_name

    (atom,) = cfg.discrete.atoms
    assert isinstance(atom, TermEq) and is_fresh_name(atom.var)
    assert atom.term == Atom("done")


def test_change_value_from_discrete_store():
    cfg = cfg_of("change(T, N, der(T) = 1)", "N = 42")
    cfg.continuous  # T not yet present: plain initialization
    (nxt, _), = succs(cfg)
    assert nxt.continuous.get("T").value == 42


def test_change_unbound_value_is_an_error():
    with pytest.raises(EvaluationError):
        succs(cfg_of("change(T, N, der(T) = 1)"))


# --- hiding


def test_hide_publishes_under_stable_fresh_names():
    reset_fresh_counter()
    cfg = cfg_of("exists X (tell(X = [a|Y]))")
    (nxt, outcome), = succs(cfg)
    published = outcome.told
    assert "X" not in published.variables()
    # the local fact is published under a generated stand-in for X
    from hytccp.constraints import Atom, Cons, Var, is_fresh_name

    (atom,) = published.atoms
    assert is_fresh_name(atom.var)
    assert atom.term == Cons(Atom("a"), Var("Y"))


def test_hide_local_knowledge_visible_inside_only():
    reset_fresh_counter()
    cfg = cfg_of("exists X (tell(X = a) || (ask(X = a) -> tell(Done = yes)))")
    (cfg1, o1), = succs(cfg)
    assert "X" not in cfg1.discrete.variables()
    (cfg2, _), = succs(cfg1)  # the ask commits to its branch
    (cfg3, _), = succs(cfg2)  # the branch body tells
    assert entails(cfg3.discrete, parse_constraint("Done = yes"))


def test_hide_projection_of_later_bindings():
    # exists X (tell(Y=[X|T]) || tell(X=3)): published store entails Y=[3|T]
    reset_fresh_counter()
    cfg = cfg_of("exists X (tell(Y = [X|T]) || tell(X = 3))")
    (nxt, _), = succs(cfg)
    assert entails(nxt.discrete, parse_constraint("Y = [3|T]"))


def test_hide_alpha_converts_on_outer_clash():
    reset_fresh_counter()
    cfg = cfg_of("exists X (ask(X = a) -> stop + ask(Y = b) -> stop)", "X = a /\\ Y = b")
    results = succs(cfg)
    # the bound X is distinct from the outer X = a, so only the Y branch fires
    assert len(results) == 1
    (_, outcome), = results
    assert outcome.choices[0].picked == 1


def test_hide_publications_are_stable_across_steps():
    reset_fresh_counter()
    cfg = cfg_of("exists X (tell(X = [a|R]) || tell(X = [a|R]))")
    (nxt, o1), = succs(cfg)
    agent = nxt.agent
    assert isinstance(agent, Hide) and agent.alias is not None
    # a second publication of the same local fact adds nothing new
    (nxt2, o2), = succs(Configuration(Parallel(agent, parse_agent("tell(Z = c)")), nxt.discrete))
    assert entails(nxt.discrete, nxt2.discrete) or nxt2.discrete.atoms >= nxt.discrete.atoms


# --- monotonicity and continuous steps


def test_every_discrete_step_is_monotone_on_dam():
    text = open("models/dam.hyt").read()
    prog = parse_program(text, source=text)
    reset_fresh_counter()
    rng = random.Random(3)
    cfg = Configuration(prog.initial)
    draw = lambda lo, hi: Fraction(rng.randint(int(lo), int(hi)))
    from hytccp.semantics import discrete_successors as ds

    for _ in range(40):
        results = ds(cfg, prog, draw)
        if not results:
            res = compute_delay(cfg, prog, Fraction(3600))
            assert res.kind == "delay"
            cfg = continuous_step(cfg, res.outcome.tau)
            continue
        for nxt, _ in results:
            assert entails(nxt.discrete, cfg.discrete)
        cfg = results[0][0]


def test_continuous_step_shape():
    cfg = Configuration(parse_agent("ask~(T =< 60)"), parse_constraint("X = a"), timer_store(0))
    nxt = continuous_step(cfg, Fraction(25))
    assert nxt.agent is cfg.agent
    assert nxt.discrete is cfg.discrete
    assert nxt.continuous.get("T").value == 25
    assert nxt.continuous.get("T").flow == cfg.continuous.get("T").flow
    assert nxt.clock == 25
    with pytest.raises(ValueError):
        continuous_step(cfg, Fraction(0))


def test_shared_tau_across_parallel_invariants():
    agent = parse_agent("ask~(T =< 60) || ask~(true)")
    store = timer_store(0)
    cfg = Configuration(agent, TRUE, store)
    res = compute_delay(cfg, EMPTY_PROGRAM, Fraction(1000))
    assert res.kind == "delay" and res.outcome.tau == 60
    nxt = continuous_step(cfg, res.outcome.tau)
    assert nxt.continuous.get("T").value == 60


def test_guard_enabling_delay_is_exact():
    agent = parse_agent("ask~(true) + ask(T = 60) -> stop")
    cfg = Configuration(agent, TRUE, timer_store(0))
    res = compute_delay(cfg, EMPTY_PROGRAM, Fraction(10**6))
    assert res.kind == "delay"
    assert res.outcome.tau == 60 and res.outcome.cause is DelayCause.GUARD_ENABLES
    nxt = continuous_step(cfg, res.outcome.tau)
    # after the delay the guard is entailed in the new snapshot
    assert len(discrete_successors(nxt, EMPTY_PROGRAM)) == 1


def test_delay_kinds():
    assert compute_delay(Configuration(STOP), EMPTY_PROGRAM, Fraction(10)).kind == "all_stop"
    suspended = Configuration(parse_agent("ask(X = a) -> stop"))
    assert compute_delay(suspended, EMPTY_PROGRAM, Fraction(10)).kind == "suspended"
    # a watched continuous guard with no invariant to drive time is a timelock
    locked = Configuration(parse_agent("ask(T = 5) -> stop"), TRUE, timer_store(0))
    assert compute_delay(locked, EMPTY_PROGRAM, Fraction(10)).kind == "timelock"
    expired = Configuration(parse_agent("ask~(T =< 60)"), TRUE, timer_store(100))
    assert compute_delay(expired, EMPTY_PROGRAM, Fraction(10)).kind == "timelock"


def test_time_cannot_pass_while_a_discrete_step_is_enabled():
    cfg = cfg_of("tell(X = a) || ask~(true)")
    assert len(succs(cfg)) == 1  # R4: the tell must fire first


def test_is_all_stop():
    assert is_all_stop(STOP)
    assert is_all_stop(Parallel(STOP, Hide(("X",), STOP)))
    assert not is_all_stop(parse_agent("ask(X = a) -> stop"))
