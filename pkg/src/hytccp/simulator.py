"""Scheduling loop, trace recording and bounded exhaustive exploration.

One run alternates: discrete steps to quiescence (policy-resolved, bounded by
the divergence budget per time point), then an earliest-event delay, then one
continuous step.  Traces are fully reproducible from the options (including
the seed).
"""
from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

from .constraints import (
    Constraint,
    TermEq,
    LinCmp,
    Cons,
    Var,
    format_rational,
    is_fresh_name,
    reset_fresh_counter,
)
from .flows import ContinuousStore, DelayCause, Entry
from .semantics import (
    ChoiceRecord,
    Configuration,
    DelayResult,
    Outcome,
    compute_delay,
    continuous_step,
    discrete_successors,
)
from .syntax import (
    Agent,
    AskBranch,
    Call,
    Change,
    Choice,
    Flow,
    FlowSpec,
    Hide,
    KEEP,
    Now,
    Parallel,
    Program,
    Stop,
    Tell,
    builtin_random,
    pretty,
)

DEFAULT_DIVERGENCE_BUDGET = 10000


@dataclass(frozen=True)
class RunOptions:
    max_time: Fraction = Fraction(3600)
    max_discrete_steps: int = 1_000_000
    horizon: Optional[Fraction] = None  # max single continuous step; None = uncapped
    policy: str = "first"  # "first" | "random"
    seed: int = 0
    divergence_budget: int = DEFAULT_DIVERGENCE_BUDGET

    def to_json(self) -> dict:
        return {
            "max_time": value_json(self.max_time),
            "max_discrete_steps": self.max_discrete_steps,
            "horizon": value_json(self.horizon) if self.horizon is not None else None,
            "policy": self.policy,
            "seed": self.seed,
            "divergence_budget": self.divergence_budget,
        }


def value_json(v) -> Union[str, float]:
    if isinstance(v, Fraction):
        return format_rational(v)
    return float(v)


def flow_json(f: Flow) -> str:
    return f"{format_rational(f.a)}+{format_rational(f.b)}*x"


def vars_json(store: ContinuousStore) -> dict:
    return {name: {"v": value_json(e.value), "flow": flow_json(e.flow)} for name, e in store.entries}


@dataclass(frozen=True)
class DiscreteEvent:
    clock: Fraction
    told: Tuple[str, ...]
    changes: Tuple[Tuple[str, str, str], ...]
    choices: Tuple[ChoiceRecord, ...]

    def to_json(self) -> dict:
        return {
            "t": value_json(self.clock),
            "kind": "discrete",
            "tau": None,
            "cause": None,
            "told": list(self.told),
            "changes": [list(c) for c in self.changes],
            "choices": [
                {"site": "/".join(c.site), "picked": c.picked, "alternatives": c.alternatives}
                for c in self.choices
            ],
        }


@dataclass(frozen=True)
class ContinuousEvent:
    clock_start: Fraction
    tau: Fraction
    cause: str
    before: dict
    after: dict

    def to_json(self) -> dict:
        return {
            "t": value_json(self.clock_start),
            "kind": "continuous",
            "tau": value_json(self.tau),
            "cause": self.cause,
            "told": [],
            "vars": self.after,
            "vars_before": self.before,
        }


@dataclass(frozen=True)
class TerminalEvent:
    kind: str  # all_stop | suspended | timelock | instant_divergence | max_time | max_steps
    clock: Fraction

    def to_json(self) -> dict:
        return {"t": value_json(self.clock), "kind": "terminal", "tau": None, "cause": self.kind, "told": []}


TraceEvent = Union[DiscreteEvent, ContinuousEvent, TerminalEvent]


@dataclass
class Trace:
    program_hash: str
    options: RunOptions
    events: List[TraceEvent] = field(default_factory=list)

    @property
    def terminal(self) -> Optional[TerminalEvent]:
        if self.events and isinstance(self.events[-1], TerminalEvent):
            return self.events[-1]
        return None

    def header_json(self) -> dict:
        return {
            "kind": "header",
            "program": self.program_hash,
            "options": self.options.to_json(),
            "seed": self.options.seed,
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header_json(), sort_keys=True)]
        lines += [json.dumps(ev.to_json(), sort_keys=True) for ev in self.events]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["t,var,value,flow_a,flow_b"]
        for ev in self.events:
            if isinstance(ev, ContinuousEvent):
                for name, info in sorted(ev.after.items()):
                    a, b = info["flow"].split("+", 1)
                    b = b[: -len("*x")]
                    t = value_json(ev.clock_start + ev.tau)
                    lines.append(f"{t},{name},{info['v']},{a},{b}")
        return "\n".join(lines) + "\n"


def program_hash(program: Program) -> str:
    return hashlib.sha256(program.source.encode("utf-8")).hexdigest()


def _describe_changes(changes) -> Tuple[Tuple[str, str, str], ...]:
    out = []
    for x, v, f in changes:
        vs = "_" if v is KEEP else value_json(v) if not isinstance(v, str) else v
        fs = "_" if f is KEEP else flow_json(f)
        out.append((x, str(vs), fs))
    return tuple(out)


def _told_strings(told: Constraint) -> Tuple[str, ...]:
    if not told.consistent:
        return ("false",)
    return tuple(sorted(str(a) for a in told.atoms))


def run(program: Program, options: RunOptions) -> Trace:
    """Execute a program to quiescence / max-time and record the full trace."""
    reset_fresh_counter()
    rng = random.Random(options.seed)
    draw = lambda lo, hi: builtin_random(lo, hi, rng)
    trace = Trace(program_hash(program), options)
    cfg = Configuration(program.initial)
    steps_total = 0
    steps_at_instant = 0

    while True:
        successors = discrete_successors(cfg, program, draw)
        if successors:
            if steps_at_instant >= options.divergence_budget:
                trace.events.append(TerminalEvent("instant_divergence", cfg.clock))
                return trace
            if steps_total >= options.max_discrete_steps:
                trace.events.append(TerminalEvent("max_steps", cfg.clock))
                return trace
            if options.policy == "random" and len(successors) > 1:
                pick = rng.randrange(len(successors))
            else:
                pick = 0
            cfg, outcome = successors[pick]
            steps_total += 1
            steps_at_instant += 1
            choices = outcome.choices
            if len(successors) > 1:
                choices = (ChoiceRecord(("scheduler",), pick, len(successors)),) + choices
            trace.events.append(
                DiscreteEvent(cfg.clock, _told_strings(outcome.told), _describe_changes(outcome.changes), choices)
            )
            continue

        # discretely quiescent
        if cfg.clock >= options.max_time:
            from .semantics import is_all_stop

            kind = "all_stop" if is_all_stop(cfg.agent) else "max_time"
            trace.events.append(TerminalEvent(kind, cfg.clock))
            return trace
        remaining = options.max_time - cfg.clock
        horizon = remaining if options.horizon is None else min(options.horizon, remaining)
        result = compute_delay(cfg, program, horizon)
        if result.kind != "delay":
            trace.events.append(TerminalEvent(result.kind, cfg.clock))
            return trace
        tau = result.outcome.tau
        cause = result.outcome.cause.value
        if tau >= remaining:
            tau = remaining
            if result.outcome.cause is DelayCause.HORIZON and options.horizon is not None and options.horizon < remaining:
                cause = "horizon"
        before = vars_json(cfg.continuous)
        nxt = continuous_step(cfg, tau)
        trace.events.append(ContinuousEvent(cfg.clock, tau, cause, before, vars_json(nxt.continuous)))
        cfg = nxt
        steps_at_instant = 0


# ---------------------------------------------------------------------------
# canonical configurations (alpha-renaming of generated variables)

_FRESH_PLACEHOLDER = re.compile(r"[A-Za-z_][A-Za-z0-9_]*#\d+")


def _mask(s: str) -> str:
    return _FRESH_PLACEHOLDER.sub("#", s)


def _collect_fresh(agent: Agent, mapping: Dict[str, str]) -> None:
    def note(name: str):
        if is_fresh_name(name) and name not in mapping:
            mapping[name] = f"c{len(mapping) + 1}"

    def note_constraint(c: Constraint):
        for a in sorted(c.atoms, key=lambda a: _mask(str(a))):
            note(a.var)
            if isinstance(a, TermEq):
                stack = [a.term]
                while stack:
                    t = stack.pop()
                    if isinstance(t, Var):
                        note(t.name)
                    elif isinstance(t, Cons):
                        stack.append(t.tail)
                        stack.append(t.head)

    def walk(node: Agent):
        if isinstance(node, Tell):
            note_constraint(node.constraint)
        elif isinstance(node, Parallel):
            walk(node.left)
            walk(node.right)
        elif isinstance(node, Hide):
            for v in node.vars:
                note(v)
            walk(node.body)
            note_constraint(node.local_store)
        elif isinstance(node, Choice):
            for br in node.ask_branches:
                note_constraint(br.guard)
                walk(br.body)
            for inv in node.cont_branches:
                note_constraint(inv)
        elif isinstance(node, Now):
            note_constraint(node.guard)
            walk(node.then)
            walk(node.orelse)
        elif isinstance(node, Call):
            for a in node.args:
                note(a)
        elif isinstance(node, Change):
            note(node.var)
            if isinstance(node.value, str):
                note(node.value)
            if isinstance(node.flow, FlowSpec):
                for v in sorted(node.flow.expr.variables()):
                    note(v)

    walk(agent)


def _rename_all(agent: Agent, mapping: Dict[str, str]) -> Agent:
    from .syntax import rename_constraint

    if isinstance(agent, Stop):
        return agent
    if isinstance(agent, Tell):
        return Tell(rename_constraint(agent.constraint, mapping))
    if isinstance(agent, Parallel):
        return Parallel(_rename_all(agent.left, mapping), _rename_all(agent.right, mapping))
    if isinstance(agent, Hide):
        return Hide(
            tuple(mapping.get(v, v) for v in agent.vars),
            _rename_all(agent.body, mapping),
            rename_constraint(agent.local_store, mapping),
        )
    if isinstance(agent, Choice):
        return Choice(
            tuple(
                AskBranch(rename_constraint(b.guard, mapping), _rename_all(b.body, mapping))
                for b in agent.ask_branches
            ),
            tuple(rename_constraint(inv, mapping) for inv in agent.cont_branches),
        )
    if isinstance(agent, Now):
        return Now(
            rename_constraint(agent.guard, mapping),
            _rename_all(agent.then, mapping),
            _rename_all(agent.orelse, mapping),
        )
    if isinstance(agent, Call):
        return Call(agent.name, tuple(mapping.get(a, a) for a in agent.args))
    if isinstance(agent, Change):
        value = agent.value
        if isinstance(value, str):
            value = mapping.get(value, value)
        flow = agent.flow
        if isinstance(flow, FlowSpec):
            flow = FlowSpec(mapping.get(flow.var, flow.var), flow.expr.rename(mapping))
        return Change(mapping.get(agent.var, agent.var), value, flow)
    raise TypeError(f"not an agent: {agent!r}")


def canonical_key(cfg: Configuration) -> Tuple:
    """Hashable key identifying configurations up to generated-variable renaming."""
    from .syntax import rename_constraint

    mapping: Dict[str, str] = {}
    _collect_fresh(cfg.agent, mapping)
    for a in sorted(cfg.discrete.atoms, key=lambda a: _mask(str(a))):
        if is_fresh_name(a.var) and a.var not in mapping:
            mapping[a.var] = f"c{len(mapping) + 1}"
        if isinstance(a, TermEq):
            stack = [a.term]
            while stack:
                t = stack.pop()
                if isinstance(t, Var) and is_fresh_name(t.name) and t.name not in mapping:
                    mapping[t.name] = f"c{len(mapping) + 1}"
                elif isinstance(t, Cons):
                    stack.append(t.tail)
                    stack.append(t.head)
    agent = _rename_all(cfg.agent, mapping)
    store = rename_constraint(cfg.discrete, mapping)
    cont = tuple((n, value_json(e.value), flow_json(e.flow)) for n, e in cfg.continuous.entries)
    return (pretty(agent), _effective_strings(agent, store), str(store), cont, value_json(cfg.clock))


def _effective_strings(agent: Agent, store: Constraint) -> Tuple[str, ...]:
    """Materialized scope stores in traversal order (pretty omits them).

    Comparing the store each scope body actually runs in, rather than the raw
    local store, makes the key independent of how much outer knowledge a
    local store happens to cache.
    """
    from .semantics import hide_effective

    out: List[str] = []

    def walk(node: Agent, outer: Constraint):
        if isinstance(node, Parallel):
            walk(node.left, outer)
            walk(node.right, outer)
        elif isinstance(node, Hide):
            effective = hide_effective(node, outer)
            out.append(_mask(str(effective)))
            walk(node.body, effective)
        elif isinstance(node, Choice):
            for br in node.ask_branches:
                walk(br.body, outer)
        elif isinstance(node, Now):
            walk(node.then, outer)
            walk(node.orelse, outer)

    walk(agent, store)
    return tuple(out)


# ---------------------------------------------------------------------------
# bounded exhaustive exploration


@dataclass
class ReachabilityReport:
    states: Set[Tuple]
    depth: int
    complete: bool
    initial: Tuple

    def to_json(self) -> dict:
        return {
            "kind": "reachability",
            "depth": self.depth,
            "complete": self.complete,
            "state_count": len(self.states),
            "states": sorted(repr(s) for s in self.states),
        }


def explore(
    program: Program,
    depth: int,
    time_samples: int = 0,
    state_cap: int = 100_000,
    initial: Optional[Configuration] = None,
    horizon: Optional[Fraction] = Fraction(10**6),
) -> ReachabilityReport:
    """Breadth-first reachable set up to ``depth`` combined steps.

    Continuous steps use the earliest-event delay plus ``time_samples`` extra
    durations sampled inside (0, tau).
    """
    reset_fresh_counter()
    cfg0 = initial if initial is not None else Configuration(program.initial)
    key0 = canonical_key(cfg0)
    seen = {key0}
    frontier = [cfg0]
    complete = True
    for _ in range(depth):
        nxt: List[Configuration] = []
        for cfg in frontier:
            for succ in _explore_successors(cfg, program, time_samples, horizon):
                key = canonical_key(succ)
                if key not in seen:
                    if len(seen) >= state_cap:
                        complete = False
                        continue
                    seen.add(key)
                    nxt.append(succ)
        frontier = nxt
        if not frontier:
            break
    return ReachabilityReport(seen, depth, complete, key0)


def _explore_successors(cfg: Configuration, program: Program, time_samples: int, horizon) -> List[Configuration]:
    succs = [c for c, _ in discrete_successors(cfg, program)]
    if succs:
        return succs
    result = compute_delay(cfg, program, horizon)
    if result.kind != "delay":
        return []
    tau = result.outcome.tau
    taus = [tau]
    for i in range(1, time_samples + 1):
        taus.append(tau * Fraction(i, time_samples + 1))
    return [continuous_step(cfg, t) for t in sorted(set(taus)) if t > 0]
