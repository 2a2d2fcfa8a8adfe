"""Transition engine over configurations <agent, discrete store, continuous store>.

Discrete steps are instantaneous and implement tell, choice, now, parallel
(maximal parallelism), hiding with an explicit local store, process call and
the continuous reset agent.  Continuous steps advance every continuous
variable by one shared duration and leave the agent and the discrete store
untouched.  Time may pass only when no discrete step is enabled anywhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .constraints import (
    Constraint,
    TRUE,
    Num,
    Var,
    Cons,
    RandomTerm,
    Term,
    TermEq,
    LinCmp,
    conj,
    entails,
    eval_cont_atoms,
    hide_all,
    solve,
    split_guard,
)
from .flows import (
    ContinuousStore,
    DelayCause,
    DelayOutcome,
    EMPTY_STORE,
    GuardWatch,
    UninitializedContinuousVariableError,
    apply_change,
    evolve,
    max_delay,
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
    STOP,
    Stop,
    Tell,
    free_vars,
    rename_constraint,
    substitute,
)
from .constraints import fresh_var

DrawFn = Callable[[Fraction, Fraction], Fraction]


def no_draw(lo: Fraction, hi: Fraction) -> Fraction:
    raise RuntimeError("random() reached without a draw function (no seeded generator)")


class EvaluationError(Exception):
    """A change argument or flow expression could not be evaluated to a number."""


@dataclass(frozen=True)
class Configuration:
    agent: Agent
    discrete: Constraint = TRUE
    continuous: ContinuousStore = EMPTY_STORE
    clock: Fraction = Fraction(0)


@dataclass(frozen=True)
class ChoiceRecord:
    site: Tuple[str, ...]  # path into the agent tree
    picked: int
    alternatives: int


@dataclass(frozen=True)
class Outcome:
    """One possible discrete step of a sub-agent, as increments."""

    agent: Agent
    told: Constraint
    changes: Tuple[Tuple[str, object, object], ...]  # (var, value|KEEP, Flow|KEEP)
    choices: Tuple[ChoiceRecord, ...] = ()


# ---------------------------------------------------------------------------
# evaluation of change arguments


def _lookup_number(name: str, store: Constraint) -> Fraction:
    bindings = store.bindings()
    term: Term = Var(name)
    seen = set()
    while isinstance(term, Var) and term.name in bindings and term.name not in seen:
        seen.add(term.name)
        term = bindings[term.name]
    if isinstance(term, Num):
        return term.value
    raise EvaluationError(f"variable {name} is not bound to a number")


def eval_flow(spec: FlowSpec, store: Constraint) -> Flow:
    a = Fraction(0)
    b = Fraction(0)
    for coef, var in spec.expr.terms:
        if var is None:
            a += coef
        elif var == spec.var:
            b += coef
        else:
            a += coef * _lookup_number(var, store)
    return Flow(a, b)


def eval_change_value(value, store: Constraint):
    if value is KEEP:
        return KEEP
    if isinstance(value, str):
        return _lookup_number(value, store)
    return value


def resolve_random_terms(c: Constraint, draw: DrawFn) -> Constraint:
    """Replace random(lo,hi) placeholders in a told constraint by drawn values."""

    def has_random(t: Term) -> bool:
        if isinstance(t, RandomTerm):
            return True
        if isinstance(t, Cons):
            return has_random(t.head) or has_random(t.tail)
        return False

    if not any(isinstance(a, TermEq) and has_random(a.term) for a in c.atoms):
        return c

    def repl(t: Term) -> Term:
        if isinstance(t, RandomTerm):
            return Num(draw(t.lo, t.hi))
        if isinstance(t, Cons):
            return Cons(repl(t.head), repl(t.tail))
        return t

    atoms = [TermEq(a.var, repl(a.term)) if isinstance(a, TermEq) else a for a in c.atoms]
    return solve(atoms)


# ---------------------------------------------------------------------------
# the discrete step relation


def alpha_convert(agent: Hide, store: Constraint, snapshot) -> Hide:
    """Rename bound variables that also occur in the outer store.

    Renaming the binder (instead of the outer occurrences) resolves the clash
    once and for all: successors carry the fresh name.  Bound names that are
    continuous variables are global by convention and never renamed.
    """
    outer = store.variables()
    clash = {x: fresh_var(x) for x in agent.vars if x in outer and x not in snapshot}
    if not clash:
        return agent
    return Hide(
        tuple(clash.get(x, x) for x in agent.vars),
        substitute(agent.body, clash),
        rename_constraint(agent.local_store, clash),
        agent.alias,
    )


def hide_aliases(agent: Hide) -> Tuple[str, ...]:
    """The scope's stable publication names, generated on first use."""
    return agent.alias or tuple(fresh_var(x) for x in agent.vars)


def hide_effective(agent: Hide, store: Constraint) -> Constraint:
    """The store the scope body runs in (read-only contexts).

    Stepped scopes are alpha-converted, so bound names normally cannot occur
    in the outer store; if one does (scope not stepped yet), the outer
    occurrences are renamed away transiently.
    """
    outer = store.variables()
    clash = [x for x in agent.vars if x in outer]
    if clash:
        store = rename_constraint(store, {x: fresh_var(x) for x in clash})
    return conj(agent.local_store, store)


def guard_holds(guard: Constraint, store: Constraint, snapshot, locals_: frozenset) -> bool:
    disc, cont = split_guard(guard, snapshot.keys())
    if not entails(store, disc, locals_):
        return False
    return eval_cont_atoms(Constraint(frozenset(cont)), snapshot)


def step_agent(
    agent: Agent,
    store: Constraint,
    snapshot: Dict[str, object],
    program: Program,
    draw: DrawFn = no_draw,
    locals_: frozenset = frozenset(),
    path: Tuple[str, ...] = (),
) -> List[Outcome]:
    if isinstance(agent, Stop):
        return []

    if isinstance(agent, Tell):
        told = resolve_random_terms(agent.constraint, draw)
        return [Outcome(STOP, told, ())]

    if isinstance(agent, Change):
        value = eval_change_value(agent.value, store)
        flow = agent.flow if agent.flow is KEEP else eval_flow(agent.flow, store)
        return [Outcome(STOP, TRUE, ((agent.var, value, flow),))]

    if isinstance(agent, Choice):
        outs: List[Outcome] = []
        total = len(agent.ask_branches)
        for i, branch in enumerate(agent.ask_branches):
            if guard_holds(branch.guard, store, snapshot, locals_):
                outs.append(Outcome(branch.body, TRUE, (), (ChoiceRecord(path, i, total),)))
        return outs

    if isinstance(agent, Now):
        cond = guard_holds(agent.guard, store, snapshot, locals_)
        chosen = agent.then if cond else agent.orelse
        side = "then" if cond else "else"
        inner = step_agent(chosen, store, snapshot, program, draw, locals_, path + (side,))
        if inner:
            return inner
        return [Outcome(chosen, TRUE, ())]

    if isinstance(agent, Parallel):
        left = step_agent(agent.left, store, snapshot, program, draw, locals_, path + ("L",))
        right = step_agent(agent.right, store, snapshot, program, draw, locals_, path + ("R",))
        if left and right:
            return [
                Outcome(
                    Parallel(a.agent, b.agent),
                    conj(a.told, b.told),
                    a.changes + b.changes,
                    a.choices + b.choices,
                )
                for a in left
                for b in right
            ]
        if left:
            return [Outcome(Parallel(o.agent, agent.right), o.told, o.changes, o.choices) for o in left]
        if right:
            return [Outcome(Parallel(agent.left, o.agent), o.told, o.changes, o.choices) for o in right]
        return []

    if isinstance(agent, Hide):
        agent = alpha_convert(agent, store, snapshot)
        alias = hide_aliases(agent)
        effective = conj(agent.local_store, store)
        inner = step_agent(
            agent.body,
            effective,
            snapshot,
            program,
            draw,
            locals_ | set(agent.vars),
            path + ("hide",),
        )
        out_map = dict(zip(agent.vars, alias))
        outs = []
        for o in inner:
            # the local store keeps only what the scope itself told: outer
            # knowledge is re-joined on every step, and only the told delta
            # is published, under the scope's stable alias names
            new_local = conj(agent.local_store, o.told)
            published = rename_constraint(o.told, out_map)
            outs.append(
                Outcome(Hide(agent.vars, o.agent, new_local, alias), published, o.changes, o.choices)
            )
        return outs

    if isinstance(agent, Call):
        decls = program.lookup(agent.name, len(agent.args))
        outs = []
        for i, decl in enumerate(decls):
            body = substitute(decl.body, dict(zip(decl.params, agent.args)))
            record = (ChoiceRecord(path + ("call:" + agent.name,), i, len(decls)),) if len(decls) > 1 else ()
            outs.append(Outcome(body, TRUE, (), record))
        return outs

    raise TypeError(f"not an agent: {agent!r}")


def discrete_successors(
    cfg: Configuration, program: Program, draw: DrawFn = no_draw
) -> List[Tuple[Configuration, Outcome]]:
    """All configurations reachable in one discrete step, with their increments."""
    snapshot = cfg.continuous.snapshot()
    outcomes = step_agent(cfg.agent, cfg.discrete, snapshot, program, draw)
    result = []
    for o in outcomes:
        store = conj(cfg.discrete, o.told)
        cont = cfg.continuous
        for x, v, f in o.changes:
            cont = apply_change(cont, x, v, f)
        result.append((Configuration(o.agent, store, cont, cfg.clock), o))
    return result


def continuous_step(cfg: Configuration, tau) -> Configuration:
    """Advance time: values evolve, agent / discrete store / flows unchanged."""
    if tau <= 0:
        raise ValueError("continuous step duration must be positive")
    return Configuration(cfg.agent, cfg.discrete, evolve(cfg.continuous, tau), cfg.clock + tau)


# ---------------------------------------------------------------------------
# waiting-state analysis (what to watch while time passes)


@dataclass
class WaitState:
    all_stop: bool = True
    invariant_groups: List[List[List[LinCmp]]] = field(default_factory=list)  # per ask~ component
    guard_watches: List[GuardWatch] = field(default_factory=list)
    blocked: bool = False  # a component that can neither step nor let time pass


def analyze_waiting(
    agent: Agent,
    store: Constraint,
    snapshot: Dict[str, object],
    locals_: frozenset = frozenset(),
    state: Optional[WaitState] = None,
    branch_counter: Optional[List[int]] = None,
) -> WaitState:
    """Collect ask~ invariants and watchable continuous guards of a quiescent agent.

    Must only be called when ``agent`` has no discrete successor; active
    positions are then stop, suspended choices, and hide bodies.
    """
    if state is None:
        state = WaitState()
        branch_counter = [0]
    if isinstance(agent, Stop):
        return state
    if isinstance(agent, Parallel):
        analyze_waiting(agent.left, store, snapshot, locals_, state, branch_counter)
        analyze_waiting(agent.right, store, snapshot, locals_, state, branch_counter)
        return state
    if isinstance(agent, Hide):
        effective = hide_effective(agent, store)
        analyze_waiting(agent.body, effective, snapshot, locals_ | set(agent.vars), state, branch_counter)
        return state
    if isinstance(agent, Choice):
        state.all_stop = False
        for branch in agent.ask_branches:
            disc, cont = split_guard(branch.guard, snapshot.keys())
            if not cont:
                continue  # purely discrete guard: time passage cannot enable it
            if not entails(store, disc, locals_):
                continue
            if eval_cont_atoms(Constraint(frozenset(cont)), snapshot):
                continue  # already true now (guard suspended on its discrete part)
            branch_counter[0] += 1
            state.guard_watches.append(GuardWatch(tuple(cont), branch_counter[0]))
        if agent.cont_branches:
            group = []
            for inv in agent.cont_branches:
                disc, cont = split_guard(inv, snapshot.keys())
                if not entails(store, disc, locals_):
                    continue  # discrete part false: this invariant cannot hold
                group.append(list(cont))
            state.invariant_groups.append(group)
        return state
    # a suspended now/call/tell cannot occur here; anything else blocks time
    state.all_stop = False
    state.blocked = True
    return state


class DelayResult:
    __slots__ = ("outcome", "kind")

    def __init__(self, outcome: Optional[DelayOutcome], kind: str):
        self.outcome = outcome
        self.kind = kind  # "delay" | "all_stop" | "suspended" | "timelock"


def compute_delay(cfg: Configuration, program: Program, horizon) -> DelayResult:
    """Global delay decision for a discretely quiescent configuration."""
    snapshot = cfg.continuous.snapshot()
    state = analyze_waiting(cfg.agent, cfg.discrete, snapshot)
    if state.all_stop:
        return DelayResult(None, "all_stop")
    if state.blocked:
        return DelayResult(None, "timelock")
    if not state.invariant_groups:
        # nothing drives time; watched guards (if any) can never fire
        if state.guard_watches:
            return DelayResult(None, "timelock")
        return DelayResult(None, "suspended")
    best: Optional[DelayOutcome] = None
    for group in state.invariant_groups:
        outcome = max_delay(group, state.guard_watches, cfg.continuous, horizon)
        if outcome.cause is DelayCause.TIMELOCK:
            return DelayResult(None, "timelock")
        if best is None or outcome.tau < best.tau:
            best = outcome
        elif outcome.tau == best.tau:
            priority = {DelayCause.GUARD_ENABLES: 0, DelayCause.INVARIANT_EXPIRES: 1, DelayCause.HORIZON: 2}
            if priority[outcome.cause] < priority[best.cause]:
                best = outcome
    return DelayResult(best, "delay")


def is_all_stop(agent: Agent) -> bool:
    if isinstance(agent, Stop):
        return True
    if isinstance(agent, Parallel):
        return is_all_stop(agent.left) and is_all_stop(agent.right)
    if isinstance(agent, Hide):
        return is_all_stop(agent.body)
    return False
