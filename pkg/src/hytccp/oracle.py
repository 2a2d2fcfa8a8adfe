"""Naive reference implementation of the transition rules, for testing only.

Successors are computed by direct structural recursion threading whole
configurations, with no increment bookkeeping and no optimization.  The
simulator's engine must agree with this module on every small program.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Dict, List, Optional, Set, Tuple

from .constraints import Constraint, TRUE, conj, hide_all
from .flows import ContinuousStore, UNBOUNDED, atoms_truth_interval, apply_change, evolve
from .semantics import (
    Configuration,
    compute_delay,
    eval_change_value,
    eval_flow,
    alpha_convert,
    guard_holds,
    hide_aliases,
    hide_effective,
)
from .constraints import split_guard, entails, eval_cont_atoms
from .syntax import rename_constraint
from .syntax import (
    Agent,
    AskBranch,
    Call,
    Change,
    Choice,
    Hide,
    KEEP,
    Now,
    Parallel,
    Program,
    STOP,
    Stop,
    Tell,
    substitute,
)


class OracleSizeError(Exception):
    """Configuration exceeds the size cap the oracle is meant for."""


def _agent_size(agent: Agent) -> int:
    if isinstance(agent, (Stop, Tell, Call, Change)):
        return 1
    if isinstance(agent, Parallel):
        return 1 + _agent_size(agent.left) + _agent_size(agent.right)
    if isinstance(agent, Hide):
        return 1 + _agent_size(agent.body)
    if isinstance(agent, Choice):
        return 1 + sum(_agent_size(b.body) for b in agent.ask_branches)
    if isinstance(agent, Now):
        return 1 + _agent_size(agent.then) + _agent_size(agent.orelse)
    raise TypeError(f"not an agent: {agent!r}")


def _step(
    agent: Agent,
    store: Constraint,
    cont: ContinuousStore,
    snapshot: Dict[str, object],
    program: Program,
    locals_: frozenset,
) -> List[Tuple[Agent, Constraint, ContinuousStore]]:
    """All single discrete transitions of one agent in the given stores."""
    if isinstance(agent, Stop):
        return []
    if isinstance(agent, Tell):
        return [(STOP, conj(store, agent.constraint), cont)]
    if isinstance(agent, Change):
        value = eval_change_value(agent.value, store)
        flow = agent.flow if agent.flow is KEEP else eval_flow(agent.flow, store)
        return [(STOP, store, apply_change(cont, agent.var, value, flow))]
    if isinstance(agent, Choice):
        results = []
        for branch in agent.ask_branches:
            if guard_holds(branch.guard, store, snapshot, locals_):
                results.append((branch.body, store, cont))
        return results
    if isinstance(agent, Now):
        if guard_holds(agent.guard, store, snapshot, locals_):
            inner = _step(agent.then, store, cont, snapshot, program, locals_)
            return inner if inner else [(agent.then, store, cont)]
        inner = _step(agent.orelse, store, cont, snapshot, program, locals_)
        return inner if inner else [(agent.orelse, store, cont)]
    if isinstance(agent, Parallel):
        lefts = _step(agent.left, store, cont, snapshot, program, locals_)
        results = []
        if lefts:
            for la, ld, lc in lefts:
                rights = _step(agent.right, store, lc, snapshot, program, locals_)
                if rights:
                    for ra, rd, rc in rights:
                        results.append((Parallel(la, ra), conj(ld, rd), rc))
                else:
                    results.append((Parallel(la, agent.right), ld, lc))
            return results
        rights = _step(agent.right, store, cont, snapshot, program, locals_)
        return [(Parallel(agent.left, ra), rd, rc) for ra, rd, rc in rights]
    if isinstance(agent, Hide):
        agent = alpha_convert(agent, store, snapshot)
        alias = hide_aliases(agent)
        effective = conj(agent.local_store, store)
        inner = _step(agent.body, effective, cont, snapshot, program, locals_ | set(agent.vars))
        out_map = dict(zip(agent.vars, alias))
        results = []
        for ia, ilocal, icont in inner:
            results.append(
                (Hide(agent.vars, ia, ilocal, alias), conj(store, rename_constraint(ilocal, out_map)), icont)
            )
        return results
    if isinstance(agent, Call):
        results = []
        for decl in program.lookup(agent.name, len(agent.args)):
            body = substitute(decl.body, dict(zip(decl.params, agent.args)))
            results.append((body, store, cont))
        return results
    raise TypeError(f"not an agent: {agent!r}")


def oracle_successors(cfg: Configuration, program: Program, size_cap: int = 200) -> List[Configuration]:
    """All one-step discrete successors, computed naively from the rules."""
    if _agent_size(cfg.agent) > size_cap:
        raise OracleSizeError(f"agent size exceeds the oracle cap ({size_cap})")
    snapshot = cfg.continuous.snapshot()
    steps = _step(cfg.agent, cfg.discrete, cfg.continuous, snapshot, program, frozenset())
    return [Configuration(a, d, c, cfg.clock) for a, d, c in steps]


def _can_advance(agent: Agent, store: Constraint, cont: ContinuousStore, tau, locals_: frozenset) -> bool:
    """Whether one component admits a continuous transition of duration tau."""
    snapshot = cont.snapshot()
    if isinstance(agent, Stop):
        return True  # structural idling
    if isinstance(agent, Parallel):
        return _can_advance(agent.left, store, cont, tau, locals_) and _can_advance(
            agent.right, store, cont, tau, locals_
        )
    if isinstance(agent, Hide):
        effective = hide_effective(agent, store)
        return _can_advance(agent.body, effective, cont, tau, locals_ | set(agent.vars))
    if isinstance(agent, Choice):
        if not agent.cont_branches:
            return True  # suspended pure-ask choice idles
        for inv in agent.cont_branches:
            disc, cmp_atoms = split_guard(inv, snapshot.keys())
            if not entails(store, disc, locals_):
                continue
            iv = atoms_truth_interval(tuple(cmp_atoms), cont)
            if iv.empty or iv.start > 0 or (iv.start == 0 and iv.start_open):
                continue
            if iv.end is UNBOUNDED or iv.end >= tau:
                return True
        return False
    return False  # now/call/tell/change always have a discrete step: time is blocked


def oracle_continuous(cfg: Configuration, program: Program, tau) -> Optional[Configuration]:
    """The continuous transition of duration tau, if derivable."""
    if tau <= 0:
        return None
    if _can_advance(cfg.agent, cfg.discrete, cfg.continuous, tau, frozenset()):
        return Configuration(cfg.agent, cfg.discrete, evolve(cfg.continuous, tau), cfg.clock + tau)
    return None


def oracle_reachable(
    cfg0: Configuration,
    program: Program,
    depth: int,
    taus_for=None,
    size_cap: int = 200,
) -> Set[Tuple]:
    """Reachable canonical states up to ``depth`` steps, discrete before continuous.

    ``taus_for`` maps a configuration to the candidate continuous durations;
    by default the engine's earliest-event delay supplies the witness.
    """
    from .simulator import canonical_key

    if taus_for is None:

        def taus_for(cfg):
            result = compute_delay(cfg, program, Fraction(10**6))
            return [result.outcome.tau] if result.kind == "delay" else []

    seen = {canonical_key(cfg0)}
    frontier = [cfg0]
    for _ in range(depth):
        nxt = []
        for cfg in frontier:
            succs = oracle_successors(cfg, program, size_cap)
            if not succs:
                for tau in taus_for(cfg):
                    adv = oracle_continuous(cfg, program, tau)
                    if adv is not None:
                        succs.append(adv)
            for succ in succs:
                key = canonical_key(succ)
                if key not in seen:
                    seen.add(key)
                    nxt.append(succ)
        frontier = nxt
        if not frontier:
            break
    return seen
