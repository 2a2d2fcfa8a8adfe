"""Abstract syntax for Hy-tccp agents, declarations and programs.

The agent grammar covers stop, tell, parallel composition, hiding, guarded
choice (ask branches plus ask~ invariants), now/then/else, process calls and
the continuous-variable reset agent ``change``.  ASTs are immutable.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Tuple, Union

from .constraints import (
    Constraint,
    TRUE,
    Term,
    TermEq,
    LinCmp,
    Var,
    Cons,
    Num,
    format_rational,
    fresh_var,
    term_vars,
)


class Keep:
    """Marker for the ``_`` argument of change: leave that component untouched."""

    _instance: Optional["Keep"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "KEEP"


KEEP = Keep()


@dataclass(frozen=True)
class Flow:
    """Affine dynamics dx/dt = a + b*x."""

    a: Fraction
    b: Fraction

    def __str__(self) -> str:
        return f"{format_rational(self.a)}+{format_rational(self.b)}*x"


@dataclass(frozen=True)
class LinExpr:
    """Linear expression over discrete variables plus the flowing variable itself.

    ``terms`` are (coefficient, variable-or-None) pairs summed together; the
    entry keyed on the flowing variable contributes the ODE's linear part.
    """

    terms: Tuple[Tuple[Fraction, Optional[str]], ...]

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for i, (coef, var) in enumerate(self.terms):
            sign = "-" if coef < 0 else "+"
            mag = abs(coef)
            if var is None:
                body = format_rational(mag)
            elif mag == 1:
                body = var
            else:
                body = f"{format_rational(mag)}*{var}"
            parts.append(body if i == 0 and sign == "+" else f"{sign} {body}" if i else f"-{body}")
        return " ".join(parts)

    def variables(self) -> set:
        return {v for _, v in self.terms if v is not None}

    def rename(self, mapping: dict) -> "LinExpr":
        return LinExpr(tuple((c, mapping.get(v, v) if v is not None else None) for c, v in self.terms))


# --- agents


@dataclass(frozen=True)
class Stop:
    pass


@dataclass(frozen=True)
class Tell:
    constraint: Constraint


@dataclass(frozen=True)
class Parallel:
    left: "Agent"
    right: "Agent"


@dataclass(frozen=True)
class Hide:
    """Scope agent with its private store.

    ``alias`` holds one stable generated name per bound variable, assigned at
    the scope's first step; it stands for the bound name in everything the
    scope publishes.  Keeping it on the node makes publications of the same
    local fact produce identical atoms on every step.
    """

    vars: Tuple[str, ...]
    body: "Agent"
    local_store: Constraint = TRUE
    alias: Optional[Tuple[str, ...]] = None


@dataclass(frozen=True)
class AskBranch:
    guard: Constraint
    body: "Agent"


@dataclass(frozen=True)
class Choice:
    ask_branches: Tuple[AskBranch, ...]
    cont_branches: Tuple[Constraint, ...] = ()  # ask~ invariants


@dataclass(frozen=True)
class Now:
    guard: Constraint
    then: "Agent"
    orelse: "Agent"


@dataclass(frozen=True)
class Call:
    name: str
    args: Tuple[str, ...]


@dataclass(frozen=True)
class Change:
    var: str
    value: Union[Fraction, str, Keep]  # rational, discrete variable, or KEEP
    flow: Union["FlowSpec", Keep]


@dataclass(frozen=True)
class FlowSpec:
    """Unevaluated flow of a change agent: dx/dt = expr, expr linear."""

    var: str
    expr: LinExpr


Agent = Union[Stop, Tell, Parallel, Hide, Choice, Now, Call, Change]

STOP = Stop()


@dataclass(frozen=True)
class Declaration:
    name: str
    params: Tuple[str, ...]
    body: Agent


@dataclass(frozen=True)
class Program:
    constants: dict
    declarations: Tuple[Declaration, ...]
    initial: Agent
    source: str = ""

    def lookup(self, name: str, arity: int) -> Tuple[Declaration, ...]:
        return tuple(d for d in self.declarations if d.name == name and len(d.params) == arity)


# --- free variables


def free_vars(agent: Agent) -> set:
    if isinstance(agent, Stop):
        return set()
    if isinstance(agent, Tell):
        return agent.constraint.variables()
    if isinstance(agent, Parallel):
        return free_vars(agent.left) | free_vars(agent.right)
    if isinstance(agent, Hide):
        return (free_vars(agent.body) | agent.local_store.variables()) - set(agent.vars)
    if isinstance(agent, Choice):
        out: set = set()
        for br in agent.ask_branches:
            out |= br.guard.variables() | free_vars(br.body)
        for inv in agent.cont_branches:
            out |= inv.variables()
        return out
    if isinstance(agent, Now):
        return agent.guard.variables() | free_vars(agent.then) | free_vars(agent.orelse)
    if isinstance(agent, Call):
        return set(agent.args)
    if isinstance(agent, Change):
        out = {agent.var}
        if isinstance(agent.value, str):
            out.add(agent.value)
        if isinstance(agent.flow, FlowSpec):
            out |= agent.flow.expr.variables()
        return out
    raise TypeError(f"not an agent: {agent!r}")


# --- capture-avoiding substitution (variable-for-variable)


def _rename_term(t: Term, mapping: dict) -> Term:
    if isinstance(t, Var):
        return Var(mapping.get(t.name, t.name))
    if isinstance(t, Cons):
        return Cons(_rename_term(t.head, mapping), _rename_term(t.tail, mapping))
    return t


def rename_constraint(c: Constraint, mapping: dict) -> Constraint:
    if not c.consistent or not mapping:
        return c
    atoms = []
    for a in c.atoms:
        if isinstance(a, TermEq):
            atoms.append(TermEq(mapping.get(a.var, a.var), _rename_term(a.term, mapping)))
        else:
            atoms.append(LinCmp(mapping.get(a.var, a.var), a.op, a.bound))
    from .constraints import solve

    return solve(atoms)


def substitute(agent: Agent, mapping: dict) -> Agent:
    """Rename free variables of ``agent`` per ``mapping``, avoiding capture."""
    mapping = {k: v for k, v in mapping.items() if k != v}
    if not mapping:
        return agent
    if isinstance(agent, Stop):
        return agent
    if isinstance(agent, Tell):
        return Tell(rename_constraint(agent.constraint, mapping))
    if isinstance(agent, Parallel):
        return Parallel(substitute(agent.left, mapping), substitute(agent.right, mapping))
    if isinstance(agent, Hide):
        inner = {k: v for k, v in mapping.items() if k not in agent.vars}
        taken = set(inner.values()) | set(inner)
        bound = list(agent.vars)
        body = agent.body
        local = agent.local_store
        renames = {}
        for i, x in enumerate(bound):
            if x in taken:
                renames[x] = fresh_var(x)
                bound[i] = renames[x]
        if renames:
            body = substitute(body, renames)
            local = rename_constraint(local, renames)
        return Hide(tuple(bound), substitute(body, inner), rename_constraint(local, inner), agent.alias)
    if isinstance(agent, Choice):
        return Choice(
            tuple(AskBranch(rename_constraint(b.guard, mapping), substitute(b.body, mapping)) for b in agent.ask_branches),
            tuple(rename_constraint(inv, mapping) for inv in agent.cont_branches),
        )
    if isinstance(agent, Now):
        return Now(
            rename_constraint(agent.guard, mapping),
            substitute(agent.then, mapping),
            substitute(agent.orelse, mapping),
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


# --- pretty printer (inverse of the parser on parsed ASTs)


def _pp_constraint(c: Constraint) -> str:
    if not c.consistent:
        return "false"
    if not c.atoms:
        return "true"
    return " /\\ ".join(sorted(_pp_atom(a) for a in c.atoms))


def _pp_atom(a) -> str:
    if isinstance(a, TermEq):
        return f"{a.var} = {a.term}"
    op = {"<=": "=<", "!=": "!=", "<": "<", ">": ">", ">=": ">=", "=": "="}[a.op]
    return f"{a.var} {op} {format_rational(a.bound)}"


def _pp_change(agent: Change) -> str:
    if agent.value is KEEP:
        val = "_"
    elif isinstance(agent.value, str):
        val = agent.value
    else:
        val = format_rational(agent.value)
    if agent.flow is KEEP:
        flow = "_"
    else:
        flow = f"der({agent.flow.var}) = {agent.flow.expr}"
    return f"change({agent.var}, {val}, {flow})"


def pretty(agent: Agent) -> str:
    if isinstance(agent, Stop):
        return "stop"
    if isinstance(agent, Tell):
        return f"tell({_pp_constraint(agent.constraint)})"
    if isinstance(agent, Parallel):
        # '||' parses left-associatively: a right-nested parallel needs parens
        right = agent.right
        right_s = f"({pretty(right)})" if isinstance(right, Parallel) else _pp_par_operand(right)
        return f"{_pp_par_operand(agent.left)} || {right_s}"
    if isinstance(agent, Hide):
        return f"exists {', '.join(agent.vars)} ({pretty(agent.body)})"
    if isinstance(agent, Choice):
        parts = [f"ask({_pp_constraint(b.guard)}) -> {_pp_branch_body(b.body)}" for b in agent.ask_branches]
        parts += [f"ask~({_pp_constraint(inv)})" for inv in agent.cont_branches]
        return " + ".join(parts)
    if isinstance(agent, Now):
        return f"now {_pp_constraint(agent.guard)} then {_pp_branch_body(agent.then)} else {_pp_branch_body(agent.orelse)}"
    if isinstance(agent, Call):
        if agent.args:
            return f"{agent.name}({', '.join(agent.args)})"
        return agent.name
    if isinstance(agent, Change):
        return _pp_change(agent)
    raise TypeError(f"not an agent: {agent!r}")


def _pp_par_operand(agent: Agent) -> str:
    if isinstance(agent, (Choice, Now)):
        return f"({pretty(agent)})"
    return pretty(agent)


def _pp_branch_body(agent: Agent) -> str:
    if isinstance(agent, (Parallel, Choice, Now)):
        return f"({pretty(agent)})"
    return pretty(agent)


# --- builtins


def builtin_random(lo: Fraction, hi: Fraction, rng: random.Random) -> Fraction:
    """Uniform integer draw from [lo, hi] using the program-wide seeded generator.

    Quantized to integers (``random.Random.randint`` on the integer points of
    the interval) so traces are reproducible and discrete stores stay exact.
    """
    if lo > hi:
        raise ValueError(f"random bounds out of order: {lo} > {hi}")
    import math

    low = math.ceil(lo)
    high = math.floor(hi)
    if low > high:
        raise ValueError(f"no integer in random range [{lo}, {hi}]")
    return Fraction(rng.randint(low, high))
