"""Bounded random program generator shared by property and acceptance tests.

Programs are built directly as ASTs with a seeded generator.  The shape is
bounded on purpose: at most 3-way parallel composition inside the body, at
most 4 branches per choice, at most 3 continuous variables.  Every continuous
variable is initialized by a change agent in the very first step; the rest of
the program is gated behind ask(Go = go) so no guard can read a continuous
variable before it exists.
"""
from __future__ import annotations

import random
from fractions import Fraction

from hytccp.constraints import (
    Atom,
    Cons,
    LinCmp,
    Num,
    TRUE,
    TermEq,
    Var,
    WILDCARD,
    solve,
)
from hytccp.syntax import (
    AskBranch,
    Change,
    Choice,
    FlowSpec,
    Hide,
    LinExpr,
    KEEP,
    Now,
    Parallel,
    Program,
    STOP,
    Tell,
)

DISCRETE_VARS = ["X", "Y", "Z", "W"]
CONT_VARS = ["Cx", "Cy", "Cz"]
ATOM_NAMES = ["a", "b", "c"]


def _term(rng: random.Random, wildcard_ok: bool):
    r = rng.random()
    if r < 0.40:
        return Atom(rng.choice(ATOM_NAMES))
    if r < 0.70:
        tail = WILDCARD if wildcard_ok and rng.random() < 0.5 else Var(rng.choice(DISCRETE_VARS))
        return Cons(Atom(rng.choice(ATOM_NAMES)), tail)
    if r < 0.85:
        return Num(Fraction(rng.randint(0, 5)))
    return Var(rng.choice(DISCRETE_VARS))


def random_constraint(rng: random.Random, cont_vars, wildcard_ok: bool):
    # distinct left-hand variables: two bindings of one variable could try to
    # unify a wildcard, which is rejected outside guard matching
    lhs = rng.sample(DISCRETE_VARS, 2)
    atoms = []
    for i in range(rng.randint(1, 2)):
        if cont_vars and rng.random() < 0.35:
            var = rng.choice(cont_vars)
            op = rng.choice(["<", "<=", ">", ">=", "="])
            bound = Fraction(rng.randint(0, 8))
            # equations on continuous variables are written as term equations,
            # matching what the parser produces for `V = 7`
            atoms.append(TermEq(var, Num(bound)) if op == "=" else LinCmp(var, op, bound))
        else:
            atoms.append(TermEq(lhs[i], _term(rng, wildcard_ok)))
    return solve(atoms)


def _flow(rng: random.Random, var: str) -> FlowSpec:
    # constant slope in [-2, 2] \ {0}: exact linear trajectories
    return FlowSpec(var, LinExpr(((Fraction(rng.choice([-2, -1, 1, 2])), None),)))


def random_agent(rng: random.Random, depth: int, cont_vars):
    if depth <= 0:
        if rng.random() < 0.5:
            return STOP
        return Tell(random_constraint(rng, [], wildcard_ok=False))
    r = rng.random()
    if r < 0.12:
        return STOP
    if r < 0.32:
        return Tell(random_constraint(rng, [], wildcard_ok=False))
    if r < 0.52:
        agent = random_agent(rng, depth - 1, cont_vars)
        for _ in range(rng.randint(1, 2)):
            agent = Parallel(agent, random_agent(rng, depth - 1, cont_vars))
        return agent
    if r < 0.74:
        branches = tuple(
            AskBranch(random_constraint(rng, cont_vars, wildcard_ok=True), random_agent(rng, depth - 1, cont_vars))
            for _ in range(rng.randint(1, 4))
        )
        invariants = ()
        if rng.random() < 0.5:
            if cont_vars and rng.random() < 0.7:
                invariants = (
                    solve([LinCmp(rng.choice(cont_vars), rng.choice(["<=", "<"]), Fraction(rng.randint(1, 10)))]),
                )
            else:
                invariants = (TRUE,)
        return Choice(branches, invariants)
    if r < 0.84:
        return Now(
            random_constraint(rng, cont_vars, wildcard_ok=True),
            random_agent(rng, depth - 1, cont_vars),
            random_agent(rng, depth - 1, cont_vars),
        )
    if r < 0.94 and cont_vars:
        var = rng.choice(cont_vars)
        value = KEEP if rng.random() < 0.5 else Fraction(rng.randint(0, 5))
        return Change(var, value, _flow(rng, var))
    return Hide((rng.choice(DISCRETE_VARS),), random_agent(rng, depth - 1, cont_vars))


def random_program(seed: int, max_depth: int = 3) -> Program:
    """One bounded random program; the same seed always yields the same AST."""
    rng = random.Random(seed)
    cont_vars = CONT_VARS[: rng.randint(0, 3)]
    body = random_agent(rng, rng.randint(1, max_depth), cont_vars)
    go = solve([TermEq("Go", Atom("go"))])
    agent = Tell(go)
    for var in cont_vars:
        agent = Parallel(agent, Change(var, Fraction(rng.randint(0, 5)), _flow(rng, var)))
    agent = Parallel(agent, Choice((AskBranch(go, body),), ()))
    return Program({}, (), agent, source=f"generated-{seed}")
