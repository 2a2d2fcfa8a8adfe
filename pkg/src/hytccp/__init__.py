"""Interpreter and simulator for Hy-tccp: timed concurrent constraint programs
with continuous variables evolving under affine flows."""

from .constraints import (
    Constraint,
    TRUE,
    FALSE,
    TermEq,
    LinCmp,
    Var,
    Atom,
    Num,
    Cons,
    NIL,
    WILDCARD,
    conj,
    entails,
    hide,
    eval_cont_atoms,
)
from .syntax import (
    Agent,
    AskBranch,
    Call,
    Change,
    Choice,
    Declaration,
    Flow,
    Hide,
    KEEP,
    Now,
    Parallel,
    Program,
    STOP,
    Stop,
    Tell,
    builtin_random,
    free_vars,
    pretty,
)
from .parser import ParseError, parse_agent, parse_constraint, parse_program
from .flows import (
    ContinuousStore,
    DelayCause,
    DelayOutcome,
    EMPTY_STORE,
    apply_change,
    crossing_time,
    evolve,
    max_delay,
    solve_flow,
)
from .semantics import Configuration, continuous_step, discrete_successors
from .simulator import RunOptions, Trace, explore, run

__version__ = "0.1.0"
