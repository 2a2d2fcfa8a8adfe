"""Cylindric constraint system over Herbrand terms and single-variable comparisons.

One concrete instantiation: term equations in solved form (covering atoms,
numbers and open-ended streams) plus comparisons of a single variable against
a rational constant.  Conjunction, entailment and hiding are the lattice
operations; inconsistency is a value (FALSE), never an exception.

Terms and atomic constraints are immutable; they cache their hash (and their
variable sets) at construction because stores grow monotonically and the same
atoms are re-examined on every step.
"""
from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Optional, Union

# ---------------------------------------------------------------------------
# terms


class Var:
    __slots__ = ("name", "_hash")

    def __init__(self, name: str):
        self.name = name
        self._hash = hash(("Var", name))

    def __eq__(self, other) -> bool:
        return isinstance(other, Var) and self.name == other.name

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Var({self.name!r})"

    def __str__(self) -> str:
        return self.name


class Atom:
    __slots__ = ("symbol", "_hash")

    def __init__(self, symbol: str):
        self.symbol = symbol
        self._hash = hash(("Atom", symbol))

    def __eq__(self, other) -> bool:
        return isinstance(other, Atom) and self.symbol == other.symbol

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Atom({self.symbol!r})"

    def __str__(self) -> str:
        return self.symbol


class Num:
    __slots__ = ("value", "_hash")

    def __init__(self, value: Fraction):
        self.value = value
        self._hash = hash(("Num", value))

    def __eq__(self, other) -> bool:
        return isinstance(other, Num) and self.value == other.value

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Num({self.value!r})"

    def __str__(self) -> str:
        return format_rational(self.value)


class Cons:
    __slots__ = ("head", "tail", "_hash")

    def __init__(self, head: "Term", tail: "Term"):
        self.head = head
        self.tail = tail
        self._hash = hash(("Cons", hash(head), hash(tail)))

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        return (
            isinstance(other, Cons)
            and self._hash == other._hash
            and self.head == other.head
            and self.tail == other.tail
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Cons({self.head!r}, {self.tail!r})"

    def __str__(self) -> str:
        items = []
        node: Term = self
        while isinstance(node, Cons):
            items.append(str(node.head))
            node = node.tail
        if node == NIL:
            return "[" + ", ".join(items) + "]"
        return "[" + ", ".join(items) + "|" + str(node) + "]"


class Wildcard:
    __slots__ = ()

    def __eq__(self, other) -> bool:
        return isinstance(other, Wildcard)

    def __hash__(self) -> int:
        return hash("Wildcard")

    def __repr__(self) -> str:
        return "WILDCARD"

    def __str__(self) -> str:
        return "_"


class RandomTerm:
    """Placeholder for a uniform integer draw; resolved when the tell executes."""

    __slots__ = ("lo", "hi", "_hash")

    def __init__(self, lo: Fraction, hi: Fraction):
        self.lo = lo
        self.hi = hi
        self._hash = hash(("RandomTerm", lo, hi))

    def __eq__(self, other) -> bool:
        return isinstance(other, RandomTerm) and self.lo == other.lo and self.hi == other.hi

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"RandomTerm({self.lo!r}, {self.hi!r})"

    def __str__(self) -> str:
        return f"random({format_rational(self.lo)}, {format_rational(self.hi)})"


Term = Union[Var, Atom, Num, Cons, Wildcard, RandomTerm]

NIL = Atom("[]")

WILDCARD = Wildcard()


def format_rational(q: Union[Fraction, float]) -> str:
    if isinstance(q, float):
        return repr(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def term_vars(t: Term) -> set:
    out: set = set()
    stack = [t]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Cons):
            stack.append(node.head)
            stack.append(node.tail)
    return out


# ---------------------------------------------------------------------------
# fresh names (used by hiding and by capture-avoiding agent substitution)

_fresh_counter = itertools.count(1)


def fresh_var(base: str = "v") -> str:
    base = base.split("#", 1)[0]
    return f"{base}#{next(_fresh_counter)}"


def is_fresh_name(name: str) -> bool:
    return "#" in name


def reset_fresh_counter() -> None:
    """Restart fresh-name numbering; call at the start of a run for stable traces."""
    global _fresh_counter
    _fresh_counter = itertools.count(1)


# ---------------------------------------------------------------------------
# atomic constraints

CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")


class TermEq:
    """Equation in solved form: a variable equals a term."""

    __slots__ = ("var", "term", "_hash", "_vars")

    def __init__(self, var: str, term: Term):
        self.var = var
        self.term = term
        self._hash = hash(("TermEq", var, hash(term)))
        self._vars: Optional[frozenset] = None

    def variables(self) -> frozenset:
        if self._vars is None:
            self._vars = frozenset(term_vars(self.term) | {self.var})
        return self._vars

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        return (
            isinstance(other, TermEq)
            and self._hash == other._hash
            and self.var == other.var
            and self.term == other.term
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"TermEq({self.var!r}, {self.term!r})"

    def __str__(self) -> str:
        return f"{self.var}={self.term}"


class LinCmp:
    """Comparison of one variable against a rational constant."""

    __slots__ = ("var", "op", "bound", "_hash")

    def __init__(self, var: str, op: str, bound: Fraction):
        self.var = var
        self.op = op
        self.bound = bound
        self._hash = hash(("LinCmp", var, op, bound))

    def variables(self) -> frozenset:
        return frozenset((self.var,))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LinCmp)
            and self.var == other.var
            and self.op == other.op
            and self.bound == other.bound
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"LinCmp({self.var!r}, {self.op!r}, {self.bound!r})"

    def __str__(self) -> str:
        op = {"<=": "=<", ">=": ">=", "!=": "!=", "=": "=", "<": "<", ">": ">"}[self.op]
        return f"{self.var}{op}{format_rational(self.bound)}"


AtomicConstraint = Union[TermEq, LinCmp]


def compare(value, op: str, bound) -> bool:
    if op == "=":
        return value == bound
    if op == "!=":
        return value != bound
    if op == "<":
        return value < bound
    if op == "<=":
        return value <= bound
    if op == ">":
        return value > bound
    if op == ">=":
        return value >= bound
    raise ValueError(f"unknown comparison operator {op!r}")


# ---------------------------------------------------------------------------
# constraints


class Constraint:
    """Finite conjunction of atomic constraints, kept in solved form.

    ``consistent=False`` marks the absorbing false element; its atom set is
    empty by convention.
    """

    __slots__ = ("atoms", "consistent", "_vars")

    def __init__(self, atoms: frozenset, consistent: bool = True):
        self.atoms = atoms
        self.consistent = consistent
        self._vars: Optional[set] = None

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Constraint)
            and self.consistent == other.consistent
            and self.atoms == other.atoms
        )

    def __hash__(self) -> int:
        return hash((self.atoms, self.consistent))

    def __repr__(self) -> str:
        return f"Constraint({set(self.atoms)!r})" if self.consistent else "FALSE"

    def __str__(self) -> str:
        if not self.consistent:
            return "false"
        if not self.atoms:
            return "true"
        return " /\\ ".join(sorted(str(a) for a in self.atoms))

    def bindings(self) -> dict:
        return {a.var: a.term for a in self.atoms if isinstance(a, TermEq)}

    def variables(self) -> set:
        if self._vars is None:
            out: set = set()
            for a in self.atoms:
                out |= a.variables()
            self._vars = out
        return self._vars


TRUE = Constraint(frozenset())
FALSE = Constraint(frozenset(), consistent=False)


def constraint(*atoms: AtomicConstraint) -> Constraint:
    return solve(atoms)


class MissingContinuousVariableError(KeyError):
    """A guard reads a continuous variable with no entry in the snapshot."""


# ---------------------------------------------------------------------------
# unification / normalization


def _walk(t: Term, subst: dict) -> Term:
    while isinstance(t, Var) and t.name in subst:
        t = subst[t.name]
    return t


def _deep(t: Term, subst: dict) -> Term:
    t = _walk(t, subst)
    if isinstance(t, Cons):
        return Cons(_deep(t.head, subst), _deep(t.tail, subst))
    return t


def _occurs(name: str, t: Term, subst: dict) -> bool:
    t = _walk(t, subst)
    if isinstance(t, Var):
        return t.name == name
    if isinstance(t, Cons):
        return _occurs(name, t.head, subst) or _occurs(name, t.tail, subst)
    return False


def _unify(a: Term, b: Term, subst: dict) -> bool:
    a = _walk(a, subst)
    b = _walk(b, subst)
    if isinstance(a, Wildcard) or isinstance(b, Wildcard):
        raise ValueError("wildcard is only legal inside ask/now guards")
    if isinstance(a, Var) and isinstance(b, Var):
        if a.name == b.name:
            return True
        # deterministic orientation: the lexicographically smaller name is kept
        if a.name < b.name:
            subst[b.name] = a
        else:
            subst[a.name] = b
        return True
    if isinstance(a, Var):
        if _occurs(a.name, b, subst):
            return False
        subst[a.name] = b
        return True
    if isinstance(b, Var):
        return _unify(b, a, subst)
    if isinstance(a, Atom) and isinstance(b, Atom):
        return a.symbol == b.symbol
    if isinstance(a, Num) and isinstance(b, Num):
        return a.value == b.value
    if isinstance(a, RandomTerm) or isinstance(b, RandomTerm):
        return a == b
    if isinstance(a, Cons) and isinstance(b, Cons):
        return _unify(a.head, b.head, subst) and _unify(a.tail, b.tail, subst)
    return False


def _resolve_cmp(c: LinCmp, subst: dict, solved: set) -> bool:
    """Normalize one comparison against the substitution; False means FALSE."""
    rep = _deep(Var(c.var), subst)
    if isinstance(rep, Num):
        # satisfied ground comparisons carry no information and are dropped
        return compare(rep.value, c.op, c.bound)
    if isinstance(rep, Var):
        solved.add(LinCmp(rep.name, c.op, c.bound))
        return True
    return False  # comparing a non-numeric term against a number


def solve(atoms: Iterable[AtomicConstraint]) -> Constraint:
    """Normalize a set of atomic constraints to solved form (or FALSE)."""
    subst: dict = {}
    cmps = []
    for a in atoms:
        if isinstance(a, TermEq):
            if not _unify(Var(a.var), a.term, subst):
                return FALSE
        elif isinstance(a, LinCmp):
            cmps.append(a)
        else:
            raise TypeError(f"not an atomic constraint: {a!r}")

    solved: set = set()
    for name in subst:
        t = _deep(Var(name), subst)
        if isinstance(t, Var) and t.name == name:
            continue
        solved.add(TermEq(name, t))

    for c in cmps:
        if isinstance(rep := _deep(Var(c.var), subst), Num):
            if not compare(rep.value, c.op, c.bound):
                return FALSE
        elif isinstance(rep, Var):
            solved.add(LinCmp(rep.name, c.op, c.bound))
        else:
            return FALSE
    return Constraint(frozenset(solved))


# ---------------------------------------------------------------------------
# operations


def conj(c: Constraint, d: Constraint) -> Constraint:
    """Merge two constraints; false is absorbing."""
    if not c.consistent or not d.consistent:
        return FALSE
    if d.atoms <= c.atoms:
        return c
    if c.atoms <= d.atoms:
        return d
    return _conj_solved(c, d)


@lru_cache(maxsize=16384)
def _conj_solved(c: Constraint, d: Constraint) -> Constraint:
    """Merge two solved, mutually non-subsuming constraints.

    The merge extends the larger operand's solved form instead of re-solving
    from scratch: only bindings touched by newly unified variables are
    rebuilt, everything else is reused atom object for atom object.
    """
    if len(d.atoms) > len(c.atoms):
        c, d = d, c

    subst: dict = {}
    base_eqs: dict = {}
    base_cmps = []
    for a in c.atoms:
        if isinstance(a, TermEq):
            subst[a.var] = a.term
            base_eqs[a.var] = a
        else:
            base_cmps.append(a)

    new_cmps = []
    pre_keys = set(subst)
    for a in d.atoms:
        if isinstance(a, TermEq):
            if subst.get(a.var) is a.term:
                continue  # stores share atom objects; identical binding, no work
            if not _unify(Var(a.var), a.term, subst):
                return FALSE
        elif isinstance(a, LinCmp):
            new_cmps.append(a)
        else:
            raise TypeError(f"not an atomic constraint: {a!r}")
    new_keys = subst.keys() - pre_keys

    solved: set = set()
    # c is solved, so a base binding changes only if its term mentions a
    # variable that just became bound
    for name, atom in base_eqs.items():
        if atom.variables() & new_keys:
            t = _deep(Var(name), subst)
            if not (isinstance(t, Var) and t.name == name):
                solved.add(TermEq(name, t))
        else:
            solved.add(atom)
    for name in new_keys:
        t = _deep(Var(name), subst)
        if isinstance(t, Var) and t.name == name:
            continue
        solved.add(TermEq(name, t))

    for cmp_ in base_cmps:
        if cmp_.var in new_keys:
            if not _resolve_cmp(cmp_, subst, solved):
                return FALSE
        else:
            solved.add(cmp_)
    for cmp_ in new_cmps:
        if not _resolve_cmp(cmp_, subst, solved):
            return FALSE
    return Constraint(frozenset(solved))


def _atom_sort_key(a: AtomicConstraint):
    return (isinstance(a, LinCmp), a.var, str(a))


@lru_cache(maxsize=65536)
def entails(store: Constraint, guard: Constraint, locals_: frozenset = frozenset()) -> bool:
    """Sound, incomplete entailment check of ``guard`` by ``store``.

    Variables in ``locals_`` and wildcards act as one-way match placeholders;
    they receive no persistent bindings.  Comparisons over variables that the
    store does not ground are only entailed when the identical comparison atom
    is present in the store.
    """
    if not store.consistent:
        return True
    if not guard.consistent:
        return False
    sigma = store.bindings()
    theta: dict = {}

    def store_side(t: Term) -> Term:
        return _deep(t, sigma)

    def match(sv: Term, gt: Term) -> bool:
        if isinstance(gt, Wildcard):
            return True
        if isinstance(gt, Var):
            if gt.name in locals_:
                if gt.name in theta:
                    return theta[gt.name] == sv
                theta[gt.name] = sv
                return True
            return store_side(gt) == sv
        if isinstance(gt, Cons):
            return isinstance(sv, Cons) and match(sv.head, gt.head) and match(sv.tail, gt.tail)
        return sv == gt

    for atom in sorted(guard.atoms, key=_atom_sort_key):
        if isinstance(atom, TermEq):
            if atom.var in locals_:
                lhs: Term = Var(atom.var)
                if atom.var in theta:
                    lhs = theta[atom.var]
                else:
                    theta[atom.var] = store_side(Var(atom.var))
                    lhs = theta[atom.var]
            else:
                lhs = store_side(Var(atom.var))
            if not match(lhs, atom.term):
                return False
        else:
            rep = store_side(Var(atom.var))
            if atom.var in theta:
                rep = theta[atom.var]
            if isinstance(rep, Num):
                if not compare(rep.value, atom.op, atom.bound):
                    return False
            elif isinstance(rep, Var):
                if LinCmp(rep.name, atom.op, atom.bound) not in store.atoms:
                    return False
            else:
                return False
    return True


def _rename_var_in_term(t: Term, old: str, new: Term) -> Term:
    if isinstance(t, Var):
        return new if t.name == old else t
    if isinstance(t, Cons):
        return Cons(_rename_var_in_term(t.head, old, new), _rename_var_in_term(t.tail, old, new))
    return t


def hide(c: Constraint, x: str) -> Constraint:
    """Existentially quantify ``x``: substitute its binding away, then forget it.

    Information about other variables routed through ``x`` is preserved by
    renaming residual occurrences of ``x`` to a fresh variable.
    """
    if not c.consistent:
        return FALSE
    kept = [a for a in c.atoms if not (isinstance(a, TermEq) and a.var == x)]
    mentions = any(x in a.variables() for a in kept)
    if not mentions:
        return Constraint(frozenset(kept))
    linked = any(isinstance(a, TermEq) and x in term_vars(a.term) for a in kept)
    if not linked:
        # only comparisons on an otherwise unlinked x remain: pure x-facts, drop
        kept = [a for a in kept if a.var != x]
        return Constraint(frozenset(kept))
    fresh = Var(fresh_var(x))
    out = []
    for a in kept:
        if isinstance(a, TermEq):
            var = fresh.name if a.var == x else a.var
            out.append(TermEq(var, _rename_var_in_term(a.term, x, fresh)))
        else:
            out.append(LinCmp(fresh.name, a.op, a.bound) if a.var == x else a)
    return solve(out)


def hide_all(c: Constraint, xs: Iterable[str]) -> Constraint:
    for x in xs:
        c = hide(c, x)
    return c


def eval_cont_atoms(guard: Constraint, snapshot: Mapping[str, object]) -> bool:
    """Evaluate the continuous comparisons of a guard on a value snapshot."""
    if not guard.consistent:
        return False
    for atom in guard.atoms:
        if isinstance(atom, LinCmp):
            if atom.var not in snapshot:
                raise MissingContinuousVariableError(atom.var)
            if not compare(snapshot[atom.var], atom.op, atom.bound):
                return False
        elif isinstance(atom, TermEq) and atom.var in snapshot:
            if not isinstance(atom.term, Num):
                raise ValueError(f"continuous variable {atom.var} compared against a non-number")
            if snapshot[atom.var] != atom.term.value:
                return False
    return True


def split_guard(guard: Constraint, continuous_vars) -> tuple:
    """Split a guard into (discrete part, continuous comparison list).

    Numeric equations on continuous variables are normalized to ``=`` comparisons.
    """
    disc = []
    cont = []
    for atom in guard.atoms:
        if atom.var in continuous_vars:
            if isinstance(atom, LinCmp):
                cont.append(atom)
            elif isinstance(atom.term, Num):
                cont.append(LinCmp(atom.var, "=", atom.term.value))
            else:
                raise ValueError(f"continuous variable {atom.var} bound to a non-number in a guard")
        else:
            disc.append(atom)
    return Constraint(frozenset(disc), guard.consistent), cont
