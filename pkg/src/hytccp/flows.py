"""Continuous store: values and affine flows, evolution over time, event times.

Constant flows (b = 0) are solved in exact rational arithmetic so timer events
fire at exact instants; exponential flows (b != 0) use floating point with a
guarded bisection refinement for crossing times.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .constraints import LinCmp, compare, format_rational
from .syntax import Flow, KEEP, Keep

Value = Union[Fraction, float]

UNBOUNDED = None  # infinity marker for delays / interval endpoints

BISECTION_TOL = 1e-12


@dataclass(frozen=True)
class Entry:
    value: Value
    flow: Flow


@dataclass(frozen=True)
class ContinuousStore:
    entries: Tuple[Tuple[str, Entry], ...] = ()

    def as_dict(self) -> Dict[str, Entry]:
        return dict(self.entries)

    def snapshot(self) -> Dict[str, Value]:
        return {name: entry.value for name, entry in self.entries}

    def get(self, name: str) -> Optional[Entry]:
        return self.as_dict().get(name)

    def names(self) -> frozenset:
        return frozenset(name for name, _ in self.entries)

    def with_entry(self, name: str, entry: Entry) -> "ContinuousStore":
        items = [(n, e) for n, e in self.entries if n != name]
        items.append((name, entry))
        items.sort(key=lambda kv: kv[0])
        return ContinuousStore(tuple(items))

    def __str__(self) -> str:
        inner = ", ".join(f"{n}->({format_rational(e.value)}, {e.flow})" for n, e in self.entries)
        return "{" + inner + "}"


EMPTY_STORE = ContinuousStore()


class UninitializedContinuousVariableError(KeyError):
    """change with a KEEP component on a variable that has no entry yet."""


def apply_change(store: ContinuousStore, x: str, v: Union[Value, Keep], f: Union[Flow, Keep]) -> ContinuousStore:
    """Componentwise update of one variable's (value, flow) entry."""
    current = store.get(x)
    if current is None and (v is KEEP or f is KEEP):
        raise UninitializedContinuousVariableError(x)
    value = current.value if v is KEEP else v
    flow = current.flow if f is KEEP else f
    return store.with_entry(x, Entry(value, flow))


def solve_flow(v0: Value, f: Flow, t: Value) -> Value:
    """Closed-form solution of dx/dt = a + b*x with x(0) = v0, at time t."""
    if t < 0:
        raise ValueError("negative duration")
    if f.b == 0:
        return v0 + f.a * t
    b = float(f.b)
    shift = float(f.a) / b
    return (float(v0) + shift) * math.exp(b * float(t)) - shift


def evolve(store: ContinuousStore, t: Value) -> ContinuousStore:
    """Project every entry forward by t; flows are unchanged."""
    if t == 0:
        return store
    return ContinuousStore(
        tuple((name, Entry(solve_flow(e.value, e.flow, t), e.flow)) for name, e in store.entries)
    )


# ---------------------------------------------------------------------------
# level hits and truth intervals


def _hit_time(v0: Value, f: Flow, level: Fraction) -> Optional[Value]:
    """First t >= 0 with x(t) == level, or None.  Exact for b = 0 flows."""
    if v0 == level:
        return Fraction(0) if isinstance(v0, Fraction) else 0.0
    if f.b == 0:
        if f.a == 0:
            return None
        t = (Fraction(level) - Fraction(v0)) / f.a if isinstance(v0, Fraction) else (float(level) - v0) / float(f.a)
        return t if t >= 0 else None
    b = float(f.b)
    shift = float(f.a) / b
    c0 = float(v0) + shift
    if c0 == 0.0:
        return None  # sitting on the equilibrium
    ratio = (float(level) + shift) / c0
    if ratio <= 0.0:
        return None
    t = math.log(ratio) / b
    if t < -BISECTION_TOL:
        return None
    t = max(t, 0.0)
    return _refine_hit(v0, f, float(level), t)


def _refine_hit(v0: Value, f: Flow, level: float, t: float) -> float:
    """Bisection polish of an analytic hit time to <= 1e-12 absolute."""
    g = lambda s: solve_flow(float(v0), f, s) - level
    lo, hi = max(t - 1e-6, 0.0), t + 1e-6
    glo, ghi = g(lo), g(hi)
    width = 1e-6
    while glo * ghi > 0 and width < 1.0:
        width *= 4
        lo, hi = max(t - width, 0.0), t + width
        glo, ghi = g(lo), g(hi)
    if glo * ghi > 0:
        return t
    while hi - lo > BISECTION_TOL:
        mid = (lo + hi) / 2
        if g(mid) == 0.0:
            return mid
        if g(lo) * g(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2


def _moving_up(v0: Value, f: Flow) -> int:
    """Sign of the derivative along the (monotone) trajectory at t = 0."""
    d = f.a + f.b * Fraction(v0) if isinstance(v0, Fraction) and isinstance(f.a, Fraction) else float(f.a) + float(f.b) * float(v0)
    return (d > 0) - (d < 0)


@dataclass(frozen=True)
class Interval:
    """Truth interval of a comparison along one trajectory, within [0, inf)."""

    start: Optional[Value]  # None means empty interval
    start_open: bool = False
    end: Optional[Value] = UNBOUNDED  # None = unbounded
    end_open: bool = False

    @property
    def empty(self) -> bool:
        return self.start is None


EMPTY_INTERVAL = Interval(None)
ALWAYS = Interval(Fraction(0))


def truth_interval(v0: Value, f: Flow, cmp: LinCmp) -> Interval:
    """Where along the trajectory of (v0, f) the comparison holds.

    One-dimensional affine trajectories are monotone, so the truth set within
    [0, inf) is a single interval (possibly a point, possibly empty).
    """
    now = compare(v0, cmp.op, cmp.bound)
    direction = _moving_up(v0, f)
    if direction == 0:
        return ALWAYS if now else EMPTY_INTERVAL
    hit = _hit_time(v0, f, cmp.bound)
    zero = Fraction(0)
    if cmp.op == "=":
        if now:
            return Interval(zero, end=zero)
        return Interval(hit, end=hit) if hit is not None else EMPTY_INTERVAL
    if cmp.op == "!=":
        if not now:
            return Interval(zero, start_open=True)
        if hit is None:
            return ALWAYS
        # true until the hit, and true again right after (monotone: passes once)
        return Interval(zero, end=hit, end_open=True) if hit != 0 else Interval(zero, start_open=True)
    # order comparisons: the truth set is a half line whose boundary is the hit
    toward = (direction > 0 and cmp.op in (">", ">=")) or (direction < 0 and cmp.op in ("<", "<="))
    closed = cmp.op in ("<=", ">=")
    if now:
        if toward:
            return ALWAYS  # already true and moving deeper into the region
        if hit is None:
            return ALWAYS
        return Interval(zero, end=hit, end_open=not closed)
    if not toward:
        return EMPTY_INTERVAL
    if hit is None:
        return EMPTY_INTERVAL
    return Interval(hit, start_open=not closed)


def crossing_time(v0: Value, f: Flow, cmp: LinCmp) -> Optional[Value]:
    """Earliest t >= 0 at which the truth value of cmp changes, or None."""
    now = compare(v0, cmp.op, cmp.bound)
    iv = truth_interval(v0, f, cmp)
    if now:
        if iv.end is UNBOUNDED:
            return None
        return iv.end
    if iv.empty:
        return None
    return iv.start


def intersect(a: Interval, b: Interval) -> Interval:
    if a.empty or b.empty:
        return EMPTY_INTERVAL
    if b.start > a.start or (b.start == a.start and b.start_open):
        start, start_open = b.start, b.start_open
    else:
        start, start_open = a.start, a.start_open
    if a.end is UNBOUNDED:
        end, end_open = b.end, b.end_open
    elif b.end is UNBOUNDED:
        end, end_open = a.end, a.end_open
    elif a.end < b.end or (a.end == b.end and a.end_open):
        end, end_open = a.end, a.end_open
    else:
        end, end_open = b.end, b.end_open
    if end is not UNBOUNDED:
        if start > end or (start == end and (start_open or end_open)):
            return EMPTY_INTERVAL
    return Interval(start, start_open, end, end_open)


def atoms_truth_interval(atoms: Sequence[LinCmp], store: ContinuousStore) -> Interval:
    """Intersection of the truth intervals of several continuous comparisons."""
    iv = ALWAYS
    entries = store.as_dict()
    for atom in atoms:
        entry = entries.get(atom.var)
        if entry is None:
            from .constraints import MissingContinuousVariableError

            raise MissingContinuousVariableError(atom.var)
        iv = intersect(iv, truth_interval(entry.value, entry.flow, atom))
        if iv.empty:
            return EMPTY_INTERVAL
    return iv


# ---------------------------------------------------------------------------
# earliest-event delay


class DelayCause(Enum):
    GUARD_ENABLES = "guard"
    INVARIANT_EXPIRES = "invariant"
    HORIZON = "horizon"
    TIMELOCK = "timelock"


@dataclass(frozen=True)
class DelayOutcome:
    tau: Optional[Value]  # None only for TIMELOCK
    cause: DelayCause
    branch: Optional[int] = None  # index of the winning guard/invariant


@dataclass(frozen=True)
class GuardWatch:
    """A currently-false conjunction of continuous comparisons worth waiting for."""

    atoms: Tuple[LinCmp, ...]
    branch: int = 0


def max_delay(
    cont_branches: Sequence[object],
    waiting_guards: Sequence[GuardWatch],
    store: ContinuousStore,
    horizon: Optional[Value],
) -> DelayOutcome:
    """Pick the earliest-event delay witness.

    ``cont_branches`` holds one invariant per ask~ branch as a sequence of
    continuous comparisons; at least one must hold now, otherwise time cannot
    pass (TIMELOCK).  The chosen tau is the minimum of: the earliest instant a
    currently-false waiting guard becomes satisfiable, the latest instant up to
    which some currently-true invariant keeps holding, and the horizon.  Ties
    prefer GuardEnables over InvariantExpires over Horizon.
    """
    # invariant bound: max over currently-true branches of their expiry
    inv_bound: Optional[Value] = None  # None = no true invariant yet
    inv_unbounded = False
    inv_branch = None
    any_true = False
    for idx, atoms in enumerate(cont_branches):
        iv = atoms_truth_interval(tuple(atoms), store)
        if iv.empty or iv.start > 0 or (iv.start == 0 and iv.start_open):
            continue  # not true now
        any_true = True
        if iv.end is UNBOUNDED:
            inv_unbounded = True
            continue
        if inv_bound is None or iv.end > inv_bound:
            inv_bound = iv.end
            inv_branch = idx
    if not any_true:
        return DelayOutcome(None, DelayCause.TIMELOCK)
    if inv_unbounded:
        inv_bound = None
        inv_branch = None

    # guard bounds: earliest time each currently-false guard becomes true
    guard_candidates: List[Tuple[Value, bool, int, Optional[Value]]] = []  # (time, open, branch, end)
    for watch in waiting_guards:
        iv = atoms_truth_interval(watch.atoms, store)
        if iv.empty:
            continue
        if iv.start == 0 and not iv.start_open:
            continue  # already true; nothing to wait for
        guard_candidates.append((iv.start, iv.start_open, watch.branch, iv.end))
    guard_candidates.sort(key=lambda c: (c[0], c[1]))

    guard_end: Optional[Value] = UNBOUNDED
    bounds: List[Tuple[Value, DelayCause, Optional[int], bool]] = []
    if guard_candidates:
        t, is_open, branch, guard_end = guard_candidates[0]
        bounds.append((t, DelayCause.GUARD_ENABLES, branch, is_open))
    if inv_bound is not None:
        bounds.append((inv_bound, DelayCause.INVARIANT_EXPIRES, inv_branch, False))
    if horizon is not None:
        bounds.append((horizon, DelayCause.HORIZON, None, False))
    if not bounds:
        return DelayOutcome(None, DelayCause.TIMELOCK)

    priority = {DelayCause.GUARD_ENABLES: 0, DelayCause.INVARIANT_EXPIRES: 1, DelayCause.HORIZON: 2}
    bounds.sort(key=lambda b: (b[0], priority[b[1]]))
    tau, cause, branch, is_open = bounds[0]
    if is_open:
        # the guard only becomes true strictly after tau: land inside the open
        # interval, halfway to the nearest of the next bound and the interval's
        # own end (or one time unit if neither exists)
        later = [b[0] for b in bounds[1:] if b[0] > tau]
        if guard_end is not UNBOUNDED and guard_end > tau:
            later.append(guard_end)
        ceiling = min(later) if later else tau + 1
        tau = tau + (ceiling - tau) / 2
        cause = DelayCause.GUARD_ENABLES
    if tau <= 0:
        return DelayOutcome(None, DelayCause.TIMELOCK)
    return DelayOutcome(tau, cause, branch)
