"""Core model types.

Expressions, predicates, process terms, physical environments and whole
models for a discrete-time calculus of cyber-physical systems.  Everything
here is immutable; the stepping machinery lives in :mod:`ccpsa.semantics`.

Numeric conventions
-------------------
* All values are real numbers (floats).  Actuator and channel constants are
  encoded as distinguished reals: ``on`` is -1.0 and ``off`` is +1.0, and an
  actuator is considered "on" when its value is negative.
* Comparisons in predicates use a global tolerance ``TOL = 1e-9`` so that
  interval endpoints survive float arithmetic (``x > 10`` is false when x
  accumulated to 10.000000000000002).
* State values are quantised to 9 decimal places after every update, which
  keeps grids and repeated sums exactly on their intended lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

TOL = 1e-9

#: Actuator command constants.  "on" is negative by convention.
ON = -1.0
OFF = 1.0

BUILTIN_CONSTS = {"on": ON, "off": OFF, "true": 1.0, "false": 0.0}


def quant(v: float) -> float:
    """Quantise a state value to the 9-decimal lattice used throughout."""
    return round(v, 9)


# ---------------------------------------------------------------------------
# errors


class ModelError(Exception):
    """Base class for every error raised by model construction/evaluation."""


class DivisionByZero(ModelError):
    pass


class UnboundName(ModelError):
    pass


class RndWithoutResolver(ModelError):
    """``rnd`` appeared in an expression but no resolver was supplied."""


class OverlappingNames(ModelError):
    """Physical device or definition names collide in a disjoint union."""


class UnboundDefinition(ModelError):
    """A process invokes a definition the model does not declare."""


class UnrepresentableClass(ModelError):
    """An attack class refers to devices outside the model's interface."""


class StateSpaceBlowup(ModelError):
    """An exploration exceeded its node budget."""

    def __init__(self, message: str, visited: int = 0):
        super().__init__(message)
        self.visited = visited


class InvalidHorizon(ModelError):
    pass


# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class Num:
    value: float

    def __repr__(self):
        return f"Num({self.value!r})"


@dataclass(frozen=True)
class Name:
    """A reference: process variable, model constant, or builtin constant."""

    id: str


@dataclass(frozen=True)
class Bin:
    op: str  # one of + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class Fn:
    """min/max over two arguments; the only builtin functions."""

    name: str
    args: tuple


@dataclass(frozen=True)
class Rnd:
    """A nondeterministic real, resolved by the active resolver.

    Only meaningful inside attacker payloads (e.g. ``forge p(rnd)``); the
    candidate set is derived from the target device's plausible range.
    """


@dataclass(frozen=True)
class Ite:
    """Conditional expression ``ite(b, e1, e2)``.

    Needed by evolution laws that branch on the current state (e.g. a
    counter that increments above a threshold and resets below it).
    """

    pred: "Pred"
    then: "Expr"
    els: "Expr"


Expr = Union[Num, Name, Bin, Neg, Fn, Rnd, Ite]


# ---------------------------------------------------------------------------
# predicates


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Cmp:
    op: str  # < <= > >= == !=
    left: Expr
    right: Expr


@dataclass(frozen=True)
class And:
    left: "Pred"
    right: "Pred"


@dataclass(frozen=True)
class Or:
    left: "Pred"
    right: "Pred"


@dataclass(frozen=True)
class Not:
    arg: "Pred"


Pred = Union[BoolLit, Cmp, And, Or, Not]


def approx_cmp(op: str, a: float, b: float) -> bool:
    """Tolerance-aware comparison used for every predicate atom."""
    d = a - b
    if op == "<":
        return d < -TOL
    if op == "<=":
        return d <= TOL
    if op == ">":
        return d > TOL
    if op == ">=":
        return d >= -TOL
    if op == "==":
        return abs(d) <= TOL
    if op == "!=":
        return abs(d) > TOL
    raise ValueError(f"unknown comparison {op!r}")


# ---------------------------------------------------------------------------
# process terms


@dataclass(frozen=True)
class Nil:
    def __repr__(self):
        return "Nil()"


@dataclass(frozen=True)
class Sleep:
    """``tick . P`` — idle for the rest of the current time slot."""

    cont: "Proc"


@dataclass(frozen=True)
class ChOut:
    chan: str
    expr: Expr
    cont: "Proc"


@dataclass(frozen=True)
class ChIn:
    chan: str
    var: str
    cont: "Proc"


@dataclass(frozen=True)
class ReadS:
    """``read s(x) . P`` — sample sensor ``s`` into ``x``."""

    sensor: str
    var: str
    cont: "Proc"


@dataclass(frozen=True)
class WriteA:
    """``write a(e) . P`` — command actuator ``a``."""

    act: str
    expr: Expr
    cont: "Proc"


@dataclass(frozen=True)
class TimeoutSniff:
    """``timeout(sniff s(x). P, Q)`` — malicious sensor eavesdrop with fallback."""

    sensor: str
    var: str
    body: "Proc"
    alt: "Proc"


@dataclass(frozen=True)
class TimeoutDrop:
    """``timeout(drop a(x). P, Q)`` — malicious actuator-command theft."""

    act: str
    var: str
    body: "Proc"
    alt: "Proc"


@dataclass(frozen=True)
class TimeoutForge:
    """``timeout(forge p(e). P, Q)`` — malicious device-value injection."""

    target: str  # sensor or actuator name
    expr: Expr
    body: "Proc"
    alt: "Proc"


@dataclass(frozen=True)
class Cond:
    pred: Pred
    then: "Proc"
    els: "Proc"


@dataclass(frozen=True)
class Par:
    left: "Proc"
    right: "Proc"


@dataclass(frozen=True)
class Restrict:
    chan: str
    body: "Proc"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class Choice:
    """``choice { P } or { Q }`` — internal nondeterministic branch."""

    left: "Proc"
    right: "Proc"


Proc = Union[
    Nil, Sleep, ChOut, ChIn, ReadS, WriteA,
    TimeoutSniff, TimeoutDrop, TimeoutForge,
    Cond, Par, Restrict, Call, Choice,
]

MALICIOUS_TIMEOUTS = (TimeoutSniff, TimeoutDrop, TimeoutForge)


def _install_hash_memo(cls):
    """Cache each term's hash on the instance.

    Terms are deeply nested immutable trees used as dictionary keys all
    over the stepping engine; recomputing their recursive hash on every
    lookup dominates exploration time.  The cached value never crosses a
    process boundary (string hashes are salted per process), so pickling
    strips it.
    """
    generated = cls.__hash__

    def __hash__(self):
        h = self.__dict__.get("_hx")
        if h is None:
            h = generated(self)
            object.__setattr__(self, "_hx", h)
        return h

    def __getstate__(self):
        state = dict(self.__dict__)
        state.pop("_hx", None)
        return state

    def __setstate__(self, state):
        for k, v in state.items():
            object.__setattr__(self, k, v)

    cls.__hash__ = __hash__
    cls.__getstate__ = __getstate__
    cls.__setstate__ = __setstate__


for _cls in (Num, Name, Bin, Neg, Fn, Rnd, Ite, BoolLit, Cmp, And, Or, Not,
             Nil, Sleep, ChOut, ChIn, ReadS, WriteA, TimeoutSniff, TimeoutDrop,
             TimeoutForge, Cond, Par, Restrict, Call, Choice):
    _install_hash_memo(_cls)


def subst(p: Proc, env: Mapping[str, float]) -> Proc:
    """Substitute values for free process variables in ``p``.

    Binding constructs (``ChIn``, ``ReadS``, sniff/drop binders) shadow
    outer bindings for their continuation, so capture is not possible:
    substituted payloads are always ground numbers, never names.
    """
    if not env or env.keys().isdisjoint(free_value_names(p)):
        return p

    def se(e: Expr) -> Expr:
        if isinstance(e, Num) or isinstance(e, Rnd):
            return e
        if isinstance(e, Name):
            if e.id in env:
                return Num(env[e.id])
            return e
        if isinstance(e, Bin):
            return Bin(e.op, se(e.left), se(e.right))
        if isinstance(e, Neg):
            return Neg(se(e.arg))
        if isinstance(e, Fn):
            return Fn(e.name, tuple(se(a) for a in e.args))
        if isinstance(e, Ite):
            return Ite(sp(e.pred), se(e.then), se(e.els))
        raise TypeError(e)

    def sp(b: Pred) -> Pred:
        if isinstance(b, BoolLit):
            return b
        if isinstance(b, Cmp):
            return Cmp(b.op, se(b.left), se(b.right))
        if isinstance(b, And):
            return And(sp(b.left), sp(b.right))
        if isinstance(b, Or):
            return Or(sp(b.left), sp(b.right))
        if isinstance(b, Not):
            return Not(sp(b.arg))
        raise TypeError(b)

    def shadow(var: str) -> Mapping[str, float]:
        if var in env:
            e2 = dict(env)
            del e2[var]
            return e2
        return env

    if isinstance(p, Nil):
        return p
    if isinstance(p, Sleep):
        return Sleep(subst(p.cont, env))
    if isinstance(p, ChOut):
        return ChOut(p.chan, se(p.expr), subst(p.cont, env))
    if isinstance(p, ChIn):
        return ChIn(p.chan, p.var, subst(p.cont, shadow(p.var)))
    if isinstance(p, ReadS):
        return ReadS(p.sensor, p.var, subst(p.cont, shadow(p.var)))
    if isinstance(p, WriteA):
        return WriteA(p.act, se(p.expr), subst(p.cont, env))
    if isinstance(p, TimeoutSniff):
        return TimeoutSniff(p.sensor, p.var, subst(p.body, shadow(p.var)), subst(p.alt, env))
    if isinstance(p, TimeoutDrop):
        return TimeoutDrop(p.act, p.var, subst(p.body, shadow(p.var)), subst(p.alt, env))
    if isinstance(p, TimeoutForge):
        return TimeoutForge(p.target, se(p.expr), subst(p.body, env), subst(p.alt, env))
    if isinstance(p, Cond):
        return Cond(sp(p.pred), subst(p.then, env), subst(p.els, env))
    if isinstance(p, Par):
        return Par(subst(p.left, env), subst(p.right, env))
    if isinstance(p, Restrict):
        return Restrict(p.chan, subst(p.body, env))
    if isinstance(p, Call):
        return Call(p.name, tuple(se(a) for a in p.args))
    if isinstance(p, Choice):
        return Choice(subst(p.left, env), subst(p.right, env))
    raise TypeError(p)


# ---------------------------------------------------------------------------
# slot sets and attack classes


@dataclass(frozen=True)
class SlotSet:
    """A set of time slots: a finite part plus an optional infinite tail.

    ``tail = t`` means every slot ``>= t`` belongs to the set.  Infinity is
    a structural feature of the type, never a sentinel float.
    """

    fin: frozenset = frozenset()
    tail: Optional[int] = None

    def __post_init__(self):
        if self.tail is not None:
            fin = set(k for k in self.fin if k < self.tail)
            tail = self.tail
            while tail - 1 in fin:
                tail -= 1
                fin.discard(tail)
            object.__setattr__(self, "fin", frozenset(fin))
            object.__setattr__(self, "tail", tail)

    @staticmethod
    def of(*slots: int) -> "SlotSet":
        return SlotSet(frozenset(slots))

    @staticmethod
    def range(lo: int, hi: int) -> "SlotSet":
        return SlotSet(frozenset(range(lo, hi + 1)))

    @staticmethod
    def from_(lo: int) -> "SlotSet":
        return SlotSet(frozenset(), lo)

    @staticmethod
    def empty() -> "SlotSet":
        return SlotSet(frozenset(), None)

    def is_empty(self) -> bool:
        return not self.fin and self.tail is None

    def __contains__(self, k: int) -> bool:
        if self.tail is not None and k >= self.tail:
            return True
        return k in self.fin

    def is_subset(self, other: "SlotSet") -> bool:
        if self.tail is not None:
            if other.tail is None or other.tail > self.tail:
                return False
        return all(k in other for k in self.fin)

    def min_slot(self) -> Optional[int]:
        cands = list(self.fin)
        if self.tail is not None:
            cands.append(self.tail)
        return min(cands) if cands else None

    def sup(self) -> float:
        """Supremum as a float for display; math.inf when a tail exists."""
        if self.tail is not None:
            return math.inf
        if not self.fin:
            return -math.inf
        return float(max(self.fin))

    def truncate(self, horizon: int) -> "SlotSet":
        """Intersect with slots ``1..horizon`` (drops the infinite tail)."""
        fin = {k for k in self.fin if 1 <= k <= horizon}
        if self.tail is not None:
            fin.update(range(max(1, self.tail), horizon + 1))
        return SlotSet(frozenset(fin))

    def union(self, other: "SlotSet") -> "SlotSet":
        tail = None
        if self.tail is not None and other.tail is not None:
            tail = min(self.tail, other.tail)
        elif self.tail is not None:
            tail = self.tail
        elif other.tail is not None:
            tail = other.tail
        return SlotSet(self.fin | other.fin, tail)

    def render(self) -> str:
        if self.is_empty():
            return "{}"
        parts = []
        fin = sorted(self.fin)
        i = 0
        while i < len(fin):
            j = i
            while j + 1 < len(fin) and fin[j + 1] == fin[j] + 1:
                j += 1
            if j == i:
                parts.append(str(fin[i]))
            else:
                parts.append(f"{fin[i]}..{fin[j]}")
            i = j + 1
        if self.tail is not None:
            parts.append(f"{self.tail}..inf")
        return "{" + ", ".join(parts) + "}"


#: A malicious activity: (device name, direction).  Direction "?" reads the
#: device (sniff a sensor / drop an actuator command); "!" writes it (forge).
Activity = tuple


@dataclass(frozen=True)
class AttackClass:
    """Map from malicious activities to the slots where they may occur."""

    slots: Mapping[Activity, SlotSet] = field(default_factory=dict)

    def __post_init__(self):
        # normalise away empty entries so equality is extensional
        cleaned = {a: s for a, s in dict(self.slots).items() if not s.is_empty()}
        object.__setattr__(self, "slots", cleaned)

    def get(self, act: Activity) -> SlotSet:
        return self.slots.get(act, SlotSet.empty())

    def activities(self):
        return sorted(self.slots)

    def is_subclass(self, other: "AttackClass") -> bool:
        return all(s.is_subset(other.get(a)) for a, s in self.slots.items())

    def truncate(self, horizon: int) -> "AttackClass":
        return AttackClass({a: s.truncate(horizon) for a, s in self.slots.items()})

    def __eq__(self, other):
        if not isinstance(other, AttackClass):
            return NotImplemented
        return dict(self.slots) == dict(other.slots)

    def __hash__(self):
        return hash(frozenset(self.slots.items()))

    def render(self) -> str:
        if not self.slots:
            return "(empty class)"
        bits = []
        for (dev, d) in self.activities():
            bits.append(f"{dev}{d} -> {self.slots[(dev, d)].render()}")
        return "; ".join(bits)


# ---------------------------------------------------------------------------
# physical environments and models


@dataclass(frozen=True)
class VarDecl:
    name: str
    init: float
    evol: Expr          # next-value expression over variables and actuators
    uncertainty: float  # half-width w(x) of the additive error interval
    integral: bool = False  # lint only: values are expected to stay integral


@dataclass(frozen=True)
class SensorDecl:
    name: str
    source: str  # physical variable being measured
    error: float  # half-width e(s) of the measurement error


@dataclass(frozen=True)
class ActuatorDecl:
    name: str
    init: float


@dataclass(frozen=True)
class DefDecl:
    name: str
    params: tuple
    body: Proc


@dataclass(frozen=True)
class PhysEnv:
    """Static physical data: declarations, evolution, invariant, safety."""

    variables: tuple  # tuple[VarDecl]
    sensors: tuple    # tuple[SensorDecl]
    actuators: tuple  # tuple[ActuatorDecl]
    invariant: Pred
    safety: Pred

    def var_names(self):
        return tuple(v.name for v in self.variables)

    def sensor_names(self):
        return tuple(s.name for s in self.sensors)

    def actuator_names(self):
        return tuple(a.name for a in self.actuators)


@dataclass(frozen=True)
class PhysState:
    """Dynamic physical data: variable, sensor and actuator valuations.

    Values are stored positionally (aligned with the declarations in the
    owning :class:`PhysEnv`) so states hash fast and dedupe exactly.
    """

    xs: tuple
    sensors: tuple
    acts: tuple


@dataclass(frozen=True)
class Violation:
    category: str  # unknown-device | free-variable | unguarded-recursion | ...
    where: str
    detail: str

    def __str__(self):
        return f"{self.category} at {self.where}: {self.detail}"


@dataclass(frozen=True)
class CpsModel:
    """A closed model: physics, named constants, definitions and main term."""

    env: PhysEnv
    consts: Mapping[str, float]
    defs: Mapping[str, DefDecl]
    main: Proc
    alarm_channels: frozenset = frozenset({"alarm"})
    name: str = "model"

    # -- indices -----------------------------------------------------------

    def var_index(self, name: str) -> int:
        for i, v in enumerate(self.env.variables):
            if v.name == name:
                return i
        raise UnboundName(f"unknown variable {name!r}")

    def sensor_index(self, name: str) -> int:
        for i, s in enumerate(self.env.sensors):
            if s.name == name:
                return i
        raise UnboundName(f"unknown sensor {name!r}")

    def actuator_index(self, name: str) -> int:
        for i, a in enumerate(self.env.actuators):
            if a.name == name:
                return i
        raise UnboundName(f"unknown actuator {name!r}")

    def is_sensor(self, name: str) -> bool:
        return any(s.name == name for s in self.env.sensors)

    def is_actuator(self, name: str) -> bool:
        return any(a.name == name for a in self.env.actuators)

    def initial_state(self) -> PhysState:
        xs = tuple(quant(v.init) for v in self.env.variables)
        # sensors initially measure their source exactly; the first tick
        # re-samples them with error anyway
        xmap = {v.name: x for v, x in zip(self.env.variables, xs)}
        sensors = tuple(quant(xmap[s.source]) for s in self.env.sensors)
        acts = tuple(quant(a.init) for a in self.env.actuators)
        return PhysState(xs, sensors, acts)

    def activities(self):
        """All malicious activities this model's interface exposes."""
        acts = []
        for s in self.env.sensors:
            acts.append((s.name, "?"))
            acts.append((s.name, "!"))
        for a in self.env.actuators:
            acts.append((a.name, "?"))
            acts.append((a.name, "!"))
        return acts

    def const_env(self) -> Mapping[str, float]:
        env = self.__dict__.get("_cenv")
        if env is None:
            env = dict(BUILTIN_CONSTS)
            env.update(self.consts)
            object.__setattr__(self, "_cenv", env)
        return env


# ---------------------------------------------------------------------------
# expression / predicate evaluation


def eval_expr(e: Expr, bindings: Mapping[str, float],
              consts: Optional[Mapping[str, float]] = None,
              rnd_resolver=None) -> float:
    """Evaluate an expression to a quantised float.

    ``bindings`` holds process variables and (for evolution expressions)
    physical variable / actuator names.  ``consts`` holds model constants;
    builtin constants are always available.  ``rnd_resolver`` is a callable
    returning a float for ``rnd`` occurrences.
    """
    if isinstance(e, Num):
        return quant(e.value)
    if isinstance(e, Name):
        if e.id in bindings:
            return quant(bindings[e.id])
        if consts is not None and e.id in consts:
            return quant(consts[e.id])
        if e.id in BUILTIN_CONSTS:
            return BUILTIN_CONSTS[e.id]
        raise UnboundName(f"unbound name {e.id!r}")
    if isinstance(e, Bin):
        a = eval_expr(e.left, bindings, consts, rnd_resolver)
        b = eval_expr(e.right, bindings, consts, rnd_resolver)
        if e.op == "+":
            return quant(a + b)
        if e.op == "-":
            return quant(a - b)
        if e.op == "*":
            return quant(a * b)
        if e.op == "/":
            if abs(b) <= TOL:
                raise DivisionByZero(f"division by zero: {b!r}")
            return quant(a / b)
        raise ValueError(f"unknown operator {e.op!r}")
    if isinstance(e, Neg):
        return quant(-eval_expr(e.arg, bindings, consts, rnd_resolver))
    if isinstance(e, Fn):
        vals = [eval_expr(a, bindings, consts, rnd_resolver) for a in e.args]
        if e.name == "min":
            return quant(min(vals))
        if e.name == "max":
            return quant(max(vals))
        raise UnboundName(f"unknown function {e.name!r}")
    if isinstance(e, Rnd):
        if rnd_resolver is None:
            raise RndWithoutResolver("rnd used outside a resolved run")
        return quant(rnd_resolver())
    if isinstance(e, Ite):
        if eval_pred(e.pred, bindings, consts, rnd_resolver):
            return eval_expr(e.then, bindings, consts, rnd_resolver)
        return eval_expr(e.els, bindings, consts, rnd_resolver)
    raise TypeError(e)


def eval_pred(b: Pred, bindings: Mapping[str, float],
              consts: Optional[Mapping[str, float]] = None,
              rnd_resolver=None) -> bool:
    if isinstance(b, BoolLit):
        return b.value
    if isinstance(b, Cmp):
        return approx_cmp(b.op,
                          eval_expr(b.left, bindings, consts, rnd_resolver),
                          eval_expr(b.right, bindings, consts, rnd_resolver))
    if isinstance(b, And):
        return eval_pred(b.left, bindings, consts, rnd_resolver) and \
            eval_pred(b.right, bindings, consts, rnd_resolver)
    if isinstance(b, Or):
        return eval_pred(b.left, bindings, consts, rnd_resolver) or \
            eval_pred(b.right, bindings, consts, rnd_resolver)
    if isinstance(b, Not):
        return not eval_pred(b.arg, bindings, consts, rnd_resolver)
    raise TypeError(b)


_MISS = object()


def compile_expr(e: Expr, consts: Optional[Mapping[str, float]] = None,
                 rnd_resolver=None):
    """Compile an expression to a ``bindings -> float`` closure.

    Behaves exactly like ``eval_expr`` on the same tree (same quantisation
    points, name precedence, and error behaviour); worthwhile when one
    tree is evaluated for many states, as with evolution expressions and
    the invariant/safety predicates."""
    if isinstance(e, Num):
        v = quant(e.value)
        return lambda b: v
    if isinstance(e, Name):
        k = e.id
        cv = quant(consts[k]) if consts is not None and k in consts else _MISS
        bv = BUILTIN_CONSTS.get(k, _MISS)

        def name_fn(b, _k=k, _cv=cv, _bv=bv):
            v = b.get(_k, _MISS)
            if v is not _MISS:
                return quant(v)
            if _cv is not _MISS:
                return _cv
            if _bv is not _MISS:
                return _bv
            raise UnboundName(f"unbound name {_k!r}")
        return name_fn
    if isinstance(e, Bin):
        fl = compile_expr(e.left, consts, rnd_resolver)
        fr = compile_expr(e.right, consts, rnd_resolver)
        if e.op == "+":
            return lambda b: quant(fl(b) + fr(b))
        if e.op == "-":
            return lambda b: quant(fl(b) - fr(b))
        if e.op == "*":
            return lambda b: quant(fl(b) * fr(b))
        if e.op == "/":
            def div_fn(b):
                a = fl(b)
                d = fr(b)
                if abs(d) <= TOL:
                    raise DivisionByZero(f"division by zero: {d!r}")
                return quant(a / d)
            return div_fn
        raise ValueError(f"unknown operator {e.op!r}")
    if isinstance(e, Neg):
        fa = compile_expr(e.arg, consts, rnd_resolver)
        return lambda b: quant(-fa(b))
    if isinstance(e, Fn):
        fns = tuple(compile_expr(a, consts, rnd_resolver) for a in e.args)
        if e.name == "min":
            return lambda b: quant(min(f(b) for f in fns))
        if e.name == "max":
            return lambda b: quant(max(f(b) for f in fns))
        raise UnboundName(f"unknown function {e.name!r}")
    if isinstance(e, Rnd):
        if rnd_resolver is None:
            def rnd_raise(b):
                raise RndWithoutResolver("rnd used outside a resolved run")
            return rnd_raise
        return lambda b: quant(rnd_resolver())
    if isinstance(e, Ite):
        fp = compile_pred(e.pred, consts, rnd_resolver)
        ft = compile_expr(e.then, consts, rnd_resolver)
        fe = compile_expr(e.els, consts, rnd_resolver)
        return lambda b: ft(b) if fp(b) else fe(b)
    raise TypeError(e)


def compile_pred(p: Pred, consts: Optional[Mapping[str, float]] = None,
                 rnd_resolver=None):
    """Compile a predicate to a ``bindings -> bool`` closure (see
    ``compile_expr``)."""
    if isinstance(p, BoolLit):
        v = p.value
        return lambda b: v
    if isinstance(p, Cmp):
        op = p.op
        fl = compile_expr(p.left, consts, rnd_resolver)
        fr = compile_expr(p.right, consts, rnd_resolver)
        return lambda b: approx_cmp(op, fl(b), fr(b))
    if isinstance(p, And):
        fl = compile_pred(p.left, consts, rnd_resolver)
        fr = compile_pred(p.right, consts, rnd_resolver)
        return lambda b: fl(b) and fr(b)
    if isinstance(p, Or):
        fl = compile_pred(p.left, consts, rnd_resolver)
        fr = compile_pred(p.right, consts, rnd_resolver)
        return lambda b: fl(b) or fr(b)
    if isinstance(p, Not):
        fa = compile_pred(p.arg, consts, rnd_resolver)
        return lambda b: not fa(b)
    raise TypeError(p)


def state_bindings(model: CpsModel, st: PhysState) -> dict:
    """Bindings exposing physical variables and actuators to expressions."""
    env = {v.name: x for v, x in zip(model.env.variables, st.xs)}
    env.update({a.name: x for a, x in zip(model.env.actuators, st.acts)})
    return env


def invariant_holds(model: CpsModel, st: PhysState) -> bool:
    return eval_pred(model.env.invariant, state_bindings(model, st), model.const_env())


def safety_holds(model: CpsModel, st: PhysState) -> bool:
    return eval_pred(model.env.safety, state_bindings(model, st), model.const_env())


# ---------------------------------------------------------------------------
# free names / well-formedness


def expr_names(e: Expr) -> set:
    if isinstance(e, Num) or isinstance(e, Rnd):
        return set()
    if isinstance(e, Name):
        return {e.id}
    if isinstance(e, Bin):
        return expr_names(e.left) | expr_names(e.right)
    if isinstance(e, Neg):
        return expr_names(e.arg)
    if isinstance(e, Fn):
        out = set()
        for a in e.args:
            out |= expr_names(a)
        return out
    if isinstance(e, Ite):
        return pred_names(e.pred) | expr_names(e.then) | expr_names(e.els)
    raise TypeError(e)


def pred_names(b: Pred) -> set:
    if isinstance(b, BoolLit):
        return set()
    if isinstance(b, Cmp):
        return expr_names(b.left) | expr_names(b.right)
    if isinstance(b, (And, Or)):
        return pred_names(b.left) | pred_names(b.right)
    if isinstance(b, Not):
        return pred_names(b.arg)
    raise TypeError(b)


def free_value_names(p: Proc) -> frozenset:
    """Free value-variable names of a process term: names its expressions
    and guards read, minus binder-shadowed occurrences.  Cached on the
    term object (terms are immutable)."""
    fv = p.__dict__.get("_fv")
    if fv is not None:
        return fv
    if isinstance(p, Nil):
        fv = frozenset()
    elif isinstance(p, Sleep):
        fv = free_value_names(p.cont)
    elif isinstance(p, ChOut):
        fv = frozenset(expr_names(p.expr)) | free_value_names(p.cont)
    elif isinstance(p, ChIn):
        fv = free_value_names(p.cont) - {p.var}
    elif isinstance(p, ReadS):
        fv = free_value_names(p.cont) - {p.var}
    elif isinstance(p, WriteA):
        fv = frozenset(expr_names(p.expr)) | free_value_names(p.cont)
    elif isinstance(p, TimeoutSniff):
        fv = (free_value_names(p.body) - {p.var}) | free_value_names(p.alt)
    elif isinstance(p, TimeoutDrop):
        fv = (free_value_names(p.body) - {p.var}) | free_value_names(p.alt)
    elif isinstance(p, TimeoutForge):
        fv = (frozenset(expr_names(p.expr))
              | free_value_names(p.body) | free_value_names(p.alt))
    elif isinstance(p, Cond):
        fv = (frozenset(pred_names(p.pred))
              | free_value_names(p.then) | free_value_names(p.els))
    elif isinstance(p, (Par, Choice)):
        fv = free_value_names(p.left) | free_value_names(p.right)
    elif isinstance(p, Restrict):
        fv = free_value_names(p.body)
    elif isinstance(p, Call):
        names: set = set()
        for a in p.args:
            names |= expr_names(a)
        fv = frozenset(names)
    else:
        raise TypeError(p)
    object.__setattr__(p, "_fv", fv)
    return fv


def uses_malicious(p: Proc) -> bool:
    """Does the term contain any timeout-guarded malicious construct?"""
    if isinstance(p, MALICIOUS_TIMEOUTS):
        return True
    for child in _children(p):
        if uses_malicious(child):
            return True
    return False


def _children(p: Proc):
    if isinstance(p, Nil) or isinstance(p, Call):
        return ()
    if isinstance(p, Sleep):
        return (p.cont,)
    if isinstance(p, (ChOut, ChIn, ReadS, WriteA)):
        return (p.cont,)
    if isinstance(p, MALICIOUS_TIMEOUTS):
        return (p.body, p.alt)
    if isinstance(p, (Cond, Par, Choice)):
        pair = (p.then, p.els) if isinstance(p, Cond) else (p.left, p.right)
        return pair
    if isinstance(p, Restrict):
        return (p.body,)
    raise TypeError(p)


def well_formed(model: CpsModel) -> list:
    """Static checks.  Returns a list of violations; empty means clean.

    Warnings (category ending in ``-warning``) do not make a model invalid;
    attackers in particular are allowed time-unguarded recursion.
    """
    out = []
    sensors = set(model.env.sensor_names())
    acts = set(model.env.actuator_names())
    consts = set(model.const_env())

    def check(p: Proc, bound: frozenset, where: str):
        if isinstance(p, Nil):
            return
        if isinstance(p, Sleep):
            check(p.cont, bound, where)
        elif isinstance(p, ChOut):
            for n in expr_names(p.expr) - bound - consts:
                out.append(Violation("free-variable", where, f"name {n!r} in output on {p.chan!r}"))
            check(p.cont, bound, where)
        elif isinstance(p, ChIn):
            check(p.cont, bound | {p.var}, where)
        elif isinstance(p, ReadS):
            if p.sensor not in sensors:
                out.append(Violation("unknown-device", where, f"sensor {p.sensor!r} not declared"))
            check(p.cont, bound | {p.var}, where)
        elif isinstance(p, WriteA):
            if p.act not in acts:
                out.append(Violation("unknown-device", where, f"actuator {p.act!r} not declared"))
            for n in expr_names(p.expr) - bound - consts:
                out.append(Violation("free-variable", where, f"name {n!r} in write to {p.act!r}"))
            check(p.cont, bound, where)
        elif isinstance(p, TimeoutSniff):
            if p.sensor not in sensors:
                out.append(Violation("unknown-device", where, f"sensor {p.sensor!r} not declared"))
            check(p.body, bound | {p.var}, where)
            check(p.alt, bound, where)
        elif isinstance(p, TimeoutDrop):
            if p.act not in acts:
                out.append(Violation("unknown-device", where, f"actuator {p.act!r} not declared"))
            check(p.body, bound | {p.var}, where)
            check(p.alt, bound, where)
        elif isinstance(p, TimeoutForge):
            if p.target not in sensors and p.target not in acts:
                out.append(Violation("unknown-device", where, f"device {p.target!r} not declared"))
            for n in expr_names(p.expr) - bound - consts:
                out.append(Violation("free-variable", where, f"name {n!r} in forge on {p.target!r}"))
            check(p.body, bound, where)
            check(p.alt, bound, where)
        elif isinstance(p, Cond):
            for n in pred_names(p.pred) - bound - consts:
                out.append(Violation("free-variable", where, f"name {n!r} in condition"))
            check(p.then, bound, where)
            check(p.els, bound, where)
        elif isinstance(p, (Par, Choice)):
            check(p.left, bound, where)
            check(p.right, bound, where)
        elif isinstance(p, Restrict):
            check(p.body, bound, where)
        elif isinstance(p, Call):
            d = model.defs.get(p.name)
            if d is None:
                out.append(Violation("unbound-definition", where, f"no definition for {p.name!r}"))
            elif len(d.params) != len(p.args):
                out.append(Violation("arity-mismatch", where,
                                     f"{p.name!r} takes {len(d.params)} args, got {len(p.args)}"))
            for a in p.args:
                for n in expr_names(a) - bound - consts:
                    out.append(Violation("free-variable", where, f"name {n!r} in call to {p.name!r}"))
        else:
            raise TypeError(p)

    for d in model.defs.values():
        check(d.body, frozenset(d.params), f"def {d.name}")
    check(model.main, frozenset(), "main")

    # physical declarations: evolution expressions may mention variables,
    # actuators and constants only
    phys_names = set(model.env.var_names()) | set(model.env.actuator_names()) | consts
    for v in model.env.variables:
        for n in expr_names(v.evol) - phys_names:
            out.append(Violation("free-variable", f"var {v.name}", f"name {n!r} in evolution"))
    for s in model.env.sensors:
        if s.source not in set(model.env.var_names()):
            out.append(Violation("unknown-device", f"sensor {s.name}",
                                 f"measures undeclared variable {s.source!r}"))
    for n in pred_names(model.env.invariant) - phys_names:
        out.append(Violation("free-variable", "invariant", f"name {n!r}"))
    for n in pred_names(model.env.safety) - phys_names:
        out.append(Violation("free-variable", "safety", f"name {n!r}"))

    out.extend(_recursion_guards(model))
    return out


def _recursion_guards(model: CpsModel) -> list:
    """Detect unguarded and non-time-guarded recursion among definitions.

    A call occurrence is *guarded* when some action prefix lies between
    the definition's root and the call, and *time-guarded* when a
    tick-consuming construct does (a ``tick`` prefix, or the fallback
    branch of a timeout, which only runs when the slot ends).  A cycle is
    problematic only when it can be traversed entirely through bad
    occurrences — one guarded hop sanitises the loop.  Unguarded cycles
    are hard violations; time-unguarded ones only warrant a warning, since
    attack processes legitimately retry within a single slot.
    """
    out = []
    edges = {}  # def -> set of (callee, guarded, timed) occurrences

    def walk(p: Proc, guarded: bool, timed: bool, acc: set):
        if isinstance(p, Call):
            acc.add((p.name, guarded, timed))
        elif isinstance(p, Sleep):
            walk(p.cont, True, True, acc)
        elif isinstance(p, (ChOut, ChIn, ReadS, WriteA)):
            walk(p.cont, True, timed, acc)
        elif isinstance(p, MALICIOUS_TIMEOUTS):
            walk(p.body, True, timed, acc)
            walk(p.alt, True, True, acc)
        elif isinstance(p, (Cond, Par, Choice, Restrict)):
            for c in _children(p):
                walk(c, guarded, timed, acc)
        # Nil: nothing

    for d in model.defs.values():
        acc = set()
        walk(d.body, False, False, acc)
        edges[d.name] = acc

    def has_cycle_through(start: str, edge_ok) -> bool:
        seen = set()
        stack = [c for (c, g, t) in edges.get(start, ()) if edge_ok(g, t)]
        while stack:
            node = stack.pop()
            if node == start:
                return True
            if node in seen:
                continue
            seen.add(node)
            stack.extend(c for (c, g, t) in edges.get(node, ()) if edge_ok(g, t))
        return False

    for start in edges:
        if has_cycle_through(start, lambda g, t: not g):
            out.append(Violation("unguarded-recursion", f"def {start}",
                                 "recursive call not under any prefix"))
        elif has_cycle_through(start, lambda g, t: not t):
            out.append(Violation("non-time-guarded-recursion-warning", f"def {start}",
                                 "recursion may loop within a single time slot"))
    return out


# ---------------------------------------------------------------------------
# composition


def disjoint_union(m1: CpsModel, m2: CpsModel, name: Optional[str] = None) -> CpsModel:
    """Union of two models: disjoint physics, shared channel namespace.

    Physical device names and definition names must not collide; channels
    may be shared on purpose (that is how components talk to each other).
    The composite invariant/safety are the conjunctions, and the composite
    process is the parallel of the two mains.
    """
    v1 = set(m1.env.var_names()) | set(m1.env.sensor_names()) | set(m1.env.actuator_names())
    v2 = set(m2.env.var_names()) | set(m2.env.sensor_names()) | set(m2.env.actuator_names())
    clash = v1 & v2
    if clash:
        raise OverlappingNames(f"physical names shared by both models: {sorted(clash)}")
    dclash = set(m1.defs) & set(m2.defs)
    if dclash:
        raise OverlappingNames(f"definitions shared by both models: {sorted(dclash)}")
    cclash = {k for k in set(m1.consts) & set(m2.consts)
              if m1.consts[k] != m2.consts[k]}
    if cclash:
        raise OverlappingNames(f"constants redeclared with different values: {sorted(cclash)}")

    env = PhysEnv(
        variables=m1.env.variables + m2.env.variables,
        sensors=m1.env.sensors + m2.env.sensors,
        actuators=m1.env.actuators + m2.env.actuators,
        invariant=And(m1.env.invariant, m2.env.invariant),
        safety=And(m1.env.safety, m2.env.safety),
    )
    consts = dict(m1.consts)
    consts.update(m2.consts)
    defs = dict(m1.defs)
    defs.update(m2.defs)
    return CpsModel(env=env, consts=consts, defs=defs,
                    main=Par(m1.main, m2.main),
                    alarm_channels=m1.alarm_channels | m2.alarm_channels,
                    name=name or f"{m1.name}+{m2.name}")


def with_process(model: CpsModel, proc: Proc,
                 extra_defs: Optional[Mapping[str, DefDecl]] = None,
                 name: Optional[str] = None) -> CpsModel:
    """Compose a pure-logical process (e.g. an attacker) in parallel.

    This is the degenerate disjoint union with an empty physical part: the
    extra process shares the model's physical interface and channels.
    """
    defs = dict(model.defs)
    if extra_defs:
        clash = set(defs) & set(extra_defs)
        for k in clash:
            if defs[k] != extra_defs[k]:
                raise OverlappingNames(f"definition {k!r} redeclared differently")
        defs.update(extra_defs)
    return CpsModel(env=model.env, consts=model.consts, defs=defs,
                    main=Par(model.main, proc),
                    alarm_channels=model.alarm_channels,
                    name=name or model.name)


def widen_uncertainty(model: CpsModel, extra: float,
                      direction: Optional[Mapping[str, float]] = None) -> CpsModel:
    """Enlarge per-variable uncertainty: w'(x) = w(x) + extra * dir(x).

    ``direction`` defaults to 1 for every variable that already has nonzero
    uncertainty and 0 elsewhere, which leaves exact (w = 0) variables exact.
    """
    if extra < 0:
        raise ValueError("uncertainty enlargement must be nonnegative")
    newvars = []
    for v in model.env.variables:
        if direction is not None:
            d = direction.get(v.name, 0.0)
        else:
            d = 1.0 if v.uncertainty > 0 else 0.0
        newvars.append(VarDecl(v.name, v.init, v.evol,
                               quant(v.uncertainty + extra * d), v.integral))
    env = PhysEnv(tuple(newvars), model.env.sensors, model.env.actuators,
                  model.env.invariant, model.env.safety)
    return CpsModel(env=env, consts=model.consts, defs=model.defs,
                    main=model.main, alarm_channels=model.alarm_channels,
                    name=model.name)
