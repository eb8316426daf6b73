"""Attack terms, attack classes, and most-general attacker synthesis.

An *attack class* maps each malicious activity (device + direction) to the
set of time slots where an attacker may perform it.  This module provides:

* builders for the standard attack patterns against actuators and sensors
  (denial of service, value freezing, value offsetting),
* :func:`class_of` — infer the least class of an arbitrary attacker term by
  abstract exploration of the term in isolation,
* :func:`top_attacker` — synthesise the most general attacker of a given
  class, which exhibits every behaviour any attacker of that class can
  exhibit (so analysing it covers the whole class at once).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Mapping, Optional

from .core import (
    And, AttackClass, Bin, BoolLit, Call, ChIn, ChOut, Choice, Cmp, Cond,
    CpsModel, DefDecl, Fn, Ite, Name, Neg, Nil, Not, Num, Or, Par, Pred,
    Proc, ReadS, Restrict, Rnd, Sleep, SlotSet, StateSpaceBlowup,
    TimeoutDrop, TimeoutForge, TimeoutSniff, UnboundDefinition,
    UnrepresentableClass, WriteA, approx_cmp, subst, uses_malicious,
    with_process, OFF,
)
from .semantics import (
    DROP, FORGE, IN, OUT, READ, SNIFF, TAU, TICK, WRITE,
)

__all__ = [
    "BuiltAttack", "ClassResult", "actuator_dos", "sensor_freeze",
    "sensor_offset", "top_attacker", "class_of", "weaker", "is_honest",
]


# ---------------------------------------------------------------------------
# packaged attacks


@dataclass
class BuiltAttack:
    """A ready-to-compose attacker: term + auxiliary definitions + class."""

    name: str
    term: Proc
    defs: Mapping[str, DefDecl]
    declared_class: AttackClass
    params: Mapping[str, float] = field(default_factory=dict)

    def attach(self, model: CpsModel, name: Optional[str] = None) -> CpsModel:
        """Compose this attacker in parallel with ``model``."""
        return with_process(model, self.term, extra_defs=self.defs,
                            name=name or f"{model.name}+{self.name}")

    def to_spec(self):
        """Convert to a renderable attacker spec (lazily, to keep deps thin)."""
        from .lang import AttackerSpec
        return AttackerSpec(term=self.term, defs=dict(self.defs),
                            params=dict(self.params))


def is_honest(term: Proc, defs: Optional[Mapping[str, DefDecl]] = None) -> bool:
    """True when neither the term nor any definition uses a malicious prefix."""
    if uses_malicious(term):
        return False
    return not any(uses_malicious(d.body) for d in (defs or {}).values())


def weaker(c1: AttackClass, c2: AttackClass) -> bool:
    """Pointwise inclusion of attack classes: every slot of c1 is allowed by c2."""
    return c1.is_subclass(c2)


# ---------------------------------------------------------------------------
# builders for the standard attack patterns


def _delay(term: Proc, slots: int) -> Proc:
    for _ in range(slots):
        term = Sleep(term)
    return term


def actuator_dos(act: str = "cool", m: int = 1, *,
                 held_value: float = OFF) -> BuiltAttack:
    """Denial of service on an actuator, active in slot ``m`` only.

    Waits ``m - 1`` slots, then tries once to steal the command written to
    ``act``; if the stolen command was ``held_value`` it immediately forges
    ``held_value`` back so the theft is invisible to later reads, otherwise
    the stolen command is simply lost.  Either way the attack is one-shot:
    if nothing is written during slot ``m`` it expires silently.
    """
    if m < 1:
        raise ValueError("slots are numbered from 1")
    body = Cond(Cmp("==", Name("x"), Num(held_value)),
                TimeoutForge(act, Num(held_value), Nil(), Nil()),
                Nil())
    term = _delay(TimeoutDrop(act, "x", body, Nil()), m - 1)
    cls = AttackClass({(act, "?"): SlotSet.of(m), (act, "!"): SlotSet.of(m)})
    return BuiltAttack(f"dos_{act}_{m}", term, {}, cls, {"m": float(m)})


def sensor_freeze(sensor: str = "st", m: int = 1, *,
                  threshold: float = 10.0) -> BuiltAttack:
    """Freeze a sensor at its last benign reading, from slot ``m`` onward.

    From slot ``m`` the attacker sniffs ``sensor`` each slot until it sees a
    value at or below ``threshold``; it then forges that captured value into
    the sensor at every subsequent slot, hiding any later rise from every
    observer that reads the sensor.
    """
    if m < 1:
        raise ValueError("slots are numbered from 1")
    watch, hold = "Freeze", "Hold"
    hold_body = TimeoutForge(sensor, Name("y"),
                             Sleep(Call(hold, (Name("y"),))),
                             Call(hold, (Name("y"),)))
    watch_body = TimeoutSniff(
        sensor, "x",
        Cond(Cmp("<=", Name("x"), Num(threshold)),
             Call(hold, (Name("x"),)),
             Sleep(Call(watch))),
        Call(watch))
    defs = {watch: DefDecl(watch, (), watch_body),
            hold: DefDecl(hold, ("y",), hold_body)}
    term = _delay(Call(watch), m - 1)
    cls = AttackClass({(sensor, "?"): SlotSet.from_(m),
                       (sensor, "!"): SlotSet.from_(m)})
    return BuiltAttack(f"freeze_{sensor}_{m}", term, defs, cls,
                       {"m": float(m)})


def sensor_offset(sensor: str = "st", n: int = 1, *,
                  offset: float = 4.0) -> BuiltAttack:
    """Shift a sensor's readings down by ``offset`` during slots ``1..n``.

    Each slot up to ``n`` the attacker sniffs the sensor and forges back the
    sniffed value minus ``offset``; after slot ``n`` it stops.  A missed
    sniff or forge in some slot simply skips to the next slot's instance.
    """
    if n < 0:
        raise ValueError("the last active slot must be nonnegative")
    defs = {}
    for k in range(1, n + 1):
        nxt = Call(f"Off_{k - 1}") if k > 1 else Nil()
        inner = TimeoutForge(sensor, Bin("-", Name("x"), Num(offset)),
                             Sleep(nxt), nxt)
        body = TimeoutSniff(sensor, "x", inner, nxt)
        defs[f"Off_{k}"] = DefDecl(f"Off_{k}", (), body)
    term = Call(f"Off_{n}") if n >= 1 else Nil()
    if n >= 1:
        cls = AttackClass({(sensor, "?"): SlotSet.range(1, n),
                           (sensor, "!"): SlotSet.range(1, n)})
    else:
        cls = AttackClass({})
    return BuiltAttack(f"offset_{sensor}_{n}", term, defs, cls,
                       {"n": float(n), "offset": float(offset)})


# ---------------------------------------------------------------------------
# most general attacker of a class


def top_attacker(model: CpsModel, cls: AttackClass,
                 name: str = "top") -> BuiltAttack:
    """Synthesise the most general attacker of ``cls`` against ``model``.

    For each activity the attacker runs an independent parallel component
    that counts slots; in every allowed slot it internally chooses between
    offering the malicious action (and, having fired, re-offering it until
    the slot ends) and idling.  Forged payloads are unconstrained (``rnd``).
    The result exhibits every trace any attacker of ``cls`` can exhibit.
    """
    valid = set(model.activities())
    defs: dict = {}
    chains = []
    for act in sorted(cls.slots):
        if act not in valid:
            dev, d = act
            raise UnrepresentableClass(
                f"activity {dev}{d} does not exist on model {model.name!r}")
        dev, d = act
        slots = cls.slots[act]
        mn = slots.min_slot()
        if mn is not None and mn < 1:
            raise UnrepresentableClass("slots are numbered from 1")
        prefix = f"Top_{dev}_{'q' if d == '?' else 'b'}"

        def mk_mu(body: Proc, alt: Proc) -> Proc:
            if d == "?":
                if model.is_sensor(dev):
                    return TimeoutSniff(dev, "x", body, alt)
                return TimeoutDrop(dev, "x", body, alt)
            return TimeoutForge(dev, Rnd(), body, alt)

        if slots.tail is not None:
            inf_name = f"{prefix}_inf"
            defs[inf_name] = DefDecl(
                inf_name, (),
                Choice(mk_mu(Call(inf_name), Call(inf_name)),
                       Sleep(Call(inf_name))))
            last_finite = slots.tail - 1
        else:
            last_finite = int(slots.sup()) if slots.fin else 0

        def step_name(k: int) -> Proc:
            if slots.tail is not None and k >= slots.tail:
                return Call(f"{prefix}_inf")
            if k > last_finite:
                return Nil()
            return Call(f"{prefix}_{k}")

        for k in range(1, last_finite + 1):
            me = f"{prefix}_{k}"
            nxt = step_name(k + 1)
            if k in slots:
                body = Choice(mk_mu(Call(me), nxt), Sleep(nxt))
            else:
                body = Sleep(nxt)
            defs[me] = DefDecl(me, (), body)
        chains.append(step_name(1))

    term = reduce(Par, chains) if chains else Nil()
    return BuiltAttack(name, term, defs, cls, {})


# ---------------------------------------------------------------------------
# class inference by abstract exploration
#
# The class of a term is judged over *all* contexts: binder values range over
# arbitrary reals, so a predicate on an unknown value enables both branches.
# Within one slot the per-activity cap (at most one action per device and
# direction) is mirrored exactly.  Exploring the per-slot frontier of
# tick-successors until it repeats detects eventually-periodic behaviour; a
# repeat where every recorded activity fires in every slot of the repeating
# window yields an exact infinite tail, anything else is reported as
# incomplete (a sound truncation).


class _AnyVal:
    """Placeholder for an unknown real (binder values, ``rnd`` payloads)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "ANY"


ANY = _AnyVal()

_MAX_UNFOLD = 512


def _aeval(e, consts):
    """Abstract expression value: a float, or ANY when undetermined."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Rnd):
        return ANY
    if isinstance(e, Name):
        return consts.get(e.id, ANY)
    if isinstance(e, Neg):
        v = _aeval(e.arg, consts)
        return ANY if v is ANY else -v
    if isinstance(e, Bin):
        a, b = _aeval(e.left, consts), _aeval(e.right, consts)
        if a is ANY or b is ANY:
            return ANY
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return ANY if abs(b) <= 1e-9 else a / b
    if isinstance(e, Fn):
        vs = [_aeval(a, consts) for a in e.args]
        if any(v is ANY for v in vs):
            return ANY
        return min(vs) if e.name == "min" else max(vs)
    if isinstance(e, Ite):
        p = _apred(e.pred, consts)
        if p is True:
            return _aeval(e.then, consts)
        if p is False:
            return _aeval(e.els, consts)
        return ANY
    raise TypeError(e)


def _apred(b: Pred, consts):
    """Abstract truth value: True, False, or None when undetermined."""
    if isinstance(b, BoolLit):
        return b.value
    if isinstance(b, Cmp):
        l, r = _aeval(b.left, consts), _aeval(b.right, consts)
        if l is ANY or r is ANY:
            return None
        return approx_cmp(b.op, l, r)
    if isinstance(b, And):
        l, r = _apred(b.left, consts), _apred(b.right, consts)
        if l is False or r is False:
            return False
        if l is True and r is True:
            return True
        return None
    if isinstance(b, Or):
        l, r = _apred(b.left, consts), _apred(b.right, consts)
        if l is True or r is True:
            return True
        if l is False and r is False:
            return False
        return None
    if isinstance(b, Not):
        v = _apred(b.arg, consts)
        return None if v is None else not v
    raise TypeError(b)


class _AbstractStepper:
    """Process-level transitions of an attacker explored in isolation.

    Transitions are ``(kind, device, successor)`` triples; payload values
    are abstracted away (binders take ANY).  Channel inputs both fire and
    wait, since a context may or may not offer the matching output.
    """

    def __init__(self, defs: Mapping[str, DefDecl], consts: Mapping[str, float]):
        self.defs = dict(defs)
        self.consts = dict(consts)
        self._memo: dict = {}

    def steps(self, p: Proc, fuel: int = _MAX_UNFOLD) -> tuple:
        if p in self._memo:
            return self._memo[p]
        out = self._steps(p, fuel)
        self._memo[p] = out
        return out

    def _steps(self, p: Proc, fuel: int) -> tuple:
        if fuel <= 0:
            raise StateSpaceBlowup(
                "recursive definitions never reach an action", 0)
        if isinstance(p, Nil):
            return ((TICK, None, p),)
        if isinstance(p, Sleep):
            return ((TICK, None, p.cont),)
        if isinstance(p, ChOut):
            return ((OUT, p.chan, p.cont),)
        if isinstance(p, ChIn):
            return ((IN, p.chan, subst(p.cont, {p.var: ANY})),
                    (TICK, None, p))
        if isinstance(p, ReadS):
            return ((READ, p.sensor, subst(p.cont, {p.var: ANY})),)
        if isinstance(p, WriteA):
            return ((WRITE, p.act, p.cont),)
        if isinstance(p, TimeoutSniff):
            return ((SNIFF, p.sensor, subst(p.body, {p.var: ANY})),
                    (TICK, None, p.alt))
        if isinstance(p, TimeoutDrop):
            return ((DROP, p.act, subst(p.body, {p.var: ANY})),
                    (TICK, None, p.alt))
        if isinstance(p, TimeoutForge):
            return ((FORGE, p.target, p.body),
                    (TICK, None, p.alt))
        if isinstance(p, Cond):
            v = _apred(p.pred, self.consts)
            if v is True:
                return self._steps(p.then, fuel - 1)
            if v is False:
                return self._steps(p.els, fuel - 1)
            return self._steps(p.then, fuel - 1) + self._steps(p.els, fuel - 1)
        if isinstance(p, Choice):
            return self._steps(p.left, fuel - 1) + self._steps(p.right, fuel - 1)
        if isinstance(p, Call):
            d = self.defs.get(p.name)
            if d is None:
                raise UnboundDefinition(f"no definition for {p.name!r}")
            if len(d.params) != len(p.args):
                raise UnboundDefinition(
                    f"{p.name!r} expects {len(d.params)} arguments, "
                    f"got {len(p.args)}")
            env = {prm: _aeval(a, self.consts)
                   for prm, a in zip(d.params, p.args)}
            return self._steps(subst(d.body, env), fuel - 1)
        if isinstance(p, Restrict):
            out = []
            for (k, dev, s) in self.steps(p.body, fuel):
                if k in (OUT, IN) and dev == p.chan:
                    continue
                out.append((k, dev, Restrict(p.chan, s)))
            return tuple(out)
        if isinstance(p, Par):
            lt = self.steps(p.left, fuel)
            rt = self.steps(p.right, fuel)
            out = []
            for (k, dev, s) in lt:
                if k != TICK:
                    out.append((k, dev, Par(s, p.right)))
            for (k, dev, s) in rt:
                if k != TICK:
                    out.append((k, dev, Par(p.left, s)))
            for (k1, d1, s1) in lt:
                for (k2, d2, s2) in rt:
                    pair = {k1, k2}
                    if d1 == d2 and pair == {OUT, IN}:
                        out.append((TAU, None, Par(s1, s2)))
                    elif d1 == d2 and pair == {WRITE, DROP}:
                        out.append((DROP, d1, Par(s1, s2)))
                    elif d1 == d2 and pair == {FORGE, READ}:
                        out.append((FORGE, d1, Par(s1, s2)))
                    elif k1 == TICK and k2 == TICK:
                        out.append((TICK, None, Par(s1, s2)))
            return tuple(out)
        raise TypeError(p)


_MAL_DIR = {SNIFF: "?", DROP: "?", FORGE: "!"}


@dataclass(frozen=True)
class ClassResult:
    """Outcome of class inference: the class, plus whether it is complete.

    ``complete`` is True when the inferred class is exact for an unbounded
    timeline; False means activity beyond ``horizon`` was truncated (the
    class is still sound for slots up to the horizon).
    """

    cls: AttackClass
    complete: bool
    horizon: int


def class_of(attack, defs: Optional[Mapping[str, DefDecl]] = None,
             consts: Optional[Mapping[str, float]] = None, *,
             horizon: int = 64, budget: int = 200_000) -> ClassResult:
    """Infer the attack class of a term by abstract slot-by-slot exploration.

    ``attack`` may be a :class:`BuiltAttack`, a parsed attacker spec, or a
    raw process term (with ``defs``/``consts`` supplied separately).
    """
    term = getattr(attack, "term", attack)
    if defs is None:
        defs = getattr(attack, "defs", {}) or {}
    if consts is None:
        consts = getattr(attack, "consts", {}) or {}
    stepper = _AbstractStepper(defs, consts)

    occurrences: dict = {}          # activity -> set of slots
    per_slot: list = []             # per_slot[k-1] = activities fired in slot k
    seen: dict = {}                 # frontier -> slot at whose start it appeared
    frontier = frozenset([term])
    visited_total = 0
    slot = 1
    complete = False
    while slot <= horizon:
        if frontier in seen:
            j = seen[frontier]
            period = slot - j
            exact = True
            window = per_slot[j - 1: slot - 1]
            for act in set().union(*window) if window else set():
                hits = [j + i for i, acts in enumerate(window) if act in acts]
                if len(hits) == period:
                    occurrences.setdefault(act, set())
                    tail_from = j
                else:
                    exact = False
                    tail_from = min(hits)
                occ = occurrences.setdefault(act, set())
                occ.add(("tail", tail_from))
            complete = exact
            break
        seen[frontier] = slot

        # close the slot: explore everything reachable without a tick
        nodes = [(t, frozenset()) for t in frontier]
        visited = set(nodes)
        tick_targets = set()
        fired = set()
        while nodes:
            t, used = nodes.pop()
            visited_total += 1
            if visited_total > budget:
                raise StateSpaceBlowup(
                    f"class inference exceeded {budget} states", visited_total)
            for (k, dev, succ) in stepper.steps(t):
                if k == TICK:
                    tick_targets.add(succ)
                elif k in _MAL_DIR:
                    act = (dev, _MAL_DIR[k])
                    if act in used:
                        continue
                    occurrences.setdefault(act, set()).add(slot)
                    fired.add(act)
                    node = (succ, used | {act})
                    if node not in visited:
                        visited.add(node)
                        nodes.append(node)
                else:
                    node = (succ, used)
                    if node not in visited:
                        visited.add(node)
                        nodes.append(node)
        per_slot.append(fired)
        frontier = frozenset(tick_targets)
        if not frontier:
            # the attacker cannot let time pass: no further slots exist
            complete = True
            break
        slot += 1

    slots_map = {}
    for act, occ in occurrences.items():
        fin = frozenset(k for k in occ if isinstance(k, int))
        tails = [k[1] for k in occ if isinstance(k, tuple)]
        slots_map[act] = SlotSet(fin, min(tails) if tails else None)
    return ClassResult(AttackClass(slots_map), complete, horizon)
