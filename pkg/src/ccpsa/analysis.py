"""Bounded trace-preorder checking, attack classification, impact estimation.

The checker compares two grid-resolved systems observable by observable.
Visible activities are channel outputs, time passing (tick), deadlock and
safety violations; internal steps (handshakes, reads, writes, malicious
exchanges) are silent.  The left system is explored exactly; the right
system is tracked as tau-closed *macro-states* (the subset construction
for weak trace matching), interned so repeated sets are shared.

Verdicts are bounded: ``HoldsToBound`` means "no counterexample within the
horizon at this grid resolution", not an unbounded proof.  A ``Mismatch``
carries the slot of the first unmatched observable (``m_prime``), a
replayable witness trace, and — when the divergence provably closes again
before the horizon — the last divergent slot (``recovery``).

On top of the checker sit the estimators: tolerance and impact are
suprema/infima over a one-parameter family of noise enlargements, located
by bisection against the inclusion oracle.  Every oracle call is logged;
an observation that contradicts the monotonicity the bisection relies on
aborts the estimate instead of returning a bogus bracket.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

from .core import (
    CpsModel, ModelError, Proc, StateSpaceBlowup, invariant_holds,
    safety_holds, widen_uncertainty, with_process,
)
from .semantics import (
    Config, Grid, Stepper, SysAction, _state_map,
    DEAD, UNSAFE, TICK_ACTION,
)

#: default node budget for one inclusion run
DEFAULT_BUDGET = 1_500_000

#: hard cap on oracle calls per bisection
MAX_ORACLE_CALLS = 20


class NonMonotoneOracle(ModelError):
    """A bisection observed results inconsistent with a monotone oracle."""

    def __init__(self, message: str, calls: tuple = ()):
        super().__init__(message)
        self.calls = calls


# ---------------------------------------------------------------------------
# verdicts and witnesses


@dataclass(frozen=True)
class WitnessStep:
    """One replayed transition: the action taken and the configuration after."""

    slot: int
    action: SysAction
    after: Config


@dataclass(frozen=True)
class Witness:
    """A shortest failing trace: matched prefix plus the unmatched observable.

    ``steps`` replays from the initial configuration of the left system;
    ``unmatched`` is the observable the right system cannot weakly match,
    occurring at slot ``slot``.
    """

    steps: tuple
    unmatched: SysAction
    slot: int

    def observables(self) -> tuple:
        obs = [s.action.render() for s in self.steps if s.action.kind != "tau"]
        obs.append(self.unmatched.render())
        return tuple(obs)

    def replay(self, model: CpsModel, grid: int = 3) -> bool:
        """Re-execute through the transition relation; True iff every step
        (and the final unmatched offer) is reproduced exactly."""
        stepper = Stepper(model, Grid(grid))
        cfg = stepper.initial()
        for st in self.steps:
            for act, succ in stepper.sys_steps(cfg):
                if act == st.action and succ == st.after:
                    cfg = succ
                    break
            else:
                return False
        return any(act == self.unmatched for act, _ in stepper.sys_steps(cfg))

    def to_records(self, model: CpsModel) -> list:
        """Witness as per-step records in the run-trace JSON-lines shape."""
        records = []
        fired: set = set()
        unsafe_seen = False
        deadlocked = False
        for st in self.steps:
            act = st.action
            if act.kind == "out":
                fired.add(act.chan)
            rec = {"slot": st.slot, "action": act.kind}
            if act.kind in ("out", "in"):
                rec["channel"] = act.chan
                rec["value"] = act.value
            rec["state"] = _state_map(model, st.after.state)
            rec["flags"] = {"deadlocked": deadlocked, "unsafe_seen": unsafe_seen,
                            "fired": sorted(fired)}
            records.append(rec)
        act = self.unmatched
        if act.kind == "out":
            fired.add(act.chan)
        unsafe_seen = unsafe_seen or act.kind == "unsafe"
        deadlocked = deadlocked or act.kind == "dead"
        last_state = self.steps[-1].after.state if self.steps else None
        rec = {"slot": self.slot, "action": act.kind, "unmatched": True}
        if act.kind in ("out", "in"):
            rec["channel"] = act.chan
            rec["value"] = act.value
        if last_state is not None:
            rec["state"] = _state_map(model, last_state)
        rec["flags"] = {"deadlocked": deadlocked, "unsafe_seen": unsafe_seen,
                        "fired": sorted(fired)}
        records.append(rec)
        return records


@dataclass(frozen=True)
class HoldsToBound:
    """Every left trace within the horizon is weakly matched by the right."""

    horizon: int
    nodes: int = 0

    @property
    def holds(self) -> bool:
        return True

    def to_json(self) -> dict:
        return {"verdict": "holds-to-bound", "horizon": self.horizon,
                "nodes": self.nodes}


@dataclass(frozen=True)
class Mismatch:
    """First divergence at slot ``m_prime``; ``recovery`` is the last
    divergent slot, or None when divergence persists to the horizon
    ("infinity up to bound")."""

    m_prime: int
    witness: Witness
    recovery: Optional[int]
    horizon: int
    nodes: int = 0

    @property
    def holds(self) -> bool:
        return False

    def window(self) -> tuple:
        return (self.m_prime, self.recovery)

    def render_window(self) -> str:
        if self.recovery is None:
            return f"{self.m_prime}..inf (up to bound {self.horizon})"
        return f"{self.m_prime}..{self.recovery}"

    def to_json(self) -> dict:
        return {"verdict": "mismatch", "m_prime": self.m_prime,
                "recovery": self.recovery, "horizon": self.horizon,
                "window": self.render_window(), "nodes": self.nodes,
                "witness_observables": list(self.witness.observables())}


Verdict = Union[HoldsToBound, Mismatch]


# ---------------------------------------------------------------------------
# exploration plumbing


class _Budget:
    def __init__(self, limit: int, what: str = "inclusion check"):
        self.limit = limit
        self.count = 0
        self.what = what

    def charge(self, n: int = 1):
        self.count += n
        if self.count > self.limit:
            raise StateSpaceBlowup(
                f"node budget ({self.limit}) exceeded during {self.what}",
                visited=self.count)


class _Side:
    """Memoised system-step tables for one model under one grid."""

    def __init__(self, model: CpsModel, grid: int, budget: _Budget):
        self.model = model
        self.stepper = Stepper(model, Grid(grid))
        self.budget = budget
        self._steps: dict = {}

    def initial(self) -> Config:
        return self.stepper.initial()

    def steps(self, cfg: Config) -> tuple:
        out = self._steps.get(cfg)
        if out is None:
            self.budget.charge()
            out = self.stepper.sys_steps(cfg)
            self._steps[cfg] = out
        return out


class _Macros:
    """Interned tau-closed macro-states of the right system, with the weak
    transition table computed on demand.

    Macro ids are small ints; ``None`` stands for "no matching state"."""

    def __init__(self, side: _Side, budget: _Budget):
        self.side = side
        self.budget = budget
        self._ids: dict = {}
        self._sets: list = []
        self._tick: dict = {}
        self._out: dict = {}
        self._unsafe: dict = {}
        self._dead: dict = {}
        self._free: dict = {}

    def intern(self, configs) -> int:
        fs = frozenset(configs)
        mid = self._ids.get(fs)
        if mid is None:
            mid = len(self._sets)
            self._ids[fs] = mid
            self._sets.append(fs)
            self.budget.charge(len(fs))
        return mid

    def members(self, mid: int) -> frozenset:
        return self._sets[mid]

    def closure(self, configs) -> int:
        """Tau-closure of a config set, interned."""
        seen = set(configs)
        stack = list(seen)
        while stack:
            c = stack.pop()
            for act, succ in self.side.steps(c):
                if act.kind == "tau" and succ not in seen:
                    seen.add(succ)
                    stack.append(succ)
        return self.intern(seen)

    def weak_tick(self, mid: int) -> Optional[int]:
        got = self._tick.get(mid, False)
        if got is not False:
            return got
        targets = set()
        for c in self._sets[mid]:
            for act, succ in self.side.steps(c):
                if act.kind == "tick":
                    targets.add(succ)
        got = self.closure(targets) if targets else None
        self._tick[mid] = got
        return got

    def weak_out(self, mid: int, chan: str, value) -> Optional[int]:
        key = (mid, chan, value)
        got = self._out.get(key, False)
        if got is not False:
            return got
        targets = set()
        for c in self._sets[mid]:
            for act, succ in self.side.steps(c):
                if act.kind == "out" and act.chan == chan \
                        and _val_eq(act.value, value):
                    targets.add(succ)
        got = self.closure(targets) if targets else None
        self._out[key] = got
        return got

    def weak_unsafe(self, mid: int) -> Optional[int]:
        got = self._unsafe.get(mid, False)
        if got is not False:
            return got
        sub = {c for c in self._sets[mid]
               if not safety_holds(self.side.model, c.state)}
        got = self.closure(sub) if sub else None
        self._unsafe[mid] = got
        return got

    def has_dead(self, mid: int) -> bool:
        got = self._dead.get(mid)
        if got is None:
            got = any(not invariant_holds(self.side.model, c.state)
                      for c in self._sets[mid])
            self._dead[mid] = got
        return got

    def free_run(self, mid: int) -> int:
        """One-slot unconstrained advance: take any silent/output activity,
        then tick.  Used inside a mismatch window, where the right system's
        own observables are unconstrained."""
        got = self._free.get(mid)
        if got is not None:
            return got
        seen = set(self._sets[mid])
        stack = list(seen)
        ticks = set()
        while stack:
            c = stack.pop()
            for act, succ in self.side.steps(c):
                k = act.kind
                if k == "tick":
                    ticks.add(succ)
                elif k in ("tau", "out") and succ not in seen:
                    seen.add(succ)
                    stack.append(succ)
        got = self.closure(ticks) if ticks else self.intern(())
        self._free[mid] = got
        return got


def _val_eq(a, b) -> bool:
    try:
        return abs(a - b) <= 1e-9
    except TypeError:
        return a == b


def _antichain(layer: list, mac: _Macros) -> list:
    """Per-level pruning: for equal left configurations keep only macro
    sets that are subset-minimal (a smaller right set fails earlier, so it
    dominates for counterexample search and for residual checking)."""
    groups: dict = {}
    for node in layer:
        groups.setdefault(node[0], []).append(node[1])
    keep = []
    for node in layer:
        l, mid = node
        mids = groups[l]
        if len(mids) == 1:
            keep.append(node)
            continue
        s = mac.members(mid)
        dominated = False
        for other in mids:
            if other == mid:
                continue
            o = mac.members(other)
            if o < s or (o == s and other < mid):
                dominated = True
                break
        if not dominated:
            keep.append(node)
    return keep


# ---------------------------------------------------------------------------
# trace inclusion


def trace_inclusion(left: CpsModel, right: CpsModel, horizon: int = 40,
                    grid: int = 3, *, budget: int = DEFAULT_BUDGET,
                    recovery: bool = True) -> Verdict:
    """Bounded deadlock-sensitive weak-trace inclusion of ``left`` in
    ``right`` under the same grid resolver.

    Returns ``HoldsToBound`` when every observable trace of the left
    system with at most ``horizon`` slots is weakly matched, else a
    ``Mismatch`` whose ``m_prime`` is the slot of the first unmatched
    observable (one plus the tick count of the shortest failing trace).
    With ``recovery=True`` the search continues past the mismatch and
    reports the last divergent slot, or ``None`` when the divergence
    persists to the horizon.
    """
    guard = _Budget(budget)
    lside = _Side(left, grid, guard)
    rside = _Side(right, grid, guard)
    mac = _Macros(rside, guard)

    root = (lside.initial(), mac.closure((rside.initial(),)))
    parents: dict = {root: None}
    layer = [root]
    fail_node = fail_act = None
    fail_slot = 0

    for slot in range(1, horizon + 1):
        layer = _antichain(layer, mac)
        nxt: list = []
        stack = list(layer)
        while stack:
            node = stack.pop()
            l, mid = node
            for act, succ in lside.steps(l):
                k = act.kind
                if k == "tau":
                    node2 = (succ, mid)
                elif k == "out":
                    mid2 = mac.weak_out(mid, act.chan, act.value)
                    if mid2 is None:
                        fail_node, fail_act = node, act
                        break
                    node2 = (succ, mid2)
                elif k == "unsafe":
                    mid2 = mac.weak_unsafe(mid)
                    if mid2 is None:
                        fail_node, fail_act = node, act
                        break
                    if mid2 == mid:
                        continue  # matched, no information gained
                    node2 = (l, mid2)
                elif k == "dead":
                    if not mac.has_dead(mid):
                        fail_node, fail_act = node, act
                        break
                    continue  # matched; deadlock is absorbing on both sides
                else:  # tick
                    mid2 = mac.weak_tick(mid)
                    if mid2 is None:
                        fail_node, fail_act = node, act
                        break
                    node2 = (succ, mid2)
                    if node2 not in parents:
                        parents[node2] = (node, act)
                        nxt.append(node2)
                    continue
                if node2 not in parents:
                    parents[node2] = (node, act)
                    stack.append(node2)
            if fail_node is not None:
                break
        if fail_node is not None:
            fail_slot = slot
            break
        if not nxt:
            return HoldsToBound(horizon, nodes=guard.count)
        layer = nxt
    else:
        return HoldsToBound(horizon, nodes=guard.count)

    m_prime = fail_slot + (1 if fail_act.kind == "tick" else 0)
    witness = _build_witness(parents, fail_node, fail_act, m_prime)

    rec: Optional[int] = None
    if recovery:
        rec = _recovery_slot(lside, mac, layer, fail_slot, m_prime, horizon)
    return Mismatch(m_prime=m_prime, witness=witness, recovery=rec,
                    horizon=horizon, nodes=guard.count)


def _build_witness(parents: dict, node, fail_act: SysAction,
                   m_prime: int) -> Witness:
    chain = []
    cur = node
    while parents[cur] is not None:
        parent, act = parents[cur]
        slot = cur[0].slot - 1 if act.kind == "tick" else cur[0].slot
        chain.append(WitnessStep(slot=slot, action=act, after=cur[0]))
        cur = parent
    chain.reverse()
    return Witness(steps=tuple(chain), unmatched=fail_act, slot=m_prime)


def _recovery_slot(lside: _Side, mac: _Macros, entry_layer: list,
                   fail_slot: int, m_prime: int, horizon: int) -> Optional[int]:
    """Resume the level search after the mismatch: inside the window the
    right system free-runs; recovery is declared at the first slot from
    which every surviving pair passes a strict residual inclusion check
    for the full remaining horizon."""
    pairs = set(entry_layer)
    memo: dict = {}
    for s in range(fail_slot + 1, horizon + 1):
        pairs = _advance_pairs(lside, mac, pairs)
        if all(_residual_ok(lside, mac, node, horizon, memo)
               for node in sorted(pairs, key=_pair_key)):
            return max(s - 1, m_prime)
    return None


def _pair_key(node) -> tuple:
    return (node[1], node[0].slot)


def _advance_pairs(lside: _Side, mac: _Macros, pairs: set) -> set:
    out = set()
    for l, mid in pairs:
        fmid = mac.free_run(mid)
        seen = {l}
        stack = [l]
        while stack:
            c = stack.pop()
            for act, succ in lside.steps(c):
                k = act.kind
                if k == "tick":
                    out.add((succ, fmid))
                elif k in ("tau", "out") and succ not in seen:
                    seen.add(succ)
                    stack.append(succ)
                # unsafe/dead are self-loops: no new configurations
    return out


def _residual_ok(lside: _Side, mac: _Macros, root, horizon: int,
                 memo: dict) -> bool:
    """Strict weak matching from a (left config, macro) pair to the
    horizon.  On success every visited pair is cached as clean; on failure
    only the root is cached, since its descendants include the failure."""
    cached = memo.get(root)
    if cached is not None:
        return cached
    visited = {root}
    stack = [root]
    while stack:
        node = stack.pop()
        if memo.get(node):
            continue
        l, mid = node
        for act, succ in lside.steps(l):
            k = act.kind
            if k == "tau":
                node2 = (succ, mid)
            elif k == "out":
                mid2 = mac.weak_out(mid, act.chan, act.value)
                if mid2 is None:
                    memo[root] = False
                    return False
                node2 = (succ, mid2)
            elif k == "unsafe":
                mid2 = mac.weak_unsafe(mid)
                if mid2 is None:
                    memo[root] = False
                    return False
                if mid2 == mid:
                    continue
                node2 = (l, mid2)
            elif k == "dead":
                if not mac.has_dead(mid):
                    memo[root] = False
                    return False
                continue
            else:  # tick
                if l.slot >= horizon:
                    continue
                mid2 = mac.weak_tick(mid)
                if mid2 is None:
                    memo[root] = False
                    return False
                node2 = (succ, mid2)
            if node2 not in visited:
                visited.add(node2)
                stack.append(node2)
    for node in visited:
        memo[node] = True
    return True


# ---------------------------------------------------------------------------
# reachability sweeps (single system, no matching)


@dataclass(frozen=True)
class Reachability:
    """Grid-exhaustive reachability facts for one system up to a horizon."""

    horizon: int
    dead: bool
    unsafe: bool
    timelocked: bool
    fired: frozenset  # channels with a reachable output transition
    violation: Optional[Witness]  # earliest dead/unsafe, if any
    nodes: int


def explore(model: CpsModel, horizon: int = 40, grid: int = 3, *,
            budget: int = DEFAULT_BUDGET) -> Reachability:
    """Exhaustive layered sweep collecting deadlock/safety/output facts."""
    guard = _Budget(budget, what="reachability sweep")
    side = _Side(model, grid, guard)
    root = side.initial()
    parents: dict = {root: None}
    layer = [root]
    dead = unsafe = timelocked = False
    fired: set = set()
    violation: Optional[Witness] = None

    for slot in range(1, horizon + 1):
        nxt: list = []
        stack = list(layer)
        while stack:
            cfg = stack.pop()
            steps = side.steps(cfg)
            if not steps:
                timelocked = True
                continue
            for act, succ in steps:
                k = act.kind
                if k == "dead":
                    dead = True
                    if violation is None:
                        violation = _sweep_witness(parents, cfg, act, slot)
                    continue
                if k == "unsafe":
                    unsafe = True
                    if violation is None:
                        violation = _sweep_witness(parents, cfg, act, slot)
                    continue
                if k == "out":
                    fired.add(act.chan)
                if k == "tick":
                    if succ not in parents:
                        parents[succ] = (cfg, act)
                        nxt.append(succ)
                elif succ not in parents:
                    parents[succ] = (cfg, act)
                    stack.append(succ)
        if not nxt:
            break
        layer = nxt
    return Reachability(horizon=horizon, dead=dead, unsafe=unsafe,
                        timelocked=timelocked, fired=frozenset(fired),
                        violation=violation, nodes=guard.count)


def _sweep_witness(parents: dict, cfg: Config, act: SysAction,
                   slot: int) -> Witness:
    chain = []
    cur = cfg
    while parents[cur] is not None:
        parent, a = parents[cur]
        chain.append(WitnessStep(
            slot=cur.slot - 1 if a.kind == "tick" else cur.slot,
            action=a, after=cur))
        cur = parent
    chain.reverse()
    return Witness(steps=tuple(chain), unmatched=act, slot=slot)


@dataclass(frozen=True)
class Sound:
    horizon: int

    def to_json(self) -> dict:
        return {"verdict": "sound", "horizon": self.horizon}


@dataclass(frozen=True)
class CounterTrace:
    witness: Witness

    def to_json(self) -> dict:
        return {"verdict": "counter-trace", "slot": self.witness.slot,
                "kind": self.witness.unmatched.kind,
                "observables": list(self.witness.observables())}


def bounded_soundness(model: CpsModel, horizon: int = 20, grid: int = 3, *,
                      budget: int = DEFAULT_BUDGET):
    """Sound iff no reachable transition is dead or unsafe within bound."""
    r = explore(model, horizon, grid, budget=budget)
    if r.violation is None:
        return Sound(horizon)
    return CounterTrace(r.violation)


# ---------------------------------------------------------------------------
# observable trace enumeration


def observable_traces(model: CpsModel, horizon: int = 12, grid: int = 3, *,
                      budget: int = DEFAULT_BUDGET):
    """Lazily enumerate distinct weak observable-trace prefixes.

    Silent steps are absorbed; each prefix is yielded once, shortest
    first.  Safety/deadlock self-loops contribute one observable per slot
    (repetition within a slot carries no information).
    """
    guard = _Budget(budget, what="trace enumeration")
    side = _Side(model, grid, guard)
    from collections import deque

    root = (side.initial(), (), True)
    queue = deque([root])
    seen = {root}
    yielded = {()}
    yield ()
    while queue:
        cfg, prefix, can_flag = queue.popleft()
        if cfg.slot > horizon:
            continue
        for act, succ in side.steps(cfg):
            k = act.kind
            if k == "tau":
                node = (succ, prefix, can_flag)
            elif k == "dead":
                pre2 = prefix + (act.render(),)
                if pre2 not in yielded:
                    yielded.add(pre2)
                    yield pre2
                continue  # absorbing
            elif k == "unsafe":
                if not can_flag:
                    continue
                pre2 = prefix + (act.render(),)
                if pre2 not in yielded:
                    yielded.add(pre2)
                    yield pre2
                node = (cfg, pre2, False)
            elif k == "tick":
                if cfg.slot >= horizon:
                    continue
                pre2 = prefix + (act.render(),)
                if pre2 not in yielded:
                    yielded.add(pre2)
                    yield pre2
                node = (succ, pre2, True)
            else:  # out / in
                pre2 = prefix + (act.render(),)
                if pre2 not in yielded:
                    yielded.add(pre2)
                    yield pre2
                node = (succ, pre2, can_flag)
            if node not in seen:
                seen.add(node)
                guard.charge()
                queue.append(node)


# ---------------------------------------------------------------------------
# attack classification


@dataclass(frozen=True)
class Tolerant:
    horizon: int

    @property
    def vulnerable(self) -> bool:
        return False

    def to_json(self) -> dict:
        return {"classification": "tolerant", "horizon": self.horizon}


@dataclass(frozen=True)
class Vulnerable:
    m_prime: int
    recovery: Optional[int]
    lethal: bool
    stealthy: bool
    verdict: Mismatch

    @property
    def vulnerable(self) -> bool:
        return True

    def window(self) -> tuple:
        return (self.m_prime, self.recovery)

    def render_window(self) -> str:
        return self.verdict.render_window()

    def to_json(self) -> dict:
        return {"classification": "vulnerable",
                "window": {"m": self.m_prime, "n": self.recovery},
                "lethal": self.lethal, "stealthy": self.stealthy,
                "m_prime": self.m_prime, "recovery": self.recovery,
                "horizon": self.verdict.horizon}


def attach(model: CpsModel, attack) -> CpsModel:
    """Compose an attack (builder result, parsed spec, or raw process)
    with a model."""
    if hasattr(attack, "attach"):
        return attack.attach(model)
    if hasattr(attack, "term"):
        return with_process(model, attack.term, getattr(attack, "defs", None))
    if isinstance(attack, Proc):
        return with_process(model, attack)
    raise TypeError(f"cannot attach {type(attack).__name__} as an attack")


def classify_attack(model: CpsModel, attack, horizon: int = 40,
                    grid: int = 3, *, budget: int = DEFAULT_BUDGET):
    """Tolerant iff inclusion holds to bound; otherwise Vulnerable with the
    mismatch window plus lethality (deadlock reachable under attack) and
    stealthiness (some violation reachable while no alarm output is
    reachable at all within the bound)."""
    attacked = attach(model, attack)
    verdict = trace_inclusion(attacked, model, horizon, grid, budget=budget)
    if isinstance(verdict, HoldsToBound):
        return Tolerant(horizon)
    r = explore(attacked, horizon, grid, budget=budget)
    alarms = set(model.alarm_channels)
    noticed = bool(r.fired & alarms) if alarms else bool(r.fired)
    return Vulnerable(m_prime=verdict.m_prime, recovery=verdict.recovery,
                      lethal=r.dead,
                      stealthy=(r.unsafe or r.dead) and not noticed,
                      verdict=verdict)


# ---------------------------------------------------------------------------
# bisection estimators


@dataclass(frozen=True)
class Bracket:
    """The estimated threshold lies in [lo, hi]."""

    lo: float
    hi: float
    calls: tuple = ()  # (value, holds, m_prime-or-None) per oracle call

    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def to_json(self) -> dict:
        return {"verdict": "bracket", "lo": self.lo, "hi": self.hi,
                "width": self.width(),
                "oracle_calls": [list(c) for c in self.calls]}

    def to_json(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "width": self.width(),
                "oracle_calls": [list(c) for c in self.calls]}


@dataclass(frozen=True)
class NoUpperBound:
    """The oracle did not flip anywhere below the configured maximum."""

    eta_max: float
    calls: tuple = ()

    def to_json(self) -> dict:
        return {"verdict": "no-upper-bound", "eta_max": self.eta_max,
                "oracle_calls": [list(c) for c in self.calls]}


@dataclass(frozen=True)
class BudgetExhausted:
    """The oracle-call budget ran out before the scan either found a
    holding enlargement or exhausted ``eta_max``: inconclusive."""

    scanned_to: float
    eta_max: float
    calls: tuple = ()

    def to_json(self) -> dict:
        return {"verdict": "budget-exhausted", "scanned_to": self.scanned_to,
                "eta_max": self.eta_max,
                "oracle_calls": [list(c) for c in self.calls]}


@dataclass(frozen=True)
class NoMismatchAtSlot:
    """No tested enlargement produces a mismatch exactly at the requested
    slot: the first divergence jumps past it."""

    at_slot: int
    calls: tuple = ()

    def to_json(self) -> dict:
        return {"verdict": "no-mismatch-at-slot", "at_slot": self.at_slot,
                "oracle_calls": [list(c) for c in self.calls]}


class _OracleLog:
    """Logs (value, holds, m') triples and enforces monotonicity of the
    verdict in the parameter: holds must be monotone in ``direction``
    (+1: once it holds it holds above; -1: once it holds it holds below)."""

    def __init__(self, direction: int, what: str):
        self.direction = direction
        self.what = what
        self.entries: list = []

    def add(self, x: float, holds: bool, m_prime: Optional[int]):
        for (x0, h0, _) in self.entries:
            lo_h, hi_h = (h0, holds) if x0 < x else (holds, h0)
            if self.direction > 0 and lo_h and not hi_h:
                self._abort(x)
            if self.direction < 0 and hi_h and not lo_h:
                self._abort(x)
        self.entries.append((x, holds, m_prime))

    def _abort(self, x: float):
        raise NonMonotoneOracle(
            f"non-monotone oracle observation at {x} during {self.what}; "
            f"calls so far: {self.entries}", calls=tuple(self.entries))

    def snapshot(self) -> tuple:
        return tuple(self.entries)


def _inclusion_oracle(left_of: Callable, right_of: Callable, horizon: int,
                      grid: int, budget: int, log: _OracleLog) -> Callable:
    def oracle(x: float) -> bool:
        v = trace_inclusion(left_of(x), right_of(x), horizon, grid,
                            budget=budget, recovery=False)
        holds = isinstance(v, HoldsToBound)
        log.add(x, holds, None if holds else v.m_prime)
        return holds
    return oracle


def _check_direction(model: CpsModel, direction) -> Optional[Mapping]:
    if direction is None:
        return None
    vals = dict(direction)
    names = {v.name for v in model.env.variables}
    unknown = set(vals) - names
    if unknown:
        raise ValueError(f"direction names unknown variables: {sorted(unknown)}")
    if any(d < 0 for d in vals.values()):
        raise ValueError("direction components must be nonnegative")
    if not any(d > 0 for d in vals.values()):
        raise ValueError("direction must be nonzero")
    return vals


def xi_tolerance(model: CpsModel, direction: Optional[Mapping] = None,
                 resolution: float = 0.01, horizon: int = 40, grid: int = 3,
                 *, eta_max: float = 0.64, budget: int = DEFAULT_BUDGET,
                 max_calls: int = MAX_ORACLE_CALLS):
    """Bracket the supremum enlargement eta such that the model with
    uncertainty w + eta*direction stays trace-included in the original.

    Inclusion shrinks as eta grows (more noisy traces on the left), so the
    oracle is monotone decreasing; holding at ``eta_max`` is reported as
    ``NoUpperBound``."""
    direction = _check_direction(model, direction)
    log = _OracleLog(direction=-1, what="tolerance bisection")
    oracle = _inclusion_oracle(
        lambda x: widen_uncertainty(model, x, direction),
        lambda x: model, horizon, grid, budget, log)
    if not oracle(0.0):
        raise NonMonotoneOracle(
            "inclusion fails at enlargement 0 (reflexivity broken)",
            calls=log.snapshot())
    if oracle(eta_max):
        return NoUpperBound(eta_max, calls=log.snapshot())
    lo, hi = 0.0, eta_max
    while hi - lo > resolution and len(log.entries) < max_calls:
        mid = round((lo + hi) / 2, 9)
        if oracle(mid):
            lo = mid
        else:
            hi = mid
    return Bracket(lo, hi, calls=log.snapshot())


def impact_definitive(model: CpsModel, attack,
                      direction: Optional[Mapping] = None,
                      resolution: float = 0.05, horizon: int = 40,
                      grid: int = 3, *, eta_max: float = 12.8,
                      budget: int = DEFAULT_BUDGET,
                      max_calls: int = MAX_ORACLE_CALLS):
    """Bracket the infimum enlargement xi such that the attacked system is
    trace-included in the model widened by xi*direction.

    Over dense noise intervals the set of holding enlargements is upward
    closed, so a doubling scan plus bisection finds its lower edge.  A
    finite grid breaks that closure: the sampled offsets move with the
    enlargement, so the holding set can be an isolated island whose width
    is on the order of the resolution, invisible to any doubling scan.
    The estimator therefore runs two phases: a doubling scan (fast path
    for the monotone geometry), then — if nothing held — a linear sweep at
    resolution granularity.  Either way the returned bracket is
    flip-certified: the lower end was sampled failing, the upper end
    holding, so the infimum of the holding set lies inside it.  Only a
    sweep that exhausts ``eta_max`` without a single hold reports
    ``NoUpperBound``."""
    direction = _check_direction(model, direction)
    attacked = attach(model, attack)
    entries: list = []
    memo: dict = {}

    def oracle(x: float) -> bool:
        if x in memo:
            return memo[x]
        v = trace_inclusion(attacked, widen_uncertainty(model, x, direction),
                            horizon, grid, budget=budget, recovery=False)
        holds = isinstance(v, HoldsToBound)
        entries.append((x, holds, None if holds else v.m_prime))
        memo[x] = holds
        return holds

    if oracle(0.0):
        return Bracket(0.0, 0.0, calls=tuple(entries))
    lo, hi = 0.0, resolution
    while not oracle(hi):
        if hi >= eta_max:
            break
        if len(entries) >= max_calls:
            return BudgetExhausted(hi, eta_max, calls=tuple(entries))
        lo, hi = hi, min(round(hi * 2, 9), eta_max)
    else:
        while hi - lo > resolution and len(entries) < max_calls:
            mid = round((lo + hi) / 2, 9)
            if oracle(mid):
                hi = mid
            else:
                lo = mid
        return Bracket(lo, hi, calls=tuple(entries))
    k = 1
    while True:
        x = round(k * resolution, 9)
        if x > eta_max + 1e-12:
            return NoUpperBound(eta_max, calls=tuple(entries))
        if x not in memo and len(entries) >= max_calls:
            return BudgetExhausted(round((k - 1) * resolution, 9), eta_max,
                                   calls=tuple(entries))
        if oracle(x):
            return Bracket(round(x - resolution, 9), x, calls=tuple(entries))
        k += 1


def impact_pointwise(model: CpsModel, attack, at_slot: int,
                     direction: Optional[Mapping] = None,
                     resolution: float = 0.05, horizon: int = 40,
                     grid: int = 3, *, eta_max: float = 12.8,
                     budget: int = DEFAULT_BUDGET,
                     max_calls: int = MAX_ORACLE_CALLS):
    """Bracket the enlargement at which the first divergence escapes past
    ``at_slot``: at the bracket's lower end the mismatch sits exactly at
    ``at_slot``, at its upper end it has moved strictly later (or the
    inclusion holds outright).

    The first-divergence slot m'(xi) is nondecreasing over dense noise
    intervals but demonstrably jitters on a finite grid, so no bisection
    is trusted here: the estimator sweeps upward at resolution
    granularity and stops at the first escape.  A sweep that exhausts
    ``eta_max`` with the divergence still at or before ``at_slot``
    reports ``NoUpperBound``; an escape whose immediate predecessor
    diverged before ``at_slot`` (the slot was jumped over) reports
    ``NoMismatchAtSlot``."""
    if at_slot > horizon:
        raise ValueError(f"at_slot {at_slot} exceeds horizon {horizon}")
    direction = _check_direction(model, direction)
    attacked = attach(model, attack)
    entries: list = []

    def key(x: float) -> float:
        v = trace_inclusion(attacked, widen_uncertainty(model, x, direction),
                            horizon, grid, budget=budget, recovery=False)
        k = math.inf if isinstance(v, HoldsToBound) else v.m_prime
        entries.append((x, k))
        return k

    def calls() -> tuple:
        return tuple((x, k == math.inf, None if k == math.inf else int(k))
                     for x, k in entries)

    prev_x, prev_k = 0.0, key(0.0)
    if prev_k > at_slot:
        return NoMismatchAtSlot(at_slot, calls=calls())
    k = 1
    while True:
        x = round(k * resolution, 9)
        if x > eta_max + 1e-12:
            return NoUpperBound(eta_max, calls=calls())
        if len(entries) >= max_calls:
            return BudgetExhausted(prev_x, eta_max, calls=calls())
        kx = key(x)
        if kx > at_slot:
            if prev_k == at_slot:
                return Bracket(prev_x, x, calls=calls())
            return NoMismatchAtSlot(at_slot, calls=calls())
        prev_x, prev_k = x, kx
        k += 1


__all__ = [
    "DEFAULT_BUDGET", "MAX_ORACLE_CALLS", "NonMonotoneOracle",
    "WitnessStep", "Witness", "HoldsToBound", "Mismatch", "Verdict",
    "Reachability", "explore", "Sound", "CounterTrace", "bounded_soundness",
    "observable_traces", "Tolerant", "Vulnerable", "attach",
    "classify_attack", "Bracket", "NoUpperBound", "NoMismatchAtSlot",
    "BudgetExhausted", "trace_inclusion", "xi_tolerance",
    "impact_definitive", "impact_pointwise",
]
