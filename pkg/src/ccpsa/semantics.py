"""Operational semantics: process LTS, system LTS, resolvers and runs.

Two layers, mirroring the calculus:

* the *process* layer steps terms against action labels (channel I/O,
  sensor reads, actuator writes, malicious sniff/drop/forge, tick);
  input-like transitions are value-parametric — they carry a binder that
  the system layer instantiates;
* the *system* layer pairs a process with a physical state, lifts process
  transitions (applying the integrity/preemption premises), applies the
  environment's evolution at each tick, and adds the deadlock and safety
  self-loops.

Timing discipline: output prefixes, reads, writes and malicious prefixes
are insistent (they cannot let time pass), while input prefixes are
patient (they idle across ticks).  That asymmetry is what pins handshakes
to exact slots: a ready sender blocks the tick until the exchange happens.
There is no maximal-progress assumption; a lint flags states where a tick
and an internal action compete, since that is where model timing can
silently drift.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .core import (
    And, Call, ChIn, ChOut, Choice, Cmp, Cond,
    CpsModel, InvalidHorizon, ModelError, Name, Nil, Num, Par, PhysState,
    Proc, ReadS, Restrict, Sleep, StateSpaceBlowup, TimeoutDrop,
    TimeoutForge, TimeoutSniff, UnboundDefinition, WriteA, compile_expr,
    compile_pred, eval_expr, eval_pred, invariant_holds, quant, safety_holds,
    state_bindings, subst, Rnd, Bin, Neg, Fn, Ite,
)

# re-export-friendly label kind constants
TICK, TAU, OUT, IN, READ, WRITE, SNIFF, DROP, FORGE = (
    "tick", "tau", "out", "in", "read", "write", "sniff", "drop", "forge")

#: payload marker for a forge whose value is drawn by the resolver
RND = object()


@dataclass(frozen=True)
class PLabel:
    """A process-level transition label.

    ``dev`` names the channel/sensor/actuator involved; ``value`` is the
    payload for outputs/writes/forges (``None`` on value-parametric
    labels, whose transition carries a binder instead).  ``mal`` tags the
    malicious activity a label spends, including the silent synchroniser
    labels produced by drop-write and forge-read pairs.
    """

    kind: str
    dev: str = ""
    value: object = None
    mal: object = None  # (device, "?"|"!") or None

    def render(self) -> str:
        if self.kind == TICK:
            return "tick"
        if self.kind == TAU:
            return "tau"
        if self.kind == OUT:
            return f"{self.dev}!{self.value}"
        if self.kind == IN:
            return f"{self.dev}?({self.value if self.value is not None else '*'})"
        if self.kind == READ:
            return f"read {self.dev}(*)"
        if self.kind == WRITE:
            return f"write {self.dev}({self.value})"
        if self.kind == SNIFF:
            return f"sniff {self.dev}(*)"
        if self.kind == DROP:
            return f"drop {self.dev}(*)"
        if self.kind == FORGE:
            v = "rnd" if self.value is RND else self.value
            return f"forge {self.dev}({v})"
        return self.kind


@dataclass(frozen=True)
class PTrans:
    """A process transition: label, optional binder, target term.

    When ``binder`` is set the target is an open term; instantiate it with
    ``subst(term, {binder: v})`` once the value ``v`` is known.
    """

    label: PLabel
    binder: Optional[str]
    term: Proc


TICK_LABEL = PLabel(TICK)
TAU_LABEL = PLabel(TAU)


# ---------------------------------------------------------------------------
# resolvers


class Grid:
    """Exhaustive resolver: g evenly spaced points per error interval.

    g = 2 picks the interval endpoints; higher g adds interior points
    (g = 3 is endpoints plus the centre).  Zero-width intervals always
    resolve to the single offset 0.
    """

    exhaustive = True

    def __init__(self, g: int = 3):
        if g < 2:
            raise ValueError("grid resolution must be at least 2")
        self.g = g
        self._offsets: dict = {}

    def offsets(self, w: float) -> tuple:
        out = self._offsets.get(w)
        if out is None:
            if w == 0:
                out = (0.0,)
            else:
                step = 2 * w / (self.g - 1)
                out = tuple(quant(-w + step * i) for i in range(self.g))
            self._offsets[w] = out
        return out

    def rnd_values(self, lo: float, hi: float) -> tuple:
        return tuple(sorted({quant(lo), quant((lo + hi) / 2), quant(hi)}))


class Sampler:
    """Probabilistic resolver: uniform draws from a seeded generator.

    One Sampler drives a single run; every source of nondeterminism
    (physical offsets, action choice, internal choice, rnd payloads) pulls
    from the same stream, so a (seed, model, horizon) triple fully
    determines the run.
    """

    exhaustive = False

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = random.Random(seed)

    def offsets(self, w: float) -> tuple:
        if w == 0:
            return (0.0,)
        return (quant(self.rng.uniform(-w, w)),)

    def rnd_values(self, lo: float, hi: float) -> tuple:
        return (quant(self.rng.uniform(lo, hi)),)

    def pick(self, items: Sequence):
        return items[self.rng.randrange(len(items))]


def child_seed(seed: int, index: int) -> int:
    """Derive a per-run seed; stable across worker partitioning."""
    return (seed * 0x9E3779B97F4A7C15 + index * 0xBF58476D1CE4E5B9 + 1) % (1 << 63)


# ---------------------------------------------------------------------------
# configurations and actions


@dataclass(frozen=True)
class Config:
    """A system configuration: process term, physical state, slot number.

    ``used`` records the malicious activities already spent in the current
    slot (each may fire at most once per slot); it resets at every tick.
    """

    proc: Proc
    state: PhysState
    slot: int
    used: frozenset = frozenset()


@dataclass(frozen=True)
class SysAction:
    kind: str  # tau | out | in | tick | dead | unsafe
    chan: str = ""
    value: Optional[float] = None
    # True when the step spends a malicious activity (sniff, forge, or a
    # drop/forge synchronisation).  Sampled runs give these steps priority
    # within the slot: a man-in-the-middle sits between device and logic,
    # so its interception is structural, not a scheduling race.  Exhaustive
    # exploration enumerates every order and ignores the flag.
    mal: bool = False

    def render(self) -> str:
        if self.kind == OUT:
            return f"{self.chan}!{self.value}"
        if self.kind == IN:
            return f"{self.chan}?{self.value}"
        return self.kind


DEAD = SysAction("dead")
UNSAFE = SysAction("unsafe")
TICK_ACTION = SysAction("tick")


# ---------------------------------------------------------------------------
# the stepping engine


def _invariant_bounds(model: CpsModel, var: str):
    """Best-effort [lo, hi] for a variable from invariant conjuncts."""
    lo, hi = -1e6, 1e6

    def walk(p):
        nonlocal lo, hi
        if isinstance(p, And):
            walk(p.left)
            walk(p.right)
            return
        if isinstance(p, Cmp):
            l, r = p.left, p.right
            if isinstance(l, Name) and l.id == var and isinstance(r, Num):
                if p.op in ("<", "<="):
                    hi = min(hi, r.value)
                elif p.op in (">", ">="):
                    lo = max(lo, r.value)
            elif isinstance(r, Name) and r.id == var and isinstance(l, Num):
                if p.op in ("<", "<="):
                    lo = max(lo, l.value)
                elif p.op in (">", ">="):
                    hi = min(hi, l.value)

    walk(model.env.invariant)
    return lo, hi


MAX_UNFOLD = 512


def _term_has_rnd(p: Proc) -> bool:
    from .core import _children, MALICIOUS_TIMEOUTS  # local to avoid cycle noise
    exprs = []
    if isinstance(p, (ChOut, WriteA)):
        exprs.append(p.expr)
    elif isinstance(p, TimeoutForge):
        exprs.append(p.expr)
    elif isinstance(p, Call):
        exprs.extend(p.args)
    for e in exprs:
        if Stepper._contains_rnd(e):
            return True
    return any(_term_has_rnd(c) for c in _children(p))


def _has_rnd(model: CpsModel) -> bool:
    if _term_has_rnd(model.main):
        return True
    return any(_term_has_rnd(d.body) for d in model.defs.values())


class Stepper:
    """Caches process-level transition tables for one model + resolver.

    Process terms form a small finite space in practice (recursion
    unfolds to previously seen terms), so memoising ``proc_steps`` turns
    the system-level exploration into cheap table lookups.
    """

    def __init__(self, model: CpsModel, resolver=None, closed_world: bool = True):
        self.model = model
        self.resolver = resolver if resolver is not None else Grid(3)
        self.closed_world = closed_world
        self.consts = model.const_env()
        self._psteps: dict = {}
        self._resolutions: dict = {}
        # transition tables are pure unless a sampling resolver draws rnd
        # payloads, so caching is safe on grids and on rnd-free models
        self._rnd_static = isinstance(self.resolver, Grid) or not _has_rnd(model)
        self._rnd_cache: dict = {}
        self._inv_cache: dict = {}
        self._safe_cache: dict = {}
        self._inv_fn = compile_pred(model.env.invariant, self.consts)
        self._safe_fn = compile_pred(model.env.safety, self.consts)
        self._evol_fns = tuple(compile_expr(v.evol, self.consts)
                               for v in model.env.variables)

    def _invariant(self, st: PhysState) -> bool:
        v = self._inv_cache.get(st)
        if v is None:
            v = self._inv_fn(state_bindings(self.model, st))
            self._inv_cache[st] = v
        return v

    def _safety(self, st: PhysState) -> bool:
        v = self._safe_cache.get(st)
        if v is None:
            v = self._safe_fn(state_bindings(self.model, st))
            self._safe_cache[st] = v
        return v

    # -- rnd payload candidates -----------------------------------------

    def rnd_candidates(self, device: str) -> tuple:
        if self._rnd_static and device in self._rnd_cache:
            return self._rnd_cache[device]
        if self.model.is_actuator(device):
            # actuator commands are the two signed constants
            if getattr(self.resolver, "exhaustive", False):
                vals = (-1.0, 1.0)
            else:
                vals = self.resolver.rnd_values(-1.0, 1.0)
        else:
            src = self.model.env.sensors[self.model.sensor_index(device)].source
            lo, hi = _invariant_bounds(self.model, src)
            vals = self.resolver.rnd_values(lo, hi)
        if self._rnd_static:
            self._rnd_cache[device] = vals
        return vals

    # -- process layer ----------------------------------------------------

    def proc_steps(self, p: Proc) -> tuple:
        """All process transitions of ``p`` (Table of process rules)."""
        cached = self._psteps.get(p)
        if cached is not None:
            return cached
        out = self._steps(p, MAX_UNFOLD)
        if self._rnd_static:
            self._psteps[p] = out
        return out

    def _eval(self, e, device: Optional[str] = None):
        """Evaluate a ground payload expression; expand rnd via resolver."""
        has_rnd = self._contains_rnd(e)
        if not has_rnd:
            return (eval_expr(e, {}, self.consts),)
        vals = []
        for v in self.rnd_candidates(device or ""):
            vals.append(eval_expr(e, {}, self.consts, rnd_resolver=lambda v=v: v))
        return tuple(dict.fromkeys(vals))

    @staticmethod
    def _contains_rnd(e) -> bool:
        if isinstance(e, Rnd):
            return True
        if isinstance(e, Bin):
            return Stepper._contains_rnd(e.left) or Stepper._contains_rnd(e.right)
        if isinstance(e, Neg):
            return Stepper._contains_rnd(e.arg)
        if isinstance(e, Fn):
            return any(Stepper._contains_rnd(a) for a in e.args)
        if isinstance(e, Ite):
            return Stepper._contains_rnd(e.then) or Stepper._contains_rnd(e.els)
        return False

    def _steps(self, p: Proc, fuel: int) -> tuple:
        if fuel <= 0:
            raise StateSpaceBlowup("recursion does not reach an action prefix")
        if isinstance(p, Nil):
            # time passes over the terminated process
            return (PTrans(TICK_LABEL, None, p),)
        if isinstance(p, Sleep):
            return (PTrans(TICK_LABEL, None, p.cont),)
        if isinstance(p, ChOut):
            vals = self._eval(p.expr, p.chan)
            # outputs are insistent: no tick transition
            return tuple(PTrans(PLabel(OUT, p.chan, v), None, p.cont) for v in vals)
        if isinstance(p, ChIn):
            # inputs are patient: they can fire or idle through the tick
            return (PTrans(PLabel(IN, p.chan), p.var, p.cont),
                    PTrans(TICK_LABEL, None, p))
        if isinstance(p, ReadS):
            return (PTrans(PLabel(READ, p.sensor), p.var, p.cont),)
        if isinstance(p, WriteA):
            vals = self._eval(p.expr, p.act)
            return tuple(PTrans(PLabel(WRITE, p.act, v), None, p.cont) for v in vals)
        if isinstance(p, TimeoutSniff):
            return (PTrans(PLabel(SNIFF, p.sensor, mal=(p.sensor, "?")), p.var, p.body),
                    PTrans(TICK_LABEL, None, p.alt))
        if isinstance(p, TimeoutDrop):
            return (PTrans(PLabel(DROP, p.act, mal=(p.act, "?")), p.var, p.body),
                    PTrans(TICK_LABEL, None, p.alt))
        if isinstance(p, TimeoutForge):
            vals = self._eval(p.expr, p.target)
            mu = tuple(PTrans(PLabel(FORGE, p.target, v, mal=(p.target, "!")), None, p.body)
                       for v in vals)
            return mu + (PTrans(TICK_LABEL, None, p.alt),)
        if isinstance(p, Cond):
            branch = p.then if eval_pred(p.pred, {}, self.consts) else p.els
            return self._steps(branch, fuel - 1)
        if isinstance(p, Choice):
            # internal choice: both resolutions stay available; a sampled
            # run commits when it picks a transition
            return self._steps(p.left, fuel - 1) + self._steps(p.right, fuel - 1)
        if isinstance(p, Call):
            d = self.model.defs.get(p.name)
            if d is None:
                raise UnboundDefinition(f"no definition for {p.name!r}")
            if len(d.params) != len(p.args):
                raise UnboundDefinition(
                    f"{p.name!r} expects {len(d.params)} arguments, got {len(p.args)}")
            env = {prm: eval_expr(a, {}, self.consts)
                   for prm, a in zip(d.params, p.args)}
            return self._steps(subst(d.body, env), fuel - 1)
        if isinstance(p, Restrict):
            inner = self.cached_steps(p.body, fuel)
            out = []
            for t in inner:
                if t.label.kind in (OUT, IN) and t.label.dev == p.chan:
                    continue
                out.append(PTrans(t.label, t.binder, Restrict(p.chan, t.term)))
            return tuple(out)
        if isinstance(p, Par):
            return self._par_steps(p, fuel)
        raise TypeError(p)

    def cached_steps(self, p: Proc, fuel: int) -> tuple:
        cached = self._psteps.get(p)
        if cached is not None:
            return cached
        out = self._steps(p, fuel)
        if self._rnd_static:
            self._psteps[p] = out
        return out

    def _par_steps(self, p: Par, fuel: int) -> tuple:
        ls = self.cached_steps(p.left, fuel)
        rs = self.cached_steps(p.right, fuel)
        out = []
        # interleaving (everything except tick)
        for t in ls:
            if t.label.kind != TICK:
                out.append(PTrans(t.label, t.binder, Par(t.term, p.right)))
        for t in rs:
            if t.label.kind != TICK:
                out.append(PTrans(t.label, t.binder, Par(p.left, t.term)))
        # synchronisations
        for a, b, flip in ((ls, rs, False), (rs, ls, True)):
            for lo in a:
                k = lo.label.kind
                if k == OUT:
                    for ri in b:
                        if ri.label.kind == IN and ri.label.dev == lo.label.dev:
                            cont = subst(ri.term, {ri.binder: lo.label.value})
                            pair = (cont, lo.term) if flip else (lo.term, cont)
                            out.append(PTrans(TAU_LABEL, None, Par(*pair)))
                elif k == WRITE:
                    # a pending malicious drop steals the write
                    for ri in b:
                        if ri.label.kind == DROP and ri.label.dev == lo.label.dev:
                            cont = subst(ri.term, {ri.binder: lo.label.value})
                            pair = (cont, lo.term) if flip else (lo.term, cont)
                            out.append(PTrans(PLabel(TAU, mal=ri.label.mal), None, Par(*pair)))
                elif k == FORGE:
                    # a forged sensor value reaches an honest reader
                    for ri in b:
                        if ri.label.kind == READ and ri.label.dev == lo.label.dev \
                                and lo.label.value is not RND:
                            cont = subst(ri.term, {ri.binder: lo.label.value})
                            pair = (cont, lo.term) if flip else (lo.term, cont)
                            out.append(PTrans(PLabel(TAU, mal=lo.label.mal), None, Par(*pair)))
        # time passes only when both components let it
        for lt in ls:
            if lt.label.kind != TICK:
                continue
            for rt in rs:
                if rt.label.kind == TICK:
                    out.append(PTrans(TICK_LABEL, None, Par(lt.term, rt.term)))
        return tuple(out)

    # -- physics ----------------------------------------------------------

    def next_states(self, st: PhysState) -> list:
        """All successor physical states for one tick.

        Variable updates are simultaneous: every evolution expression is
        evaluated on the pre-tick state, then the per-variable offsets are
        applied.  Sensors re-measure from the *new* variable values with
        their own error offsets.  Actuators persist.
        """
        model = self.model
        binds = state_bindings(model, st)
        bases = [f(binds) for f in self._evol_fns]
        var_offs = [self.resolver.offsets(v.uncertainty) for v in model.env.variables]
        out = []
        names = model.env.var_names()
        for combo in product(*var_offs) if var_offs else ((),):
            xs = tuple(quant(b + o) for b, o in zip(bases, combo))
            xm = dict(zip(names, xs))
            sens_offs = [tuple(quant(xm[s.source] + e)
                               for e in self.resolver.offsets(s.error))
                         for s in model.env.sensors]
            for scombo in product(*sens_offs) if sens_offs else ((),):
                out.append(PhysState(xs, tuple(scombo), st.acts))
        return out

    # -- internal choice resolution ----------------------------------------

    def resolutions(self, p: Proc, fuel: int = MAX_UNFOLD) -> tuple:
        """Choice-free variants of ``p``: every way to commit the internal
        choices visible at the surface of the term.

        Conditionals and calls are transparent (their guards/arguments are
        ground in closed terms), so the returned terms expose their action
        prefixes directly.  The system layer evaluates its preemption
        premises per resolution: an offer in one branch of a choice must
        not block honest actions in the other.
        """
        cached = self._resolutions.get(p)
        if cached is not None:
            return cached
        if fuel <= 0:
            raise StateSpaceBlowup("recursion does not reach an action prefix")
        if isinstance(p, Choice):
            left = self.resolutions(p.left, fuel - 1)
            right = self.resolutions(p.right, fuel - 1)
            out = tuple(dict.fromkeys(left + right))
        elif isinstance(p, Par):
            out = tuple(Par(l, r)
                        for l in self.resolutions(p.left, fuel - 1)
                        for r in self.resolutions(p.right, fuel - 1))
        elif isinstance(p, Restrict):
            out = tuple(Restrict(p.chan, b) for b in self.resolutions(p.body, fuel - 1))
        elif isinstance(p, Cond):
            branch = p.then if eval_pred(p.pred, {}, self.consts) else p.els
            out = self.resolutions(branch, fuel - 1)
        elif isinstance(p, Call):
            d = self.model.defs.get(p.name)
            if d is None:
                raise UnboundDefinition(f"no definition for {p.name!r}")
            env = {prm: eval_expr(a, {}, self.consts)
                   for prm, a in zip(d.params, p.args)}
            out = self.resolutions(subst(d.body, env), fuel - 1)
        else:
            out = (p,)
        self._resolutions[p] = out
        return out

    # -- system layer -------------------------------------------------------

    def sys_steps(self, cfg: Config) -> tuple:
        """All system transitions from a configuration.

        Returns (action, successor) pairs.  The deadlock self-loop is the
        *only* transition when the invariant fails; the safety self-loop
        is appended alongside normal transitions when safety fails; an
        empty result is a timelock (the caller decides how to report it).
        Internal choices are committed first; actions are collected across
        all resolutions.
        """
        st = cfg.state
        if not self._invariant(st):
            return ((DEAD, cfg),)
        out = []
        seen = set()
        for r in self.resolutions(cfg.proc):
            for pair in self._resolved_steps(Config(r, st, cfg.slot, cfg.used)):
                if pair not in seen:
                    seen.add(pair)
                    out.append(pair)
        if not self._safety(st):
            out.append((UNSAFE, cfg))
        return tuple(out)

    def _resolved_steps(self, cfg: Config) -> tuple:
        """Transitions of a choice-free configuration (invariant holds)."""
        model = self.model
        st = cfg.state
        ptrans = self.proc_steps(cfg.proc)
        forged = set()
        dropped = set()
        for t in ptrans:
            # offers already spent this slot no longer preempt anything
            if t.label.kind == FORGE and model.is_sensor(t.label.dev) \
                    and t.label.mal not in cfg.used:
                forged.add(t.label.dev)
            elif t.label.kind == DROP and t.label.mal not in cfg.used:
                dropped.add(t.label.dev)

        out = []
        tick_targets = []
        for t in ptrans:
            lbl = t.label
            k = lbl.kind
            if k == TICK:
                tick_targets.append(t.term)
            elif k == OUT:
                out.append((SysAction(OUT, lbl.dev, lbl.value),
                            Config(t.term, st, cfg.slot, cfg.used)))
            elif k == TAU:
                if lbl.mal is not None and lbl.mal in cfg.used:
                    continue
                used = cfg.used | {lbl.mal} if lbl.mal is not None else cfg.used
                out.append((SysAction(TAU, mal=lbl.mal is not None),
                            Config(t.term, st, cfg.slot, used)))
            elif k == READ:
                # an offered forge on the same sensor preempts honest reads
                if lbl.dev in forged:
                    continue
                v = st.sensors[model.sensor_index(lbl.dev)]
                cont = subst(t.term, {t.binder: v})
                out.append((SysAction(TAU), Config(cont, st, cfg.slot, cfg.used)))
            elif k == SNIFF:
                if lbl.mal in cfg.used:
                    continue
                v = st.sensors[model.sensor_index(lbl.dev)]
                cont = subst(t.term, {t.binder: v})
                out.append((SysAction(TAU, mal=True),
                            Config(cont, st, cfg.slot, cfg.used | {lbl.mal})))
            elif k == WRITE:
                # an offered malicious drop preempts the genuine write
                if lbl.dev in dropped:
                    continue
                i = model.actuator_index(lbl.dev)
                acts = st.acts[:i] + (quant(lbl.value),) + st.acts[i + 1:]
                out.append((SysAction(TAU),
                            Config(t.term, PhysState(st.xs, st.sensors, acts),
                                   cfg.slot, cfg.used)))
            elif k == FORGE:
                # a standalone forge only has system-level effect on an
                # actuator; forged sensor values travel through readers
                if model.is_actuator(lbl.dev):
                    if lbl.mal in cfg.used:
                        continue
                    i = model.actuator_index(lbl.dev)
                    acts = st.acts[:i] + (quant(lbl.value),) + st.acts[i + 1:]
                    out.append((SysAction(TAU, mal=True),
                                Config(t.term, PhysState(st.xs, st.sensors, acts),
                                       cfg.slot, cfg.used | {lbl.mal})))
            elif k == IN:
                # closed world: no environment inputs during exploration
                continue
            elif k == DROP:
                # a drop with no matching write never fires on its own
                continue

        if tick_targets:
            targets = list(dict.fromkeys(tick_targets))
            for st2 in self.next_states(st):
                for term in targets:
                    out.append((TICK_ACTION, Config(term, st2, cfg.slot + 1)))
        return tuple(out)

    def input_actions(self, cfg: Config, inputs: Mapping) -> tuple:
        """External-input transitions offered by a simulation input script.

        ``inputs`` maps slot -> {channel: value}; each entry enables one
        environment-provided input in that slot.
        """
        todo = inputs.get(cfg.slot) or {}
        if not todo:
            return ()
        out = []
        for t in self.proc_steps(cfg.proc):
            if t.label.kind == IN and t.label.dev in todo:
                v = quant(float(todo[t.label.dev]))
                cont = subst(t.term, {t.binder: v})
                out.append((SysAction(IN, t.label.dev, v),
                            Config(cont, cfg.state, cfg.slot, cfg.used)))
        return tuple(out)

    def initial(self) -> Config:
        return Config(self.model.main, self.model.initial_state(), 1)


# ---------------------------------------------------------------------------
# runs


@dataclass
class SlotSnapshot:
    """What a formula can see about one time slot, once it has closed."""

    slot: int
    state: Mapping[str, float]
    unsafe: bool
    deadlocked: bool
    fired: frozenset
    wrote: Mapping[str, float]  # actuator -> last value written this slot


@dataclass
class RunResult:
    records: list
    snapshots: list
    deadlocked: bool
    timelocked: bool
    unsafe_seen: bool
    fired: frozenset
    warnings: tuple = ()


def _state_map(model: CpsModel, st: PhysState) -> dict:
    m = {}
    for v, x in zip(model.env.variables, st.xs):
        m[v.name] = x
    for s, x in zip(model.env.sensors, st.sensors):
        m[s.name] = x
    for a, x in zip(model.env.actuators, st.acts):
        m[a.name] = x
    return m


def run(model: CpsModel, horizon: int, seed: int = 0,
        sampler: Optional[Sampler] = None,
        inputs: Optional[Mapping] = None,
        collect_records: bool = True,
        lint: bool = False) -> RunResult:
    """Execute one sampled run up to ``horizon`` slots.

    Within a slot, enabled actions are chosen uniformly; the deadlock
    self-loop is absorbing (the run stops after reporting it); the safety
    self-loop is reported at most once per slot and never consumes the
    scheduler's turn.
    """
    if horizon < 1:
        raise InvalidHorizon(f"horizon must be positive, got {horizon}")
    smp = sampler or Sampler(seed)
    stepper = Stepper(model, smp)
    cfg = stepper.initial()
    records: list = []
    snapshots: list = []
    fired: set = set()
    wrote: dict = {}
    deadlocked = timelocked = False
    unsafe_this_slot = False
    unsafe_seen = False
    warnings = []

    def record(action: SysAction, state: PhysState, slot: int):
        if not collect_records:
            return
        rec = {"slot": slot, "action": action.kind}
        if action.kind in (OUT, IN):
            rec["channel"] = action.chan
            rec["value"] = action.value
        rec["state"] = _state_map(model, state)
        rec["flags"] = {"deadlocked": deadlocked, "unsafe_seen": unsafe_seen,
                        "fired": sorted(fired)}
        records.append(rec)

    def close_slot(state: PhysState, slot: int, dead: bool):
        snapshots.append(SlotSnapshot(
            slot=slot,
            state=_state_map(model, state),
            unsafe=not stepper._safety(state),
            deadlocked=dead,
            fired=frozenset(fired),
            wrote=dict(wrote)))

    while cfg.slot <= horizon:
        # commit internal choices for this step before weighing actions
        resos = stepper.resolutions(cfg.proc)
        if len(resos) > 1:
            cfg = Config(smp.pick(resos), cfg.state, cfg.slot, cfg.used)
        steps = list(stepper.sys_steps(cfg))
        if inputs:
            steps.extend(stepper.input_actions(cfg, inputs))
        if steps and steps[0][0].kind == "dead":
            deadlocked = True
            unsafe_seen = unsafe_seen or not stepper._safety(cfg.state)
            record(DEAD, cfg.state, cfg.slot)
            close_slot(cfg.state, cfg.slot, True)
            break
        progress = []
        saw_unsafe = False
        for act, nxt in steps:
            if act.kind == "unsafe":
                saw_unsafe = True
            else:
                progress.append((act, nxt))
        if saw_unsafe and not unsafe_this_slot:
            unsafe_this_slot = True
            unsafe_seen = True
            record(UNSAFE, cfg.state, cfg.slot)
        if not progress:
            timelocked = True
            record(SysAction("timelock"), cfg.state, cfg.slot)
            break
        if lint:
            kinds = {a.kind for a, _ in progress}
            if "tick" in kinds and ("tau" in kinds or "out" in kinds):
                warnings.append(("progress-lint", cfg.slot))
        # a present attacker intercepts before honest steps proceed
        pool = [pr for pr in progress if pr[0].mal] or progress
        act, nxt = pool[0] if len(pool) == 1 else smp.pick(pool)
        if act.kind == "tick":
            close_slot(cfg.state, cfg.slot, False)
            record(act, nxt.state, cfg.slot)
            unsafe_this_slot = False
            wrote = {}
        else:
            if act.kind == OUT:
                fired.add(act.chan)
            if act.kind == TAU and nxt.state.acts != cfg.state.acts:
                for a, old, new in zip(model.env.actuators, cfg.state.acts, nxt.state.acts):
                    if old != new:
                        wrote[a.name] = new
            record(act, nxt.state, cfg.slot)
        cfg = nxt

    return RunResult(records=records, snapshots=snapshots,
                     deadlocked=deadlocked, timelocked=timelocked,
                     unsafe_seen=unsafe_seen, fired=frozenset(fired),
                     warnings=tuple(warnings))


def trace_jsonl(result: RunResult) -> str:
    """Serialise run records as JSON lines with a stable field order."""
    lines = []
    for rec in result.records:
        lines.append(json.dumps(rec, sort_keys=False))
    return "\n".join(lines) + ("\n" if lines else "")
