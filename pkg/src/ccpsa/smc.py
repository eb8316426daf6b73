"""Statistical model checking of timed properties over sampled runs.

A timed formula is checked against a batch of independently seeded runs;
the fraction of satisfying runs estimates the probability that the system
satisfies the property, with a two-sided Chernoff--Hoeffding guarantee:
``required_runs(alpha, epsilon)`` runs suffice for the estimate to sit
within ``epsilon`` of the true probability with confidence ``1 - alpha``.

Formulas observe one closed slot at a time through its snapshot.  The
*clock* of a snapshot is its index in the run: clock ``c`` sees the state
that slot ``c+1`` started from (the initial state at clock 0) together
with the events of slot ``c+1``.  ``always[t1,t2] p`` demands ``p`` at
every clock in ``[t1, t2]``; ``eventually[0,t2] p`` demands ``p`` at some
clock in ``[0, t2]``.  A deadlocked run keeps its final snapshot forever
(the plant is stuck, so later clocks see the same world); a timelocked
run has no future at all, so ``always`` fails outright and ``eventually``
is decided over the snapshots that exist.  Timelocked runs are tallied
separately in the result.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .core import (
    BoolLit, CpsModel, ModelError, Pred, approx_cmp, eval_pred,
)
from .lang import ParseError, _Parser, render_pred
from .semantics import RunResult, Sampler, child_seed, run

__all__ = [
    "FormulaError", "StatePred", "FiredAtom", "WroteAtom", "DeadlockedAtom",
    "UnsafeAtom", "PropNot", "PropAnd", "PropOr", "PropImplies",
    "Always", "Eventually", "parse_formula", "render_formula",
    "SmcConfig", "SmcResult", "required_runs", "estimate", "estimate_many",
    "SweepRow", "sweep",
]

#: name a state predicate may use to refer to the snapshot's clock
CLOCK_NAME = "global_clock"


class FormulaError(ModelError):
    """A timed formula is syntactically or structurally invalid."""


# ---------------------------------------------------------------------------
# propositions over one slot snapshot


@dataclass(frozen=True)
class StatePred:
    """A predicate over the snapshot's state variables, sensors,
    actuators, model constants, and ``global_clock``."""

    pred: Pred


@dataclass(frozen=True)
class FiredAtom:
    """True once the channel has been output on in this run (latched)."""

    chan: str


@dataclass(frozen=True)
class WroteAtom:
    """True when the actuator was written this slot; with ``value`` set,
    only when the last write of the slot carries that value."""

    act: str
    value: Optional[float] = None


@dataclass(frozen=True)
class DeadlockedAtom:
    """True when the run is deadlocked at this slot."""


@dataclass(frozen=True)
class UnsafeAtom:
    """True when the safety predicate was violated in this slot."""


@dataclass(frozen=True)
class PropNot:
    arg: "Prop"


@dataclass(frozen=True)
class PropAnd:
    left: "Prop"
    right: "Prop"


@dataclass(frozen=True)
class PropOr:
    left: "Prop"
    right: "Prop"


@dataclass(frozen=True)
class PropImplies:
    left: "Prop"
    right: "Prop"


def eval_prop(p, snap, clock: int, consts: Mapping[str, float]) -> bool:
    """Evaluate a proposition on one snapshot observed at ``clock``."""
    if isinstance(p, StatePred):
        binds = dict(snap.state)
        binds[CLOCK_NAME] = float(clock)
        return eval_pred(p.pred, binds, consts)
    if isinstance(p, FiredAtom):
        return p.chan in snap.fired
    if isinstance(p, WroteAtom):
        if p.act not in snap.wrote:
            return False
        return p.value is None or approx_cmp("==", snap.wrote[p.act], p.value)
    if isinstance(p, DeadlockedAtom):
        return snap.deadlocked
    if isinstance(p, UnsafeAtom):
        return snap.unsafe
    if isinstance(p, PropNot):
        return not eval_prop(p.arg, snap, clock, consts)
    if isinstance(p, PropAnd):
        return (eval_prop(p.left, snap, clock, consts)
                and eval_prop(p.right, snap, clock, consts))
    if isinstance(p, PropOr):
        return (eval_prop(p.left, snap, clock, consts)
                or eval_prop(p.right, snap, clock, consts))
    if isinstance(p, PropImplies):
        return (not eval_prop(p.left, snap, clock, consts)
                or eval_prop(p.right, snap, clock, consts))
    raise TypeError(p)


# ---------------------------------------------------------------------------
# timed formulas


@dataclass(frozen=True)
class Always:
    """``always[t1,t2] prop``: prop holds at every clock in [t1, t2]."""

    t1: int
    t2: int
    prop: object

    def __post_init__(self):
        if not (1 <= self.t1 <= self.t2):
            raise FormulaError(
                f"always window requires 1 <= t1 <= t2, got [{self.t1}, {self.t2}]")


@dataclass(frozen=True)
class Eventually:
    """``eventually[0,t2] prop``: prop holds at some clock in [0, t2]."""

    t2: int
    prop: object

    def __post_init__(self):
        if self.t2 < 0:
            raise FormulaError(f"eventually bound must be >= 0, got {self.t2}")


def horizon_for(f) -> int:
    """Slots one run must simulate so every clock in the window exists."""
    return f.t2 + 1


def satisfies(f, rr: RunResult, consts: Mapping[str, float]) -> bool:
    """Decide one run against one formula (see module docstring for the
    deadlock and timelock conventions)."""
    snaps = rr.snapshots
    if isinstance(f, Always):
        if rr.timelocked:
            return False
        for c in range(f.t1, f.t2 + 1):
            snap = snaps[c] if c < len(snaps) else snaps[-1]
            if not eval_prop(f.prop, snap, c, consts):
                return False
        return True
    if isinstance(f, Eventually):
        last = min(f.t2, len(snaps) - 1) if rr.timelocked else f.t2
        for c in range(0, last + 1):
            snap = snaps[c] if c < len(snaps) else snaps[-1]
            if eval_prop(f.prop, snap, c, consts):
                return True
        return False
    raise TypeError(f)


# ---------------------------------------------------------------------------
# formula mini-language
#
#   formula := ("always" | "eventually") "[" bound "," bound "]" prop
#   bound   := constant integer expression
#   prop    := implication; "=>" is right-associative, "or" binds looser
#              than "and", "not"/"!" tightest
#   atoms   := "(" prop ")" | "true" | "false" | "deadlocked" | "unsafe"
#            | "fired(" chan ")" | bare channel name
#            | "wrote(" actuator ["," value] ")"
#            | <arith> CMP <arith>        (state predicate)

_WINDOW = re.compile(
    r"^\s*(always|eventually)\s*\[([^\]]*)\]\s*(.*)$", re.DOTALL)


class _PropParser(_Parser):
    """Proposition parser reusing the model language's lexer, expression
    grammar, and constant folding."""

    def prop(self):
        left = self.prop_or()
        # "=>" lexes as the two symbols "=" ">"
        if self.at("symbol", "="):
            save = self.pos
            self.next()
            if self.accept("symbol", ">"):
                return PropImplies(left, self.prop())
            self.pos = save
        return left

    def prop_or(self):
        p = self.prop_and()
        while self.accept("keyword", "or"):
            p = PropOr(p, self.prop_and())
        return p

    def prop_and(self):
        p = self.prop_not()
        while self.accept("keyword", "and"):
            p = PropAnd(p, self.prop_not())
        return p

    def prop_not(self):
        if self.accept("keyword", "not") or self.accept("symbol", "!"):
            return PropNot(self.prop_not())
        return self.prop_atom()

    def prop_atom(self):
        t = self.peek()
        if self.accept("keyword", "true"):
            return StatePred(BoolLit(True))
        if self.accept("keyword", "false"):
            return StatePred(BoolLit(False))
        if t.kind == "ident" and t.text == "deadlocked":
            self.next()
            return DeadlockedAtom()
        if t.kind == "ident" and t.text == "unsafe":
            self.next()
            return UnsafeAtom()
        if t.kind == "ident" and t.text == "fired":
            save = self.pos
            self.next()
            if self.accept("symbol", "("):
                chan = self.expect("ident").text
                self.expect("symbol", ")")
                return FiredAtom(chan)
            self.pos = save
        if t.kind == "ident" and t.text == "wrote":
            save = self.pos
            self.next()
            if self.accept("symbol", "("):
                act = self.expect("ident").text
                value = None
                if self.accept("symbol", ","):
                    vtok = self.peek()
                    value = self.const_value(self.expr(), vtok)
                self.expect("symbol", ")")
                return WroteAtom(act, value)
            self.pos = save
        if self.at("symbol", "("):
            # either a nested proposition or a parenthesised arithmetic
            # expression opening a comparison; try the proposition first
            save = self.pos
            self.next()
            try:
                p = self.prop()
                self.expect("symbol", ")")
                if self.peek().text in ("<", "<=", ">", ">=", "==", "!="):
                    raise ParseError(self.filename, 0, 0, "backtrack")
                return p
            except ParseError:
                self.pos = save
        left = self.expr()
        op = self.peek()
        if op.text not in ("<", "<=", ">", ">=", "==", "!="):
            from .core import Name
            if isinstance(left, Name):
                # bare channel name: shorthand for fired(chan)
                return FiredAtom(left.id)
            self.err("expected a comparison operator or a channel name", op)
        self.next()
        from .core import Cmp
        return StatePred(Cmp(op.text, left, self.expr()))

    def parse_prop(self):
        p = self.prop()
        self.expect("eof")
        return p

    def parse_bounds(self):
        t1tok = self.peek()
        t1 = self.const_value(self.expr(), t1tok)
        self.expect("symbol", ",")
        t2tok = self.peek()
        t2 = self.const_value(self.expr(), t2tok)
        self.expect("eof")
        for v, tok in ((t1, t1tok), (t2, t2tok)):
            if v != int(v):
                raise ParseError(self.filename, tok.line, tok.col,
                                 f"window bound must be an integer, got {v}")
        return int(t1), int(t2)


def parse_formula(text: str, filename: str = "<formula>"):
    """Parse ``always[t1,t2] prop`` / ``eventually[0,t2] prop``."""
    m = _WINDOW.match(text)
    if m is None:
        raise FormulaError(
            "formula must start with 'always[t1,t2]' or 'eventually[0,t2]'")
    head, bounds_src, prop_src = m.groups()
    t1, t2 = _PropParser(bounds_src, filename).parse_bounds()
    if not prop_src.strip():
        raise FormulaError("formula is missing its proposition")
    prop = _PropParser(prop_src, filename).parse_prop()
    if head == "always":
        return Always(t1, t2, prop)
    if t1 != 0:
        raise FormulaError(
            f"eventually windows start at 0, got [{t1}, {t2}]")
    return Eventually(t2, prop)


def _render_prop(p, prec: int = 0) -> str:
    if isinstance(p, StatePred):
        if isinstance(p.pred, BoolLit):
            return "true" if p.pred.value else "false"
        return render_pred(p.pred, prec)
    if isinstance(p, FiredAtom):
        return f"fired({p.chan})"
    if isinstance(p, WroteAtom):
        if p.value is None:
            return f"wrote({p.act})"
        from .lang import _fmt_num
        return f"wrote({p.act}, {_fmt_num(p.value)})"
    if isinstance(p, DeadlockedAtom):
        return "deadlocked"
    if isinstance(p, UnsafeAtom):
        return "unsafe"
    if isinstance(p, PropNot):
        return f"not {_render_prop(p.arg, 3)}"
    if isinstance(p, PropImplies):
        s = f"{_render_prop(p.left, 1)} => {_render_prop(p.right, 0)}"
        return f"({s})" if prec > 0 else s
    if isinstance(p, PropOr):
        s = f"{_render_prop(p.left, 1)} or {_render_prop(p.right, 2)}"
        return f"({s})" if prec > 1 else s
    if isinstance(p, PropAnd):
        s = f"{_render_prop(p.left, 2)} and {_render_prop(p.right, 3)}"
        return f"({s})" if prec > 2 else s
    raise TypeError(p)


def render_formula(f) -> str:
    if isinstance(f, Always):
        return f"always[{f.t1},{f.t2}] {_render_prop(f.prop)}"
    if isinstance(f, Eventually):
        return f"eventually[0,{f.t2}] {_render_prop(f.prop)}"
    raise TypeError(f)


# ---------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class SmcConfig:
    """Precision and scheduling knobs for one estimation batch."""

    alpha: float = 0.01     # confidence: P(|p_hat - p| > eps) <= alpha
    epsilon: float = 0.01   # half-width of the confidence interval
    seed: int = 0
    workers: int = 1
    horizon: Optional[int] = None  # override run length (>= t2 + 1)

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class SmcResult:
    """One estimated probability with its Chernoff--Hoeffding interval."""

    formula: str
    p_hat: float
    lo: float
    hi: float
    runs: int
    satisfied: int
    timelocked: int
    alpha: float
    epsilon: float

    def to_json(self) -> dict:
        return {"formula": self.formula, "p_hat": self.p_hat,
                "interval": [self.lo, self.hi], "runs": self.runs,
                "satisfied": self.satisfied, "timelocked": self.timelocked,
                "alpha": self.alpha, "epsilon": self.epsilon}


def required_runs(alpha: float, epsilon: float) -> int:
    """Runs needed so P(|p_hat - p| > epsilon) <= alpha (two-sided
    Chernoff--Hoeffding bound): ceil(ln(2/alpha) / (2 epsilon^2))."""
    if not (0.0 < alpha < 1.0) or not (0.0 < epsilon < 1.0):
        raise ValueError("alpha and epsilon must lie in (0, 1)")
    return math.ceil(math.log(2.0 / alpha) / (2.0 * epsilon * epsilon))


def _batch_horizon(formulas: Sequence, cfg: SmcConfig) -> int:
    need = max(horizon_for(f) for f in formulas)
    if cfg.horizon is not None:
        if cfg.horizon < need:
            raise ValueError(
                f"horizon {cfg.horizon} is shorter than the widest window "
                f"needs ({need})")
        return cfg.horizon
    return need


def _run_indices(model: CpsModel, attacker, formulas: Sequence,
                 seed: int, horizon: int, start: int,
                 stop: int) -> tuple:
    """Evaluate runs ``start..stop-1`` (seeded by global index) against
    every formula; returns (per-formula counts, timelocked count)."""
    from .analysis import attach
    target = attach(model, attacker) if attacker is not None else model
    consts = target.const_env()
    counts = [0] * len(formulas)
    timelocked = 0
    for i in range(start, stop):
        rr = run(target, horizon, sampler=Sampler(child_seed(seed, i)),
                 collect_records=False)
        if rr.timelocked:
            timelocked += 1
        for j, f in enumerate(formulas):
            if satisfies(f, rr, consts):
                counts[j] += 1
    return tuple(counts), timelocked


#: runs per worker task; aggregation is a sum over tasks, so the split
#: cannot change the estimate
_CHUNK = 512


def estimate_many(model: CpsModel, formulas: Sequence,
                  cfg: SmcConfig = SmcConfig(), *,
                  attacker=None) -> list:
    """Estimate every formula on one shared batch of runs.

    Each run is seeded from its global index, and per-task tallies are
    summed, so the result is identical for every worker count."""
    formulas = list(formulas)
    if not formulas:
        return []
    horizon = _batch_horizon(formulas, cfg)
    n = required_runs(cfg.alpha, cfg.epsilon)
    spans = [(s, min(s + _CHUNK, n)) for s in range(0, n, _CHUNK)]
    if cfg.workers == 1 or len(spans) == 1:
        parts = [_run_indices(model, attacker, formulas, cfg.seed, horizon,
                              s, e) for s, e in spans]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futs = [pool.submit(_run_indices, model, attacker, formulas,
                                cfg.seed, horizon, s, e) for s, e in spans]
            parts = [f.result() for f in futs]
    counts = [sum(p[0][j] for p in parts) for j in range(len(formulas))]
    timelocked = sum(p[1] for p in parts)
    out = []
    for f, c in zip(formulas, counts):
        p_hat = c / n
        out.append(SmcResult(formula=render_formula(f), p_hat=p_hat,
                             lo=max(0.0, p_hat - cfg.epsilon),
                             hi=min(1.0, p_hat + cfg.epsilon),
                             runs=n, satisfied=c, timelocked=timelocked,
                             alpha=cfg.alpha, epsilon=cfg.epsilon))
    return out


def estimate(model: CpsModel, formula, cfg: SmcConfig = SmcConfig(), *,
             attacker=None) -> SmcResult:
    """Estimate one formula; see ``estimate_many``."""
    if isinstance(formula, str):
        formula = parse_formula(formula)
    return estimate_many(model, [formula], cfg, attacker=attacker)[0]


# ---------------------------------------------------------------------------
# parameter sweeps


@dataclass(frozen=True)
class SweepRow:
    param: int
    result: Optional[SmcResult] = None
    error: Optional[str] = None


def sweep(model: CpsModel, attacker_for: Optional[Callable],
          formula_for: Callable, params: Iterable,
          cfg: SmcConfig = SmcConfig(), *,
          out: Optional[str] = None) -> list:
    """Estimate ``formula_for(param)`` against ``attacker_for(param)``
    for each parameter value, optionally streaming CSV rows to ``out``.

    Rows are written (and flushed) as they finish, so a long sweep can be
    watched and an interrupted one keeps its completed rows.  A row whose
    estimation fails records the error and writes ``nan`` fields; the
    sweep carries on.  The CSV is ``param,p_hat,lo,hi,runs,satisfied``
    with probabilities at 6 decimals; no parameters yields just the
    header.  ``out`` may be a path or an open text stream."""
    rows: list = []
    opened = isinstance(out, str)
    fh = open(out, "w", encoding="utf-8") if opened else out
    try:
        if fh:
            fh.write("param,p_hat,lo,hi,runs,satisfied\n")
            fh.flush()
        for param in params:
            try:
                attacker = attacker_for(param) if attacker_for else None
                formula = formula_for(param)
                if isinstance(formula, str):
                    formula = parse_formula(formula)
                r = estimate(model, formula, cfg, attacker=attacker)
                rows.append(SweepRow(param=param, result=r))
                if fh:
                    fh.write(f"{param},{r.p_hat:.6f},{r.lo:.6f},{r.hi:.6f},"
                             f"{r.runs},{r.satisfied}\n")
            except (ModelError, ValueError) as exc:
                rows.append(SweepRow(param=param, error=str(exc)))
                if fh:
                    fh.write(f"{param},nan,nan,nan,0,0\n")
            if fh:
                fh.flush()
    finally:
        if opened and fh:
            fh.close()
    return rows
