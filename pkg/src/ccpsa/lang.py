"""Surface language: lexer, recursive-descent parser and canonical renderer.

Model files (``.ccpsa``) declare named constants, physical variables with
their evolution laws, sensors, actuators, the invariant and safety
predicates, alarm channels, process definitions and a ``system`` term.
Attacker files (``.ccpsa-atk``) declare integer parameters, definitions and
an ``attacker`` term.  The full grammar lives in ``docs/grammar.ebnf``.

Constants and attacker parameters are folded into the AST at parse time, so
the in-memory representation only ever mentions process variables and
device names.  ``render`` produces canonical text that parses back into a
structurally equal model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from .core import (
    And, BoolLit, Bin, BUILTIN_CONSTS, Call, ChIn, ChOut, Choice, Cmp, Cond,
    CpsModel, DefDecl, Fn, Ite, ModelError, Name, Neg, Nil, Not, Num, Or,
    Par, PhysEnv, Pred, Proc, Expr, ReadS, Restrict, Rnd, SensorDecl, Sleep,
    TimeoutDrop, TimeoutForge, TimeoutSniff, ActuatorDecl, VarDecl, Violation,
    WriteA, eval_expr, uses_malicious, quant,
)

KEYWORDS = {
    "const", "var", "init", "evolution", "uncertainty", "integral",
    "sensor", "measures", "error", "actuator", "invariant", "safety",
    "alarms", "def", "system", "attacker", "param",
    "nil", "tick", "timeout", "read", "write", "sniff", "drop", "forge",
    "if", "else", "choice", "or", "and", "not", "true", "false",
    "rnd", "min", "max", "ite",
}

SYMBOLS = [
    "||", "<=", ">=", "==", "!=", "//", "/*",
    "(", ")", "{", "}", ",", ";", ".", "!", "?", "=", "^", "\\",
    "+", "-", "*", "/", "<", ">",
]


class ParseError(ModelError):
    def __init__(self, filename: str, line: int, col: int, message: str):
        super().__init__(f"{filename}:{line}:{col}: {message}")
        self.filename = filename
        self.line = line
        self.col = col
        self.message = message


class UnboundParameter(ParseError):
    pass


@dataclass
class Token:
    kind: str  # ident | number | keyword | symbol | eof
    text: str
    line: int
    col: int


def _lex(src: str, filename: str) -> list:
    toks = []
    i, line, col = 0, 1, 1
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if src.startswith("//", i):
            j = src.find("\n", i)
            if j < 0:
                break
            col += j - i
            i = j
            continue
        if src.startswith("/*", i):
            j = src.find("*/", i + 2)
            if j < 0:
                raise ParseError(filename, line, col, "unterminated block comment")
            chunk = src[i:j + 2]
            nl = chunk.count("\n")
            if nl:
                line += nl
                col = len(chunk) - chunk.rfind("\n")
            else:
                col += len(chunk)
            i = j + 2
            continue
        if c.isdigit():
            j = i
            while j < n and src[j].isdigit():
                j += 1
            if j < n and src[j] == "." and j + 1 < n and src[j + 1].isdigit():
                j += 1
                while j < n and src[j].isdigit():
                    j += 1
            if j < n and src[j] in "eE":
                k = j + 1
                if k < n and src[k] in "+-":
                    k += 1
                if k < n and src[k].isdigit():
                    j = k
                    while j < n and src[j].isdigit():
                        j += 1
            toks.append(Token("number", src[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            text = src[i:j]
            kind = "keyword" if text in KEYWORDS else "ident"
            toks.append(Token(kind, text, line, col))
            col += j - i
            i = j
            continue
        for sym in SYMBOLS:
            if sym in ("//", "/*"):
                continue
            if src.startswith(sym, i):
                toks.append(Token("symbol", sym, line, col))
                col += len(sym)
                i += len(sym)
                break
        else:
            raise ParseError(filename, line, col, f"unexpected character {c!r}")
    toks.append(Token("eof", "", line, col))
    return toks


@dataclass
class AttackerSpec:
    """A parsed attacker: a closed term plus its auxiliary definitions."""

    term: Proc
    defs: Mapping[str, DefDecl]
    params: Mapping[str, float] = field(default_factory=dict)
    warnings: tuple = ()


class _Parser:
    def __init__(self, src: str, filename: str = "<string>",
                 params: Optional[Mapping[str, float]] = None):
        self.filename = filename
        self.toks = _lex(src, filename)
        self.pos = 0
        # name -> value environment used to fold constants at parse time
        self.consts = dict(BUILTIN_CONSTS)
        self.declared_consts = {}
        self.params_given = dict(params or {})
        self.params_used = {}
        self.fresh = 0

    # -- token plumbing ------------------------------------------------

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def accept(self, kind: str, text: Optional[str] = None) -> Optional[Token]:
        if self.at(kind, text):
            return self.next()
        return None

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        if self.at(kind, text):
            return self.next()
        t = self.peek()
        want = text or kind
        got = t.text or t.kind
        raise ParseError(self.filename, t.line, t.col, f"expected {want!r}, found {got!r}")

    def err(self, message: str, tok: Optional[Token] = None):
        t = tok or self.peek()
        raise ParseError(self.filename, t.line, t.col, message)

    # -- expressions ----------------------------------------------------

    def const_value(self, e: Expr, tok: Token) -> float:
        try:
            return eval_expr(e, {}, self.consts)
        except ModelError as exc:
            raise ParseError(self.filename, tok.line, tok.col,
                             f"expected a constant expression: {exc}") from exc

    def expr(self) -> Expr:
        e = self.mul_expr()
        while self.at("symbol", "+") or self.at("symbol", "-"):
            op = self.next().text
            e = Bin(op, e, self.mul_expr())
        return e

    def mul_expr(self) -> Expr:
        e = self.unary_expr()
        while self.at("symbol", "*") or self.at("symbol", "/"):
            op = self.next().text
            e = Bin(op, e, self.unary_expr())
        return e

    def unary_expr(self) -> Expr:
        if self.accept("symbol", "-"):
            arg = self.unary_expr()
            if isinstance(arg, Num):
                return Num(quant(-arg.value))
            return Neg(arg)
        return self.primary_expr()

    def primary_expr(self) -> Expr:
        t = self.peek()
        if t.kind == "number":
            self.next()
            return Num(quant(float(t.text)))
        if self.accept("symbol", "("):
            e = self.expr()
            self.expect("symbol", ")")
            return e
        if t.kind == "keyword" and t.text in ("min", "max"):
            self.next()
            self.expect("symbol", "(")
            args = [self.expr()]
            while self.accept("symbol", ","):
                args.append(self.expr())
            self.expect("symbol", ")")
            return Fn(t.text, tuple(args))
        if self.accept("keyword", "ite"):
            self.expect("symbol", "(")
            b = self.pred()
            self.expect("symbol", ",")
            e1 = self.expr()
            self.expect("symbol", ",")
            e2 = self.expr()
            self.expect("symbol", ")")
            return Ite(b, e1, e2)
        if self.accept("keyword", "rnd"):
            return Rnd()
        if t.kind == "keyword" and t.text in ("true", "false"):
            self.next()
            return Num(BUILTIN_CONSTS[t.text])
        if t.kind == "ident":
            self.next()
            if t.text in self.consts:
                return Num(quant(self.consts[t.text]))
            return Name(t.text)
        # "on"/"off" are plain idents resolved through BUILTIN via consts;
        # anything else here is a syntax error
        self.err(f"expected an expression, found {t.text or t.kind!r}")

    # -- predicates -----------------------------------------------------

    def pred(self) -> Pred:
        p = self.and_pred()
        while self.accept("keyword", "or"):
            p = Or(p, self.and_pred())
        return p

    def and_pred(self) -> Pred:
        p = self.not_pred()
        while self.accept("keyword", "and"):
            p = And(p, self.not_pred())
        return p

    def not_pred(self) -> Pred:
        if self.accept("keyword", "not"):
            return Not(self.not_pred())
        return self.atom_pred()

    def atom_pred(self) -> Pred:
        if self.accept("keyword", "true"):
            return BoolLit(True)
        if self.accept("keyword", "false"):
            return BoolLit(False)
        # '(' may open either a nested predicate or a parenthesised
        # arithmetic expression; try the predicate reading first.
        if self.at("symbol", "("):
            save = self.pos
            self.next()
            try:
                p = self.pred()
                self.expect("symbol", ")")
                if self.peek().text in ("<", "<=", ">", ">=", "==", "!="):
                    raise ParseError(self.filename, 0, 0, "backtrack")
                return p
            except ParseError:
                self.pos = save
        left = self.expr()
        t = self.peek()
        if t.text not in ("<", "<=", ">", ">=", "==", "!="):
            self.err("expected a comparison operator")
        self.next()
        right = self.expr()
        return Cmp(t.text, left, right)

    # -- processes ------------------------------------------------------

    def proc(self) -> Proc:
        p = self.restr_proc()
        while self.accept("symbol", "||"):
            p = Par(p, self.restr_proc())
        return p

    def restr_proc(self) -> Proc:
        p = self.atom_proc()
        while self.accept("symbol", "\\"):
            chans = self.chan_set()
            for c in chans:
                p = Restrict(c, p)
        return p

    def chan_set(self) -> list:
        if self.accept("symbol", "{"):
            names = [self.expect("ident").text]
            while self.accept("symbol", ","):
                names.append(self.expect("ident").text)
            self.expect("symbol", "}")
            return names
        return [self.expect("ident").text]

    def cont_proc(self) -> Proc:
        """The continuation after a '.' — binds tighter than '||'."""
        return self.restr_proc()

    def tick_count(self) -> int:
        """Parse the optional ^k exponent of a tick prefix."""
        if not self.accept("symbol", "^"):
            return 1
        t = self.peek()
        if t.kind == "number":
            self.next()
            val = float(t.text)
        elif t.kind == "ident":
            self.next()
            val = self.resolve_param(t)
        else:
            self.err("expected a count after '^'")
        k = int(val)
        if k != val or k < 0:
            self.err(f"tick exponent must be a nonnegative integer, got {val}", t)
        return k

    def resolve_param(self, tok: Token) -> float:
        if tok.text in self.consts:
            return self.consts[tok.text]
        raise UnboundParameter(self.filename, tok.line, tok.col,
                               f"unbound parameter or constant {tok.text!r}")

    def atom_proc(self) -> Proc:
        t = self.peek()
        if self.accept("keyword", "nil"):
            return Nil()
        if self.accept("keyword", "tick"):
            k = self.tick_count()
            if self.accept("symbol", "."):
                p = self.cont_proc()
            else:
                p = Nil()
            for _ in range(k):
                p = Sleep(p)
            return p
        if self.accept("keyword", "read"):
            dev = self.expect("ident").text
            self.expect("symbol", "(")
            var = self.expect("ident").text
            self.expect("symbol", ")")
            cont = self.prefix_cont()
            return ReadS(dev, var, cont)
        if self.accept("keyword", "write"):
            dev = self.expect("ident").text
            self.expect("symbol", "(")
            e = self.expr()
            self.expect("symbol", ")")
            cont = self.prefix_cont()
            return WriteA(dev, e, cont)
        if t.kind == "keyword" and t.text in ("sniff", "drop", "forge"):
            # bare malicious prefix: sugar for a fresh self-retrying timeout
            mu = self.malicious_prefix()
            cont = self.prefix_cont()
            return self.retry_wrap(mu, cont)
        if self.accept("keyword", "timeout"):
            self.expect("symbol", "(")
            mu = self.malicious_prefix()
            if self.accept("symbol", "."):
                body = self.proc()
            else:
                body = Nil()
            if self.accept("symbol", ","):
                alt = self.proc()
            else:
                alt = Nil()
            self.expect("symbol", ")")
            kind, dev, binder = mu
            if kind == "sniff":
                return TimeoutSniff(dev, binder, body, alt)
            if kind == "drop":
                return TimeoutDrop(dev, binder, body, alt)
            return TimeoutForge(dev, binder, body, alt)
        if self.accept("keyword", "if"):
            b = self.pred()
            self.expect("symbol", "{")
            then = self.proc()
            self.expect("symbol", "}")
            if self.accept("keyword", "else"):
                self.expect("symbol", "{")
                els = self.proc()
                self.expect("symbol", "}")
            else:
                els = Nil()
            return Cond(b, then, els)
        if self.accept("keyword", "choice"):
            self.expect("symbol", "{")
            left = self.proc()
            self.expect("symbol", "}")
            self.expect("keyword", "or")
            self.expect("symbol", "{")
            right = self.proc()
            self.expect("symbol", "}")
            return Choice(left, right)
        if self.accept("symbol", "("):
            p = self.proc()
            self.expect("symbol", ")")
            return p
        if t.kind == "ident":
            self.next()
            name = t.text
            if self.at("symbol", "!"):
                self.next()
                e = None
                # an output payload expression, if one follows
                if self.peek().kind == "number" or self.peek().kind == "ident" \
                        or self.at("symbol", "(") or self.at("symbol", "-") \
                        or (self.peek().kind == "keyword"
                            and self.peek().text in ("min", "max", "ite", "rnd", "true", "false")):
                    e = self.expr()
                cont = self.prefix_cont()
                return ChOut(name, e if e is not None else Num(0.0), cont)
            if self.at("symbol", "?"):
                self.next()
                var = "_"
                if self.accept("symbol", "("):
                    var = self.expect("ident").text
                    self.expect("symbol", ")")
                cont = self.prefix_cont()
                return ChIn(name, var, cont)
            if self.accept("symbol", "("):
                args = []
                if not self.at("symbol", ")"):
                    args.append(self.expr())
                    while self.accept("symbol", ","):
                        args.append(self.expr())
                self.expect("symbol", ")")
                return Call(name, tuple(args))
            return Call(name, ())
        self.err(f"expected a process, found {t.text or t.kind!r}")

    def prefix_cont(self) -> Proc:
        if self.accept("symbol", "."):
            return self.cont_proc()
        return Nil()

    def malicious_prefix(self):
        t = self.next()
        if t.kind != "keyword" or t.text not in ("sniff", "drop", "forge"):
            self.err("expected sniff, drop or forge", t)
        dev = self.expect("ident").text
        self.expect("symbol", "(")
        if t.text == "forge":
            payload = self.expr()
            self.expect("symbol", ")")
            return ("forge", dev, payload)
        var = self.expect("ident").text
        self.expect("symbol", ")")
        return (t.text, dev, var)

    def retry_wrap(self, mu, cont: Proc) -> Proc:
        """Desugar a bare malicious prefix into a self-retrying timeout."""
        name = f"__retry_{self.fresh}"
        self.fresh += 1
        kind, dev, binder = mu
        if kind == "sniff":
            body = TimeoutSniff(dev, binder, cont, Call(name))
        elif kind == "drop":
            body = TimeoutDrop(dev, binder, cont, Call(name))
        else:
            body = TimeoutForge(dev, binder, cont, Call(name))
        self.synth_defs[name] = DefDecl(name, (), body)
        return Call(name)

    # -- declarations ----------------------------------------------------

    def parse_model(self) -> CpsModel:
        self.synth_defs = {}
        variables, sensors, actuators = [], [], []
        invariant, safety = BoolLit(True), BoolLit(True)
        alarms = set()
        defs = {}
        main = None
        while not self.at("eof"):
            t = self.peek()
            if self.accept("keyword", "const"):
                name = self.expect("ident").text
                self.expect("symbol", "=")
                etok = self.peek()
                v = self.const_value(self.expr(), etok)
                if name in self.declared_consts:
                    self.err(f"constant {name!r} redeclared", t)
                self.declared_consts[name] = v
                self.consts[name] = v
                self.expect("symbol", ";")
            elif self.accept("keyword", "var"):
                name = self.expect("ident").text
                self.expect("keyword", "init")
                itok = self.peek()
                init = self.const_value(self.expr(), itok)
                self.expect("keyword", "evolution")
                evol = self.expr()
                self.expect("keyword", "uncertainty")
                utok = self.peek()
                w = self.const_value(self.expr(), utok)
                integral = bool(self.accept("keyword", "integral"))
                self.expect("symbol", ";")
                variables.append(VarDecl(name, init, evol, w, integral))
            elif self.accept("keyword", "sensor"):
                name = self.expect("ident").text
                self.expect("keyword", "measures")
                src = self.expect("ident").text
                self.expect("keyword", "error")
                etok = self.peek()
                e = self.const_value(self.expr(), etok)
                self.expect("symbol", ";")
                sensors.append(SensorDecl(name, src, e))
            elif self.accept("keyword", "actuator"):
                name = self.expect("ident").text
                self.expect("keyword", "init")
                itok = self.peek()
                init = self.const_value(self.expr(), itok)
                self.expect("symbol", ";")
                actuators.append(ActuatorDecl(name, init))
            elif self.accept("keyword", "invariant"):
                invariant = self.pred()
                self.expect("symbol", ";")
            elif self.accept("keyword", "safety"):
                safety = self.pred()
                self.expect("symbol", ";")
            elif self.accept("keyword", "alarms"):
                alarms.add(self.expect("ident").text)
                while self.accept("symbol", ","):
                    alarms.add(self.expect("ident").text)
                self.expect("symbol", ";")
            elif self.accept("keyword", "def"):
                name = self.expect("ident").text
                params = []
                if self.accept("symbol", "("):
                    if not self.at("symbol", ")"):
                        params.append(self.expect("ident").text)
                        while self.accept("symbol", ","):
                            params.append(self.expect("ident").text)
                    self.expect("symbol", ")")
                self.expect("symbol", "=")
                body = self.proc()
                self.expect("symbol", ";")
                if name in defs:
                    self.err(f"definition {name!r} redeclared", t)
                defs[name] = DefDecl(name, tuple(params), body)
            elif self.accept("keyword", "system"):
                main = self.proc()
                self.expect("symbol", ";")
            else:
                self.err(f"expected a declaration, found {t.text or t.kind!r}")
        if main is None:
            main = Nil()
        defs.update(self.synth_defs)
        env = PhysEnv(tuple(variables), tuple(sensors), tuple(actuators),
                      invariant, safety)
        return CpsModel(env=env, consts=dict(self.declared_consts), defs=defs,
                        main=main,
                        alarm_channels=frozenset(alarms) if alarms else frozenset({"alarm"}))

    def parse_attacker(self) -> AttackerSpec:
        self.synth_defs = {}
        defs = {}
        term = None
        while not self.at("eof"):
            t = self.peek()
            if self.accept("keyword", "param"):
                name = self.expect("ident").text
                default = None
                if self.accept("symbol", "="):
                    dtok = self.peek()
                    default = self.const_value(self.expr(), dtok)
                self.expect("symbol", ";")
                if name in self.params_given:
                    val = float(self.params_given[name])
                elif default is not None:
                    val = default
                else:
                    raise UnboundParameter(
                        self.filename, t.line, t.col,
                        f"parameter {name!r} has no value (pass it explicitly)")
                self.params_used[name] = val
                self.consts[name] = val
            elif self.accept("keyword", "const"):
                name = self.expect("ident").text
                self.expect("symbol", "=")
                etok = self.peek()
                v = self.const_value(self.expr(), etok)
                self.declared_consts[name] = v
                self.consts[name] = v
                self.expect("symbol", ";")
            elif self.accept("keyword", "def"):
                name = self.expect("ident").text
                params = []
                if self.accept("symbol", "("):
                    if not self.at("symbol", ")"):
                        params.append(self.expect("ident").text)
                        while self.accept("symbol", ","):
                            params.append(self.expect("ident").text)
                    self.expect("symbol", ")")
                self.expect("symbol", "=")
                body = self.proc()
                self.expect("symbol", ";")
                defs[name] = DefDecl(name, tuple(params), body)
            elif self.accept("keyword", "attacker"):
                term = self.proc()
                self.expect("symbol", ";")
            else:
                self.err(f"expected a declaration, found {t.text or t.kind!r}")
        if term is None:
            self.err("attacker file has no 'attacker' declaration")
        defs.update(self.synth_defs)
        warnings = []
        malicious = uses_malicious(term) or any(uses_malicious(d.body) for d in defs.values())
        if not malicious:
            warnings.append(Violation("not-an-attacker-warning", "attacker",
                                      "term contains no sniff/drop/forge construct"))
        return AttackerSpec(term=term, defs=defs, params=dict(self.params_used),
                            warnings=tuple(warnings))


def parse_model(text: str, filename: str = "<string>") -> CpsModel:
    """Parse a ``.ccpsa`` model file."""
    return _Parser(text, filename).parse_model()


def parse_attacker(text: str, params: Optional[Mapping[str, float]] = None,
                   filename: str = "<string>") -> AttackerSpec:
    """Parse a ``.ccpsa-atk`` attacker file, folding in ``params``."""
    return _Parser(text, filename, params).parse_attacker()


# ---------------------------------------------------------------------------
# canonical renderer


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def render_expr(e: Expr, prec: int = 0) -> str:
    # precedence: 0 add, 1 mul, 2 unary/primary
    if isinstance(e, Num):
        s = _fmt_num(e.value)
        return f"({s})" if s.startswith("-") and prec >= 2 else s
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Bin):
        p = 0 if e.op in "+-" else 1
        s = f"{render_expr(e.left, p)} {e.op} {render_expr(e.right, p + 1)}"
        return f"({s})" if p < prec else s
    if isinstance(e, Neg):
        return f"-{render_expr(e.arg, 2)}"
    if isinstance(e, Fn):
        return f"{e.name}({', '.join(render_expr(a) for a in e.args)})"
    if isinstance(e, Rnd):
        return "rnd"
    if isinstance(e, Ite):
        return f"ite({render_pred(e.pred)}, {render_expr(e.then)}, {render_expr(e.els)})"
    raise TypeError(e)


def render_pred(b: Pred, prec: int = 0) -> str:
    # precedence: 0 or, 1 and, 2 not/atom
    if isinstance(b, BoolLit):
        return "true" if b.value else "false"
    if isinstance(b, Cmp):
        return f"{render_expr(b.left)} {b.op} {render_expr(b.right)}"
    if isinstance(b, Or):
        s = f"{render_pred(b.left, 0)} or {render_pred(b.right, 1)}"
        return f"({s})" if prec > 0 else s
    if isinstance(b, And):
        s = f"{render_pred(b.left, 1)} and {render_pred(b.right, 2)}"
        return f"({s})" if prec > 1 else s
    if isinstance(b, Not):
        return f"not {render_pred(b.arg, 2)}"
    raise TypeError(b)


def _collect_ticks(p: Proc):
    k = 0
    while isinstance(p, Sleep):
        k += 1
        p = p.cont
    return k, p


def _collect_restricts(p: Proc):
    chans = []
    while isinstance(p, Restrict):
        chans.append(p.chan)
        p = p.body
    chans.reverse()  # parse order: first name in the set is innermost
    return chans, p


def render_proc(p: Proc, prec: int = 0) -> str:
    """Render a process term.

    Precedence levels: 0 parallel, 1 restriction, 2 prefix/atom.  A
    continuation after '.' is rendered at level 1, matching the parser.
    """
    if isinstance(p, Par):
        left = render_proc(p.left, 0)
        right = render_proc(p.right, 1)  # parenthesise right-nested pars
        s = f"{left} || {right}"
        return f"({s})" if prec > 0 else s
    if isinstance(p, Restrict):
        chans, body = _collect_restricts(p)
        # prefix forms would swallow the backslash into their continuation
        if isinstance(body, (Par, Sleep, ChOut, ChIn, ReadS, WriteA)):
            rendered = f"({render_proc(body, 0)})"
        else:
            rendered = render_proc(body, 2)
        s = f"{rendered} \\ {{{', '.join(chans)}}}"
        return f"({s})" if prec > 1 else s
    if isinstance(p, Nil):
        return "nil"
    if isinstance(p, Sleep):
        k, rest = _collect_ticks(p)
        head = "tick" if k == 1 else f"tick^{k}"
        if isinstance(rest, Nil):
            return head
        return f"{head}. {render_proc(rest, 1)}"
    if isinstance(p, ChOut):
        payload = "" if p.expr == Num(0.0) else render_expr(p.expr, 2)
        s = f"{p.chan}!{payload}"
        if isinstance(p.cont, Nil):
            return s
        return f"{s}. {render_proc(p.cont, 1)}"
    if isinstance(p, ChIn):
        s = f"{p.chan}?" if p.var == "_" else f"{p.chan}?({p.var})"
        if isinstance(p.cont, Nil):
            return s
        return f"{s}. {render_proc(p.cont, 1)}"
    if isinstance(p, ReadS):
        s = f"read {p.sensor}({p.var})"
        if isinstance(p.cont, Nil):
            return s
        return f"{s}. {render_proc(p.cont, 1)}"
    if isinstance(p, WriteA):
        s = f"write {p.act}({render_expr(p.expr)})"
        if isinstance(p.cont, Nil):
            return s
        return f"{s}. {render_proc(p.cont, 1)}"
    if isinstance(p, (TimeoutSniff, TimeoutDrop, TimeoutForge)):
        if isinstance(p, TimeoutSniff):
            mu = f"sniff {p.sensor}({p.var})"
        elif isinstance(p, TimeoutDrop):
            mu = f"drop {p.act}({p.var})"
        else:
            mu = f"forge {p.target}({render_expr(p.expr)})"
        body = "" if isinstance(p.body, Nil) else f". {render_proc(p.body, 0)}"
        alt = "" if isinstance(p.alt, Nil) else f", {render_proc(p.alt, 0)}"
        return f"timeout({mu}{body}{alt})"
    if isinstance(p, Cond):
        s = f"if {render_pred(p.pred)} {{ {render_proc(p.then, 0)} }}"
        if not isinstance(p.els, Nil):
            s += f" else {{ {render_proc(p.els, 0)} }}"
        return s
    if isinstance(p, Choice):
        return f"choice {{ {render_proc(p.left, 0)} }} or {{ {render_proc(p.right, 0)} }}"
    if isinstance(p, Call):
        if p.args:
            return f"{p.name}({', '.join(render_expr(a) for a in p.args)})"
        return p.name
    raise TypeError(p)


def render(model: CpsModel) -> str:
    """Canonical text for a model; parses back structurally equal."""
    out = []
    for name in sorted(model.consts):
        out.append(f"const {name} = {_fmt_num(model.consts[name])};")
    if model.consts:
        out.append("")
    for v in model.env.variables:
        integral = " integral" if v.integral else ""
        out.append(f"var {v.name} init {_fmt_num(v.init)} "
                   f"evolution {render_expr(v.evol)} "
                   f"uncertainty {_fmt_num(v.uncertainty)}{integral};")
    for s in model.env.sensors:
        out.append(f"sensor {s.name} measures {s.source} error {_fmt_num(s.error)};")
    for a in model.env.actuators:
        out.append(f"actuator {a.name} init {_fmt_num(a.init)};")
    out.append(f"invariant {render_pred(model.env.invariant)};")
    out.append(f"safety {render_pred(model.env.safety)};")
    if model.alarm_channels != frozenset({"alarm"}):
        out.append(f"alarms {', '.join(sorted(model.alarm_channels))};")
    out.append("")
    for d in model.defs.values():
        params = f"({', '.join(d.params)})" if d.params else ""
        out.append(f"def {d.name}{params} = {render_proc(d.body)};")
    out.append("")
    out.append(f"system {render_proc(model.main)};")
    return "\n".join(out) + "\n"


def render_attacker(spec: AttackerSpec) -> str:
    """Canonical text for an attacker (parameters already folded)."""
    out = []
    for d in spec.defs.values():
        params = f"({', '.join(d.params)})" if d.params else ""
        out.append(f"def {d.name}{params} = {render_proc(d.body)};")
    if spec.defs:
        out.append("")
    out.append(f"attacker {render_proc(spec.term)};")
    return "\n".join(out) + "\n"
