"""Quantum while programs: AST, parser, pretty-printer, validation, desugaring.

Surface syntax::

    file   := decl* stmt+
    decl   := "qubit" IDENT ";" | "uint" "<" INT ">" IDENT ("=" INT)? ";"
    stmt   := "skip" ";" | gate IDENT+ ";" | "ctrl" IDENT block | "nctrl" IDENT block
            | "if" guard block | "while" ("<" INT ">")? guard block
    block  := "{" stmt+ "}"
    guard  := IDENT | "(" IDENT ">" "0" ")" | "(" IDENT "==" INT ")"
    gate   := "x" | "h" | "z" | "cx" | "inc" | "dec" | "u" MATRIXLIT

``#`` starts a comment.  A matrix literal is written row-major, e.g.
``u[[0.6, 0.8i], [0.8i, 0.6]]``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .gates import GateSpec, UNITARY_TOL, check_unitary, custom

__all__ = [
    "QWhileError", "ParseError", "ValidationError", "Diagnostic",
    "Decl", "QubitGuard", "GtZero", "EqConst",
    "Skip", "Apply", "Seq", "While", "BoundedWhile", "If", "Ctrl", "GuardCopy",
    "seq", "statements", "parse", "pretty", "validate", "desugar", "is_core",
    "MAX_WIDTH",
]

MAX_WIDTH = 64
KEYWORDS = {"qubit", "uint", "skip", "ctrl", "nctrl", "if", "while",
            "x", "h", "z", "cx", "inc", "dec", "u"}
GATE_WORDS = {"x", "h", "z", "cx", "inc", "dec"}


class QWhileError(Exception):
    pass


class ParseError(QWhileError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Diagnostic:
    message: str
    loc: tuple[int, int] | None = None

    def __str__(self) -> str:
        if self.loc is None:
            return self.message
        return f"{self.loc[0]}:{self.loc[1]}: {self.message}"


class ValidationError(QWhileError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


def _loc():
    return field(default=None, compare=False, repr=False)


# -- declarations and guards ---------------------------------------------------

@dataclass(frozen=True)
class Decl:
    name: str
    kind: str  # "qubit" | "uint"
    width: int = 1
    init: int = 0
    loc: tuple[int, int] | None = _loc()

    @classmethod
    def qubit(cls, name: str) -> "Decl":
        return cls(name, "qubit", 1, 0)

    @classmethod
    def uint(cls, name: str, width: int, init: int = 0) -> "Decl":
        return cls(name, "uint", width, init)


@dataclass(frozen=True)
class QubitGuard:
    name: str
    loc: tuple[int, int] | None = _loc()

    def holds(self, value: int) -> bool:
        return value == 1


@dataclass(frozen=True)
class GtZero:
    name: str
    loc: tuple[int, int] | None = _loc()

    def holds(self, value: int) -> bool:
        return value > 0


@dataclass(frozen=True)
class EqConst:
    name: str
    value: int
    loc: tuple[int, int] | None = _loc()

    def holds(self, value: int) -> bool:
        return value == self.value


# -- statements ----------------------------------------------------------------

@dataclass(frozen=True)
class Skip:
    loc: tuple[int, int] | None = _loc()


@dataclass(frozen=True)
class Apply:
    gate: GateSpec
    operands: tuple[str, ...]
    ctrls: tuple[str, ...] = ()
    nctrls: tuple[str, ...] = ()
    loc: tuple[int, int] | None = _loc()


@dataclass(frozen=True)
class Seq:
    left: object
    right: object
    loc: tuple[int, int] | None = _loc()


@dataclass(frozen=True)
class While:
    guard: object
    body: object
    loc: tuple[int, int] | None = _loc()


@dataclass(frozen=True)
class BoundedWhile:
    k: int
    guard: object
    body: object
    loc: tuple[int, int] | None = _loc()


@dataclass(frozen=True)
class If:
    guard: object
    body: object
    loc: tuple[int, int] | None = _loc()


@dataclass(frozen=True)
class Ctrl:
    """``ctrl v { body }`` (``positive``) or ``nctrl v { body }``."""

    name: str
    body: object
    positive: bool = True
    loc: tuple[int, int] | None = _loc()


@dataclass(frozen=True)
class GuardCopy:
    """Core-only: copy the guard into a freshly allocated ancilla bound to ``slot``."""

    guard: object
    slot: str
    ctrls: tuple[str, ...] = ()
    nctrls: tuple[str, ...] = ()
    loc: tuple[int, int] | None = _loc()


def seq(*stmts):
    """Right-nested sequence of ``stmts`` (the canonical Seq shape)."""
    if not stmts:
        raise ValueError("empty sequence")
    out = stmts[-1]
    for s in reversed(stmts[:-1]):
        out = Seq(s, out)
    return out


def statements(p) -> list:
    """Flatten a Seq tree into its statement list."""
    if isinstance(p, Seq):
        return statements(p.left) + statements(p.right)
    return [p]


# -- lexer ---------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>==|[=<>(){};])
""", re.VERBOSE)


@dataclass
class _Tok:
    kind: str  # "int" | "ident" | "op" | "matrix" | "eof"
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, line_start = 0, 1, 0
    n = len(src)
    while pos < n:
        m = _TOKEN_RE.match(src, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", line, col)
        kind, text = m.lastgroup, m.group()
        end = m.end()
        if kind == "ident" and text == "u":
            j = end
            while j < n and src[j] in " \t":
                j += 1
            if j < n and src[j] == "[":
                depth, k = 0, j
                while k < n:
                    if src[k] == "[":
                        depth += 1
                    elif src[k] == "]":
                        depth -= 1
                        if depth == 0:
                            break
                    k += 1
                if depth:
                    raise ParseError("unterminated matrix literal", line, col)
                toks.append(_Tok("ident", text, line, col))
                kind, text, end = "matrix", src[j:k + 1], k + 1
                col = j - line_start + 1
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, text, line, col))
        chunk = src[pos:end]
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rindex("\n") + 1
        pos = end
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


_NUM = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_IMAG_RE = re.compile(rf"^([+-]?)({_NUM})?i$")
_CPLX_RE = re.compile(rf"^([+-]?{_NUM})(?:([+-])({_NUM})?i)?$")


def _parse_complex(text: str) -> complex:
    s = text.replace(" ", "")
    m = _IMAG_RE.match(s)
    if m:
        mag = float(m.group(2)) if m.group(2) else 1.0
        return complex(0.0, -mag if m.group(1) == "-" else mag)
    m = _CPLX_RE.match(s)
    if not m:
        raise ValueError(f"bad complex literal {text!r}")
    re_part = float(m.group(1))
    if m.group(2) is None:
        return complex(re_part, 0.0)
    mag = float(m.group(3)) if m.group(3) else 1.0
    return complex(re_part, -mag if m.group(2) == "-" else mag)


def _parse_matrix(tok: _Tok) -> GateSpec:
    body = tok.text.strip()
    if not (body.startswith("[") and body.endswith("]")):
        raise ParseError("malformed matrix literal", tok.line, tok.col)
    rows = re.findall(r"\[([^\[\]]*)\]", body[1:-1])
    if not rows or re.sub(r"\[[^\[\]]*\]|[\s,]", "", body[1:-1]):
        raise ParseError("malformed matrix literal", tok.line, tok.col)
    try:
        m = [[_parse_complex(e) for e in r.split(",")] for r in rows]
    except ValueError as exc:
        raise ParseError(str(exc), tok.line, tok.col) from None
    if any(len(r) != len(m) for r in m):
        raise ParseError("matrix literal must be square", tok.line, tok.col)
    try:
        return custom(m)
    except ValueError as exc:
        raise ParseError(str(exc), tok.line, tok.col) from None


# -- parser --------------------------------------------------------------------

class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self, off: int = 0) -> _Tok:
        return self.toks[min(self.i + off, len(self.toks) - 1)]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def fail(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ParseError(f"{msg}, found {found}", tok.line, tok.col)

    def expect_op(self, op: str) -> _Tok:
        t = self.peek()
        if t.kind != "op" or t.text != op:
            self.fail(f"expected {op!r}")
        return self.next()

    def expect_int(self) -> int:
        t = self.peek()
        if t.kind != "int":
            self.fail("expected an integer")
        return int(self.next().text)

    def expect_ident(self) -> _Tok:
        t = self.peek()
        if t.kind != "ident" or t.text in KEYWORDS:
            self.fail("expected an identifier")
        return self.next()

    def at_word(self, word: str) -> bool:
        t = self.peek()
        return t.kind == "ident" and t.text == word

    def file(self):
        decls = []
        while self.at_word("qubit") or self.at_word("uint"):
            decls.append(self.decl())
        stmts = [self.stmt()]
        while self.peek().kind != "eof":
            stmts.append(self.stmt())
        return decls, seq(*stmts)

    def decl(self) -> Decl:
        t = self.next()
        loc = (t.line, t.col)
        if t.text == "qubit":
            name = self.expect_ident().text
            self.expect_op(";")
            return Decl(name, "qubit", 1, 0, loc=loc)
        self.expect_op("<")
        width = self.expect_int()
        self.expect_op(">")
        name = self.expect_ident().text
        init = 0
        if self.peek().kind == "op" and self.peek().text == "=":
            self.next()
            init = self.expect_int()
        self.expect_op(";")
        return Decl(name, "uint", width, init, loc=loc)

    def block(self):
        self.expect_op("{")
        stmts = [self.stmt()]
        while not (self.peek().kind == "op" and self.peek().text == "}"):
            if self.peek().kind == "eof":
                self.fail("expected '}'")
            stmts.append(self.stmt())
        self.next()
        return seq(*stmts)

    def guard(self):
        t = self.peek()
        loc = (t.line, t.col)
        if t.kind == "ident":
            return QubitGuard(self.expect_ident().text, loc=loc)
        if t.kind == "op" and t.text == "(":
            self.next()
            name = self.expect_ident().text
            op = self.peek()
            if op.kind == "op" and op.text == ">":
                self.next()
                zero = self.peek()
                if self.expect_int() != 0:
                    self.fail("only '> 0' comparisons are supported", zero)
                self.expect_op(")")
                return GtZero(name, loc=loc)
            if op.kind == "op" and op.text == "==":
                self.next()
                c = self.expect_int()
                self.expect_op(")")
                return EqConst(name, c, loc=loc)
            self.fail("expected '>' or '=='")
        self.fail("expected a guard")

    def stmt(self):
        t = self.peek()
        loc = (t.line, t.col)
        if t.kind == "matrix":
            self.fail("matrix literal must follow 'u'")
        if t.kind != "ident":
            self.fail("expected a statement")
        word = t.text
        if word == "skip":
            self.next()
            self.expect_op(";")
            return Skip(loc=loc)
        if word in ("ctrl", "nctrl"):
            self.next()
            name = self.expect_ident().text
            return Ctrl(name, self.block(), word == "ctrl", loc=loc)
        if word == "if":
            self.next()
            g = self.guard()
            return If(g, self.block(), loc=loc)
        if word == "while":
            self.next()
            k = None
            if self.peek().kind == "op" and self.peek().text == "<":
                self.next()
                k = self.expect_int()
                self.expect_op(">")
            g = self.guard()
            body = self.block()
            if k is None:
                return While(g, body, loc=loc)
            return BoundedWhile(k, g, body, loc=loc)
        if word in GATE_WORDS:
            self.next()
            gate = GateSpec(word)
        elif word == "u":
            self.next()
            mt = self.peek()
            if mt.kind != "matrix":
                self.fail("expected a matrix literal after 'u'")
            gate = _parse_matrix(self.next())
        else:
            self.fail("expected a statement")
        ops = [self.expect_ident().text]
        while self.peek().kind == "ident" and self.peek().text not in KEYWORDS:
            ops.append(self.next().text)
        self.expect_op(";")
        return Apply(gate, tuple(ops), loc=loc)


def parse(source: str, check: bool = True):
    """Parse program text into ``(decls, program)``.

    Raises :class:`ParseError` on syntax errors and, when ``check`` is set,
    :class:`ValidationError` if the program is ill-formed.
    """
    decls, prog = _Parser(source).file()
    if check:
        diags = validate(decls, prog)
        if diags:
            raise ValidationError(diags)
    return decls, prog


# -- pretty printer ------------------------------------------------------------

def _fmt_real(x: float) -> str:
    return repr(float(x))


def _fmt_complex(z: complex) -> str:
    if z.imag == 0 and math.copysign(1.0, z.imag) > 0:
        return _fmt_real(z.real)
    sign = "-" if math.copysign(1.0, z.imag) < 0 else "+"
    return f"{_fmt_real(z.real)}{sign}{_fmt_real(abs(z.imag))}i"


def _fmt_gate(g: GateSpec) -> str:
    if g.kind != "u":
        return g.kind
    rows = ", ".join("[" + ", ".join(_fmt_complex(v) for v in row) + "]" for row in g.matrix)
    return f"u[{rows}]"


def _fmt_guard(g) -> str:
    if isinstance(g, QubitGuard):
        return g.name
    if isinstance(g, GtZero):
        return f"({g.name} > 0)"
    if isinstance(g, EqConst):
        return f"({g.name} == {g.value})"
    raise TypeError(f"not a guard: {g!r}")


def _simple(p) -> bool:
    return isinstance(p, (Skip, Apply, GuardCopy)) and not getattr(p, "ctrls", ()) \
        and not getattr(p, "nctrls", ())


def _emit(p, ind: str) -> Iterator[str]:
    if isinstance(p, Seq):
        yield from _emit(p.left, ind)
        yield from _emit(p.right, ind)
    elif isinstance(p, Skip):
        yield ind + "skip;"
    elif isinstance(p, Apply) and (p.ctrls or p.nctrls):
        wrapped = Apply(p.gate, p.operands)
        for name in reversed(p.nctrls):
            wrapped = Ctrl(name, wrapped, False)
        for name in reversed(p.ctrls):
            wrapped = Ctrl(name, wrapped, True)
        yield from _emit(wrapped, ind)
    elif isinstance(p, Apply):
        yield ind + f"{_fmt_gate(p.gate)} {' '.join(p.operands)};"
    elif isinstance(p, GuardCopy):
        ctl = "".join(f" +{c}" for c in p.ctrls) + "".join(f" -{c}" for c in p.nctrls)
        yield ind + f"copy {_fmt_guard(p.guard)} -> {p.slot}{ctl};"
    else:
        if isinstance(p, Ctrl):
            head = f"{'ctrl' if p.positive else 'nctrl'} {p.name}"
        elif isinstance(p, If):
            head = f"if {_fmt_guard(p.guard)}"
        elif isinstance(p, While):
            head = f"while {_fmt_guard(p.guard)}"
        elif isinstance(p, BoundedWhile):
            head = f"while<{p.k}> {_fmt_guard(p.guard)}"
        else:
            raise TypeError(f"not a statement: {p!r}")
        if _simple(p.body):
            (inner,) = _emit(p.body, "")
            yield ind + f"{head} {{ {inner} }}"
        else:
            yield ind + head + " {"
            yield from _emit(p.body, ind + "  ")
            yield ind + "}"


def _fmt_decl(d: Decl) -> str:
    if d.kind == "qubit":
        return f"qubit {d.name};"
    init = f" = {d.init}" if d.init else ""
    return f"uint<{d.width}> {d.name}{init};"


def pretty(decls, program) -> str:
    """Canonical source text; ``parse(pretty(d, p)) == (d, p)``.

    Core-only ``GuardCopy`` nodes are rendered as ``copy g -> %t;`` for
    debugging; that form is not parseable.
    """
    lines = [_fmt_decl(d) for d in decls]
    lines.extend(_emit(program, ""))
    return "\n".join(lines)


# -- validation ----------------------------------------------------------------

def validate(decls, program) -> list[Diagnostic]:
    """All well-formedness problems of a program; empty when it is valid."""
    diags: list[Diagnostic] = []
    table: dict[str, Decl] = {}
    for d in decls:
        if d.name in table:
            diags.append(Diagnostic(f"duplicate declaration {d.name}", d.loc))
            continue
        if d.kind not in ("qubit", "uint"):
            diags.append(Diagnostic(f"unknown kind {d.kind!r} for {d.name}", d.loc))
        if d.kind == "qubit" and d.width != 1:
            diags.append(Diagnostic(f"qubit {d.name} must have width 1", d.loc))
        if not 1 <= d.width <= MAX_WIDTH:
            diags.append(Diagnostic(f"width of {d.name} must be in 1..{MAX_WIDTH}", d.loc))
        elif not 0 <= d.init < (1 << d.width):
            diags.append(Diagnostic(
                f"initial value {d.init} of {d.name} out of range for width {d.width}", d.loc))
        table[d.name] = d

    def lookup(name, loc) -> Decl | None:
        if name.startswith("%"):
            return None
        d = table.get(name)
        if d is None:
            diags.append(Diagnostic(f"undeclared variable {name}", loc))
        return d

    def check_guard(g, loc):
        loc = g.loc or loc
        d = lookup(g.name, loc)
        if d is None:
            return
        if isinstance(g, QubitGuard) and d.width != 1:
            diags.append(Diagnostic(f"guard {g.name} must be a single qubit", loc))
        if isinstance(g, EqConst) and not 0 <= g.value < (1 << d.width):
            diags.append(Diagnostic(
                f"constant {g.value} out of range for {g.name} (width {d.width})", loc))

    def check_ctrl_name(name, loc):
        d = lookup(name, loc)
        if d is not None and d.width != 1:
            diags.append(Diagnostic(f"control {name} must be a single qubit", loc))

    def walk(p, controls: tuple[str, ...]):
        loc = getattr(p, "loc", None)
        if isinstance(p, Seq):
            walk(p.left, controls)
            walk(p.right, controls)
        elif isinstance(p, Skip):
            pass
        elif isinstance(p, Apply):
            for c in p.ctrls + p.nctrls:
                check_ctrl_name(c, loc)
            ops = p.operands
            seen = set()
            for o in ops:
                if o in seen:
                    diags.append(Diagnostic(f"duplicate operand {o}", loc))
                seen.add(o)
            decls_ok = [lookup(o, loc) for o in ops]
            allc = controls + p.ctrls + p.nctrls
            for o in ops:
                if o in allc:
                    diags.append(Diagnostic(f"operand {o} is also a control", loc))
            if len(set(p.ctrls + p.nctrls)) != len(p.ctrls + p.nctrls):
                diags.append(Diagnostic("duplicate control", loc))
            if any(d is None for d in decls_ok):
                return
            g = p.gate
            if g.kind in ("inc", "dec"):
                if len(ops) != 1:
                    diags.append(Diagnostic(f"{g.kind} takes exactly one register", loc))
                elif decls_ok[0].kind != "uint":
                    diags.append(Diagnostic(f"{g.kind} needs a uint register, {ops[0]} is a qubit", loc))
            else:
                total = sum(d.width for d in decls_ok)
                if total != g.arity:
                    diags.append(Diagnostic(
                        f"gate {_fmt_gate(g) if g.kind != 'u' else 'u'} acts on {g.arity} "
                        f"qubit(s) but operands have {total}", loc))
                if g.kind == "u":
                    dev = check_unitary(np.asarray(g.matrix, dtype=complex))
                    if dev > UNITARY_TOL:
                        diags.append(Diagnostic(f"custom matrix is not unitary (deviation {dev:.3g})", loc))
        elif isinstance(p, Ctrl):
            check_ctrl_name(p.name, loc)
            if p.name in controls:
                diags.append(Diagnostic(f"duplicate control {p.name}", loc))
            walk(p.body, controls + (p.name,))
        elif isinstance(p, If):
            check_guard(p.guard, loc)
            walk(p.body, controls)
        elif isinstance(p, GuardCopy):
            check_guard(p.guard, loc)
            for c in p.ctrls + p.nctrls:
                check_ctrl_name(c, loc)
        elif isinstance(p, (While, BoundedWhile)):
            if isinstance(p, BoundedWhile) and p.k < 0:
                diags.append(Diagnostic("loop bound must be nonnegative", loc))
            check_guard(p.guard, loc)
            if p.guard.name in controls:
                diags.append(Diagnostic(f"loop guard {p.guard.name} is a control of the loop", loc))
            walk(p.body, controls)
        else:
            diags.append(Diagnostic(f"unknown statement {type(p).__name__}", loc))

    walk(program, ())
    return diags


# -- desugaring ----------------------------------------------------------------

def is_core(p) -> bool:
    """True when ``p`` has no If or Ctrl nodes."""
    if isinstance(p, Seq):
        return is_core(p.left) and is_core(p.right)
    if isinstance(p, (While, BoundedWhile)):
        return is_core(p.body)
    return isinstance(p, (Skip, Apply, GuardCopy))


def _add_controls(p, pos: tuple[str, ...], neg: tuple[str, ...], where: str):
    if isinstance(p, Seq):
        return Seq(_add_controls(p.left, pos, neg, where),
                   _add_controls(p.right, pos, neg, where), loc=p.loc)
    if isinstance(p, Skip):
        return p
    if isinstance(p, Apply):
        return Apply(p.gate, p.operands, pos + p.ctrls, neg + p.nctrls, loc=p.loc)
    if isinstance(p, GuardCopy):
        return GuardCopy(p.guard, p.slot, pos + p.ctrls, neg + p.nctrls, loc=p.loc)
    if isinstance(p, (While, BoundedWhile)):
        raise ValidationError([Diagnostic(f"while loops inside {where} are not supported", p.loc)])
    raise TypeError(f"not a core statement: {p!r}")


def desugar(program):
    """Lower If and Ctrl nodes to guard copies and controlled gate applications.

    ``if g { s }`` becomes a :class:`GuardCopy` into a fresh ancilla slot
    followed by ``s`` with that slot as an extra positive control on every
    gate.  Ancilla slots are named ``%t1``, ``%t2``, ... in program order and
    bound to real tape positions at evaluation time.
    """
    counter = [0]

    def go(p):
        if isinstance(p, Seq):
            return Seq(go(p.left), go(p.right), loc=p.loc)
        if isinstance(p, (Skip, Apply, GuardCopy)):
            return p
        if isinstance(p, While):
            return While(p.guard, go(p.body), loc=p.loc)
        if isinstance(p, BoundedWhile):
            return BoundedWhile(p.k, p.guard, go(p.body), loc=p.loc)
        if isinstance(p, If):
            counter[0] += 1
            slot = f"%t{counter[0]}"
            body = _add_controls(go(p.body), (slot,), (), "if")
            return Seq(GuardCopy(p.guard, slot, loc=p.loc), body, loc=p.loc)
        if isinstance(p, Ctrl):
            pos, neg = ((p.name,), ()) if p.positive else ((), (p.name,))
            return _add_controls(go(p.body), pos, neg, "ctrl blocks")
        raise TypeError(f"not a statement: {p!r}")

    return go(program)
