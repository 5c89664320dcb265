"""Symbolic scalar expressions over a fixed variable list.

Supports parsing from infix text, exact point evaluation, symbolic
differentiation, conservative interval evaluation, and compilation to a
plain Python callable for hot loops (ODE right-hand sides, objective
gradients).  Expression trees are immutable and safe to share.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

from . import interval as iv
from .interval import Interval


class ExprError(Exception):
    """Base class for expression failures."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class DomainError(ExprError):
    """Evaluation hit a point outside an operation's domain."""


@dataclass(frozen=True)
class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class Sin(Expr):
    arg: Expr


@dataclass(frozen=True)
class Cos(Expr):
    arg: Expr


@dataclass(frozen=True)
class Ln(Expr):
    arg: Expr


@dataclass(frozen=True)
class Sqrt(Expr):
    arg: Expr


@dataclass(frozen=True)
class Exp(Expr):
    arg: Expr


@dataclass(frozen=True)
class Add(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Sub(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Mul(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Div(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def __post_init__(self):
        if self.exponent < 0:
            raise ValueError("integer powers must have non-negative exponents")


_FUNCTIONS = {"sin": Sin, "cos": Cos, "ln": Ln, "sqrt": Sqrt, "exp": Exp}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?"
    r"|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            raise ParseError(f"unexpected character {stripped[0]!r}", pos)
        if m.lastgroup is not None:
            tokens.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, variables: Sequence[str]):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.var_index = {name: i for i, name in enumerate(variables)}

    def _peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self):
        tok = self._peek()
        if tok is None:
            raise ParseError("unexpected end of input", len(self.text))
        self.pos += 1
        return tok

    def _expect_op(self, symbol: str):
        tok = self._next()
        if tok[0] != "op" or tok[1] != symbol:
            raise ParseError(f"expected {symbol!r}", tok[2])

    def parse(self) -> Expr:
        e = self._sum()
        tok = self._peek()
        if tok is not None:
            raise ParseError(f"unexpected token {tok[1]!r}", tok[2])
        return e

    def _sum(self) -> Expr:
        e = self._term()
        while True:
            tok = self._peek()
            if tok is None or tok[0] != "op" or tok[1] not in "+-":
                return e
            self.pos += 1
            rhs = self._term()
            e = Add(e, rhs) if tok[1] == "+" else Sub(e, rhs)

    def _term(self) -> Expr:
        e = self._factor()
        while True:
            tok = self._peek()
            if tok is None or tok[0] != "op" or tok[1] not in "*/":
                return e
            self.pos += 1
            rhs = self._factor()
            e = Mul(e, rhs) if tok[1] == "*" else Div(e, rhs)

    def _factor(self) -> Expr:
        tok = self._peek()
        if tok is not None and tok[0] == "op" and tok[1] == "-":
            self.pos += 1
            return Neg(self._factor())
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        tok = self._peek()
        if tok is not None and tok[0] == "op" and tok[1] == "^":
            self.pos += 1
            etok = self._next()
            if etok[0] != "num" or not etok[1].isdigit():
                raise ParseError("exponent must be a non-negative integer", etok[2])
            return Pow(base, int(etok[1]))
        return base

    def _atom(self) -> Expr:
        tok = self._next()
        kind, value, start = tok
        if kind == "num":
            return Const(float(value))
        if kind == "ident":
            if value in _FUNCTIONS:
                self._expect_op("(")
                arg = self._sum()
                self._expect_op(")")
                return _FUNCTIONS[value](arg)
            if value in self.var_index:
                return Var(self.var_index[value])
            raise ParseError(f"unknown identifier {value!r}", start)
        if kind == "op" and value == "(":
            e = self._sum()
            self._expect_op(")")
            return e
        raise ParseError(f"unexpected token {value!r}", start)


def parse(text: str, variables: Sequence[str]) -> Expr:
    """Parse infix text over the named variables.

    Precedence: ^ binds tighter than unary minus, which binds tighter than
    * and /, which bind tighter than + and -.
    """
    return _Parser(text, variables).parse()


_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}
_FUNC_NAMES = {Sin: "sin", Cos: "cos", Ln: "ln", Sqrt: "sqrt", Exp: "exp"}


def to_text(e: Expr, variables: Sequence[str]) -> str:
    """Render to infix text; parse(to_text(e)) reproduces e."""

    def wrap(child: Expr, parent_prec: int, right: bool = False) -> str:
        s = render(child)
        prec = _PREC.get(type(child), 5)
        if isinstance(child, Const) and child.value < 0:
            prec = _PREC[Neg]  # prints with a leading minus sign
        if prec < parent_prec or (right and prec == parent_prec):
            return f"({s})"
        return s

    def render(node: Expr) -> str:
        match node:
            case Const(v):
                return repr(v) if v >= 0 else f"-{-v!r}"
            case Var(i):
                return variables[i]
            case Neg(a):
                return f"-{wrap(a, 3, right=True)}"
            case Add(a, b):
                return f"{wrap(a, 1)} + {wrap(b, 1, right=True)}"
            case Sub(a, b):
                return f"{wrap(a, 1)} - {wrap(b, 1, right=True)}"
            case Mul(a, b):
                return f"{wrap(a, 2)}*{wrap(b, 2, right=True)}"
            case Div(a, b):
                return f"{wrap(a, 2)}/{wrap(b, 2, right=True)}"
            case Pow(base, n):
                return f"{wrap(base, 5)}^{n}"
            case _:
                return f"{_FUNC_NAMES[type(node)]}({render(node.arg)})"

    return render(e)


def evaluate(e: Expr, env: Sequence[float]) -> float:
    """Exact point evaluation; domain violations raise DomainError."""
    match e:
        case Const(v):
            return v
        case Var(i):
            return env[i]
        case Neg(a):
            return -evaluate(a, env)
        case Add(a, b):
            return evaluate(a, env) + evaluate(b, env)
        case Sub(a, b):
            return evaluate(a, env) - evaluate(b, env)
        case Mul(a, b):
            return evaluate(a, env) * evaluate(b, env)
        case Div(a, b):
            d = evaluate(b, env)
            if d == 0.0:
                raise DomainError("division by zero")
            return evaluate(a, env) / d
        case Pow(base, n):
            return evaluate(base, env) ** n
        case Sin(a):
            return math.sin(evaluate(a, env))
        case Cos(a):
            return math.cos(evaluate(a, env))
        case Exp(a):
            return math.exp(evaluate(a, env))
        case Ln(a):
            v = evaluate(a, env)
            if v <= 0.0:
                raise DomainError(f"ln of non-positive value {v}")
            return math.log(v)
        case Sqrt(a):
            v = evaluate(a, env)
            if v < 0.0:
                raise DomainError(f"sqrt of negative value {v}")
            return math.sqrt(v)
    raise TypeError(f"not an expression: {e!r}")


def _add(a: Expr, b: Expr) -> Expr:
    if a == Const(0.0):
        return b
    if b == Const(0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Add(a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if b == Const(0.0):
        return a
    if a == Const(0.0):
        return Neg(b) if not isinstance(b, Const) else Const(-b.value)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Sub(a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if a == Const(0.0) or b == Const(0.0):
        return Const(0.0)
    if a == Const(1.0):
        return b
    if b == Const(1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Mul(a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if a == Const(0.0):
        return Const(0.0)
    if b == Const(1.0):
        return a
    return Div(a, b)


def _pow(base: Expr, n: int) -> Expr:
    if n == 0:
        return Const(1.0)
    if n == 1:
        return base
    return Pow(base, n)


def differentiate(e: Expr, var: int) -> Expr:
    """Symbolic partial derivative with respect to variable index ``var``."""
    match e:
        case Const(_):
            return Const(0.0)
        case Var(i):
            return Const(1.0) if i == var else Const(0.0)
        case Neg(a):
            d = differentiate(a, var)
            return _sub(Const(0.0), d)
        case Add(a, b):
            return _add(differentiate(a, var), differentiate(b, var))
        case Sub(a, b):
            return _sub(differentiate(a, var), differentiate(b, var))
        case Mul(a, b):
            return _add(
                _mul(differentiate(a, var), b), _mul(a, differentiate(b, var))
            )
        case Div(a, b):
            num = _sub(
                _mul(differentiate(a, var), b), _mul(a, differentiate(b, var))
            )
            return _div(num, _pow(b, 2))
        case Pow(base, n):
            if n == 0:
                return Const(0.0)
            inner = differentiate(base, var)
            return _mul(_mul(Const(float(n)), _pow(base, n - 1)), inner)
        case Sin(a):
            return _mul(Cos(a), differentiate(a, var))
        case Cos(a):
            return _sub(Const(0.0), _mul(Sin(a), differentiate(a, var)))
        case Exp(a):
            return _mul(Exp(a), differentiate(a, var))
        case Ln(a):
            return _div(differentiate(a, var), a)
        case Sqrt(a):
            return _div(differentiate(a, var), _mul(Const(2.0), Sqrt(a)))
    raise TypeError(f"not an expression: {e!r}")


def interval_eval(e: Expr, box: Sequence[Interval]) -> Interval | None:
    """Sound enclosure of e over the box, or None when the box touches a
    domain boundary of some sub-expression."""
    match e:
        case Const(v):
            return Interval(v, v)
        case Var(i):
            return box[i]
        case Neg(a):
            x = interval_eval(a, box)
            return None if x is None else iv.neg(x)
        case Add(a, b):
            x = interval_eval(a, box)
            y = interval_eval(b, box)
            return None if x is None or y is None else iv.add(x, y)
        case Sub(a, b):
            x = interval_eval(a, box)
            y = interval_eval(b, box)
            return None if x is None or y is None else iv.sub(x, y)
        case Mul(a, b):
            x = interval_eval(a, box)
            y = interval_eval(b, box)
            return None if x is None or y is None else iv.mul(x, y)
        case Div(a, b):
            x = interval_eval(a, box)
            y = interval_eval(b, box)
            return None if x is None or y is None else iv.div(x, y)
        case Pow(base, n):
            x = interval_eval(base, box)
            return None if x is None else iv.power(x, n)
        case Sin(a):
            x = interval_eval(a, box)
            return None if x is None else iv.sin(x)
        case Cos(a):
            x = interval_eval(a, box)
            return None if x is None else iv.cos(x)
        case Exp(a):
            x = interval_eval(a, box)
            return None if x is None else iv.exp(x)
        case Ln(a):
            x = interval_eval(a, box)
            return None if x is None else iv.log(x)
        case Sqrt(a):
            x = interval_eval(a, box)
            return None if x is None else iv.sqrt(x)
    raise TypeError(f"not an expression: {e!r}")


def _codegen(e: Expr) -> str:
    match e:
        case Const(v):
            return f"({v!r})"  # unparenthesized negatives bind wrongly with **
        case Var(i):
            return f"_v[{i}]"
        case Neg(a):
            return f"(-{_codegen(a)})"
        case Add(a, b):
            return f"({_codegen(a)} + {_codegen(b)})"
        case Sub(a, b):
            return f"({_codegen(a)} - {_codegen(b)})"
        case Mul(a, b):
            return f"({_codegen(a)} * {_codegen(b)})"
        case Div(a, b):
            return f"({_codegen(a)} / {_codegen(b)})"
        case Pow(base, n):
            return f"({_codegen(base)} ** {n})"
        case Sin(a):
            return f"_sin({_codegen(a)})"
        case Cos(a):
            return f"_cos({_codegen(a)})"
        case Exp(a):
            return f"_exp({_codegen(a)})"
        case Ln(a):
            return f"_log({_codegen(a)})"
        case Sqrt(a):
            return f"_sqrt({_codegen(a)})"
    raise TypeError(f"not an expression: {e!r}")


def compile_expr(e: Expr):
    """Compile to a fast ``f(values) -> float``.

    The compiled form raises the underlying math errors (ValueError,
    ZeroDivisionError, OverflowError) on domain violations instead of
    DomainError; hot-loop callers treat any of those as a failed step.
    """
    src = f"lambda _v: {_codegen(e)}"
    namespace = {
        "_sin": math.sin,
        "_cos": math.cos,
        "_exp": math.exp,
        "_log": math.log,
        "_sqrt": math.sqrt,
    }
    return eval(src, namespace)  # noqa: S307 - source is generated locally


def variables_of(e: Expr) -> set[int]:
    match e:
        case Const(_):
            return set()
        case Var(i):
            return {i}
        case Neg(a) | Sin(a) | Cos(a) | Ln(a) | Sqrt(a) | Exp(a):
            return variables_of(a)
        case Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b):
            return variables_of(a) | variables_of(b)
        case Pow(base, _):
            return variables_of(base)
    raise TypeError(f"not an expression: {e!r}")


def negated(e: Expr) -> Expr:
    """Negate, collapsing double negation so reversal is an involution."""
    if isinstance(e, Neg):
        return e.arg
    return Neg(e)
