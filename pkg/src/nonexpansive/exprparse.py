"""Vector-field expressions: parsing, printing, symbolic differentiation, evaluation.

Grammar (whitespace-insensitive; components separated by ``;`` or newlines)::

    field     := component { (";" | NEWLINE) component }
    component := sum
    sum       := product { ("+" | "-") product }
    product   := unary { ("*" | "/") unary }
    unary     := ("-" | "+") unary | power
    power     := atom [ ("^" | "**") INTEGER ]
    atom      := NUMBER | VARIABLE | FUNCTION "(" sum ")" | "(" sum ")"

Variables are ``x1 .. xn``; for ``n <= 3`` the aliases ``x``, ``y``, ``z`` are
accepted as well.  Functions are ``sin``, ``cos``, ``exp`` (analytic) and the
two non-analytic extensions ``relu`` (``max(0, u)``) and ``heaviside``
(``u > 0``), which exist so that C^1 but non-analytic test systems can be
written; any field that uses them has ``analytic == False``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

__all__ = [
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Pow",
    "Expr",
    "VectorFieldDef",
    "ParseError",
    "FieldEvaluationError",
    "parse_expr",
    "parse_field",
    "differentiate",
    "eval_field",
    "jacobian",
    "to_source",
    "linear_field",
    "ANALYTIC_UNARY",
]

ANALYTIC_UNARY = frozenset({"neg", "sin", "cos", "exp"})
NONANALYTIC_UNARY = frozenset({"relu", "heaviside"})
BINARY_OPS = ("add", "sub", "mul", "div")
ALIASES = ("x", "y", "z")


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: int

    def __post_init__(self):
        if not isinstance(self.exponent, int) or self.exponent < 0:
            raise ValueError("exponent must be a non-negative integer")


Expr = Union[Const, Var, Unary, Binary, Pow]


def walk(e: Expr):
    yield e
    if isinstance(e, Unary):
        yield from walk(e.arg)
    elif isinstance(e, Binary):
        yield from walk(e.left)
        yield from walk(e.right)
    elif isinstance(e, Pow):
        yield from walk(e.base)


def is_analytic(e: Expr) -> bool:
    return not any(isinstance(n, Unary) and n.op in NONANALYTIC_UNARY for n in walk(e))


def max_var_index(e: Expr) -> int:
    return max((n.index for n in walk(e) if isinstance(n, Var)), default=-1)


# ---------------------------------------------------------------------------
# constructors with constant folding


def _c(value: float) -> Const:
    return Const(float(value))


def _is(e: Expr, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return _c(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _c(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return Binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _c(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return Binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _c(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return _c(0.0)
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    return Binary("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return _c(a.value / b.value)
    if _is(a, 0.0) and not _is(b, 0.0):
        return _c(0.0)
    if _is(b, 1.0):
        return a
    return Binary("div", a, b)


def power(a: Expr, k: int) -> Expr:
    if k == 0:
        return _c(1.0)
    if k == 1:
        return a
    if isinstance(a, Const):
        return _c(a.value**k)
    return Pow(a, k)


def unary(op: str, a: Expr) -> Expr:
    if op == "neg":
        return neg(a)
    if isinstance(a, Const):
        return _c(_SCALAR_UNARY[op](a.value))
    return Unary(op, a)


_SCALAR_UNARY: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "relu": lambda u: max(0.0, u),
    "heaviside": lambda u: 1.0 if u > 0.0 else 0.0,
}


# ---------------------------------------------------------------------------
# differentiation


def differentiate(e: Expr, var: int) -> Expr:
    """Exact partial derivative of ``e`` with respect to variable ``var``."""
    if isinstance(e, Const):
        return _c(0.0)
    if isinstance(e, Var):
        return _c(1.0 if e.index == var else 0.0)
    if isinstance(e, Pow):
        db = differentiate(e.base, var)
        if e.exponent == 0:
            return _c(0.0)
        return mul(mul(_c(e.exponent), power(e.base, e.exponent - 1)), db)
    if isinstance(e, Unary):
        da = differentiate(e.arg, var)
        if e.op == "neg":
            return neg(da)
        if e.op == "sin":
            return mul(unary("cos", e.arg), da)
        if e.op == "cos":
            return mul(neg(unary("sin", e.arg)), da)
        if e.op == "exp":
            return mul(unary("exp", e.arg), da)
        if e.op == "relu":
            return mul(unary("heaviside", e.arg), da)
        if e.op == "heaviside":
            return _c(0.0)
        raise ValueError(f"unknown unary op {e.op!r}")
    if isinstance(e, Binary):
        dl = differentiate(e.left, var)
        dr = differentiate(e.right, var)
        if e.op == "add":
            return add(dl, dr)
        if e.op == "sub":
            return sub(dl, dr)
        if e.op == "mul":
            return add(mul(dl, e.right), mul(e.left, dr))
        if e.op == "div":
            # (l/r)' = l'/r - l r'/r^2
            return sub(div(dl, e.right), div(mul(e.left, dr), power(e.right, 2)))
        raise ValueError(f"unknown binary op {e.op!r}")
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# printing

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2}
_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
_UNARY_PREC = 3
_POW_PREC = 4
_ATOM_PREC = 5


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return _UNARY_PREC
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _UNARY_PREC
    if isinstance(e, Pow):
        return _POW_PREC
    return _ATOM_PREC


def _fmt_number(v: float) -> str:
    if math.isfinite(v) and v == int(v) and abs(v) < 1e16:
        return str(int(v)) if not (v == 0 and math.copysign(1.0, v) < 0) else "-0"
    return repr(v)


def to_source(e: Expr, names: Sequence[str] | None = None) -> str:
    """Render ``e`` in the input grammar; ``parse_expr(to_source(e))`` returns ``e``."""

    def name(i: int) -> str:
        return names[i] if names is not None else f"x{i + 1}"

    def go(e: Expr) -> str:
        if isinstance(e, Const):
            return _fmt_number(e.value)
        if isinstance(e, Var):
            return name(e.index)
        if isinstance(e, Pow):
            base = go(e.base)
            if _prec(e.base) <= _POW_PREC:
                base = f"({base})"
            return f"{base}^{e.exponent}"
        if isinstance(e, Unary):
            if e.op == "neg":
                inner = go(e.arg)
                # a literal after '-' would fold into a negative constant
                if _prec(e.arg) < _UNARY_PREC or isinstance(e.arg, Const):
                    inner = f"({inner})"
                return f"-{inner}"
            return f"{e.op}({go(e.arg)})"
        if isinstance(e, Binary):
            p = _PREC[e.op]
            left = go(e.left)
            if _prec(e.left) < p:
                left = f"({left})"
            right = go(e.right)
            if _prec(e.right) <= p:
                right = f"({right})"
            return f"{left} {_SYM[e.op]} {right}"
        raise TypeError(f"not an expression: {e!r}")

    return go(e)


# ---------------------------------------------------------------------------
# parsing


class ParseError(ValueError):
    """Syntax, arity or identifier error, with 1-based line/column."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        loc = f"line {line}, column {column}: " if line else ""
        super().__init__(loc + message)


_TOKEN_RE = re.compile(
    r"""
    (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^();])
  | (?P<newline>\n)
  | (?P<space>[ \t\r]+)
  | (?P<bad>.)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    line, line_start = 1, 0
    for m in _TOKEN_RE.finditer(source):
        kind = m.lastgroup
        col = m.start() - line_start + 1
        if kind == "bad":
            raise ParseError(f"unexpected character {m.group()!r}", line, col)
        if kind == "space":
            continue
        if kind == "newline":
            tokens.append(_Token("sep", "\n", line, col))
            line += 1
            line_start = m.end()
            continue
        text = m.group()
        if kind == "op" and text == ";":
            kind = "sep"
        elif kind == "op" and text == "**":
            text = "^"
        tokens.append(_Token(kind, text, line, col))
    tokens.append(_Token("eof", "", line, len(source) - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], dimension: int):
        self.tokens = tokens
        self.pos = 0
        self.dimension = dimension

    @property
    def tok(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def error(self, message: str, tok: _Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.column)

    def expect(self, text: str) -> _Token:
        if self.tok.text != text or self.tok.kind not in ("op",):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return self.advance()

    def components(self) -> list[Expr]:
        out = []
        while True:
            while self.tok.kind == "sep":
                self.advance()
            if self.tok.kind == "eof":
                return out
            out.append(self.sum())
            if self.tok.kind not in ("sep", "eof"):
                raise self.error(f"unexpected token {self.tok.text!r}")

    def sum(self) -> Expr:
        e = self.product()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = "add" if self.advance().text == "+" else "sub"
            e = Binary(op, e, self.product())
        return e

    def product(self) -> Expr:
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = "mul" if self.advance().text == "*" else "div"
            e = Binary(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text in "+-":
            sign = self.advance().text
            start = self.tok
            arg = self.unary()
            if sign == "+":
                return arg
            # '-' directly on a numeric literal is a negative constant
            if start.kind == "number" and isinstance(arg, Const) and self.tokens[self.pos - 1] is start:
                return Const(-arg.value)
            return Unary("neg", arg)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.advance()
            t = self.tok
            if t.kind != "number" or not re.fullmatch(r"\d+", t.text):
                raise self.error("exponent must be a non-negative integer literal", t)
            self.advance()
            return Pow(base, int(t.text))
        return base

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "number":
            self.advance()
            value = float(t.text)
            if not math.isfinite(value):
                raise self.error(f"numeric literal {t.text!r} is not finite", t)
            return Const(value)
        if t.kind == "ident":
            self.advance()
            if t.text in _SCALAR_UNARY:
                self.expect("(")
                arg = self.sum()
                self.expect(")")
                return Unary(t.text, arg)
            return Var(self.variable_index(t))
        if t.kind == "op" and t.text == "(":
            self.advance()
            e = self.sum()
            self.expect(")")
            return e
        found = t.text or "end of input"
        raise self.error(f"unexpected {found!r}")

    def variable_index(self, t: _Token) -> int:
        m = re.fullmatch(r"x(\d+)", t.text)
        if m:
            i = int(m.group(1)) - 1
        elif t.text in ALIASES and self.dimension <= 3:
            i = ALIASES.index(t.text)
        else:
            raise self.error(f"unknown identifier {t.text!r}", t)
        if not 0 <= i < self.dimension:
            raise self.error(f"variable {t.text!r} out of range for dimension {self.dimension}", t)
        return i


def parse_expr(source: str, dimension: int = 3) -> Expr:
    """Parse a single expression."""
    parser = _Parser(_tokenize(source), dimension)
    while parser.tok.kind == "sep":
        parser.advance()
    e = parser.sum()
    while parser.tok.kind == "sep":
        parser.advance()
    if parser.tok.kind != "eof":
        raise parser.error(f"unexpected token {parser.tok.text!r}")
    return e


def parse_field(source: str | Sequence[str], dimension: int) -> "VectorFieldDef":
    """Parse ``dimension`` component expressions into a :class:`VectorFieldDef`.

    ``source`` is either one string with ``;``/newline separators or a list of
    component strings.
    """
    if dimension < 1:
        raise ParseError(f"dimension must be positive, got {dimension}")
    if isinstance(source, str):
        components = _Parser(_tokenize(source), dimension).components()
    else:
        components = []
        for s in source:
            comps = _Parser(_tokenize(s), dimension).components()
            if len(comps) != 1:
                raise ParseError(f"expected exactly one expression in {s!r}")
            components.extend(comps)
    if len(components) != dimension:
        raise ParseError(f"arity mismatch: {len(components)} component(s) for dimension {dimension}")
    return VectorFieldDef(dimension, tuple(components))


# ---------------------------------------------------------------------------
# compilation to numpy callables


class FieldEvaluationError(ArithmeticError):
    """Division by zero or a non-finite value during field evaluation."""


def _safe_div(a, b):
    if np.any(np.asarray(b) == 0):
        raise FieldEvaluationError("division by zero")
    return a / b


_NP_NAMES = {
    "sin": "_np.sin",
    "cos": "_np.cos",
    "exp": "_np.exp",
    "relu": "_relu",
    "heaviside": "_heav",
}
_ENV = {
    "_np": np,
    "_div": _safe_div,
    "_relu": lambda u: np.maximum(u, 0.0),
    "_heav": lambda u: np.where(np.asarray(u) > 0.0, 1.0, 0.0),
}


def _py(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x[{e.index}]"
    if isinstance(e, Pow):
        return f"({_py(e.base)})**{e.exponent}"
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{_py(e.arg)})"
        return f"{_NP_NAMES[e.op]}({_py(e.arg)})"
    if isinstance(e, Binary):
        if e.op == "div":
            return f"_div({_py(e.left)}, {_py(e.right)})"
        return f"({_py(e.left)} {_SYM[e.op]} {_py(e.right)})"
    raise TypeError(f"not an expression: {e!r}")


def _compile(exprs: Sequence[Expr]) -> Callable:
    body = ", ".join(_py(e) for e in exprs)
    return eval(f"lambda x: ({body},)", dict(_ENV))


def _finite(values: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise FieldEvaluationError("non-finite value in field evaluation")
    return values


@dataclass(frozen=True)
class VectorFieldDef:
    """An n-dimensional vector field ``f`` with its symbolic Jacobian."""

    dimension: int
    components: tuple
    analytic: bool = field(init=False)

    def __post_init__(self):
        if len(self.components) != self.dimension:
            raise ValueError("components length must equal dimension")
        for c in self.components:
            if max_var_index(c) >= self.dimension:
                raise ValueError("variable index exceeds dimension")
        object.__setattr__(self, "analytic", all(is_analytic(c) for c in self.components))

    @cached_property
    def jacobian_exprs(self) -> tuple:
        n = self.dimension
        return tuple(tuple(differentiate(c, j) for j in range(n)) for c in self.components)

    @cached_property
    def _f(self) -> Callable:
        return _compile(self.components)

    @cached_property
    def _jac(self) -> Callable:
        return _compile([d for row in self.jacobian_exprs for d in row])

    @cached_property
    def linear_matrix(self) -> np.ndarray | None:
        """``A`` when ``f(x) = A x`` identically, else None."""
        entries = [d for row in self.jacobian_exprs for d in row]
        if not all(isinstance(d, Const) for d in entries):
            return None
        if np.any(self(np.zeros(self.dimension)) != 0.0):
            return None
        return np.array([d.value for d in entries]).reshape(self.dimension, self.dimension)

    def __call__(self, x) -> np.ndarray:
        """``f(x)``; with ``x`` of shape ``(n, *batch)`` returns ``(n, *batch)``."""
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            if x.ndim == 1:
                out = np.array(self._f(x), dtype=float)
            else:
                out = np.array(np.broadcast_arrays(*self._f(x), x[0])[:-1], dtype=float)
        return _finite(out)

    def jacobian(self, x) -> np.ndarray:
        """Jacobian at ``x``; with ``x`` of shape ``(n, *batch)`` returns ``(n, n, *batch)``."""
        x = np.asarray(x, dtype=float)
        n = self.dimension
        with np.errstate(all="ignore"):
            vals = np.broadcast_arrays(*self._jac(x), x[0])[:-1]
        out = np.array(vals, dtype=float).reshape((n, n) + x.shape[1:])
        return _finite(out)

    def source(self) -> list[str]:
        names = ALIASES[: self.dimension] if self.dimension <= 3 else None
        return [to_source(c, names) for c in self.components]


def eval_field(f: VectorFieldDef, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != f.dimension:
        raise ValueError(f"point has length {x.shape[0]}, field dimension is {f.dimension}")
    return f(x)


def jacobian(f: VectorFieldDef, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != f.dimension:
        raise ValueError(f"point has length {x.shape[0]}, field dimension is {f.dimension}")
    return f.jacobian(x)


def linear_field(A) -> VectorFieldDef:
    """The field ``x -> A x`` built from the matrix entries."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("A must be square")
    comps = []
    for i in range(n):
        e: Expr = _c(0.0)
        for j in range(n):
            if A[i, j] != 0.0:
                e = add(e, mul(_c(A[i, j]), Var(j)))
        comps.append(e)
    return VectorFieldDef(n, tuple(comps))
