"""Coefficient expressions: parsing, evaluation, symbolic and Taylor derivatives.

Grammar (``-`` and the Unicode minus ``−`` are interchangeable)::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := unary ("^" factor)?
    unary  := "-" unary | atom
    atom   := number | "x" | func "(" expr ")" | "(" expr ")"
    func   := "sin" | "cos" | "exp" | "log" | "sqrt" | "tanh"

Unary minus binds tighter than ``^`` (``-x^2`` is ``(-x)^2``) and ``^`` is
right-associative. Implicit multiplication is rejected.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import ExprDomainError, ExprSyntaxError, UnknownIdentifier

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh")


class Expression:
    """Immutable expression tree node."""

    __slots__ = ()

    def __call__(self, x):
        return evaluate(self, x)

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True, slots=True)
class Num(Expression):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expression):
    pass


@dataclass(frozen=True, slots=True)
class Neg(Expression):
    arg: Expression


@dataclass(frozen=True, slots=True)
class BinOp(Expression):
    op: str  # one of + - * / ^
    left: Expression
    right: Expression


@dataclass(frozen=True, slots=True)
class Call(Expression):
    func: str
    arg: Expression


X = Var()
ZERO = Num(0.0)
ONE = Num(1.0)

# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()−])
    """,
    re.VERBOSE,
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos, source)
        kind = m.lastgroup
        text = m.group()
        if kind == "op" and text == "−":
            text = "-"
        if kind != "ws":
            tokens.append((kind, text, pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def error(self, message: str):
        kind, text, pos = self.tok
        if kind == "end":
            message = f"{message}; unexpected end of input"
        else:
            message = f"{message}; unexpected {text!r}"
        raise ExprSyntaxError(message, pos, self.source)

    def accept(self, text: str) -> bool:
        if self.tok[0] == "op" and self.tok[1] == text:
            self.i += 1
            return True
        return False

    def parse(self) -> Expression:
        node = self.expr()
        if self.tok[0] != "end":
            self.error("expected operator")
        return node

    def expr(self) -> Expression:
        node = self.term()
        while True:
            if self.accept("+"):
                node = BinOp("+", node, self.term())
            elif self.accept("-"):
                node = BinOp("-", node, self.term())
            else:
                return node

    def term(self) -> Expression:
        node = self.factor()
        while True:
            if self.accept("*"):
                node = BinOp("*", node, self.factor())
            elif self.accept("/"):
                node = BinOp("/", node, self.factor())
            else:
                return node

    def factor(self) -> Expression:
        base = self.unary()
        if self.accept("^"):
            return BinOp("^", base, self.factor())
        return base

    def unary(self) -> Expression:
        if self.accept("-"):
            return Neg(self.unary())
        return self.atom()

    def atom(self) -> Expression:
        kind, text, pos = self.tok
        if kind == "num":
            value = float(text)
            if not math.isfinite(value):
                raise ExprSyntaxError("number out of range", pos, self.source)
            self.i += 1
            return Num(value)
        if kind == "ident":
            if text == "x":
                self.i += 1
                return X
            if text in FUNCTIONS:
                self.i += 1
                if not self.accept("("):
                    self.error(f"expected '(' after {text}")
                arg = self.expr()
                if not self.accept(")"):
                    self.error("expected ')'")
                return Call(text, arg)
            raise UnknownIdentifier(f"unknown identifier {text!r}", pos, self.source)
        if self.accept("("):
            node = self.expr()
            if not self.accept(")"):
                self.error("expected ')'")
            return node
        self.error("expected number, 'x', function or '('")


def parse(source: str) -> Expression:
    """Parse ``source`` into an expression tree.

    Raises:
        ExprSyntaxError: with the character offset of the offending token.
        UnknownIdentifier: for names other than ``x`` and the known functions.
    """
    if not source or not source.strip():
        raise ExprSyntaxError("empty expression", 0, source)
    return _Parser(source).parse()


def to_text(e: Expression) -> str:
    """Serialize unambiguously (every compound subexpression parenthesized)."""
    if isinstance(e, Num):
        text = repr(float(e.value))
        return f"({text})" if e.value < 0 or text.startswith("-") else text
    if isinstance(e, Var):
        return "x"
    if isinstance(e, Neg):
        return f"(-{to_text(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    raise TypeError(f"not an expression: {e!r}")


def depends_on_x(e: Expression) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, Num):
        return False
    if isinstance(e, (Neg, Call)):
        return depends_on_x(e.arg)
    return depends_on_x(e.left) or depends_on_x(e.right)


# ---------------------------------------------------------------------------
# evaluation


def _checked(value, what: str):
    if not np.all(np.isfinite(value)):
        raise ExprDomainError(f"{what} is not finite")
    return value


def _eval(e: Expression, x):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return x
    if isinstance(e, Neg):
        return -_eval(e.arg, x)
    if isinstance(e, BinOp):
        a = _eval(e.left, x)
        b = _eval(e.right, x)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if np.any(np.asarray(b) == 0):
                raise ExprDomainError("division by zero")
            return _checked(np.divide(a, b), "quotient")
        return _checked(np.power(a, b), "power")
    if isinstance(e, Call):
        a = _eval(e.arg, x)
        if e.func == "log":
            if np.any(np.asarray(a) <= 0):
                raise ExprDomainError("log of a non-positive number")
            return np.log(a)
        if e.func == "sqrt":
            if np.any(np.asarray(a) < 0):
                raise ExprDomainError("sqrt of a negative number")
            return np.sqrt(a)
        return _checked(getattr(np, e.func)(a), e.func)
    raise TypeError(f"not an expression: {e!r}")


def evaluate(e: Expression, x):
    """Evaluate at a scalar or array ``x`` in double precision.

    Returns a float for scalar input, an array of ``np.shape(x)`` otherwise.

    Raises:
        ExprDomainError: on poles, log/sqrt of negatives, or any non-finite
            intermediate value.
    """
    scalar = np.ndim(x) == 0
    xa = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        value = _checked(np.broadcast_to(_eval(e, xa), xa.shape).astype(float), "value")
    return float(value) if scalar else value


# ---------------------------------------------------------------------------
# symbolic differentiation


def _add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    return BinOp("+", a, b)


def _sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if b == ZERO:
        return a
    if a == ZERO:
        return _neg(b)
    return BinOp("-", a, b)


def _neg(a: Expression) -> Expression:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    return BinOp("*", a, b)


def _div(a: Expression, b: Expression) -> Expression:
    if a == ZERO:
        return ZERO
    if b == ONE:
        return a
    return BinOp("/", a, b)


def _pow(a: Expression, b: Expression) -> Expression:
    if b == ONE:
        return a
    if b == ZERO:
        return ONE
    return BinOp("^", a, b)


def differentiate(e: Expression) -> Expression:
    """Exact derivative with respect to ``x``, lightly simplified."""
    if isinstance(e, (Num,)):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return _neg(differentiate(e.arg))
    if isinstance(e, BinOp):
        u, v = e.left, e.right
        du, dv = differentiate(u), differentiate(v)
        if e.op == "+":
            return _add(du, dv)
        if e.op == "-":
            return _sub(du, dv)
        if e.op == "*":
            return _add(_mul(du, v), _mul(u, dv))
        if e.op == "/":
            return _div(_sub(_mul(du, v), _mul(u, dv)), _pow(v, Num(2.0)))
        # power
        if not depends_on_x(v):
            return _mul(_mul(v, _pow(u, _sub(v, ONE))), du)
        if not depends_on_x(u):
            return _mul(_mul(e, Call("log", u)), dv)
        return _mul(e, _add(_mul(dv, Call("log", u)), _div(_mul(v, du), u)))
    if isinstance(e, Call):
        u = e.arg
        du = differentiate(u)
        if du == ZERO:
            return ZERO
        if e.func == "sin":
            outer = Call("cos", u)
        elif e.func == "cos":
            outer = _neg(Call("sin", u))
        elif e.func == "exp":
            outer = e
        elif e.func == "log":
            return _div(du, u)
        elif e.func == "sqrt":
            return _div(du, _mul(Num(2.0), e))
        else:
            outer = _sub(ONE, _pow(e, Num(2.0)))
        return _mul(outer, du)
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Taylor arithmetic: arrays of normalized coefficients c[n] = f^(n)(x) / n!


def _tmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    for n in range(a.shape[0]):
        out[n] = sum(a[j] * b[n - j] for j in range(n + 1))
    return out


def _tdiv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if np.any(b[0] == 0):
        raise ExprDomainError("division by zero")
    q = np.zeros_like(a)
    for n in range(a.shape[0]):
        q[n] = (a[n] - sum(b[j] * q[n - j] for j in range(1, n + 1))) / b[0]
    return q


def _texp(a: np.ndarray) -> np.ndarray:
    e = np.zeros_like(a)
    e[0] = np.exp(a[0])
    for n in range(1, a.shape[0]):
        e[n] = sum(j * a[j] * e[n - j] for j in range(1, n + 1)) / n
    return e


def _tlog(a: np.ndarray) -> np.ndarray:
    if np.any(a[0] <= 0):
        raise ExprDomainError("log of a non-positive number")
    out = np.zeros_like(a)
    out[0] = np.log(a[0])
    for n in range(1, a.shape[0]):
        s = sum(j * out[j] * a[n - j] for j in range(1, n))
        out[n] = (a[n] - s / n) / a[0]
    return out


def _tsincos(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = np.zeros_like(a)
    c = np.zeros_like(a)
    s[0] = np.sin(a[0])
    c[0] = np.cos(a[0])
    for n in range(1, a.shape[0]):
        s[n] = sum(j * a[j] * c[n - j] for j in range(1, n + 1)) / n
        c[n] = -sum(j * a[j] * s[n - j] for j in range(1, n + 1)) / n
    return s, c


def _tsqrt(a: np.ndarray) -> np.ndarray:
    if np.any(a[0] < 0):
        raise ExprDomainError("sqrt of a negative number")
    r = np.zeros_like(a)
    r[0] = np.sqrt(a[0])
    for n in range(1, a.shape[0]):
        r[n] = (a[n] - sum(r[j] * r[n - j] for j in range(1, n))) / (2.0 * r[0])
    return r


def _ttanh(a: np.ndarray) -> np.ndarray:
    t = np.zeros_like(a)
    s = np.zeros_like(a)  # s = 1 - t^2
    t[0] = np.tanh(a[0])
    s[0] = 1.0 - t[0] ** 2
    for n in range(1, a.shape[0]):
        t[n] = sum(j * a[j] * s[n - j] for j in range(1, n + 1)) / n
        s[n] = -sum(t[j] * t[n - j] for j in range(n + 1))
    return t


def _tpow_const(a: np.ndarray, c: float) -> np.ndarray:
    if c == int(c) and abs(c) <= 64:
        k = int(abs(c))
        one = np.zeros_like(a)
        one[0] = 1.0
        result, base = one, a
        while k:
            if k & 1:
                result = _tmul(result, base)
            base = _tmul(base, base)
            k >>= 1
        return _tdiv(one, result) if c < 0 else result
    if np.any(a[0] <= 0):
        if np.any(a[0] < 0):
            raise ExprDomainError("non-integer power of a negative number")
        raise ExprDomainError("non-integer power of zero is not differentiable")
    w = np.zeros_like(a)
    w[0] = a[0] ** c
    for n in range(1, a.shape[0]):
        w[n] = sum(((c + 1.0) * j - n) * a[j] * w[n - j] for j in range(1, n + 1)) / (n * a[0])
    return w


def _taylor(e: Expression, x: np.ndarray, order: int) -> np.ndarray:
    shape = (order + 1,) + x.shape
    if isinstance(e, Num):
        out = np.zeros(shape)
        out[0] = e.value
        return out
    if isinstance(e, Var):
        out = np.zeros(shape)
        out[0] = x
        if order >= 1:
            out[1] = 1.0
        return out
    if isinstance(e, Neg):
        return -_taylor(e.arg, x, order)
    if isinstance(e, BinOp):
        if e.op == "^" and not depends_on_x(e.right):
            return _tpow_const(_taylor(e.left, x, order), float(_eval(e.right, 0.0)))
        a = _taylor(e.left, x, order)
        if e.op == "^":
            return _texp(_tmul(_taylor(e.right, x, order), _tlog(a)))
        b = _taylor(e.right, x, order)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return _tmul(a, b)
        return _tdiv(a, b)
    if isinstance(e, Call):
        a = _taylor(e.arg, x, order)
        if e.func == "sin":
            return _tsincos(a)[0]
        if e.func == "cos":
            return _tsincos(a)[1]
        if e.func == "exp":
            return _texp(a)
        if e.func == "log":
            return _tlog(a)
        if e.func == "sqrt":
            return _tsqrt(a)
        return _ttanh(a)
    raise TypeError(f"not an expression: {e!r}")


def taylor(e: Expression, x, order: int) -> np.ndarray:
    """Normalized Taylor coefficients ``f^(n)(x)/n!`` for ``n = 0..order``.

    Computed by truncated power-series arithmetic on the tree, so it is exact
    up to rounding for every order. The result has shape ``(order + 1,) +
    np.shape(x)``.
    """
    xa = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        out = _taylor(e, xa, order)
    return _checked(out, "Taylor coefficient")


def derivatives(e: Expression, x, order: int) -> np.ndarray:
    """Derivatives ``f^(n)(x)`` for ``n = 0..order`` (shape as :func:`taylor`)."""
    coeffs = taylor(e, x, order)
    fact = np.array([math.factorial(n) for n in range(order + 1)], dtype=float)
    return coeffs * fact.reshape((-1,) + (1,) * (coeffs.ndim - 1))


def node_count(e: Expression) -> int:
    if isinstance(e, (Num, Var)):
        return 1
    if isinstance(e, (Neg, Call)):
        return 1 + node_count(e.arg)
    return 1 + node_count(e.left) + node_count(e.right)


def sum_of(terms: list[Expression]) -> Expression:
    return reduce(_add, terms, ZERO)
