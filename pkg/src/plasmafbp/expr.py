"""Small arithmetic expression language for g(x, u), theta(x) and p(x).

Expressions are parsed into an immutable tree and evaluated over numpy
arrays.  The derivative with respect to ``u`` is computed by forward-mode
(dual number) evaluation of the same tree.

Grammar, loosest binding first::

    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative
    atom    := number | name | name '(' sum ')' | '(' sum ')'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import (
    ExprDomainError,
    ExprSyntaxError,
    NonDifferentiableError,
    UnknownIdentifierError,
)

FUNCTIONS = ("sin", "cos", "tan", "tanh", "atan", "exp", "log", "sqrt", "abs")
CONSTANTS = {"pi": math.pi}
VARIABLES = ("x", "y", "u")

Value = Union[float, np.ndarray]


# --------------------------------------------------------------------------
# tree
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float

    def __str__(self) -> str:
        return repr(float(self.value))


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Neg:
    operand: "Expr"

    def __str__(self) -> str:
        return f"(-{self.operand})"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"

    def __str__(self) -> str:
        return f"{self.fn}({self.arg})"


Expr = Union[Num, Var, Const, Neg, BinOp, Call]


def variables(e: Expr) -> frozenset:
    """Names of the variables referenced by ``e``."""
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, Neg):
        return variables(e.operand)
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    if isinstance(e, Call):
        return variables(e.arg)
    return frozenset()


def depends_on_u(e: Expr) -> bool:
    return "u" in variables(e)


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, allowed: tuple):
        self.text = text
        self.allowed = allowed
        self.tokens = _tokenize(text)
        self.i = 0
        self.depth = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def parse(self) -> Expr:
        e = self.sum()
        kind, val, off = self.peek()
        if kind != "end":
            if val == ")":
                raise ExprSyntaxError("unbalanced parenthesis", off)
            raise ExprSyntaxError(f"unexpected token {val!r}", off)
        return e

    def sum(self) -> Expr:
        e = self.product()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            e = BinOp(op, e, self.product())
        return e

    def product(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.unary())
        if self.peek()[:2] == ("op", "+"):
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def expect_close(self, open_offset: int) -> None:
        kind, val, off = self.peek()
        if val == ")" and kind == "op":
            self.advance()
            return
        if kind == "end":
            raise ExprSyntaxError("unbalanced parenthesis", off)
        raise ExprSyntaxError(f"expected ')' but found {val!r}", off)

    def atom(self) -> Expr:
        kind, val, off = self.advance()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                k2, v2, o2 = self.peek()
                if v2 != "(":
                    raise ExprSyntaxError(f"function '{val}' requires '('", o2)
                self.advance()
                arg = self.sum()
                self.expect_close(o2)
                return Call(val, arg)
            if val in CONSTANTS:
                return Const(val)
            if val in self.allowed:
                return Var(val)
            raise UnknownIdentifierError(val, off)
        if kind == "op" and val == "(":
            e = self.sum()
            self.expect_close(off)
            return e
        if kind == "end":
            raise ExprSyntaxError("unexpected end of expression", off)
        if val == ")":
            raise ExprSyntaxError("unbalanced parenthesis", off)
        raise ExprSyntaxError(f"unexpected token {val!r}", off)


def parse(text: str, variables: tuple = VARIABLES) -> Expr:
    """Parse ``text`` into an expression tree.

    ``variables`` restricts the admissible variable names; pass
    ``("x", "u")`` for one-dimensional problems so that ``y`` is rejected.
    """
    if not isinstance(text, str):
        raise TypeError("expression text must be a string")
    return _Parser(text, tuple(variables)).parse()


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def _finite(val: Value, node: Expr) -> Value:
    if not np.all(np.isfinite(val)):
        raise ExprDomainError("non-finite result", str(node))
    return val


def _is_integer(v) -> bool:
    return bool(np.all(np.asarray(v) == np.round(np.asarray(v))))


def _power(a: Value, b: Value, node: Expr) -> Value:
    a_arr, b_arr = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    neg = a_arr < 0
    if np.any(neg) and not _is_integer(b_arr[neg]):
        raise ExprDomainError("negative base with non-integer exponent", str(node))
    if np.any((a_arr == 0) & (b_arr < 0)):
        raise ExprDomainError("division by zero", str(node))
    with np.errstate(over="ignore", invalid="ignore"):
        return np.power(a_arr.astype(float), b_arr)


def _call(fn: str, a: Value, node: Expr) -> Value:
    if fn == "log":
        if np.any(np.asarray(a) <= 0):
            raise ExprDomainError("log of nonpositive value", str(node))
        return np.log(a)
    if fn == "sqrt":
        if np.any(np.asarray(a) < 0):
            raise ExprDomainError("sqrt of negative value", str(node))
        return np.sqrt(a)
    with np.errstate(over="ignore", invalid="ignore"):
        if fn == "exp":
            return np.exp(a)
        return getattr(np, {"atan": "arctan"}.get(fn, fn))(a)


def _eval(e: Expr, env: dict) -> Value:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Const):
        return CONSTANTS[e.name]
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise ExprDomainError(f"no binding for variable '{e.name}'", str(e)) from None
    if isinstance(e, Neg):
        return -_eval(e.operand, env)
    if isinstance(e, Call):
        return _finite(_call(e.fn, _eval(e.arg, env), e), e)
    a = _eval(e.left, env)
    b = _eval(e.right, env)
    if e.op == "+":
        return _finite(np.add(a, b), e)
    if e.op == "-":
        return _finite(np.subtract(a, b), e)
    if e.op == "*":
        with np.errstate(over="ignore", invalid="ignore"):
            return _finite(np.multiply(a, b), e)
    if e.op == "/":
        if np.any(np.asarray(b) == 0):
            raise ExprDomainError("division by zero", str(e))
        with np.errstate(over="ignore"):
            return _finite(np.divide(a, b), e)
    return _finite(_power(a, b, e), e)


def _scalarize(v: Value) -> Value:
    if np.ndim(v) == 0:
        return float(v)
    return v


def evaluate(e: Expr, x: Value = 0.0, y: Value | None = None, u: Value = 0.0) -> Value:
    """Value of ``e`` at the given bindings (scalars or broadcastable arrays)."""
    env = {"x": x, "u": u}
    if y is not None:
        env["y"] = y
    shape = np.broadcast(*[np.asarray(v) for v in env.values()]).shape
    val = _eval(e, env)
    if shape:
        val = np.broadcast_to(np.asarray(val, dtype=float), shape).copy()
    return _scalarize(val)


# --------------------------------------------------------------------------
# forward-mode derivative in u
# --------------------------------------------------------------------------

def _check_differentiable(e: Expr) -> None:
    if isinstance(e, Call):
        if e.fn == "abs" and depends_on_u(e.arg):
            raise NonDifferentiableError(f"abs of u-dependent subexpression {e} is not differentiable")
        _check_differentiable(e.arg)
    elif isinstance(e, Neg):
        _check_differentiable(e.operand)
    elif isinstance(e, BinOp):
        _check_differentiable(e.left)
        _check_differentiable(e.right)


def _dual(e: Expr, env: dict) -> tuple:
    if isinstance(e, (Num, Const)):
        return _eval(e, env), 0.0
    if isinstance(e, Var):
        return _eval(e, env), (1.0 if e.name == "u" else 0.0)
    if not depends_on_u(e):
        return _eval(e, env), 0.0
    if isinstance(e, Neg):
        a, da = _dual(e.operand, env)
        return -a, -da
    if isinstance(e, Call):
        a, da = _dual(e.arg, env)
        v = _finite(_call(e.fn, a, e), e)
        fn = e.fn
        if fn == "sin":
            d = np.cos(a)
        elif fn == "cos":
            d = -np.sin(a)
        elif fn == "tan":
            d = 1.0 + v * v
        elif fn == "tanh":
            d = 1.0 - v * v
        elif fn == "atan":
            d = 1.0 / (1.0 + np.square(a))
        elif fn == "exp":
            d = v
        elif fn == "log":
            d = 1.0 / a
        elif fn == "sqrt":
            if np.any(np.asarray(v) == 0):
                raise ExprDomainError("sqrt is not differentiable at 0", str(e))
            d = 0.5 / v
        else:  # abs, excluded by _check_differentiable
            raise NonDifferentiableError(str(e))
        return v, _finite(d * da, e)
    a, da = _dual(e.left, env)
    b, db = _dual(e.right, env)
    op = e.op
    if op == "+":
        return _finite(np.add(a, b), e), np.add(da, db)
    if op == "-":
        return _finite(np.subtract(a, b), e), np.subtract(da, db)
    if op == "*":
        with np.errstate(over="ignore", invalid="ignore"):
            return _finite(np.multiply(a, b), e), _finite(np.multiply(da, b) + np.multiply(a, db), e)
    if op == "/":
        if np.any(np.asarray(b) == 0):
            raise ExprDomainError("division by zero", str(e))
        with np.errstate(over="ignore", invalid="ignore"):
            q = np.divide(a, b)
            return _finite(q, e), _finite((np.asarray(da) - q * db) / b, e)
    # power
    v = _finite(_power(a, b, e), e)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if not depends_on_u(e.right):
            if _is_integer(b) and np.all(np.asarray(b) == 0):
                return v, 0.0
            da_arr = np.asarray(da, dtype=float)
            d = np.where(da_arr == 0.0, 0.0, np.asarray(b) * _power(a, np.asarray(b) - 1.0, e) * da_arr)
            return v, _finite(d, e)
        if np.any(np.asarray(a) <= 0):
            raise ExprDomainError("u-dependent exponent requires a positive base", str(e))
        d = v * (np.asarray(db) * np.log(a) + np.asarray(b) * np.asarray(da) / a)
        return v, _finite(d, e)


def d_du(e: Expr) -> Callable:
    """Return ``f(x, y, u)`` evaluating the exact partial derivative of ``e`` in ``u``.

    Raises NonDifferentiableError when ``abs`` is applied to a u-dependent
    subexpression.
    """
    _check_differentiable(e)

    def derivative(x: Value = 0.0, y: Value | None = None, u: Value = 0.0) -> Value:
        env = {"x": x, "u": u}
        if y is not None:
            env["y"] = y
        shape = np.broadcast(*[np.asarray(v) for v in env.values()]).shape
        _, d = _dual(e, env)
        if shape:
            d = np.broadcast_to(np.asarray(d, dtype=float), shape).copy()
        return _scalarize(d)

    return derivative


def value_and_derivative(e: Expr, x: Value = 0.0, y: Value | None = None, u: Value = 0.0) -> tuple:
    """Evaluate ``e`` and its u-derivative in a single dual-number pass."""
    _check_differentiable(e)
    env = {"x": x, "u": u}
    if y is not None:
        env["y"] = y
    shape = np.broadcast(*[np.asarray(v) for v in env.values()]).shape
    v, d = _dual(e, env)
    if shape:
        v = np.broadcast_to(np.asarray(v, dtype=float), shape).copy()
        d = np.broadcast_to(np.asarray(d, dtype=float), shape).copy()
    return _scalarize(v), _scalarize(d)


def is_zero(e: Expr) -> bool:
    """True when ``e`` is a literal zero (possibly negated)."""
    if isinstance(e, Num):
        return e.value == 0.0
    if isinstance(e, Neg):
        return is_zero(e.operand)
    return False
