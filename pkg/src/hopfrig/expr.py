"""Small expression language for metric profiles.

Grammar (precedence low to high)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary | <implicit product>)*
    unary   := ('-' | '+') unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

``**`` is accepted as a synonym for ``^``.  Names are either free variables
(declared by the caller), the constants ``pi`` and ``e``, or one of the
functions in :data:`FUNCTIONS`.  Expressions are immutable trees that can be
evaluated on numpy arrays and differentiated symbolically.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = ("exp", "log", "sinh", "cosh", "tanh", "sech", "sqrt", "sin", "cos")
CONSTANTS = {"pi": math.pi, "e": math.e}


class ExprSyntaxError(ValueError):
    """Raised for malformed expressions; carries the 1-based column."""

    def __init__(self, message: str, column: int):
        super().__init__(f"{message} (column {column})")
        self.column = column


# -- tree -------------------------------------------------------------------


class Expr:
    def eval(self, env: dict):
        raise NotImplementedError

    def diff(self, var: str) -> "Expr":
        raise NotImplementedError

    def variables(self) -> set:
        return set()

    def __call__(self, **env):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            return self.eval(env)


@dataclass(frozen=True)
class Num(Expr):
    value: float

    def eval(self, env):
        return self.value

    def diff(self, var):
        return ZERO

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def eval(self, env):
        return env[self.name]

    def diff(self, var):
        return ONE if var == self.name else ZERO

    def variables(self):
        return {self.name}

    def __str__(self):
        return self.name


ZERO = Num(0.0)
ONE = Num(1.0)


@dataclass(frozen=True)
class Add(Expr):
    a: Expr
    b: Expr

    def eval(self, env):
        return self.a.eval(env) + self.b.eval(env)

    def diff(self, var):
        return add(self.a.diff(var), self.b.diff(var))

    def variables(self):
        return self.a.variables() | self.b.variables()

    def __str__(self):
        return f"({self.a} + {self.b})"


@dataclass(frozen=True)
class Sub(Expr):
    a: Expr
    b: Expr

    def eval(self, env):
        return self.a.eval(env) - self.b.eval(env)

    def diff(self, var):
        return sub(self.a.diff(var), self.b.diff(var))

    def variables(self):
        return self.a.variables() | self.b.variables()

    def __str__(self):
        return f"({self.a} - {self.b})"


@dataclass(frozen=True)
class Mul(Expr):
    a: Expr
    b: Expr

    def eval(self, env):
        return self.a.eval(env) * self.b.eval(env)

    def diff(self, var):
        return add(mul(self.a.diff(var), self.b), mul(self.a, self.b.diff(var)))

    def variables(self):
        return self.a.variables() | self.b.variables()

    def __str__(self):
        return f"({self.a} * {self.b})"


@dataclass(frozen=True)
class Div(Expr):
    a: Expr
    b: Expr

    def eval(self, env):
        return self.a.eval(env) / self.b.eval(env)

    def diff(self, var):
        num = sub(mul(self.a.diff(var), self.b), mul(self.a, self.b.diff(var)))
        return div(num, power(self.b, Num(2.0)))

    def variables(self):
        return self.a.variables() | self.b.variables()

    def __str__(self):
        return f"({self.a} / {self.b})"


@dataclass(frozen=True)
class Neg(Expr):
    a: Expr

    def eval(self, env):
        return -self.a.eval(env)

    def diff(self, var):
        return neg(self.a.diff(var))

    def variables(self):
        return self.a.variables()

    def __str__(self):
        return f"(-{self.a})"


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: Expr

    def eval(self, env):
        b = self.base.eval(env)
        if isinstance(self.exponent, Num):
            k = self.exponent.value
            if k == int(k):
                return b ** int(k) if abs(k) < 64 else np.power(b, k)
        return np.power(b, self.exponent.eval(env))

    def diff(self, var):
        db = self.base.diff(var)
        if isinstance(self.exponent, Num):
            k = self.exponent.value
            return mul(mul(Num(k), power(self.base, Num(k - 1.0))), db)
        # a^b = exp(b log a)
        de = self.exponent.diff(var)
        inner = add(mul(de, Func("log", self.base)), div(mul(self.exponent, db), self.base))
        return mul(self, inner)

    def variables(self):
        return self.base.variables() | self.exponent.variables()

    def __str__(self):
        return f"({self.base} ^ {self.exponent})"


_NP = {
    "exp": np.exp,
    "log": np.log,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "sech": lambda x: 1.0 / np.cosh(x),
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
}


@dataclass(frozen=True)
class Func(Expr):
    name: str
    arg: Expr

    def eval(self, env):
        return _NP[self.name](self.arg.eval(env))

    def diff(self, var):
        u = self.arg
        du = u.diff(var)
        if du == ZERO:
            return ZERO
        n = self.name
        if n == "exp":
            outer = self
        elif n == "log":
            outer = div(ONE, u)
        elif n == "sinh":
            outer = Func("cosh", u)
        elif n == "cosh":
            outer = Func("sinh", u)
        elif n == "tanh":
            outer = power(Func("sech", u), Num(2.0))
        elif n == "sech":
            outer = neg(mul(Func("sech", u), Func("tanh", u)))
        elif n == "sqrt":
            outer = div(Num(0.5), self)
        elif n == "sin":
            outer = Func("cos", u)
        elif n == "cos":
            outer = neg(Func("sin", u))
        else:  # pragma: no cover - guarded by the parser
            raise ValueError(n)
        return mul(outer, du)

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return f"{self.name}({self.arg})"


# -- constant-folding constructors -----------------------------------------


def _const(x):
    return isinstance(x, Num)


def add(a, b):
    if _const(a) and _const(b):
        return Num(a.value + b.value)
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    return Add(a, b)


def sub(a, b):
    if _const(a) and _const(b):
        return Num(a.value - b.value)
    if b == ZERO:
        return a
    if a == ZERO:
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    if _const(a) and _const(b):
        return Num(a.value * b.value)
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    return Mul(a, b)


def div(a, b):
    if _const(a) and _const(b) and b.value != 0.0:
        return Num(a.value / b.value)
    if a == ZERO:
        return ZERO
    if b == ONE:
        return a
    return Div(a, b)


def neg(a):
    if _const(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def power(a, b):
    if _const(b):
        if b.value == 0.0:
            return ONE
        if b.value == 1.0:
            return a
        if _const(a):
            return Num(a.value ** b.value)
    return Pow(a, b)


# -- parser -----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^()]))"
)


def _source(e: Expr) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{_source(e.a)})"
    if isinstance(e, Func):
        return f"_NP[{e.name!r}]({_source(e.arg)})"
    if isinstance(e, Pow):
        k = e.exponent.value if isinstance(e.exponent, Num) else None
        if k is not None and k == int(k) and abs(k) < 64:
            return f"({_source(e.base)} ** {int(k)})"
        return f"_np.power({_source(e.base)}, {_source(e.exponent)})"
    op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(e)]
    return f"({_source(e.a)} {op} {_source(e.b)})"


def compile_expr(e: Expr, names):
    """Plain Python function of the positional ``names`` evaluating ``e``;
    much cheaper per call than walking the tree, which matters in ODE loops."""
    code = f"lambda {', '.join(names)}: {_source(e)}"
    return eval(code, {"_NP": _NP, "_np": np})  # noqa: S307 - generated from a parsed tree


def _tokenize(text):
    pos = 0
    out = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + 1
            while col <= len(text) and text[col - 1].isspace():
                col += 1
            raise ExprSyntaxError(f"unexpected character {text[col - 1]!r}", col)
        kind = m.lastgroup
        value = m.group(kind)
        if value == "**":
            value = "^"
        out.append((kind, value, m.start(kind) + 1))
        pos = m.end()
    out.append(("end", "", len(text) + 1))
    return out


class _Parser:
    def __init__(self, text, variables):
        self.toks = _tokenize(text)
        self.i = 0
        self.variables = variables

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, v, col = self.take()
        if v != value:
            raise ExprSyntaxError(f"expected {value!r}, found {v or 'end of input'!r}", col)

    def parse(self):
        e = self.expr()
        kind, v, col = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {v!r}", col)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while True:
            kind, v, _ = self.peek()
            if v in ("*", "/"):
                self.take()
                rhs = self.unary()
                e = mul(e, rhs) if v == "*" else div(e, rhs)
            elif kind in ("num", "name") or v == "(":
                e = mul(e, self.power())
            else:
                return e

    def unary(self):
        v = self.peek()[1]
        if v == "-":
            self.take()
            return neg(self.unary())
        if v == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return power(base, self.unary())
        return base

    def atom(self):
        kind, v, col = self.take()
        if kind == "num":
            return Num(float(v))
        if kind == "name":
            if v in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Func(v, arg)
            if v in CONSTANTS:
                return Num(CONSTANTS[v])
            if v in self.variables:
                return Var(v)
            allowed = ", ".join(sorted(self.variables)) or "none"
            raise ExprSyntaxError(f"unknown name {v!r} (free variables: {allowed})", col)
        if v == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ExprSyntaxError(f"unexpected {v or 'end of input'!r}", col)


def parse_expr(text: str, variables=("x",)) -> Expr:
    """Parse ``text`` into an expression tree over the given free variables."""
    return _Parser(text, frozenset(variables)).parse()
