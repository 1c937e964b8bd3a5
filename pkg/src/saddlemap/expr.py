"""Scalar expressions in x1..xd: parsing, symbolic differentiation, compilation.

The grammar is the usual infix one::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom (('**' | '^') unary)?
    atom   := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')'

so ``**`` binds tighter than unary minus (``-x1**2 == -(x1**2)``) and is
right-associative.  Variables are ``x1`` .. ``xd``; the function set is
``exp log sin cos tan sqrt abs`` plus ``sign`` (produced by differentiating
``abs``).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

FUNCTIONS = ("exp", "log", "sin", "cos", "tan", "sqrt", "abs", "sign")


class ExpressionError(ValueError):
    """Raised for malformed expression text."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


# ---------------------------------------------------------------------------
# Tree nodes
# ---------------------------------------------------------------------------


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 1-based


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "neg" or a name from FUNCTIONS
    arg: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # one of + - * / **
    left: Expr
    right: Expr


ZERO = Const(0.0)
ONE = Const(1.0)


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def _fold(fn, *values: float) -> Const | None:
    with np.errstate(all="ignore"):
        out = float(fn(*(np.float64(v) for v in values)))
    if np.isfinite(out):
        return Const(out)
    return None


# Smart constructors: constant folding and identity elimination only.


def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        folded = _fold(np.add, a.value, b.value)
        if folded is not None:
            return folded
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if isinstance(b, Unary) and b.op == "neg":
        return sub(a, b.arg)
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        folded = _fold(np.subtract, a.value, b.value)
        if folded is not None:
            return folded
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if a == b:
        return ZERO
    return Binary("-", a, b)


def neg(a: Expr) -> Expr:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        folded = _fold(np.multiply, a.value, b.value)
        if folded is not None:
            return folded
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    if _is_const(b) and not _is_const(a):
        a, b = b, a
    # collect c1*(c2*e) -> (c1*c2)*e
    if _is_const(a) and isinstance(b, Binary) and b.op == "*" and _is_const(b.left):
        return mul(mul(a, b.left), b.right)
    if _is_const(a) and isinstance(b, Unary) and b.op == "neg":
        return mul(Const(-a.value), b.arg)
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        folded = _fold(np.divide, a.value, b.value)
        if folded is not None:
            return folded
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Binary("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        folded = _fold(np.power, a.value, b.value)
        if folded is not None:
            return folded
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return ONE
    return Binary("**", a, b)


def func(name: str, a: Expr) -> Expr:
    if _is_const(a) and name in _NUMPY_FUNCS:
        folded = _fold(_NUMPY_FUNCS[name], a.value)
        if folded is not None:
            return folded
    return Unary(name, a)


_NUMPY_FUNCS: dict[str, Callable] = {
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sign": np.sign,
}

_BINARY_BUILDERS = {"+": add, "-": sub, "*": mul, "/": div, "**": power}


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>\*\*|[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExpressionError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, dim: int):
        self.tokens = _tokenize(source)
        self.i = 0
        self.dim = dim

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text: str):
        kind, value, pos = self.tok
        if value != text:
            shown = value or "end of input"
            raise ExpressionError(f"expected {text!r}, found {shown!r}", pos)
        self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, value, pos = self.tok
        if kind != "end":
            raise ExpressionError(f"unexpected token {value!r}", pos)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok[1] in ("+", "-"):
            op = self.advance()[1]
            rhs = self.term()
            e = Binary(op, e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok[1] in ("*", "/"):
            op = self.advance()[1]
            rhs = self.unary()
            e = Binary(op, e, rhs)
        return e

    def unary(self) -> Expr:
        if self.tok[1] == "-":
            self.advance()
            return Unary("neg", self.unary())
        if self.tok[1] == "+":
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.tok[1] in ("**", "^"):
            self.advance()
            return Binary("**", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, value, pos = self.tok
        if kind == "num":
            self.advance()
            return Const(float(value))
        if kind == "name":
            self.advance()
            m = re.fullmatch(r"x(\d+)", value)
            if m:
                index = int(m.group(1))
                if not 1 <= index <= self.dim:
                    raise ExpressionError(
                        f"variable {value} out of range for dimension {self.dim}", pos
                    )
                return Var(index)
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(value, arg)
            raise ExpressionError(f"unknown identifier {value!r}", pos)
        if value == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        shown = value or "end of input"
        raise ExpressionError(f"unexpected token {shown!r}", pos)


def parse_expression(source: str, dim: int) -> Expr:
    """Parse ``source`` into an expression tree over variables x1..x{dim}."""
    if dim < 1:
        raise ValueError("dim must be a positive integer")
    return _Parser(source, dim).parse()


def max_var_index(e: Expr) -> int:
    """Largest variable index appearing in ``e`` (0 for constant trees)."""
    if isinstance(e, Var):
        return e.index
    if isinstance(e, Unary):
        return max_var_index(e.arg)
    if isinstance(e, Binary):
        return max(max_var_index(e.left), max_var_index(e.right))
    return 0


# ---------------------------------------------------------------------------
# Interpretation, differentiation, printing
# ---------------------------------------------------------------------------


def evaluate(e: Expr, x) -> float:
    """Evaluate by walking the tree.  Slow; used as a reference."""
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        return float(_eval(e, x))


def _eval(e: Expr, x):
    if isinstance(e, Const):
        return np.float64(e.value)
    if isinstance(e, Var):
        return x[e.index - 1]
    if isinstance(e, Unary):
        a = _eval(e.arg, x)
        return -a if e.op == "neg" else _NUMPY_FUNCS[e.op](a)
    a, b = _eval(e.left, x), _eval(e.right, x)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        return a / b
    return np.power(a, b)


def differentiate(e: Expr, var: int) -> Expr:
    """Exact partial derivative of ``e`` with respect to x{var}."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == var else ZERO
    if isinstance(e, Unary):
        u = e.arg
        du = differentiate(u, var)
        if _is_const(du, 0.0):
            return ZERO
        op = e.op
        if op == "neg":
            return neg(du)
        if op == "exp":
            return mul(e, du)
        if op == "log":
            return div(du, u)
        if op == "sin":
            return mul(func("cos", u), du)
        if op == "cos":
            return neg(mul(func("sin", u), du))
        if op == "tan":
            return div(du, power(func("cos", u), Const(2.0)))
        if op == "sqrt":
            return div(du, mul(Const(2.0), e))
        if op == "abs":
            return mul(func("sign", u), du)
        if op == "sign":
            return ZERO
        raise ValueError(f"unknown function {op}")
    u, v = e.left, e.right
    du, dv = differentiate(u, var), differentiate(v, var)
    if e.op == "+":
        return add(du, dv)
    if e.op == "-":
        return sub(du, dv)
    if e.op == "*":
        return add(mul(du, v), mul(u, dv))
    if e.op == "/":
        # (du*v - u*dv) / v**2
        if _is_const(dv, 0.0):
            return div(du, v)
        return div(sub(mul(du, v), mul(u, dv)), power(v, Const(2.0)))
    # power
    if _is_const(dv, 0.0):
        if _is_const(du, 0.0):
            return ZERO
        if _is_const(v):
            return mul(mul(v, power(u, Const(v.value - 1.0))), du)
        return mul(mul(v, power(u, sub(v, ONE))), du)
    if _is_const(du, 0.0):
        return mul(mul(e, func("log", u)), dv)
    # u**v * (dv*log(u) + v*du/u)
    return mul(e, add(mul(dv, func("log", u)), div(mul(v, du), u)))


def simplify(e: Expr) -> Expr:
    """Rebuild ``e`` bottom-up through the folding constructors."""
    if isinstance(e, Unary):
        a = simplify(e.arg)
        return neg(a) if e.op == "neg" else func(e.op, a)
    if isinstance(e, Binary):
        return _BINARY_BUILDERS[e.op](simplify(e.left), simplify(e.right))
    return e


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "**": 4}


def _format_const(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return 3
    if isinstance(e, Const) and (e.value < 0 or str(e.value).startswith("-")):
        return 3
    return 5


def unparse(e: Expr) -> str:
    """Render ``e`` in the grammar accepted by :func:`parse_expression`."""
    if isinstance(e, Const):
        if not np.isfinite(e.value):
            raise ValueError("cannot print a non-finite constant")
        return _format_const(e.value)
    if isinstance(e, Var):
        return f"x{e.index}"
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = unparse(e.arg)
            return "-" + (f"({inner})" if _prec(e.arg) < 3 else inner)
        return f"{e.op}({unparse(e.arg)})"
    p = _PREC[e.op]
    left, right = unparse(e.left), unparse(e.right)
    if e.op == "**":
        if _prec(e.left) <= 4:
            left = f"({left})"
        if _prec(e.right) < 3:
            right = f"({right})"
        return f"{left}**{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    if e.op in ("+", "-"):
        return f"{left} {e.op} {right}"
    return f"{left}{e.op}{right}"


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------


def to_source(e: Expr) -> str:
    """Python/numpy source for ``e``; variables read from ``x[i]``."""
    if isinstance(e, Const):
        return repr(e.value) if np.isfinite(e.value) else f"float('{e.value}')"
    if isinstance(e, Var):
        return f"x[{e.index - 1}]"
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_source(e.arg)})"
        return f"_np.{e.op}({to_source(e.arg)})"
    op = e.op
    if op == "**":
        return f"_np.power({to_source(e.left)}, {to_source(e.right)})"
    return f"({to_source(e.left)} {op} {to_source(e.right)})"


def _build(body: str) -> Callable:
    code = compile(f"lambda x: {body}", "<saddlemap-expr>", "eval")
    return eval(code, {"_np": np, "float": float})


class CompiledScalarFn:
    """A compiled scalar evaluator ``R^d -> R``.

    Accepts a single point of shape ``(d,)`` or a batch of shape ``(d, ...)``.
    Out-of-domain operations yield NaN rather than raising.
    """

    def __init__(self, e: Expr, dim: int):
        self.expr = e
        self.dim = dim
        self.source = to_source(e)
        self._fn = _build(self.source)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            val = self._fn(x)
        if x.ndim == 1:
            return float(val)
        return np.broadcast_to(np.asarray(val, dtype=float), x.shape[1:]).copy()


class CompiledVectorFn:
    """A compiled vector evaluator ``R^d -> R^d`` built from component trees."""

    def __init__(self, components: list[Expr], dim: int):
        self.components = list(components)
        self.dim = dim
        self.source = "(" + ", ".join(to_source(c) for c in components) + ",)"
        self._fn = _build(self.source)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            vals = self._fn(x)
        if x.ndim == 1:
            return np.array(vals, dtype=float)
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), x.shape[1:]) for v in vals])


def _check_dim(e: Expr, dim: int | None) -> int:
    needed = max_var_index(e)
    if dim is None:
        dim = max(needed, 1)
    if needed > dim:
        raise ExpressionError(f"expression uses x{needed} but dimension is {dim}")
    return dim


def compile_scalar(e: Expr, dim: int | None = None) -> CompiledScalarFn:
    return CompiledScalarFn(e, _check_dim(e, dim))


def gradient_exprs(e: Expr, dim: int) -> list[Expr]:
    return [differentiate(e, i) for i in range(1, dim + 1)]


def compile_gradient(e: Expr, dim: int | None = None) -> CompiledVectorFn:
    dim = _check_dim(e, dim)
    return CompiledVectorFn(gradient_exprs(e, dim), dim)
