"""Scalar function expressions over points of R^d.

Every potential, density weight, transport potential and test function
enters the toolkit as a string in a small grammar (see docs/grammar.md)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | VAR | FUNC "(" args ")" | "normsq" "(" "x" ")" | "(" expr ")"

``^`` is right-associative and binds tighter than unary minus, so ``-x1^2``
is ``-(x1^2)``.  Variables are ``x1 .. xd``.

Evaluation is vectorised: an :class:`Expr` maps an array of points with
shape ``(..., d)`` to values with shape ``(...)``.  NaN never leaves an
evaluation; invalid operations raise :class:`DomainError` carrying the
offending point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "Const", "Var", "BinOp", "Func", "NormSq", "Node",
    "Expr", "DiffConfig", "ParseError", "DomainError",
    "parse", "evaluate", "grad", "hess", "to_text",
]

UNARY_FUNCS = ("exp", "log", "sqrt", "abs", "neg")
NARY_FUNCS = ("min", "max")
MAX_DEPTH = 200


class ParseError(ValueError):
    """Syntax error with the byte offset of the first offending token."""

    def __init__(self, message: str, offset: int, expected: Sequence[str] = ()):
        self.offset = offset
        self.expected = tuple(expected)
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class DomainError(ArithmeticError):
    """Evaluation left the real domain (log of nonpositive, overflow, ...)."""

    def __init__(self, message: str, point=None):
        self.point = None if point is None else tuple(float(v) for v in np.atleast_1d(point))
        where = f" at x={self.point}" if self.point is not None else ""
        super().__init__(message + where)


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Func:
    name: str
    args: tuple


@dataclass(frozen=True)
class NormSq:
    pass


Node = Const | Var | BinOp | Func | NormSq

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def to_text(node: Node) -> str:
    """Print an AST so that ``parse(to_text(n))`` rebuilds ``n`` exactly."""
    if isinstance(node, Const):
        if node.value < 0 or not math.isfinite(node.value):
            raise ValueError(f"unprintable constant {node.value!r}")
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, NormSq):
        return "normsq(x)"
    if isinstance(node, Func):
        return f"{node.name}({', '.join(to_text(a) for a in node.args)})"
    return f"({to_text(node.left)} {node.op} {to_text(node.right)})"


def _max_var(node: Node) -> int:
    if isinstance(node, Var):
        return node.index
    if isinstance(node, BinOp):
        return max(_max_var(node.left), _max_var(node.right))
    if isinstance(node, Func):
        return max(_max_var(a) for a in node.args)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_NUMBER_CHARS = set("0123456789.")


class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.pos = 0
        self.depth = 0

    # -- lexing helpers --------------------------------------------------
    def _skip(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def _peek(self) -> str:
        self._skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _expect(self, ch: str) -> None:
        if self._peek() != ch:
            raise ParseError(f"unexpected {self._describe()}", self.pos, [repr(ch)])
        self.pos += 1

    def _describe(self) -> str:
        if self.pos >= len(self.text):
            return "end of input"
        return f"character {self.text[self.pos]!r}"

    def _enter(self) -> None:
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise ParseError("expression nested too deeply", self.pos)

    # -- grammar ---------------------------------------------------------
    def parse(self) -> Node:
        node = self._expr()
        if self._peek():
            raise ParseError(f"unexpected {self._describe()}", self.pos,
                             ["'+'", "'-'", "'*'", "'/'", "'^'", "end of input"])
        return node

    def _expr(self) -> Node:
        node = self._term()
        while self._peek() in ("+", "-"):
            op = self.text[self.pos]
            self.pos += 1
            node = BinOp(op, node, self._term())
        return node

    def _term(self) -> Node:
        node = self._unary()
        while self._peek() in ("*", "/"):
            op = self.text[self.pos]
            self.pos += 1
            node = BinOp(op, node, self._unary())
        return node

    def _unary(self) -> Node:
        self._enter()
        try:
            if self._peek() == "-":
                self.pos += 1
                return Func("neg", (self._unary(),))
            return self._power()
        finally:
            self.depth -= 1

    def _power(self) -> Node:
        base = self._atom()
        if self._peek() == "^":
            self.pos += 1
            return BinOp("^", base, self._unary())
        return base

    def _atom(self) -> Node:
        ch = self._peek()
        start = self.pos
        if ch == "(":
            self.pos += 1
            self._enter()
            node = self._expr()
            self.depth -= 1
            self._expect(")")
            return node
        if ch and (ch.isdigit() or ch == "."):
            return self._number()
        if ch.isalpha():
            end = start
            while end < len(self.text) and (self.text[end].isalnum() or self.text[end] == "_"):
                end += 1
            word = self.text[start:end]
            self.pos = end
            if word[0] == "x" and word[1:].isdigit() and len(word) > 1:
                idx = int(word[1:])
                if idx < 1 or idx > self.dim:
                    raise ParseError(
                        f"variable {word} out of range for dimension {self.dim}", start)
                return Var(idx)
            if word == "normsq":
                self._expect("(")
                if self._peek() != "x":
                    raise ParseError("normsq takes the literal argument x", self.pos, ["'x'"])
                self.pos += 1
                self._expect(")")
                return NormSq()
            if word in UNARY_FUNCS or word in NARY_FUNCS:
                self._expect("(")
                args = [self._expr()]
                while self._peek() == ",":
                    self.pos += 1
                    args.append(self._expr())
                self._expect(")")
                if word in UNARY_FUNCS and len(args) != 1:
                    raise ParseError(f"{word} takes exactly one argument", start)
                if word in NARY_FUNCS and len(args) < 2:
                    raise ParseError(f"{word} takes at least two arguments", start)
                return Func(word, tuple(args))
            raise ParseError(f"unknown identifier {word!r}", start)
        raise ParseError(f"unexpected {self._describe()}", self.pos,
                         ["number", "variable", "function", "'('", "'-'"])

    def _number(self) -> Node:
        start = self.pos
        end = start
        text = self.text
        while end < len(text) and text[end] in _NUMBER_CHARS:
            end += 1
        if end < len(text) and text[end] in "eE":
            k = end + 1
            if k < len(text) and text[k] in "+-":
                k += 1
            if k < len(text) and text[k].isdigit():
                end = k
                while end < len(text) and text[end].isdigit():
                    end += 1
        try:
            value = float(text[start:end])
        except ValueError:
            raise ParseError(f"malformed number {text[start:end]!r}", start) from None
        if not math.isfinite(value):
            raise ParseError("number out of range", start)
        self.pos = end
        return Const(value)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _fail_at(mask: np.ndarray, X: np.ndarray, message: str):
    idx = np.argwhere(mask)[0]
    point = X[tuple(idx)] if X.ndim > 1 else X
    raise DomainError(message, point)


def _eval(node: Node, X: np.ndarray) -> np.ndarray:
    if isinstance(node, Const):
        return np.full(X.shape[:-1], node.value)
    if isinstance(node, Var):
        return X[..., node.index - 1]
    if isinstance(node, NormSq):
        return np.sum(X * X, axis=-1)
    if isinstance(node, Func):
        vals = [_eval(a, X) for a in node.args]
        name = node.name
        with np.errstate(all="ignore"):
            if name == "neg":
                return -vals[0]
            if name == "abs":
                return np.abs(vals[0])
            if name == "min":
                return np.minimum.reduce(vals)
            if name == "max":
                return np.maximum.reduce(vals)
            v = vals[0]
            if name == "exp":
                out = np.exp(v)
                bad = ~np.isfinite(out)
                if bad.any():
                    _fail_at(bad, X, "overflow in exp")
                return out
            if name == "log":
                bad = ~(v > 0)
                if bad.any():
                    _fail_at(bad, X, "log of nonpositive number")
                return np.log(v)
            if name == "sqrt":
                bad = ~(v >= 0)
                if bad.any():
                    _fail_at(bad, X, "sqrt of negative number")
                return np.sqrt(v)
        raise AssertionError(name)
    a = _eval(node.left, X)
    b = _eval(node.right, X)
    with np.errstate(all="ignore"):
        if node.op == "+":
            out = a + b
        elif node.op == "-":
            out = a - b
        elif node.op == "*":
            out = a * b
        elif node.op == "/":
            zero = b == 0
            if zero.any():
                _fail_at(zero, X, "division by zero")
            out = a / b
        else:
            out = np.power(a, b)
    bad = ~np.isfinite(out)
    if bad.any():
        _fail_at(bad, X, f"invalid result of {node.op!r}")
    return out


@dataclass(frozen=True)
class Expr:
    """A parsed scalar function of ``dim`` real variables.

    Immutable; calling it is pure and thread-safe.
    """

    root: Node
    dim: int
    text: str = field(default="", compare=False)

    def __call__(self, points) -> np.ndarray | float:
        return evaluate(self, points)

    def __str__(self) -> str:
        return self.text or to_text(self.root)

    def to_text(self) -> str:
        return to_text(self.root)


def parse(text: str, dim: int) -> Expr:
    """Parse ``text`` into an :class:`Expr` of arity ``dim``.

    Raises :class:`ParseError` (a ``ValueError``) on any malformed input.
    """
    if not isinstance(text, str):
        raise TypeError("expression text must be a string")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not text.strip():
        raise ParseError("empty expression", 0, ["expression"])
    root = _Parser(text, dim).parse()
    return Expr(root, dim, text)


def _as_points(e: Expr, p) -> tuple[np.ndarray, bool]:
    X = np.asarray(p, dtype=float)
    scalar = False
    if X.ndim == 0:
        X = X.reshape(1)
    if X.ndim == 1 and e.dim == 1 and X.shape[0] != 1:
        X = X[:, None]
    elif X.ndim == 1:
        scalar = True
    if X.shape[-1] != e.dim:
        raise ValueError(f"point dimension {X.shape[-1]} does not match expression dimension {e.dim}")
    return X, scalar


def evaluate(e: Expr, p) -> np.ndarray | float:
    """Evaluate at one point (returns float) or an array ``(..., d)`` of points."""
    X, scalar = _as_points(e, p)
    out = _eval(e.root, X)
    out = np.broadcast_to(out, X.shape[:-1]).astype(float, copy=True)
    return float(out) if scalar else out


# ---------------------------------------------------------------------------
# Finite-difference calculus
# ---------------------------------------------------------------------------

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class DiffConfig:
    """Central-difference settings.

    ``h=None`` selects a point-scaled default: ``1e-5 * (1 + |p|_inf)`` for
    gradients and ``eps**0.25 * (1 + |p|_inf)`` for Hessians.
    """

    h: float | None = None
    richardson: bool = False

    def __post_init__(self):
        if self.h is not None and not self.h > 0:
            raise ValueError("finite-difference step must be positive")

    def step(self, X: np.ndarray, order: int) -> np.ndarray:
        scale = 1.0 + np.max(np.abs(X), axis=-1)
        if self.h is not None:
            return np.full(X.shape[:-1], self.h)
        base = 1e-5 if order == 1 else _EPS ** 0.25
        return base * scale


def _fd_grad(f, X: np.ndarray, h: np.ndarray) -> np.ndarray:
    d = X.shape[-1]
    out = np.empty(X.shape)
    for i in range(d):
        step = np.zeros(X.shape)
        step[..., i] = h
        out[..., i] = (f(X + step) - f(X - step)) / (2 * h)
    return out


def _fd_hess(f, X: np.ndarray, h: np.ndarray) -> np.ndarray:
    d = X.shape[-1]
    H = np.empty(X.shape + (d,))
    f0 = f(X)
    units = []
    for i in range(d):
        u = np.zeros(X.shape)
        u[..., i] = h
        units.append(u)
    for i in range(d):
        H[..., i, i] = (f(X + units[i]) - 2 * f0 + f(X - units[i])) / h**2
        for j in range(i + 1, d):
            ui, uj = units[i], units[j]
            v = (f(X + ui + uj) - f(X + ui - uj) - f(X - ui + uj) + f(X - ui - uj)) / (4 * h**2)
            H[..., i, j] = v
            H[..., j, i] = v
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def _diff(f, X, cfg: DiffConfig, order: int):
    h = cfg.step(X, order)
    rule = _fd_grad if order == 1 else _fd_hess
    D = rule(f, X, h)
    if cfg.richardson:
        D2 = rule(f, X, h / 2)
        D = (4 * D2 - D) / 3
    return D


def vector_fd(f, X: np.ndarray, cfg: DiffConfig | None = None, order: int = 1) -> np.ndarray:
    """Gradient (``order=1``) or Hessian (``order=2``) of an arbitrary
    vectorised callable ``f: (..., d) -> (...)``."""
    return _diff(f, np.asarray(X, dtype=float), cfg or DiffConfig(), order)


def grad(e: Expr, p, cfg: DiffConfig | None = None) -> np.ndarray:
    """Central-difference gradient; ``p`` may be one point or ``(..., d)``."""
    X, _ = _as_points(e, p)
    return _diff(lambda Y: evaluate(e, Y), X, cfg or DiffConfig(), 1)


def hess(e: Expr, p, cfg: DiffConfig | None = None) -> np.ndarray:
    """Symmetrised second-difference Hessian, shape ``(..., d, d)``."""
    X, _ = _as_points(e, p)
    return _diff(lambda Y: evaluate(e, Y), X, cfg or DiffConfig(), 2)
