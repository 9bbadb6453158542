"""Scalar expressions over ``x1..xd`` with second-order forward-mode evaluation.

Grammar (highest precedence first)::

    primary := NUMBER | VAR | FUNC '(' expr ')' | '(' expr ')'
    power   := primary ['^' unary]          # right associative
    unary   := ('-' | '+') unary | power    # so -x1^2 == -(x1^2)
    term    := unary (('*' | '/') unary)*
    expr    := term (('+' | '-') term)*

``VAR`` is ``x`` followed by a 1-based index.  ``FUNC`` is one of
``sin cos exp log sqrt``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

UNARY_FUNCS = ("sin", "cos", "exp", "log", "sqrt")
BINARY_OPS = {"+": "add", "-": "sub", "*": "mul", "/": "div", "^": "pow"}


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifier(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class VariableIndexError(ExprError):
    def __init__(self, index: int, d: int, offset: int):
        super().__init__(f"variable index x{index} exceeds dimension {d} at offset {offset}")
        self.index = index
        self.offset = offset


class DomainViolation(ExprError, ArithmeticError):
    """Evaluation left the real domain of a primitive."""

    def __init__(self, message: str, node: "Node"):
        super().__init__(f"{message} (node {to_text(node)!r} at offset {node.offset})")
        self.node = node


# --- tree ---------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    index: int
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' or one of UNARY_FUNCS
    arg: "Node"
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Binary:
    op: str  # add sub mul div pow
    left: "Node"
    right: "Node"
    offset: int = field(default=0, compare=False, repr=False)


Node = Union[Const, Var, Unary, Binary]


@dataclass(frozen=True)
class ExprTree:
    root: Node
    d: int
    text: str = field(default="", compare=False)

    def __str__(self) -> str:
        return to_text(self.root)


# --- tokenizer / parser -------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    raw = text.encode()
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", len(text[:pos].encode()))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), len(text[:start].encode())))
        pos = m.end()
    tokens.append(("end", "", len(raw)))
    return tokens


class _Parser:
    def __init__(self, text: str, d: int):
        self.tokens = _tokenize(text)
        self.i = 0
        self.d = d

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, off = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", off)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {val!r}", off)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, off = self.take()
            node = Binary(BINARY_OPS[op], node, self.term(), off)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, off = self.take()
            node = Binary(BINARY_OPS[op], node, self.unary(), off)
        return node

    def unary(self) -> Node:
        kind, val, off = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Unary("neg", self.unary(), off)
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        kind, val, off = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return Binary("pow", base, self.unary(), off)
        return base

    def primary(self) -> Node:
        kind, val, off = self.take()
        if kind == "num":
            return Const(float(val), off)
        if kind == "name":
            m = re.fullmatch(r"x(\d+)", val)
            if m:
                index = int(m.group(1))
                if index < 1:
                    raise UnknownIdentifier(val, off)
                if index > self.d:
                    raise VariableIndexError(index, self.d, off)
                return Var(index, off)
            if val in UNARY_FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(val, arg, off)
            raise UnknownIdentifier(val, off)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", off)
        raise ExprSyntaxError(f"unexpected token {val!r}", off)


def parse_expression(text: str, d: int) -> ExprTree:
    """Parse ``text`` into an immutable tree over ``x1..xd``.

    Raises ExprSyntaxError (with byte offset), UnknownIdentifier or
    VariableIndexError.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    return ExprTree(_Parser(text, d).parse(), d, text)


# --- printing -----------------------------------------------------------------

_SYMBOL = {v: k for k, v in BINARY_OPS.items()}


def to_text(node: Node) -> str:
    """Fully parenthesized serialization; ``parse(to_text(t))`` rebuilds ``t``."""
    if isinstance(node, ExprTree):
        node = node.root
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"(-{to_text(node.arg)})"
        return f"{node.op}({to_text(node.arg)})"
    return f"({to_text(node.left)} {_SYMBOL[node.op]} {to_text(node.right)})"


def variables(node: Node) -> set[int]:
    if isinstance(node, ExprTree):
        node = node.root
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, Unary):
        return variables(node.arg)
    if isinstance(node, Binary):
        return variables(node.left) | variables(node.right)
    return set()


# --- order-2 truncated Taylor arithmetic --------------------------------------


class Taylor2:
    """Value, gradient and Hessian of a scalar carried through arithmetic."""

    __slots__ = ("v", "g", "H")

    def __init__(self, v: float, g: np.ndarray, H: np.ndarray):
        self.v = v
        self.g = g
        self.H = H

    @classmethod
    def constant(cls, v: float, d: int) -> "Taylor2":
        return cls(float(v), np.zeros(d), np.zeros((d, d)))

    @classmethod
    def variable(cls, x: np.ndarray, index: int) -> "Taylor2":
        d = x.shape[0]
        g = np.zeros(d)
        g[index] = 1.0
        return cls(float(x[index]), g, np.zeros((d, d)))

    def chain(self, f0: float, f1: float, f2: float) -> "Taylor2":
        # composition with a scalar function having derivatives f1, f2 at self.v
        return Taylor2(f0, f1 * self.g, f1 * self.H + f2 * np.outer(self.g, self.g))

    def __add__(self, o: "Taylor2") -> "Taylor2":
        return Taylor2(self.v + o.v, self.g + o.g, self.H + o.H)

    def __sub__(self, o: "Taylor2") -> "Taylor2":
        return Taylor2(self.v - o.v, self.g - o.g, self.H - o.H)

    def __neg__(self) -> "Taylor2":
        return Taylor2(-self.v, -self.g, -self.H)

    def __mul__(self, o: "Taylor2") -> "Taylor2":
        cross = np.outer(self.g, o.g)
        return Taylor2(
            self.v * o.v,
            self.v * o.g + o.v * self.g,
            self.v * o.H + o.v * self.H + (cross + cross.T),
        )

    def reciprocal(self) -> "Taylor2":
        inv = 1.0 / self.v
        return self.chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def powi(self, n: int) -> "Taylor2":
        v = self.v
        if n == 0:
            return Taylor2.constant(1.0, self.g.shape[0])
        f1 = n * v ** (n - 1) if n != 1 else 1.0
        f2 = n * (n - 1) * v ** (n - 2) if n not in (0, 1) else 0.0
        return self.chain(v**n, f1, f2)

    def powr(self, p: float) -> "Taylor2":
        v = self.v
        return self.chain(v**p, p * v ** (p - 1.0), p * (p - 1.0) * v ** (p - 2.0))


def _is_integer(value: float) -> bool:
    return float(value).is_integer() and abs(value) < 2**31


def _eval2(node: Node, x: np.ndarray) -> Taylor2:
    d = x.shape[0]
    if isinstance(node, Const):
        return Taylor2.constant(node.value, d)
    if isinstance(node, Var):
        return Taylor2.variable(x, node.index - 1)
    if isinstance(node, Unary):
        a = _eval2(node.arg, x)
        op, v = node.op, a.v
        if op == "neg":
            return -a
        if op == "sin":
            s, c = math.sin(v), math.cos(v)
            return a.chain(s, c, -s)
        if op == "cos":
            s, c = math.sin(v), math.cos(v)
            return a.chain(c, -s, -c)
        if op == "exp":
            e = math.exp(v)
            return a.chain(e, e, e)
        if op == "log":
            if v <= 0.0:
                raise DomainViolation(f"log of non-positive value {v!r}", node)
            return a.chain(math.log(v), 1.0 / v, -1.0 / (v * v))
        if op == "sqrt":
            if v <= 0.0:
                raise DomainViolation(f"sqrt of non-positive value {v!r}", node)
            r = math.sqrt(v)
            return a.chain(r, 0.5 / r, -0.25 / (r * v))
        raise AssertionError(op)
    a = _eval2(node.left, x)
    if node.op == "pow" and isinstance(node.right, Const):
        p = node.right.value
        if _is_integer(p):
            if p < 0 and a.v == 0.0:
                raise DomainViolation("zero raised to a negative power", node)
            return a.powi(int(p))
        if a.v <= 0.0:
            raise DomainViolation(f"non-integer power of non-positive base {a.v!r}", node)
        return a.powr(p)
    b = _eval2(node.right, x)
    if node.op == "add":
        return a + b
    if node.op == "sub":
        return a - b
    if node.op == "mul":
        return a * b
    if node.op == "div":
        if b.v == 0.0:
            raise DomainViolation("division by zero", node)
        return a * b.reciprocal()
    # general power a^b = exp(b log a)
    if a.v <= 0.0:
        raise DomainViolation(f"variable power of non-positive base {a.v!r}", node)
    la = a.chain(math.log(a.v), 1.0 / a.v, -1.0 / (a.v * a.v))
    e = b * la
    ev = math.exp(e.v)
    return e.chain(ev, ev, ev)


@dataclass(frozen=True)
class SecondOrderValue:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


def _as_point(tree: ExprTree, point) -> np.ndarray:
    x = np.asarray(point, dtype=float).reshape(-1)
    if x.shape[0] != tree.d:
        raise ValueError(f"point has length {x.shape[0]}, expected {tree.d}")
    return x


def eval_order2(tree: ExprTree, point) -> SecondOrderValue:
    """Value, gradient and Hessian of ``tree`` at ``point`` in one traversal."""
    x = _as_point(tree, point)
    r = _eval2(tree.root, x)
    return SecondOrderValue(float(r.v), r.g.copy(), r.H.copy())


def _eval0(node: Node, x: np.ndarray) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return float(x[node.index - 1])
    if isinstance(node, Unary):
        v = _eval0(node.arg, x)
        if node.op == "neg":
            return -v
        if node.op in ("log", "sqrt") and v <= 0.0:
            raise DomainViolation(f"{node.op} of non-positive value {v!r}", node)
        return getattr(math, node.op)(v)
    a = _eval0(node.left, x)
    b = _eval0(node.right, x)
    if node.op == "add":
        return a + b
    if node.op == "sub":
        return a - b
    if node.op == "mul":
        return a * b
    if node.op == "div":
        if b == 0.0:
            raise DomainViolation("division by zero", node)
        return a / b
    if _is_integer(b) and isinstance(node.right, Const):
        if b < 0 and a == 0.0:
            raise DomainViolation("zero raised to a negative power", node)
        return a ** int(b)
    if a <= 0.0:
        raise DomainViolation(f"non-integer power of non-positive base {a!r}", node)
    return a**b


def evaluate(tree: ExprTree, point) -> float:
    """Plain value of ``tree`` at ``point``."""
    return float(_eval0(tree.root, _as_point(tree, point)))
