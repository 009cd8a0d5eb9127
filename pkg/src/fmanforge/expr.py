"""Scalar-field expressions: recursive-descent parser, printer, symbolic
derivative and jet evaluation.

Grammar (whitespace insignificant)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' literal)?
    base   := literal | ident | ident '(' expr ')' | '(' expr ')' | '-' base

An exponent literal may carry a leading minus and may be written as a
parenthesised rational, e.g. ``u1^-1`` or ``u1^(1/2)``. Note that by this
grammar ``-u1^2`` means ``(-u1)^2``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .jet import Jet

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "conj")
FLAVORS = ("real", "complex")


class ExprError(ValueError):
    """Base class for expression errors; carries a byte offset into the source."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        where = f" at offset {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")


class ExprSyntaxError(ExprError):
    def __init__(self, offset: int, expected, found: str):
        self.expected = frozenset(expected)
        self.found = found
        exp = ", ".join(sorted(self.expected))
        super().__init__(f"syntax error: expected one of {{{exp}}}, found {found!r}", offset)


class UnknownIdentifier(ExprError):
    pass


class ConjInRealFlavor(ExprError):
    pass


class EvalDomainError(ExprError, ArithmeticError):
    pass


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Const:
    value: float
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Coord:
    index: int
    name: str
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Neg:
    arg: "Node"
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: float
    offset: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"
    offset: int = field(default=-1, compare=False)


Node = Const | Coord | Neg | BinOp | Pow | Call


@dataclass(frozen=True)
class Expr:
    """A parsed expression bound to its coordinate names and flavor."""

    root: Node
    coords: tuple[str, ...]
    flavor: str = "real"
    source: str = field(default="", compare=False)

    def __str__(self) -> str:
        return to_text(self.root)

    def jet(self, coord_jets: Jet, order: int = 2) -> Jet:
        return evaluate(self.root, coord_jets, self.flavor, order)

    def diff(self, index: int, bar: bool = False) -> "Expr":
        return Expr(simplify(diff(self.root, (index, bar))), self.coords, self.flavor)

    @property
    def has_conj(self) -> bool:
        return _has_conj(self.root)

    @classmethod
    def const(cls, value: float, coords, flavor: str = "real") -> "Expr":
        return cls(Const(float(value)), tuple(coords), flavor)

    def _join(self, op: str, other) -> "Expr":
        if not isinstance(other, Expr):
            other = Expr.const(other, self.coords, self.flavor)
        if other.coords != self.coords or other.flavor != self.flavor:
            raise ValueError("expressions live on different charts")
        return Expr(simplify(BinOp(op, self.root, other.root)), self.coords, self.flavor)

    def __add__(self, other) -> "Expr":
        return self._join("+", other)

    def __sub__(self, other) -> "Expr":
        return self._join("-", other)

    def __mul__(self, other) -> "Expr":
        return self._join("*", other)

    def __truediv__(self, other) -> "Expr":
        return self._join("/", other)

    def __neg__(self) -> "Expr":
        return Expr(simplify(Neg(self.root)), self.coords, self.flavor)

    def rebase(self, coords, offset: int = 0) -> "Expr":
        """The same function pulled back to a larger chart whose coordinates
        ``offset .. offset+len(self.coords)-1`` are this chart's coordinates."""
        coords = tuple(coords)
        return Expr(_shift(self.root, coords, offset), coords, self.flavor)

    def is_zero(self) -> bool:
        return isinstance(self.root, Const) and self.root.value == 0.0


def _shift(node: Node, coords, offset: int) -> Node:
    if isinstance(node, Coord):
        i = node.index + offset
        return Coord(i, coords[i])
    if isinstance(node, Const):
        return node
    if isinstance(node, Neg):
        return Neg(_shift(node.arg, coords, offset))
    if isinstance(node, Pow):
        return Pow(_shift(node.base, coords, offset), node.exponent)
    if isinstance(node, Call):
        return Call(node.func, _shift(node.arg, coords, offset))
    return BinOp(node.op, _shift(node.left, coords, offset), _shift(node.right, coords, offset))


# --------------------------------------------------------------------------
# tokenizer + parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    toks = []
    pos = 0
    raw = text.encode("utf-8")
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:]
            if not rest.strip():
                break
            off = pos + (len(rest) - len(rest.lstrip()))
            raise ExprSyntaxError(_byte_offset(text, off), {"number", "identifier", "operator"},
                                  text[off])
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), _byte_offset(text, start)))
        pos = m.end()
    toks.append(("end", "", len(raw)))
    return toks


def _byte_offset(text: str, char_index: int) -> int:
    return len(text[:char_index].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, coords, flavor: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.coords = {name: k for k, name in enumerate(coords)}
        self.flavor = flavor

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, expected):
        kind, text, off = self.peek()
        raise ExprSyntaxError(off, expected, text if kind != "end" else "<end>")

    def expect(self, op):
        kind, text, off = self.peek()
        if kind == "op" and text == op:
            return self.take()
        self.fail({op})

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail({"+", "-", "*", "/", "^", "<end>"})
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            _, op, off = self.take()
            node = BinOp(op, node, self.term(), off)
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            _, op, off = self.take()
            node = BinOp(op, node, self.factor(), off)
        return node

    def factor(self):
        node = self.base()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            _, _, off = self.take()
            node = Pow(node, self.literal_exponent(), off)
        return node

    def _number(self):
        sign = 1.0
        if self.peek()[:2] == ("op", "-"):
            self.take()
            sign = -1.0
        kind, text, _ = self.peek()
        if kind != "num":
            self.fail({"number"})
        self.take()
        return sign * float(text)

    def literal_exponent(self):
        if self.peek()[:2] == ("op", "("):
            self.take()
            value = self._number()
            if self.peek()[:2] == ("op", "/"):
                self.take()
                den = self._number()
                if den == 0:
                    raise ExprError("zero denominator in exponent", self.toks[self.i - 1][2])
                value = value / den
            self.expect(")")
            return value
        return self._number()

    def base(self):
        kind, text, off = self.peek()
        if kind == "num":
            self.take()
            return Const(float(text), off)
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.base(), off)
        if kind == "op" and text == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "ident":
            self.take()
            if self.peek()[:2] == ("op", "("):
                if text not in FUNCTIONS:
                    raise UnknownIdentifier(f"unknown function {text!r}", off)
                if text == "conj" and self.flavor != "complex":
                    raise ConjInRealFlavor("conj() is only legal in complex flavor", off)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg, off)
            if text not in self.coords:
                raise UnknownIdentifier(f"unknown identifier {text!r}", off)
            return Coord(self.coords[text], text, off)
        self.fail({"number", "identifier", "(", "-"})


def parse(text: str, coords, flavor: str = "real") -> Expr:
    """Parse ``text`` over the named coordinates."""
    coords = tuple(coords)
    if not coords:
        raise ValueError("coordinate list must be nonempty")
    if len(set(coords)) != len(coords):
        raise ValueError("coordinate names must be distinct")
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}")
    root = _Parser(text, coords, flavor).parse()
    return Expr(root, coords, flavor, text)


# --------------------------------------------------------------------------
# printing


def _num(x: float) -> str:
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def to_text(node: Node) -> str:
    """Fully parenthesised text that reparses to a structurally equal tree."""
    if isinstance(node, Const):
        return _num(node.value)
    if isinstance(node, Coord):
        return node.name
    if isinstance(node, Neg):
        return f"-({to_text(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_text(node.left)} {node.op} {to_text(node.right)})"
    if isinstance(node, Pow):
        return f"({to_text(node.base)})^({_num(node.exponent)})"
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    raise TypeError(node)


def _has_conj(node: Node) -> bool:
    if isinstance(node, Call):
        return node.func == "conj" or _has_conj(node.arg)
    if isinstance(node, (Neg, Pow)):
        return _has_conj(node.arg if isinstance(node, Neg) else node.base)
    if isinstance(node, BinOp):
        return _has_conj(node.left) or _has_conj(node.right)
    return False


# --------------------------------------------------------------------------
# symbolic derivative (Wirtinger-aware)

ZERO = Const(0.0)
ONE = Const(1.0)


def diff(node: Node, var: tuple[int, bool]) -> Node:
    """Derivative along coordinate ``var = (index, bar)``; ``bar`` selects d/dzbar."""
    if isinstance(node, Const):
        return ZERO
    if isinstance(node, Coord):
        return ONE if (node.index, False) == var else ZERO
    if isinstance(node, Neg):
        return Neg(diff(node.arg, var), node.offset)
    if isinstance(node, BinOp):
        a, b = node.left, node.right
        da, db = diff(a, var), diff(b, var)
        if node.op in "+-":
            return BinOp(node.op, da, db, node.offset)
        if node.op == "*":
            return BinOp("+", BinOp("*", da, b), BinOp("*", a, db), node.offset)
        # (a/b)' = a'/b - a b' / b^2
        return BinOp("-", BinOp("/", da, b, node.offset),
                     BinOp("/", BinOp("*", a, db), Pow(b, 2.0), node.offset), node.offset)
    if isinstance(node, Pow):
        p = node.exponent
        if p == 0.0:
            return ZERO
        inner = ONE if p == 1.0 else BinOp("*", Const(p), Pow(node.base, p - 1.0, node.offset))
        return BinOp("*", inner, diff(node.base, var), node.offset)
    if isinstance(node, Call):
        a = node.arg
        if node.func == "conj":
            return Call("conj", diff(a, (var[0], not var[1])), node.offset)
        da = diff(a, var)
        if node.func == "sin":
            outer = Call("cos", a, node.offset)
        elif node.func == "cos":
            outer = Neg(Call("sin", a, node.offset))
        elif node.func == "exp":
            outer = node
        elif node.func == "log":
            return BinOp("/", da, a, node.offset)
        elif node.func == "sqrt":
            return BinOp("/", da, BinOp("*", Const(2.0), node), node.offset)
        else:
            raise TypeError(node.func)
        return BinOp("*", outer, da, node.offset)
    raise TypeError(node)


def simplify(node: Node) -> Node:
    """Fold the zeros and ones produced by :func:`diff`; no algebraic rewriting."""
    if isinstance(node, (Const, Coord)):
        return node
    if isinstance(node, Neg):
        a = simplify(node.arg)
        if isinstance(a, Const) and a.value == 0.0:
            return ZERO
        return Neg(a, node.offset)
    if isinstance(node, Pow):
        b = simplify(node.base)
        if isinstance(b, Const) and b.value > 0:
            return Const(b.value ** node.exponent)
        return Pow(b, node.exponent, node.offset)
    if isinstance(node, Call):
        a = simplify(node.arg)
        if node.func == "conj" and isinstance(a, Const):
            return a
        return Call(node.func, a, node.offset)
    a, b = simplify(node.left), simplify(node.right)
    za = isinstance(a, Const) and a.value == 0.0
    zb = isinstance(b, Const) and b.value == 0.0
    oa = isinstance(a, Const) and a.value == 1.0
    ob = isinstance(b, Const) and b.value == 1.0
    if node.op == "+":
        if za:
            return b
        if zb:
            return a
    elif node.op == "-":
        if zb:
            return a
        if za:
            return simplify(Neg(b, node.offset))
    elif node.op == "*":
        if za or zb:
            return ZERO
        if oa:
            return b
        if ob:
            return a
    elif node.op == "/":
        if za:
            return ZERO
        if ob:
            return a
    return BinOp(node.op, a, b, node.offset)


# --------------------------------------------------------------------------
# jet evaluation


def _real_positive(jet: Jet, node: Node, what: str) -> None:
    v = jet.val
    bad = v <= 0 if not np.iscomplexobj(v) else v == 0
    if np.any(bad):
        raise EvalDomainError(f"{what} of nonpositive argument", node.offset)


def evaluate(node: Node, coord_jets: Jet, flavor: str = "real", order: int = 2) -> Jet:
    """Evaluate ``node`` as a jet; ``coord_jets`` is the (P, n) coordinate jet."""
    ncoord = coord_jets.shape[0]
    coord_jets = coord_jets.truncate(order)

    def const(value):
        dtype = coord_jets.val.dtype
        val = np.full(coord_jets.npoints, value, dtype=dtype)
        return Jet.constant(val, coord_jets.nvar, order) if order else Jet(val)

    def ev(nd):
        if isinstance(nd, Const):
            return const(nd.value)
        if isinstance(nd, Coord):
            return coord_jets[nd.index]
        if isinstance(nd, Neg):
            return -ev(nd.arg)
        if isinstance(nd, BinOp):
            a, b = ev(nd.left), ev(nd.right)
            if nd.op == "+":
                return a + b
            if nd.op == "-":
                return a - b
            if nd.op == "*":
                return a * b
            if np.any(b.val == 0):
                raise EvalDomainError("division by zero", nd.offset)
            return a / b
        if isinstance(nd, Pow):
            return _pow(ev(nd.base), nd.exponent, nd)
        if isinstance(nd, Call):
            a = ev(nd.arg)
            v = a.val
            f = nd.func
            if f == "sin":
                s, c = np.sin(v), np.cos(v)
                return a.apply(s, c, -s)
            if f == "cos":
                s, c = np.sin(v), np.cos(v)
                return a.apply(c, -s, -c)
            if f == "exp":
                e = np.exp(v)
                return a.apply(e, e, e)
            if f == "log":
                _real_positive(a, nd, "log")
                return a.apply(np.log(v), 1.0 / v, -1.0 / (v * v))
            if f == "sqrt":
                _real_positive(a, nd, "sqrt")
                r = np.sqrt(v)
                return a.apply(r, 0.5 / r, -0.25 / (r * v))
            if f == "conj":
                if flavor != "complex":
                    raise ConjInRealFlavor("conj() is only legal in complex flavor", nd.offset)
                return a.conj(ncoord)
        raise TypeError(nd)

    return ev(node)


def _pow(a: Jet, p: float, node: Pow) -> Jet:
    v = a.val
    if float(p).is_integer():
        k = int(p)
        if k < 0 and np.any(v == 0):
            raise EvalDomainError("division by zero in negative power", node.offset)
        if k == 0:
            one = np.ones_like(v)
            return a.apply(one, np.zeros_like(v), np.zeros_like(v))
        f = v ** k
        df = k * v ** (k - 1) if k != 1 else np.ones_like(v)
        d2f = k * (k - 1) * v ** (k - 2) if k not in (1, 2) else (np.full_like(v, 2.0) if k == 2 else np.zeros_like(v))
        return a.apply(f, df, d2f)
    if not np.iscomplexobj(v) and np.any(v <= 0):
        raise EvalDomainError("non-integer power of nonpositive argument", node.offset)
    if np.iscomplexobj(v) and np.any(v == 0):
        raise EvalDomainError("non-integer power of zero", node.offset)
    f = v ** p
    return a.apply(f, p * f / v, p * (p - 1) * f / (v * v))
