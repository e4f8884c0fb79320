"""Expression trees for ODE right-hand sides and the text format that builds them.

A system is written in a small line-oriented language::

    # single machine, infinite bus
    param K1=5 K2=10 K3=1.7;
    d(delta)/dt = omega;
    d(omega)/dt = K1 - K2*sin(delta) - K3*omega;
    init delta=-1 omega=7;
    domain 0 10

Operator precedence, tightest first: unary minus, ``^``, ``* /``, ``+ -``.
Unary minus binds tighter than ``^``, so ``-x^2`` is ``(-x)^2``.  The bare
identifier ``t`` denotes time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "Expr", "Constant", "Param", "StateVar", "Time", "Neg", "Sin", "Cos",
    "Tanh", "Exp", "Add", "Sub", "Mul", "Div", "Pow", "OdeSystem",
    "DSLError", "EvalError", "parse_system", "parse_expr", "format_system",
    "format_expr", "evaluate", "evaluate_array", "diff", "compile_rhs",
    "free_names",
]

FUNCTIONS = ("sin", "cos", "tanh", "exp")


class DSLError(ValueError):
    """Raised for malformed system text.

    ``problems`` holds ``(line, column, message)`` triples; the exception
    message lists all of them, one per line.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        line, col, _ = self.problems[0]
        self.line = line
        self.column = col
        super().__init__("\n".join(f"{ln}:{c}: {msg}" for ln, c, msg in self.problems))


class EvalError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# node types


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Constant(Expr):
    value: float


@dataclass(frozen=True)
class Param(Expr):
    name: str


@dataclass(frozen=True)
class StateVar(Expr):
    name: str


@dataclass(frozen=True)
class Time(Expr):
    pass


@dataclass(frozen=True)
class Unary(Expr):
    arg: Expr


class Neg(Unary):
    pass


class Sin(Unary):
    pass


class Cos(Unary):
    pass


class Tanh(Unary):
    pass


class Exp(Unary):
    pass


@dataclass(frozen=True)
class Binary(Expr):
    left: Expr
    right: Expr


class Add(Binary):
    pass


class Sub(Binary):
    pass


class Mul(Binary):
    pass


class Div(Binary):
    pass


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: Constant

    def __post_init__(self):
        if not isinstance(self.exponent, Constant):
            raise TypeError("Pow exponent must be a Constant")


_FUNC_NODES = {"sin": Sin, "cos": Cos, "tanh": Tanh, "exp": Exp}
_NODE_FUNCS = {v: k for k, v in _FUNC_NODES.items()}
_BINARY_OPS = {Add: "+", Sub: "-", Mul: "*", Div: "/"}


def free_names(e: Expr) -> tuple[set[str], set[str]]:
    """Return the (state, parameter) names referenced by ``e``."""
    states: set[str] = set()
    params: set[str] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, StateVar):
            states.add(node.name)
        elif isinstance(node, Param):
            params.add(node.name)
        elif isinstance(node, Unary):
            stack.append(node.arg)
        elif isinstance(node, Binary):
            stack.extend((node.left, node.right))
        elif isinstance(node, Pow):
            stack.append(node.base)
    return states, params


# ---------------------------------------------------------------------------
# systems


@dataclass(frozen=True)
class OdeSystem:
    """First-order system ``d u_i/dt = rhs_i(t, u, params)`` on ``[t0, t1]``.

    ``states`` fixes the variable order used everywhere downstream (network
    outputs, trajectory columns, CSV headers).
    """

    states: tuple[str, ...]
    params: Mapping[str, float]
    rhs: Mapping[str, Expr]
    initial: Mapping[str, float]
    t0: float
    t1: float
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})
        object.__setattr__(self, "rhs", dict(self.rhs))
        object.__setattr__(self, "initial", {k: float(v) for k, v in self.initial.items()})
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "t1", float(self.t1))
        if not self.states:
            raise ValueError("system has no state variables")
        if len(set(self.states)) != len(self.states):
            raise ValueError("duplicate state variable names")
        if set(self.rhs) != set(self.states):
            raise ValueError("need exactly one right-hand side per state variable")
        if set(self.initial) != set(self.states):
            raise ValueError("need exactly one initial condition per state variable")
        if not self.t1 > self.t0:
            raise ValueError(f"empty time domain [{self.t0}, {self.t1}]")
        for var, e in self.rhs.items():
            used_states, used_params = free_names(e)
            if used_states - set(self.states):
                raise ValueError(f"rhs of {var} uses unknown states {sorted(used_states - set(self.states))}")
            if used_params - set(self.params):
                raise ValueError(f"rhs of {var} uses unknown params {sorted(used_params - set(self.params))}")

    @property
    def dim(self) -> int:
        return len(self.states)

    def initial_vector(self) -> np.ndarray:
        return np.array([self.initial[s] for s in self.states])

    def with_initial(self, **values: float) -> "OdeSystem":
        return replace(self, initial={**self.initial, **values})

    def with_params(self, **values: float) -> "OdeSystem":
        unknown = set(values) - set(self.params)
        if unknown:
            raise KeyError(f"unknown parameters {sorted(unknown)}")
        return replace(self, params={**self.params, **values})

    def with_domain(self, t0: float, t1: float) -> "OdeSystem":
        return replace(self, t0=t0, t1=t1)

    def __str__(self):
        return format_system(self)


# ---------------------------------------------------------------------------
# evaluation


def _walk(e: Expr, leaf: Callable[[Expr], object], funcs: Mapping[str, Callable]):
    if isinstance(e, Constant):
        return e.value
    if isinstance(e, (Param, StateVar, Time)):
        return leaf(e)
    if isinstance(e, Neg):
        return -_walk(e.arg, leaf, funcs)
    if isinstance(e, Unary):
        return funcs[_NODE_FUNCS[type(e)]](_walk(e.arg, leaf, funcs))
    if isinstance(e, Binary):
        a = _walk(e.left, leaf, funcs)
        b = _walk(e.right, leaf, funcs)
        if isinstance(e, Add):
            return a + b
        if isinstance(e, Sub):
            return a - b
        if isinstance(e, Mul):
            return a * b
        return a / b
    if isinstance(e, Pow):
        return _walk(e.base, leaf, funcs) ** e.exponent.value
    raise TypeError(f"not an expression node: {e!r}")


def _leaf_lookup(t, state, params):
    def leaf(e):
        if isinstance(e, Time):
            return t
        try:
            return state[e.name] if isinstance(e, StateVar) else params[e.name]
        except KeyError:
            raise KeyError(f"unbound name {e.name!r}") from None
    return leaf


_MATH = {"sin": math.sin, "cos": math.cos, "tanh": math.tanh, "exp": math.exp}
_NUMPY = {"sin": np.sin, "cos": np.cos, "tanh": np.tanh, "exp": np.exp}


def evaluate(e: Expr, t: float, state: Mapping[str, float], params: Mapping[str, float]) -> float:
    """Evaluate ``e`` in double precision.

    Raises `EvalError` on division by zero, overflow, or a fractional power
    of a negative number.
    """
    try:
        value = _walk(e, _leaf_lookup(t, state, params), _MATH)
    except (ZeroDivisionError, OverflowError) as exc:
        raise EvalError(str(exc)) from exc
    if isinstance(value, complex):
        raise EvalError("fractional power of a negative number")
    return float(value)


def evaluate_array(e: Expr, t, state: Mapping[str, object], params: Mapping[str, float], funcs=None):
    """Evaluate ``e`` elementwise over arrays.

    ``funcs`` overrides the elementary functions, which lets the same tree be
    evaluated over any array-like type that supports the arithmetic operators.
    """
    return _walk(e, _leaf_lookup(t, state, params), funcs or _NUMPY)


def compile_rhs(system: OdeSystem) -> Callable[[float, Sequence[float]], list[float]]:
    """Build a fast ``f(t, y) -> list`` for the system's right-hand sides.

    Parameters are inlined as literals.  The generated code performs the same
    floating-point operations in the same order as `evaluate`.
    """
    index = {name: i for i, name in enumerate(system.states)}

    def leaf(e):
        if isinstance(e, Time):
            return "t"
        if isinstance(e, StateVar):
            return f"y[{index[e.name]}]"
        return f"({system.params[e.name]!r})"

    funcs = {name: (lambda a, name=name: f"_{name}({a})") for name in FUNCTIONS}

    def gen(e):
        if isinstance(e, Constant):
            return f"({e.value!r})"
        if isinstance(e, (Param, StateVar, Time)):
            return leaf(e)
        if isinstance(e, Neg):
            return f"(-{gen(e.arg)})"
        if isinstance(e, Unary):
            return funcs[_NODE_FUNCS[type(e)]](gen(e.arg))
        if isinstance(e, Binary):
            return f"({gen(e.left)} {_BINARY_OPS[type(e)]} {gen(e.right)})"
        return f"({gen(e.base)} ** ({e.exponent.value!r}))"

    body = ", ".join(gen(system.rhs[s]) for s in system.states)
    src = f"def f(t, y):\n    return [{body}]\n"
    namespace = {f"_{k}": v for k, v in _MATH.items()}
    exec(compile(src, "<rhs>", "exec"), namespace)
    return namespace["f"]


# ---------------------------------------------------------------------------
# symbolic differentiation

ZERO = Constant(0.0)
ONE = Constant(1.0)


def _is_const(e, value=None):
    return isinstance(e, Constant) and (value is None or e.value == value)


def _add(a, b):
    if _is_const(a) and _is_const(b):
        return Constant(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def _sub(a, b):
    if _is_const(a) and _is_const(b):
        return Constant(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return _neg(b)
    return Sub(a, b)


def _mul(a, b):
    if _is_const(a) and _is_const(b):
        return Constant(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def _div(a, b):
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return Constant(a.value / b.value)
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Div(a, b)


def _neg(a):
    if _is_const(a):
        return Constant(-a.value)
    return Neg(a)


def _pow(base, exponent: float):
    if exponent == 0.0:
        return ONE
    if exponent == 1.0:
        return base
    if _is_const(base):
        try:
            value = base.value ** exponent
        except ZeroDivisionError:
            return Pow(base, Constant(exponent))
        if not isinstance(value, complex):
            return Constant(value)
    return Pow(base, Constant(exponent))


def diff(e: Expr, wrt: str) -> Expr:
    """Partial derivative of ``e`` with respect to the state variable ``wrt``."""
    if isinstance(e, (Constant, Param, Time)):
        return ZERO
    if isinstance(e, StateVar):
        return ONE if e.name == wrt else ZERO
    if isinstance(e, Unary):
        da = diff(e.arg, wrt)
        if isinstance(e, Neg):
            return _neg(da)
        if _is_const(da, 0.0):
            return ZERO
        a = e.arg
        if isinstance(e, Sin):
            return _mul(Cos(a), da)
        if isinstance(e, Cos):
            return _mul(_neg(Sin(a)), da)
        if isinstance(e, Tanh):
            return _mul(_sub(ONE, _pow(Tanh(a), 2.0)), da)
        return _mul(Exp(a), da)
    if isinstance(e, Binary):
        a, b = e.left, e.right
        da, db = diff(a, wrt), diff(b, wrt)
        if isinstance(e, Add):
            return _add(da, db)
        if isinstance(e, Sub):
            return _sub(da, db)
        if isinstance(e, Mul):
            return _add(_mul(da, b), _mul(a, db))
        # quotient rule split so a constant numerator derivative folds away
        return _sub(_div(da, b), _div(_mul(a, db), _pow(b, 2.0)))
    if isinstance(e, Pow):
        db = diff(e.base, wrt)
        if _is_const(db, 0.0):
            return ZERO
        c = e.exponent.value
        return _mul(_mul(Constant(c), _pow(e.base, c - 1.0)), db)
    raise TypeError(f"not an expression node: {e!r}")


# ---------------------------------------------------------------------------
# printing

_PREC_ADD, _PREC_MUL, _PREC_POW, _PREC_NEG, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(e):
    if isinstance(e, (Add, Sub)):
        return _PREC_ADD
    if isinstance(e, (Mul, Div)):
        return _PREC_MUL
    if isinstance(e, Pow):
        return _PREC_POW
    if isinstance(e, Neg) or (isinstance(e, Constant) and math.copysign(1.0, e.value) < 0):
        return _PREC_NEG
    return _PREC_ATOM


def _fmt_number(x: float) -> str:
    return repr(float(x))


def format_expr(e: Expr) -> str:
    """Canonical text for ``e``; `parse_expr` reads it back to an equal tree."""
    if isinstance(e, Constant):
        return _fmt_number(e.value)
    if isinstance(e, (Param, StateVar)):
        return e.name
    if isinstance(e, Time):
        return "t"
    if isinstance(e, Neg):
        inner = format_expr(e.arg)
        # "-2.0" would read back as a negative literal
        if _prec(e.arg) < _PREC_NEG or (isinstance(e.arg, Constant) and _prec(e.arg) == _PREC_ATOM):
            inner = f"({inner})"
        return "-" + inner
    if isinstance(e, Unary):
        return f"{_NODE_FUNCS[type(e)]}({format_expr(e.arg)})"
    if isinstance(e, Binary):
        p = _prec(e)
        left, right = format_expr(e.left), format_expr(e.right)
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {_BINARY_OPS[type(e)]} {right}"
    if isinstance(e, Pow):
        base = format_expr(e.base)
        if _prec(e.base) <= _PREC_POW:
            base = f"({base})"
        return f"{base}^{format_expr(e.exponent)}"
    raise TypeError(f"not an expression node: {e!r}")


def format_system(system: OdeSystem) -> str:
    lines = []
    if system.params:
        lines.append("param " + " ".join(f"{k}={_fmt_number(v)}" for k, v in system.params.items()) + ";")
    for s in system.states:
        lines.append(f"d({s})/dt = {format_expr(system.rhs[s])};")
    lines.append("init " + " ".join(f"{s}={_fmt_number(system.initial[s])}" for s in system.states) + ";")
    lines.append(f"domain {_fmt_number(system.t0)} {_fmt_number(system.t1)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()=;])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


@dataclass(frozen=True)
class _Name(Expr):
    # unresolved identifier; replaced once every declaration has been seen
    name: str
    line: int = field(compare=False)
    col: int = field(compare=False)


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise DSLError([(line, pos - line_start + 1, f"unexpected character {src[pos]!r}")])
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, src):
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def peek(self, k=1):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def fail(self, msg, tok=None):
        tok = tok or self.tok
        raise DSLError([(tok.line, tok.col, msg)])

    def advance(self):
        tok = self.tok
        self.i += 1
        return tok

    def at(self, text):
        return self.tok.kind in ("op", "ident") and self.tok.text == text

    def expect(self, text):
        if not self.at(text):
            found = self.tok.text or "end of input"
            self.fail(f"expected {text!r}, found {found!r}")
        return self.advance()

    def ident(self):
        if self.tok.kind != "ident":
            self.fail(f"expected identifier, found {self.tok.text or 'end of input'!r}")
        return self.advance()

    def signed_number(self):
        sign = 1.0
        if self.at("-") or self.at("+"):
            sign = -1.0 if self.advance().text == "-" else 1.0
        if self.tok.kind != "number":
            self.fail(f"expected number, found {self.tok.text or 'end of input'!r}")
        return sign * float(self.advance().text)

    # expressions ---------------------------------------------------------

    def expr(self):
        node = self.term()
        while self.at("+") or self.at("-"):
            op = self.advance().text
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.power()
        while self.at("*") or self.at("/"):
            op = self.advance().text
            rhs = self.power()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def power(self):
        base = self.unary()
        if self.at("^"):
            tok = self.advance()
            exponent = _fold_constant(self.power())
            if exponent is None:
                self.fail("exponent must be a constant expression", tok)
            return Pow(base, exponent)
        return base

    def unary(self):
        if self.at("-"):
            self.advance()
            if self.tok.kind == "number":
                return Constant(-float(self.advance().text))
            return Neg(self.unary())
        if self.at("+"):
            self.advance()
            return self.unary()
        return self.atom()

    def atom(self):
        tok = self.tok
        if tok.kind == "number":
            self.advance()
            return Constant(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            if tok.text in _FUNC_NODES and self.at("("):
                self.advance()
                arg = self.expr()
                self.expect(")")
                return _FUNC_NODES[tok.text](arg)
            return _Name(tok.text, tok.line, tok.col)
        if self.at("("):
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        self.fail(f"unexpected {tok.text or 'end of input'!r} in expression")

    # statements ----------------------------------------------------------

    def assignments(self):
        out = []
        while self.tok.kind == "ident":
            name = self.advance()
            self.expect("=")
            out.append((name, self.signed_number()))
        self.expect(";")
        if not out:
            self.fail("expected at least one name=value pair", self.toks[self.i - 1])
        return out


def _fold_constant(e):
    # exponent expressions may be written as e.g. (1/2); reduce them to one Constant
    if isinstance(e, Constant):
        return e
    if isinstance(e, Neg):
        inner = _fold_constant(e.arg)
        return None if inner is None else Constant(-inner.value)
    if isinstance(e, (Binary, Pow)):
        parts = (e.left, e.right) if isinstance(e, Binary) else (e.base, e.exponent)
        a, b = map(_fold_constant, parts)
        if a is None or b is None:
            return None
        try:
            value = _walk(type(e)(a, b), None, _MATH)
        except (ZeroDivisionError, OverflowError, ValueError):
            return None
        return Constant(value) if isinstance(value, float) else None
    return None


def parse_expr(text: str, states: Sequence[str] = (), params: Sequence[str] = ()) -> Expr:
    """Parse a single expression, resolving names against ``states``/``params``."""
    p = _Parser(text)
    node = p.expr()
    if p.tok.kind != "eof":
        p.fail(f"unexpected {p.tok.text!r} after expression")
    problems: list = []
    node = _resolve(node, set(states), set(params), problems)
    if problems:
        raise DSLError(problems)
    return node


def _resolve(e, states, params, problems):
    if isinstance(e, _Name):
        if e.name in states:
            return StateVar(e.name)
        if e.name in params:
            return Param(e.name)
        if e.name == "t":
            return Time()
        problems.append((e.line, e.col, f"undefined identifier {e.name!r}"))
        return e
    if isinstance(e, Unary):
        return type(e)(_resolve(e.arg, states, params, problems))
    if isinstance(e, Binary):
        return type(e)(_resolve(e.left, states, params, problems), _resolve(e.right, states, params, problems))
    if isinstance(e, Pow):
        return Pow(_resolve(e.base, states, params, problems), e.exponent)
    return e


_RESERVED = set(FUNCTIONS) | {"t"}


def parse_system(source: str, name: str = "") -> OdeSystem:
    """Parse system text into an `OdeSystem`.

    Syntax errors stop at the first offending token.  Semantic problems
    (undefined names, duplicates, missing initial conditions) are collected
    and raised together in one `DSLError`.
    """
    p = _Parser(source)
    params: dict[str, float] = {}
    rhs: dict[str, Expr] = {}
    initial: dict[str, float] = {}
    init_toks: dict[str, _Tok] = {}
    domain = None
    problems: list = []

    while p.tok.kind != "eof":
        tok = p.tok
        if p.at("param"):
            p.advance()
            for name, value in p.assignments():
                if name.text in params:
                    problems.append((name.line, name.col, f"duplicate parameter {name.text!r}"))
                elif name.text in _RESERVED:
                    problems.append((name.line, name.col, f"reserved name {name.text!r}"))
                params[name.text] = value
        elif p.at("init"):
            p.advance()
            for name, value in p.assignments():
                if name.text in initial:
                    problems.append((name.line, name.col, f"duplicate initial condition for {name.text!r}"))
                initial[name.text] = value
                init_toks[name.text] = name
        elif p.at("domain"):
            p.advance()
            if domain is not None:
                problems.append((tok.line, tok.col, "duplicate domain declaration"))
            domain = (p.signed_number(), p.signed_number(), tok)
            if p.at(";"):
                p.advance()
        elif p.at("d") and p.peek().text == "(":
            p.advance()
            p.expect("(")
            var = p.ident()
            p.expect(")")
            p.expect("/")
            if not p.at("dt"):
                p.fail("expected 'dt'")
            p.advance()
            p.expect("=")
            body = p.expr()
            p.expect(";")
            if var.text in rhs:
                problems.append((var.line, var.col, f"duplicate equation for {var.text!r}"))
            elif var.text in _RESERVED:
                problems.append((var.line, var.col, f"reserved name {var.text!r}"))
            rhs.setdefault(var.text, body)
        else:
            p.fail(f"expected 'param', 'init', 'domain' or an equation, found {tok.text!r}")

    end = p.tok
    states = tuple(rhs)
    if not states:
        problems.append((end.line, end.col, "no equations"))
    resolved = {s: _resolve(e, set(states), set(params), problems) for s, e in rhs.items()}
    for s in states:
        if s in params:
            problems.append((end.line, end.col, f"{s!r} is both a state variable and a parameter"))
        if s not in initial:
            problems.append((end.line, end.col, f"missing initial condition for {s!r}"))
    for s, tok in init_toks.items():
        if s not in rhs:
            problems.append((tok.line, tok.col, f"initial condition for unknown variable {s!r}"))
    if domain is None:
        problems.append((end.line, end.col, "missing domain declaration"))
    elif not domain[1] > domain[0]:
        problems.append((domain[2].line, domain[2].col, f"domain end {domain[1]} must exceed start {domain[0]}"))
    if problems:
        problems.sort(key=lambda x: (x[0], x[1]))
        raise DSLError(problems)
    return OdeSystem(states, params, resolved, {s: initial[s] for s in states}, domain[0], domain[1], name=name)
