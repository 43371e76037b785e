"""Symbolic scalar expressions over chart coordinates.

Every coefficient in this package (form components, Lagrangians, metrics,
potentials) is an expression tree built from numeric constants, named
symbols, the four arithmetic operations, integer powers and the primitives
sin, cos, exp, log, sqrt.  Trees are immutable, exactly differentiable and
evaluate pointwise on floats or numpy arrays.

Quantities without a closed form (e.g. a matrix inverse that is only
available numerically) enter as :class:`OpaqueJet` leaves: black boxes that
report a value and, up to a declared order, exact partial derivatives.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Expression", "Const", "Sym", "OpaqueJet", "FunctionJet", "opaque",
    "as_expr", "parse", "ZERO", "ONE",
    "ExprError", "ParseError", "UnknownSymbolError", "EvalDomainError",
    "UnboundSymbolError", "JetOrderError",
]

_PRIMITIVES = ("sin", "cos", "exp", "log", "sqrt")


class ExprError(Exception):
    pass


class ParseError(ExprError):
    """Syntax error; ``column`` is the 1-based position in the source."""

    def __init__(self, message, column):
        super().__init__(f"{message} (column {column})")
        self.column = column


class UnknownSymbolError(ParseError):
    def __init__(self, name, column):
        ParseError.__init__(self, f"unknown symbol '{name}'", column)
        self.name = name


class EvalDomainError(ExprError):
    pass


class UnboundSymbolError(ExprError):
    pass


class JetOrderError(ExprError):
    pass


def as_expr(value) -> "Expression":
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, float, np.integer, np.floating)):
        return Const(float(value))
    raise TypeError(f"cannot interpret {value!r} as an expression")


class Expression:
    """Base class; construction goes through the folding helpers below."""

    __slots__ = ("_free",)

    def free_symbols(self) -> frozenset:
        raise NotImplementedError

    def evaluate(self, env):
        """Evaluate at a point.  ``env`` maps symbol names to floats or
        equally-shaped numpy arrays."""
        raise NotImplementedError

    def diff(self, name: str) -> "Expression":
        raise NotImplementedError

    def substitute(self, mapping) -> "Expression":
        """Replace symbols by expressions (simultaneously)."""
        raise NotImplementedError

    def is_zero(self) -> bool:
        return isinstance(self, Const) and self.value == 0.0

    def is_const(self, value=None) -> bool:
        if not isinstance(self, Const):
            return False
        return True if value is None else self.value == value

    # arithmetic sugar
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, k):
        return pow_int(self, k)

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_source(self)

    def __repr__(self):
        return f"<expr {to_source(self)}>"


class Const(Expression):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = float(value)

    def free_symbols(self):
        return frozenset()

    def evaluate(self, env):
        return self.value

    def diff(self, name):
        return ZERO

    def substitute(self, mapping):
        return self


class Sym(Expression):
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name

    def free_symbols(self):
        return frozenset((self.name,))

    def evaluate(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise UnboundSymbolError(f"no value bound for symbol '{self.name}'") from None

    def diff(self, name):
        return ONE if name == self.name else ZERO

    def substitute(self, mapping):
        return mapping.get(self.name, self)


class _Binary(Expression):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a = a
        self.b = b

    def free_symbols(self):
        return self.a.free_symbols() | self.b.free_symbols()


class Add(_Binary):
    __slots__ = ()

    def evaluate(self, env):
        return self.a.evaluate(env) + self.b.evaluate(env)

    def diff(self, name):
        return add(self.a.diff(name), self.b.diff(name))

    def substitute(self, mapping):
        return add(self.a.substitute(mapping), self.b.substitute(mapping))


class Sub(_Binary):
    __slots__ = ()

    def evaluate(self, env):
        return self.a.evaluate(env) - self.b.evaluate(env)

    def diff(self, name):
        return sub(self.a.diff(name), self.b.diff(name))

    def substitute(self, mapping):
        return sub(self.a.substitute(mapping), self.b.substitute(mapping))


class Mul(_Binary):
    __slots__ = ()

    def evaluate(self, env):
        return self.a.evaluate(env) * self.b.evaluate(env)

    def diff(self, name):
        return add(mul(self.a.diff(name), self.b), mul(self.a, self.b.diff(name)))

    def substitute(self, mapping):
        return mul(self.a.substitute(mapping), self.b.substitute(mapping))


class Div(_Binary):
    __slots__ = ()

    def evaluate(self, env):
        den = self.b.evaluate(env)
        if np.any(den == 0.0):
            raise EvalDomainError(f"division by zero in {to_source(self)}")
        return self.a.evaluate(env) / den

    def diff(self, name):
        # (a/b)' = a'/b - a b'/b^2
        da, db = self.a.diff(name), self.b.diff(name)
        return sub(div(da, self.b), div(mul(self.a, db), mul(self.b, self.b)))

    def substitute(self, mapping):
        return div(self.a.substitute(mapping), self.b.substitute(mapping))


class Pow(Expression):
    __slots__ = ("base", "k")

    def __init__(self, base, k):
        self.base = base
        self.k = int(k)

    def free_symbols(self):
        return self.base.free_symbols()

    def evaluate(self, env):
        b = self.base.evaluate(env)
        if self.k < 0 and np.any(b == 0.0):
            raise EvalDomainError(f"zero base with negative power in {to_source(self)}")
        return b ** self.k

    def diff(self, name):
        db = self.base.diff(name)
        return mul(mul(Const(self.k), pow_int(self.base, self.k - 1)), db)

    def substitute(self, mapping):
        return pow_int(self.base.substitute(mapping), self.k)


class Neg(Expression):
    __slots__ = ("a",)

    def __init__(self, a):
        self.a = a

    def free_symbols(self):
        return self.a.free_symbols()

    def evaluate(self, env):
        return -self.a.evaluate(env)

    def diff(self, name):
        return neg(self.a.diff(name))

    def substitute(self, mapping):
        return neg(self.a.substitute(mapping))


class Call(Expression):
    __slots__ = ("fn", "a")

    def __init__(self, fn, a):
        self.fn = fn
        self.a = a

    def free_symbols(self):
        return self.a.free_symbols()

    def evaluate(self, env):
        x = self.a.evaluate(env)
        if self.fn == "sin":
            return np.sin(x)
        if self.fn == "cos":
            return np.cos(x)
        if self.fn == "exp":
            return np.exp(x)
        if self.fn == "log":
            if np.any(x <= 0.0):
                raise EvalDomainError(f"log of non-positive value in {to_source(self)}")
            return np.log(x)
        if self.fn == "sqrt":
            if np.any(x < 0.0):
                raise EvalDomainError(f"sqrt of negative value in {to_source(self)}")
            return np.sqrt(x)
        raise ExprError(f"unknown primitive {self.fn}")

    def diff(self, name):
        da = self.a.diff(name)
        if self.fn == "sin":
            outer = Call("cos", self.a)
        elif self.fn == "cos":
            outer = neg(Call("sin", self.a))
        elif self.fn == "exp":
            outer = self
        elif self.fn == "log":
            return div(da, self.a)
        elif self.fn == "sqrt":
            return div(da, mul(Const(2.0), self))
        else:
            raise ExprError(f"unknown primitive {self.fn}")
        return mul(outer, da)

    def substitute(self, mapping):
        return Call(self.fn, self.a.substitute(mapping))


class Opaque(Expression):
    """Leaf wrapping an :class:`OpaqueJet`; differentiation delegates to the
    jet's exact partials."""

    __slots__ = ("jet",)

    def __init__(self, jet):
        self.jet = jet

    def free_symbols(self):
        return frozenset(self.jet.symbols)

    def evaluate(self, env):
        return self.jet.value(env)

    def diff(self, name):
        if name not in self.jet.symbols:
            return ZERO
        return Opaque(self.jet.partial(name))

    def substitute(self, mapping):
        hit = set(mapping) & set(self.jet.symbols)
        if hit:
            raise ExprError(f"cannot substitute {sorted(hit)} inside opaque '{self.jet.name}'")
        return self


ZERO = Const(0.0)
ONE = Const(1.0)


# ---------------------------------------------------------------------------
# folding constructors: constant folding plus 0/1 elimination, nothing more

def add(a, b):
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Add(a, b)


def sub(a, b):
    if b.is_zero():
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if a.is_zero():
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    if a.is_zero() or b.is_zero():
        return ZERO
    if a.is_const(1.0):
        return b
    if b.is_const(1.0):
        return a
    if a.is_const(-1.0):
        return neg(b)
    if b.is_const(-1.0):
        return neg(a)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Mul(a, b)


def div(a, b):
    if b.is_const(1.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        if b.value == 0.0:
            raise EvalDomainError("constant division by zero")
        return Const(a.value / b.value)
    return Div(a, b)


def pow_int(base, k):
    k = int(k)
    if k == 0:
        return ONE
    if k == 1:
        return base
    if isinstance(base, Const):
        if base.value == 0.0 and k < 0:
            raise EvalDomainError("zero base with negative power")
        return Const(base.value ** k)
    return Pow(base, k)


def neg(a):
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def sin(a):
    return _call("sin", a)


def cos(a):
    return _call("cos", a)


def exp(a):
    return _call("exp", a)


def log(a):
    return _call("log", a)


def sqrt(a):
    return _call("sqrt", a)


def _call(fn, a):
    a = as_expr(a)
    if isinstance(a, Const):
        return Const(Call(fn, a).evaluate({}))
    return Call(fn, a)


def opaque(jet) -> Expression:
    return Opaque(jet)


# ---------------------------------------------------------------------------
# opaque jets

class OpaqueJet:
    """Evaluation contract for coefficients with no closed form.

    ``value(env)`` returns a float; ``partial(name)`` returns another jet for
    the exact partial derivative.  ``order`` is the number of derivative
    levels still available; reaching 0 makes further differentiation an
    error.
    """

    name = "jet"
    order = 1
    symbols = ()

    def value(self, env):
        raise NotImplementedError

    def partial(self, name) -> "OpaqueJet":
        raise NotImplementedError


class FunctionJet(OpaqueJet):
    def __init__(self, name, symbols, value_fn, partial_factory=None, order=1):
        self.name = name
        self.symbols = tuple(symbols)
        self._value_fn = value_fn
        self._partial_factory = partial_factory
        self.order = order

    def value(self, env):
        return self._value_fn(env)

    def partial(self, name):
        if self.order < 1 or self._partial_factory is None:
            raise JetOrderError(f"jet '{self.name}' has no derivative left for '{name}'")
        return self._partial_factory(name)


def jet_gradient_check(jet, points, rel_tol=1e-6, h=1e-6):
    """Self-test: jet partials against central differences of the value.

    Returns the worst relative error over all points and symbols.
    """
    worst = 0.0
    for pt in points:
        for name in jet.symbols:
            up = dict(pt)
            dn = dict(pt)
            up[name] = pt[name] + h
            dn[name] = pt[name] - h
            fd = (jet.value(up) - jet.value(dn)) / (2 * h)
            an = jet.partial(name).value(pt)
            scale = max(1.0, abs(fd), abs(an))
            worst = max(worst, abs(fd - an) / scale)
    return worst


# ---------------------------------------------------------------------------
# printing

_ATOMS = (Const, Sym, Call, Opaque)


def to_source(e) -> str:
    """Render an expression; ``parse(to_source(e))`` evaluates identically."""
    if isinstance(e, Const):
        v = e.value
        if v == int(v) and abs(v) < 1e16:
            s = str(int(v))
        else:
            s = repr(v)
        return s if v >= 0 else f"({s})"
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Opaque):
        return f"<{e.jet.name}>"
    if isinstance(e, Call):
        return f"{e.fn}({to_source(e.a)})"
    if isinstance(e, Neg):
        return f"-({to_source(e.a)})"
    if isinstance(e, Add):
        return f"{to_source(e.a)} + {_wrap(e.b, (Add, Sub))}"
    if isinstance(e, Sub):
        return f"{to_source(e.a)} - {_wrap(e.b, (Add, Sub))}"
    if isinstance(e, Mul):
        return f"{_wrap(e.a, (Add, Sub, Neg))}*{_wrap(e.b, (Add, Sub, Neg, Mul, Div))}"
    if isinstance(e, Div):
        return f"{_wrap(e.a, (Add, Sub, Neg))}/{_wrap(e.b, (Add, Sub, Neg, Mul, Div))}"
    if isinstance(e, Pow):
        base = to_source(e.base) if isinstance(e.base, _ATOMS) else f"({to_source(e.base)})"
        if e.k < 0:
            return f"(1/{base}^{-e.k})"
        return f"{base}^{e.k}"
    raise ExprError(f"unprintable node {type(e).__name__}")


def _wrap(e, kinds):
    s = to_source(e)
    return f"({s})" if isinstance(e, kinds) else s


# ---------------------------------------------------------------------------
# parsing
#
#   expr   := term (('+'|'-') term)*
#   term   := factor (('*'|'/') factor)*
#   factor := base ('^' integer)?
#   base   := number | symbol | primitive '(' expr ')' | '(' expr ')' | '-' base

class _Token:
    __slots__ = ("kind", "text", "col")

    def __init__(self, kind, text, col):
        self.kind = kind
        self.text = text
        self.col = col


def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        col = i + 1
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^()":
            tokens.append(_Token(c, c, col))
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            seen_dot = False
            while j < n and (text[j].isdigit() or (text[j] == "." and not seen_dot)):
                seen_dot = seen_dot or text[j] == "."
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            if j < n and (text[j].isalpha() or text[j] == "_"):
                raise ParseError(f"malformed number '{text[i:j + 1]}'", col)
            tokens.append(_Token("num", text[i:j], col))
            i = j
            continue
        if c.isalpha():
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("name", text[i:j], col))
            i = j
            continue
        raise ParseError(f"unexpected character '{c}'", col)
    tokens.append(_Token("end", "", n + 1))
    return tokens


class _Parser:
    def __init__(self, tokens, symbols):
        self.tokens = tokens
        self.pos = 0
        self.symbols = symbols

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind=None):
        tok = self.tokens[self.pos]
        if kind is not None and tok.kind != kind:
            raise ParseError(f"expected {kind!r}, found {tok.text!r}" if tok.kind != "end"
                             else f"unexpected end of input", tok.col)
        self.pos += 1
        return tok

    def parse(self):
        e = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"trailing input {tok.text!r}", tok.col)
        return e

    def expr(self):
        e = self.term()
        while self.peek().kind in ("+", "-"):
            op = self.take().kind
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.factor()
        while self.peek().kind in ("*", "/"):
            op = self.take().kind
            rhs = self.factor()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def factor(self):
        e = self.base()
        if self.peek().kind == "^":
            self.take()
            tok = self.take("num")
            if "." in tok.text or "e" in tok.text or "E" in tok.text:
                raise ParseError("exponent must be an integer", tok.col)
            e = pow_int(e, int(tok.text))
        return e

    def base(self):
        tok = self.peek()
        if tok.kind == "-":
            self.take()
            return neg(self.base())
        if tok.kind == "num":
            self.take()
            return Const(float(tok.text))
        if tok.kind == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        if tok.kind == "name":
            self.take()
            if tok.text in _PRIMITIVES:
                self.take("(")
                e = self.expr()
                self.take(")")
                return Call(tok.text, e)
            if self.symbols is not None and tok.text not in self.symbols:
                raise UnknownSymbolError(tok.text, tok.col)
            return Sym(tok.text)
        if tok.kind == "end":
            raise ParseError("unexpected end of input", tok.col)
        raise ParseError(f"unexpected token {tok.text!r}", tok.col)


def parse(text: str, symbols=None) -> Expression:
    """Parse an expression.  ``symbols``, if given, is the set of admissible
    symbol names (unknown names are rejected with their column)."""
    return _Parser(_tokenize(text), symbols).parse()
