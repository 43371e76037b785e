"""Graded exterior algebra over a chart.

Forms and multivectors are sparse maps from strictly increasing index
tuples (positions in the chart's coordinate list) to expression
coefficients.  Absent indices mean zero; a repeated index canonicalizes to
the zero element.

The interior product follows the leading-slot convention: a decomposable
r-vector X = X_1 ^ ... ^ X_r fills the *first* r argument slots of a form,
(X . a)(V, ...) = a(X_1, ..., X_r, V, ...).  For a 1-vector this is the
usual interior product; the alternating signs of the Hamilton-equation
contractions come out of this convention rather than being inserted by
hand.
"""

from __future__ import annotations

from itertools import combinations

from . import expr as ex
from .expr import Expression, as_expr

__all__ = [
    "Form", "Multivector", "VectorField",
    "canonicalize", "merge_indices", "wedge", "contract",
    "exterior_derivative", "lie_derivative", "wedge_vectors",
]


def canonicalize(idx):
    """Sort an index tuple; return (sorted tuple, permutation sign) or None
    when an index repeats (the zero element)."""
    idx = tuple(idx)
    if len(set(idx)) != len(idx):
        return None
    order = sorted(range(len(idx)), key=idx.__getitem__)
    sign = _perm_sign(order)
    return tuple(idx[i] for i in order), sign


def _perm_sign(order):
    seen = [False] * len(order)
    sign = 1
    for i in range(len(order)):
        if seen[i]:
            continue
        j, cycle = i, 0
        while not seen[j]:
            seen[j] = True
            j = order[j]
            cycle += 1
        if cycle % 2 == 0:
            sign = -sign
    return sign


def merge_indices(I, J):
    """Merge two canonical tuples; returns (tuple, interleave sign) or None
    on overlap."""
    if not I:
        return J, 1
    if not J:
        return I, 1
    if set(I) & set(J):
        return None
    inversions = 0
    for s in I:
        for t in J:
            if s > t:
                inversions += 1
    merged = tuple(sorted(I + J))
    return merged, (-1) ** inversions


def _shuffle_sign(positions):
    # sign of moving the chosen positions of a tuple to its front, in order
    return (-1) ** sum(p - j for j, p in enumerate(positions))


class _Graded:
    """Shared sparse-coefficient machinery for forms and multivectors."""

    __slots__ = ("chart", "degree", "coeffs")

    def __init__(self, chart, degree, coeffs=None, normalized=False):
        self.chart = chart
        self.degree = int(degree)
        if self.degree < 0:
            raise ValueError("negative degree")
        table = {}
        if coeffs and self.degree <= chart.dim:
            if normalized:
                table = {k: v for k, v in coeffs.items() if not v.is_zero()}
            else:
                for idx, c in coeffs.items():
                    c = as_expr(c)
                    if c.is_zero():
                        continue
                    canon = canonicalize(idx)
                    if canon is None:
                        continue
                    key, sign = canon
                    if len(key) != self.degree:
                        raise ValueError(f"index {idx} has wrong length for degree {self.degree}")
                    prev = table.get(key)
                    term = c if sign > 0 else -c
                    table[key] = term if prev is None else prev + term
                table = {k: v for k, v in table.items() if not v.is_zero()}
        self.coeffs = table

    def _new(self, degree, coeffs, normalized=False):
        return type(self)(self.chart, degree, coeffs, normalized=normalized)

    def is_zero(self) -> bool:
        return not self.coeffs

    def get(self, idx) -> Expression:
        canon = canonicalize(idx)
        if canon is None:
            return ex.ZERO
        key, sign = canon
        c = self.coeffs.get(key, ex.ZERO)
        return c if sign > 0 else -c

    def __add__(self, other):
        self._check(other)
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out[k] + v if k in out else v
        return self._new(self.degree, out)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return self._new(self.degree, {k: -v for k, v in self.coeffs.items()}, normalized=True)

    def scale(self, factor):
        factor = as_expr(factor)
        if factor.is_zero():
            return self._new(self.degree, {})
        return self._new(self.degree, {k: factor * v for k, v in self.coeffs.items()})

    def __mul__(self, factor):
        return self.scale(factor)

    def __rmul__(self, factor):
        return self.scale(factor)

    def _check(self, other):
        if self.chart is not other.chart:
            raise ValueError("chart mismatch")
        if self.degree != other.degree:
            raise ValueError("degree mismatch")

    def wedge(self, other):
        if self.chart is not other.chart:
            raise ValueError("chart mismatch")
        out = {}
        for I, a in self.coeffs.items():
            for J, b in other.coeffs.items():
                m = merge_indices(I, J)
                if m is None:
                    continue
                key, sign = m
                term = a * b if sign > 0 else -(a * b)
                out[key] = out[key] + term if key in out else term
        return self._new(self.degree + other.degree, out)

    def at(self, env):
        """Evaluate all coefficients; returns {index tuple: float}."""
        return {k: v.evaluate(env) for k, v in self.coeffs.items()}

    def max_abs_at(self, env) -> float:
        m = 0.0
        for v in self.coeffs.values():
            m = max(m, abs(float(v.evaluate(env))))
        return m

    def terms(self):
        for k in sorted(self.coeffs):
            yield k, self.coeffs[k]

    def map_coeffs(self, fn):
        return self._new(self.degree, {k: fn(v) for k, v in self.coeffs.items()})

    def __repr__(self):
        names = self.chart.names
        rows = ", ".join(
            f"{'^'.join(names[i] for i in k) or '1'}: {v}" for k, v in self.terms())
        return f"<{type(self).__name__} deg {self.degree} [{rows}]>"


class Form(_Graded):
    """Degree-p antisymmetric covariant tensor with expression coefficients."""

    __slots__ = ()

    def d(self) -> "Form":
        return exterior_derivative(self)

    def contract(self, X) -> "Form":
        return contract(X, self)

    def debug_rows(self):
        """Stable (index names, printed coefficient) rows for golden files."""
        names = self.chart.names
        return [("^".join(names[i] for i in k), str(v)) for k, v in self.terms()]


class Multivector(_Graded):
    """Degree-r antisymmetric contravariant tensor."""

    __slots__ = ()


class VectorField:
    """Sparse vector field; component map from coordinate position to
    expression."""

    __slots__ = ("chart", "components")

    def __init__(self, chart, components):
        self.chart = chart
        table = {}
        for i, c in components.items():
            c = as_expr(c)
            if not c.is_zero():
                table[int(i)] = c
        self.components = table

    @classmethod
    def coordinate(cls, chart, name):
        return cls(chart, {chart.index(name): ex.ONE})

    def component(self, i) -> Expression:
        return self.components.get(i, ex.ZERO)

    def as_multivector(self) -> Multivector:
        return Multivector(self.chart, 1, {(i,): c for i, c in self.components.items()},
                           normalized=True)

    def __add__(self, other):
        out = dict(self.components)
        for i, c in other.components.items():
            out[i] = out[i] + c if i in out else c
        return VectorField(self.chart, out)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return VectorField(self.chart, {i: -c for i, c in self.components.items()})

    def scale(self, factor):
        factor = as_expr(factor)
        return VectorField(self.chart, {i: factor * c for i, c in self.components.items()})

    __mul__ = scale
    __rmul__ = scale

    def at(self, env):
        return {i: float(c.evaluate(env)) for i, c in self.components.items()}

    def apply(self, f: Expression) -> Expression:
        """Directional derivative of a scalar expression."""
        names = self.chart.names
        out = ex.ZERO
        for i, c in self.components.items():
            out = out + c * f.diff(names[i])
        return out

    def lie_bracket(self, other: "VectorField") -> "VectorField":
        names = self.chart.names
        out = {}
        touched = set(self.components) | set(other.components)
        for m in touched:
            term = self.apply(other.component(m)) - other.apply(self.component(m))
            if not term.is_zero():
                out[m] = term
        return VectorField(self.chart, out)

    def __repr__(self):
        names = self.chart.names
        rows = ", ".join(f"d/d{names[i]}: {c}" for i, c in sorted(self.components.items()))
        return f"<vector [{rows}]>"


def wedge(a, b):
    return a.wedge(b)


def wedge_vectors(fields) -> Multivector:
    fields = list(fields)
    if not fields:
        raise ValueError("empty wedge")
    out = fields[0].as_multivector()
    for f in fields[1:]:
        out = out.wedge(f.as_multivector())
    return out


def contract(X, a: Form) -> Form:
    """Interior product X . a with X filling the leading argument slots."""
    if isinstance(X, VectorField):
        X = X.as_multivector()
    if X.chart is not a.chart:
        raise ValueError("chart mismatch")
    r, p = X.degree, a.degree
    if r > p:
        raise ValueError(f"cannot contract degree {r} multivector into degree {p} form")
    out = {}
    for K, c in a.coeffs.items():
        for positions in combinations(range(p), r):
            I = tuple(K[j] for j in positions)
            xc = X.coeffs.get(I)
            if xc is None:
                continue
            J = tuple(K[j] for j in range(p) if j not in positions)
            sign = _shuffle_sign(positions)
            term = xc * c if sign > 0 else -(xc * c)
            out[J] = out[J] + term if J in out else term
    return Form(a.chart, p - r, out)


def exterior_derivative(a: Form) -> Form:
    names = a.chart.names
    out = {}
    for K, c in a.coeffs.items():
        kset = set(K)
        for m, name in enumerate(names):
            if m in kset:
                continue
            dc = c.diff(name)
            if dc.is_zero():
                continue
            merged = merge_indices((m,), K)
            key, sign = merged
            term = dc if sign > 0 else -dc
            out[key] = out[key] + term if key in out else term
    return Form(a.chart, a.degree + 1, out)


def lie_derivative(xi: VectorField, a: Form) -> Form:
    """Cartan's formula L_xi = d(xi . a) + xi . (d a)."""
    if a.degree == 0:
        return contract(xi, exterior_derivative(a))
    return exterior_derivative(contract(xi, a)) + contract(xi, exterior_derivative(a))
