"""Legendre correspondence between velocity data and graded momenta.

The correspondence is generated by W(q, v, p) = <p, v> - L(q, v): a triple
(q, v, w) corresponds to (q, p) when W = w and the v-gradient of W
vanishes.  ``legendre_solve`` inverts the second relation by Newton
iteration on the chart's momentum region where the velocity Hessian is
nonsingular; ``weyl_legendre`` is the closed-form forward map onto the
single-fiber momenta.

The pairing <p, v> is taken per unit of the chart's volume form: momenta
are the coefficients of the weighted wedge blocks, so on a flat chart it
is the plain covector evaluation and on a weighted chart it matches the
covariant conventions of the example systems.

The Hamiltonian H(q, p) = W(q, V(q, p), p) differentiates through the
envelope identities: the critical-point condition kills the dV terms, so
dH needs only the explicit q-derivative of L and the velocity minors.  No
derivative of the iterative solve is ever taken.
"""

from __future__ import annotations

import logging

import numpy as np

from . import expr as ex
from .expr import EvalDomainError, Expression, OpaqueJet, as_expr

__all__ = [
    "Lagrangian", "LegendreError", "SingularHessian", "NoConvergence",
    "ConstraintViolation", "velocity_name", "pairing", "generating_w",
    "legendre_solve", "weyl_legendre", "EnvelopeHamiltonian",
    "hamiltonian_from_legendre", "hamiltonian_tensor", "stress_energy",
]

log = logging.getLogger("polyfield.legendre")


class LegendreError(Exception):
    pass


class SingularHessian(LegendreError):
    pass


class NoConvergence(LegendreError):
    pass


class ConstraintViolation(LegendreError):
    pass


def velocity_name(chart, alpha: int, i: int) -> str:
    """Symbol for the velocity of fiber i along base slot alpha."""
    return f"v{alpha}" if chart.k == 1 else f"v{alpha}_{i}"


class Lagrangian:
    """Scalar L(x, y, v) over the chart's configuration coordinates plus
    velocity symbols; the expression may contain opaque-jet leaves."""

    def __init__(self, chart, expression: Expression):
        self.chart = chart
        self.expression = as_expr(expression)
        self.v_names = tuple(
            tuple(velocity_name(chart, a, i) for a in range(1, chart.n + 1))
            for i in range(1, chart.k + 1))
        allowed = set(chart.base_names) | set(chart.fiber_names)
        allowed |= {nm for row in self.v_names for nm in row}
        unknown = self.expression.free_symbols() - allowed
        if unknown:
            raise ValueError(f"Lagrangian uses non-configuration symbols {sorted(unknown)}")
        self._dv = {}
        self._dq = {}
        self._d2v = {}

    @classmethod
    def parse(cls, chart, text: str) -> "Lagrangian":
        v_syms = {velocity_name(chart, a, i)
                  for a in range(1, chart.n + 1) for i in range(1, chart.k + 1)}
        return cls(chart, chart.parse(text, extra_symbols=v_syms))

    def _env(self, pt, v):
        env = dict(pt)
        for i in range(self.chart.k):
            for a in range(self.chart.n):
                env[self.v_names[i][a]] = float(v[i, a])
        return env

    def value(self, pt, v) -> float:
        return float(self.expression.evaluate(self._env(pt, v)))

    def dv_expr(self, i: int, a: int) -> Expression:
        key = (i, a)
        if key not in self._dv:
            self._dv[key] = self.expression.diff(self.v_names[i - 1][a - 1])
        return self._dv[key]

    def dq_expr(self, name: str) -> Expression:
        if name not in self._dq:
            self._dq[name] = self.expression.diff(name)
        return self._dq[name]

    def dv(self, pt, v) -> np.ndarray:
        env = self._env(pt, v)
        k, n = self.chart.k, self.chart.n
        out = np.empty((k, n))
        for i in range(1, k + 1):
            for a in range(1, n + 1):
                out[i - 1, a - 1] = float(self.dv_expr(i, a).evaluate(env))
        return out

    def d2v(self, pt, v) -> np.ndarray:
        """Velocity Hessian, flattened over (i, a) pairs."""
        env = self._env(pt, v)
        k, n = self.chart.k, self.chart.n
        out = np.empty((k * n, k * n))
        for i in range(1, k + 1):
            for a in range(1, n + 1):
                for j in range(1, k + 1):
                    for b in range(1, n + 1):
                        key = (i, a, j, b)
                        if key not in self._d2v:
                            self._d2v[key] = self.dv_expr(i, a).diff(self.v_names[j - 1][b - 1])
                        out[(i - 1) * n + a - 1, (j - 1) * n + b - 1] = \
                            float(self._d2v[key].evaluate(env))
        return out


def _z_matrix(chart, v) -> np.ndarray:
    """Columns are the tangent frame z_a = d/dx^a + v^i_a d/dy^i."""
    z = np.zeros((chart.n + chart.k, chart.n))
    z[:chart.n, :] = np.eye(chart.n)
    z[chart.n:, :] = v
    return z


def _pairing_from_z(chart, pt, z) -> float:
    total = 0.0
    for I, coord, sign in chart.canonical_momenta():
        pc = pt[chart.names[coord]]
        if pc == 0.0:
            continue
        total += sign * pc * float(np.linalg.det(z[list(I), :]))
    return total


def pairing(chart, pt, v) -> float:
    """<p, v>: momenta paired with the decomposable n-vector of the velocity."""
    v = np.asarray(v, dtype=float).reshape(chart.k, chart.n)
    return _pairing_from_z(chart, pt, _z_matrix(chart, v))


def _pairing_column_replaced(chart, pt, z, replacements) -> float:
    """Pairing with frame columns replaced by coordinate directions;
    ``replacements`` maps 1-based column a -> configuration position."""
    zz = z.copy()
    for a, pos in replacements.items():
        zz[:, a - 1] = 0.0
        zz[pos, a - 1] = 1.0
    return _pairing_from_z(chart, pt, zz)


def pairing_dv(chart, pt, v) -> np.ndarray:
    """Gradient of the pairing in the velocities: slot a replaced by the
    fiber-i coordinate direction."""
    z = _z_matrix(chart, v)
    out = np.empty((chart.k, chart.n))
    for i in range(1, chart.k + 1):
        for a in range(1, chart.n + 1):
            out[i - 1, a - 1] = _pairing_column_replaced(
                chart, pt, z, {a: chart.n + i - 1})
    return out


def pairing_d2v(chart, pt, v) -> np.ndarray:
    z = _z_matrix(chart, v)
    k, n = chart.k, chart.n
    out = np.zeros((k * n, k * n))
    for i in range(1, k + 1):
        for a in range(1, n + 1):
            for j in range(1, k + 1):
                for b in range(1, n + 1):
                    if a == b:
                        continue
                    out[(i - 1) * n + a - 1, (j - 1) * n + b - 1] = _pairing_column_replaced(
                        chart, pt, z, {a: chart.n + i - 1, b: chart.n + j - 1})
    return out


def generating_w(L: Lagrangian, pt, v, w_offset=None) -> float:
    """W(q, v, p) = <p, v> - L(q, v); the correspondence holds at critical
    points of W in v, where W itself equals the free parameter w."""
    v = np.asarray(v, dtype=float).reshape(L.chart.k, L.chart.n)
    return pairing(L.chart, pt, v) - L.value(pt, v)


def w_gradient(L: Lagrangian, pt, v) -> np.ndarray:
    return pairing_dv(L.chart, pt, v) - L.dv(pt, v)


def legendre_solve(L: Lagrangian, pt, v0=None, tol=1e-10, maxiter=50,
                   cond_limit=1e12) -> np.ndarray:
    """Newton iteration for the critical point of v -> W(q, v, p).

    Returns the velocity tensor with max |dW/dv| <= tol; unique within the
    basin reached from ``v0`` (defaults to the zero tensor).
    """
    chart = L.chart
    k, n = chart.k, chart.n
    v = np.zeros((k, n)) if v0 is None else np.asarray(v0, dtype=float).reshape(k, n).copy()
    for _ in range(maxiter):
        grad = w_gradient(L, pt, v)
        if np.max(np.abs(grad)) <= tol:
            hess = pairing_d2v(chart, pt, v) - L.d2v(pt, v)
            cond = float(np.linalg.cond(hess))
            if not np.isfinite(cond) or cond > cond_limit:
                raise SingularHessian(f"velocity Hessian condition {cond:.3e} at solution")
            log.debug("legendre solve accepted: residual %.3e, hessian condition %.3e",
                      float(np.max(np.abs(grad))), cond)
            return v
        hess = pairing_d2v(chart, pt, v) - L.d2v(pt, v)
        cond = float(np.linalg.cond(hess))
        if not np.isfinite(cond) or cond > cond_limit:
            raise SingularHessian(f"velocity Hessian condition {cond:.3e} at iterate")
        step = np.linalg.solve(hess, -grad.reshape(-1))
        v = v + step.reshape(k, n)
    raise NoConvergence(f"no convergence after {maxiter} Newton steps "
                        f"(residual {float(np.max(np.abs(w_gradient(L, pt, v)))):.3e})")


def weyl_legendre(L: Lagrangian, pt, v, w=0.0, constraint_tol=1e-9):
    """Closed-form momenta on the single-fiber sector: p^a_i = dL/dv^i_a and
    eps = w + L - sum (dL/dv) v.

    On a chart whose momentum storage identifies aliases (the constrained
    electromagnetic chart), all aliases of one stored coordinate must agree;
    disagreement beyond ``constraint_tol`` raises ConstraintViolation.
    """
    chart = L.chart
    v = np.asarray(v, dtype=float).reshape(chart.k, chart.n)
    dLdv = L.dv(pt, v)
    stored = {}
    for i in range(1, chart.k + 1):
        for a in range(1, chart.n + 1):
            val = dLdv[i - 1, a - 1]
            coord, sign = alias_value(chart, i, a)
            if coord is None:
                if abs(val) > constraint_tol:
                    raise ConstraintViolation(
                        f"dL/dv for fiber {i}, slot {a} must vanish, got {val:.3e}")
                continue
            name = chart.names[coord]
            cand = val / sign
            if name in stored and abs(stored[name] - cand) > constraint_tol:
                raise ConstraintViolation(
                    f"incompatible aliases for {name}: {stored[name]:.6e} vs {cand:.6e}")
            stored.setdefault(name, cand)
    eps = w + L.value(pt, v) - float(np.sum(dLdv * v))
    out = dict(stored)
    out["eps"] = eps
    return out


def alias_value(chart, i: int, a: int):
    """(stored coordinate index, sign) with alias p^a_i = sign * stored;
    (None, 0) when the alias is a structural zero."""
    seq = list(range(chart.n))
    seq[a - 1] = chart.n + (i - 1)
    return chart.resolve_qtuple(tuple(seq))


class EnvelopeHamiltonian(OpaqueJet):
    """H(q, p) = W(q, V(q, p), p) with gradient through the envelope
    identities; usable as an opaque-jet leaf in expressions."""

    def __init__(self, L: Lagrangian, v0=None, tol=1e-10, maxiter=50, cond_limit=1e12):
        self.L = L
        self.chart = L.chart
        self.name = "H"
        self.symbols = tuple(L.chart.names)
        self.order = 1
        self._opts = dict(tol=tol, maxiter=maxiter, cond_limit=cond_limit)
        self._v0 = None if v0 is None else np.asarray(v0, dtype=float)
        self._cache = {}

    def solve_velocity(self, pt) -> np.ndarray:
        key = tuple(pt[nm] for nm in self.chart.names)
        if key not in self._cache:
            if len(self._cache) > 4096:
                self._cache.clear()
            self._cache[key] = legendre_solve(self.L, pt, self._v0, **self._opts)
        return self._cache[key]

    def value(self, pt) -> float:
        v = self.solve_velocity(pt)
        return pairing(self.chart, pt, v) - self.L.value(pt, v)

    def partial(self, name) -> OpaqueJet:
        chart = self.chart
        if name not in chart.names:
            raise KeyError(name)
        idx = chart.index(name)
        if chart.is_momentum(idx):
            mc = next(m for m in chart.momenta if m.index == idx)

            def val(pt, mc=mc):
                z = _z_matrix(chart, self.solve_velocity(pt))
                return sum(s * float(np.linalg.det(z[list(I), :]))
                           for I, s in mc.presentations)
        else:
            def val(pt, name=name):
                v = self.solve_velocity(pt)
                env = self.L._env(pt, v)
                return -float(self.L.dq_expr(name).evaluate(env))
        return ex.FunctionJet(f"dH/d{name}", self.symbols, val, None, order=0)

    def gradient(self, pt) -> dict:
        return {nm: self.partial(nm).value(pt) for nm in self.chart.names}

    def as_expression(self) -> Expression:
        return ex.opaque(self)


def hamiltonian_from_legendre(L: Lagrangian, v0=None, **opts) -> EnvelopeHamiltonian:
    return EnvelopeHamiltonian(L, v0, **opts)


def hamiltonian_tensor(H: EnvelopeHamiltonian, pt, v=None) -> np.ndarray:
    """T^a_b = delta^a_b H - <p, z with slot a replaced by d/dx^b>; equals
    minus the stress-energy tensor across the correspondence."""
    chart, L = H.chart, H.L
    v = H.solve_velocity(pt) if v is None else np.asarray(v, dtype=float)
    z = _z_matrix(chart, v)
    hval = pairing(chart, pt, v) - L.value(pt, v)
    out = np.empty((chart.n, chart.n))
    for a in range(1, chart.n + 1):
        for b in range(1, chart.n + 1):
            out[a - 1, b - 1] = (hval if a == b else 0.0) - _pairing_column_replaced(
                chart, pt, z, {a: b - 1})
    return out


def stress_energy(L: Lagrangian, pt, du) -> np.ndarray:
    """S^a_b = delta^a_b L - (dL/dv^i_a) du^i_b on the field jet in ``pt``
    (fiber values) and ``du`` (k x n velocity matrix)."""
    du = np.asarray(du, dtype=float).reshape(L.chart.k, L.chart.n)
    lval = L.value(pt, du)
    dv = L.dv(pt, du)
    return np.eye(L.chart.n) * lval - dv.T @ du
