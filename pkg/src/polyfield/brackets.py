"""Graded Poisson brackets on forms over a momentum chart.

An (n-1)-form a is bracketable when some vector field Xi(a) satisfies
da = -Xi(a) . Omega with Omega the chart's closed (n+1)-form.  For forms
whose differential stays inside the span of the canonical-form blocks
(position-type observables, contractions of the canonical form with
configuration vector fields) Xi comes out in closed form from a triangular
solve against that basis; for everything else a pointwise least-squares
solve decides membership numerically.

Brackets:

* internal:  {a, b} = Xi(b) . Xi(a) . Omega          (both bracketable)
* external:  {a, b} = -{b, a} = -Xi(b) . da          (a arbitrary)
* with an n-form psi:  {psi, b} = -Xi(b) . d(psi)

Lower-degree forms embed through anticommuting weights tau_1..tau_n, one
per base direction: the superform of a (p-1)-form collects the wedges
dx^{a_1..a_{n-p}} ^ a with tau monomials as bookkeeping.  The sbracket
pairs the component vector fields with Grassmann signs.  A form is
admissible when its superform's vector fields have no base components;
for admissible forms the n-form bracket reduces to a tau-free sum over
base multivectors (the route the dynamics uses).
"""

from __future__ import annotations

import numpy as np

from . import expr as ex
from .expr import Expression, as_expr
from .exterior import Form, Multivector, VectorField, contract, exterior_derivative, \
    lie_derivative, merge_indices, wedge_vectors

__all__ = [
    "BracketError", "NotBracketable", "HamiltonianPair",
    "theta_basis_solve", "xi_q", "xi_p", "pi_field", "xi_general",
    "membership_residual", "internal_bracket", "external_bracket",
    "SuperForm", "superize", "sbracket", "super_scalar", "scalar_of_super",
    "is_admissible", "h_omega_bracket", "noether_sides",
    "q_position", "p_momentum", "p_momentum_starred", "eta_slice",
]


class BracketError(Exception):
    pass


class NotBracketable(BracketError):
    """The form admits no Hamiltonian vector field on this chart."""


class HamiltonianPair:
    """A bracketable form together with its vector field."""

    def __init__(self, form: Form, xi: VectorField):
        self.form = form
        self.xi = xi
        self.chart = form.chart

    def defining_residual(self) -> Form:
        """da + Xi . Omega; identically zero for a valid pair."""
        return exterior_derivative(self.form) + contract(
            self.xi, self.chart.multisymplectic_form())

    def residual_at(self, env) -> float:
        return self.defining_residual().max_abs_at(env)

    def verify(self, points, tol=1e-9) -> float:
        res = self.defining_residual()
        worst = max((res.max_abs_at(pt) for pt in points), default=0.0)
        if worst > tol:
            raise NotBracketable(f"defining residual {worst:.3e} exceeds {tol:g}")
        return worst


# ---------------------------------------------------------------------------
# closed-form solves against the canonical-form basis

def theta_basis_solve(chart, rhs: Form) -> VectorField:
    """Solve sum_c xi_c * Theta_c = rhs for a momentum-directed vector field,
    where Theta_c is the derivative of the canonical n-form by momentum c.

    Works on any chart kind; raises NotBracketable when rhs carries an index
    block outside the basis span.
    """
    if rhs.degree != chart.n:
        raise ValueError("theta-basis solve expects an n-form")
    basis = chart.theta_basis()
    covered = set()
    for _, block, _, _ in basis:
        covered.update(block.coeffs)
    stray = [key for key in rhs.coeffs if key not in covered]
    if stray:
        names = ["^".join(chart.names[i] for i in key) for key in stray]
        raise NotBracketable(f"components outside the canonical-form span: {names}")
    comps = {}
    for idx, _, primary, lam in basis:
        c = rhs.coeffs.get(primary)
        if c is not None:
            comps[idx] = c / lam
    return VectorField(chart, comps)


def xi_q(a: Form, verify_points=None, tol=1e-9) -> HamiltonianPair:
    """Hamiltonian pair of a configuration form (coefficients and indices
    over base and fiber coordinates only)."""
    xi = theta_basis_solve(a.chart, -exterior_derivative(a))
    pair = HamiltonianPair(a, xi)
    if verify_points is not None:
        pair.verify(verify_points, tol)
    return pair


def xi_p(xi_config: VectorField, verify_points=None, tol=1e-9) -> HamiltonianPair:
    """Hamiltonian pair of the momentum form xi . theta for a configuration
    vector field; the momentum correction solves the Lie-derivative block."""
    chart = xi_config.chart
    for i in xi_config.components:
        if chart.is_momentum(i):
            raise ValueError("xi_p expects a configuration vector field")
    p_form = contract(xi_config, chart.theta())
    rhs = -(exterior_derivative(p_form) + contract(xi_config, chart.multisymplectic_form()))
    eta = theta_basis_solve(chart, rhs)
    pair = HamiltonianPair(p_form, xi_config + eta)
    if verify_points is not None:
        pair.verify(verify_points, tol)
    return pair


def pi_field(chart, nu: str, mu: str) -> VectorField:
    """The momentum-directed field defined by dq^nu ^ (d/dq^mu . theta)
    = Pi^nu_mu . Omega."""
    rhs = chart.d_coord(nu).wedge(contract(chart.coordinate_field(mu), chart.theta()))
    return theta_basis_solve(chart, rhs)


# ---------------------------------------------------------------------------
# pointwise membership solve

class PointwiseXi:
    """Vector field known only through per-point least squares against the
    defining relation; carries the worst residual and rank over the probe
    points used to accept it."""

    def __init__(self, form: Form, residual: float, rank_deficient: bool):
        self.form = form
        self.chart = form.chart
        self.residual = residual
        self.rank_deficient = rank_deficient
        self._da = exterior_derivative(form)

    def solve_at(self, env):
        comps, res, _ = _lstsq_xi(self.chart, self._da, env)
        return comps, res

    def field_at(self, env) -> VectorField:
        comps, _ = self.solve_at(env)
        return VectorField(self.chart, {i: ex.Const(v) for i, v in comps.items()})


def _lstsq_xi(chart, da: Form, env):
    columns = [chart.contract_omega_with(c) for c in range(chart.dim)]
    keys = sorted(set(da.coeffs) | {k for col in columns for k in col.coeffs})
    key_row = {k: r for r, k in enumerate(keys)}
    A = np.zeros((len(keys), chart.dim))
    for c, col in enumerate(columns):
        for k, coeff in col.coeffs.items():
            A[key_row[k], c] = float(coeff.evaluate(env))
    b = np.zeros(len(keys))
    for k, coeff in da.coeffs.items():
        b[key_row[k]] = float(coeff.evaluate(env))
    sol, _, rank, _ = np.linalg.lstsq(A, -b, rcond=None)
    residual = float(np.max(np.abs(A @ sol + b))) if len(keys) else 0.0
    comps = {i: float(v) for i, v in enumerate(sol) if abs(v) > 0.0}
    return comps, residual, rank


def membership_residual(a: Form, points) -> float:
    """Worst least-squares residual of da = -xi . Omega over the points."""
    da = exterior_derivative(a)
    worst = 0.0
    for env in points:
        _, res, _ = _lstsq_xi(a.chart, da, env)
        worst = max(worst, res)
    return worst


def xi_general(a: Form, points, tol=1e-9) -> PointwiseXi:
    """Pointwise solve of the defining relation; accepts the form when the
    residual stays below ``tol`` at every probe point, else raises
    NotBracketable.  Rank deficiency of the solve is reported on the result
    rather than assumed away."""
    da = exterior_derivative(a)
    worst = 0.0
    deficient = False
    for env in points:
        _, res, rank = _lstsq_xi(a.chart, da, env)
        worst = max(worst, res)
        deficient = deficient or rank < a.chart.dim
    if worst > tol:
        raise NotBracketable(f"membership residual {worst:.3e} exceeds {tol:g}")
    return PointwiseXi(a, worst, deficient)


# ---------------------------------------------------------------------------
# brackets on (n-1)-forms

def internal_bracket(a: HamiltonianPair, b: HamiltonianPair) -> Form:
    """{a, b} = Xi(b) . Xi(a) . Omega."""
    if a.chart is not b.chart:
        raise ValueError("chart mismatch")
    omega = a.chart.multisymplectic_form()
    return contract(b.xi, contract(a.xi, omega))


def external_bracket(a: Form, b: HamiltonianPair) -> Form:
    """{a, b} = -{b, a} = -Xi(b) . da; coincides with the internal bracket
    when a is itself bracketable.  Also serves as the bracket of an n-form
    (e.g. the Hamiltonian density) with a bracketable form."""
    if a.chart is not b.chart:
        raise ValueError("chart mismatch")
    return -contract(b.xi, exterior_derivative(a))


# ---------------------------------------------------------------------------
# Grassmann layer

def _tau_merge(S, T):
    return merge_indices(tuple(S), tuple(T))


class SuperForm:
    """Sum of tau-monomial-weighted forms; ``parts`` maps sorted tuples of
    base slots (1-based) to forms, ``xi`` optionally carries the component
    vector fields."""

    def __init__(self, chart, parts, xi=None):
        self.chart = chart
        self.parts = {tuple(k): v for k, v in parts.items() if not v.is_zero()}
        self.xi = None if xi is None else {tuple(k): v for k, v in xi.items()}

    def tau_degree(self):
        degs = {len(k) for k in self.parts}
        if len(degs) > 1:
            raise ValueError("inhomogeneous tau degree")
        return degs.pop() if degs else 0

    def __add__(self, other):
        out = dict(self.parts)
        for k, v in other.parts.items():
            out[k] = out[k] + v if k in out else v
        return SuperForm(self.chart, out)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, factor):
        return SuperForm(self.chart, {k: v.scale(factor) for k, v in self.parts.items()})

    def d(self) -> "SuperForm":
        return SuperForm(self.chart, {k: exterior_derivative(v) for k, v in self.parts.items()})

    def mul_tau_right(self, scalar) -> "SuperForm":
        """Multiply by a tau-linear scalar sum c_a tau_a from the right."""
        out = {}
        for T, form in self.parts.items():
            for a, c in scalar.items():
                m = _tau_merge(T, (a,))
                if m is None:
                    continue
                key, sign = m
                term = form.scale(c if sign > 0 else -c)
                out[key] = out[key] + term if key in out else term
        return SuperForm(self.chart, out)

    def max_abs_at(self, env) -> float:
        return max((f.max_abs_at(env) for f in self.parts.values()), default=0.0)

    def is_zero(self) -> bool:
        return not self.parts

    def __repr__(self):
        rows = ", ".join(f"tau{list(k)}: {v!r}" for k, v in sorted(self.parts.items()))
        return f"<superform [{rows}]>"


def super_scalar(chart, scalar) -> SuperForm:
    """The superform of a 0-form scalar: sum over (n-1)-subsets of tau
    monomials wedged with the matching base blocks."""
    return superize(chart.zero_form(as_expr(scalar)), with_xi=False)


def scalar_of_super(sf: SuperForm) -> Expression:
    """Invert ``super_scalar``: report c with sf = superform(c); raises if
    the component pattern does not match a single scalar."""
    chart = sf.chart
    n = chart.n
    probe = None
    for S in sf.parts:
        if len(S) != n - 1:
            raise BracketError("not the superform of a scalar")
    # compare against the superform of 1 componentwise
    unit = super_scalar(chart, 1.0)
    ratios = {}
    for S, base_form in unit.parts.items():
        got = sf.parts.get(S)
        if got is None:
            continue
        for key, coeff in base_form.coeffs.items():
            other = got.coeffs.get(key)
            if other is not None:
                ratios[S] = other / coeff
                break
    if not ratios:
        raise BracketError("no overlapping components")
    vals = list(ratios.values())
    return vals[0]


def superize(a: Form, xi_solver=None, verify_points=None, tol=1e-9,
             with_xi=True) -> SuperForm:
    """Embed a (p-1)-form: sum of tau_{a_1}..tau_{a_{n-p}} dx^{a_1..} ^ a
    over increasing base subsets, with the component vector fields solved
    per block (``xi_solver`` overrides the default configuration-form
    solve, e.g. for momentum-valued blocks)."""
    chart = a.chart
    n = chart.n
    taus = n - a.degree - 1
    if taus < 0:
        raise ValueError("superize expects degree at most n-1")
    from itertools import combinations
    parts, xis = {}, {}
    for S in combinations(range(1, n + 1), taus):
        block = a
        for alpha in reversed(S):
            block = chart.d_coord(chart.base_names[alpha - 1]).wedge(block)
        parts[S] = block
        if not with_xi:
            continue
        if block.is_zero():
            xis[S] = VectorField(chart, {})
            continue
        if xi_solver is not None:
            pair = xi_solver(S, block)
        else:
            pair = xi_q(block, verify_points=verify_points, tol=tol)
        if isinstance(pair, HamiltonianPair):
            xis[S] = pair.xi
        else:
            xis[S] = pair
    return SuperForm(chart, parts, xis if with_xi else None)


def sbracket(A: SuperForm, B: SuperForm) -> Form | SuperForm:
    """{A, B}_s: component vector fields paired into the closed (n+1)-form,
    tau monomials merged A-first with interleaving signs."""
    if A.xi is None or B.xi is None:
        raise BracketError("sbracket needs component vector fields on both sides")
    chart = A.chart
    omega = chart.multisymplectic_form()
    out = {}
    for S, xa in A.xi.items():
        if not xa.components:
            continue
        inner = contract(xa, omega)
        for T, xb in B.xi.items():
            if not xb.components:
                continue
            m = _tau_merge(S, T)
            if m is None:
                continue
            key, sign = m
            term = contract(xb, inner)
            term = term if sign > 0 else -term
            out[key] = out[key] + term if key in out else term
    return SuperForm(chart, out)


def xi_tau_scalar(A: SuperForm):
    """For a tau-free superform (an (n-1)-form), the base components of its
    vector field as a tau-linear scalar: sum dx^a(Xi) tau_a."""
    if A.tau_degree() != 0:
        raise ValueError("expected a tau-free superform")
    xi = A.xi[()]
    return {alpha: xi.component(alpha - 1) for alpha in range(1, A.chart.n + 1)
            if not xi.component(alpha - 1).is_zero()}


def is_admissible(a, points, tol=1e-10, xi_solver=None) -> bool:
    """A lower-degree form is admissible when its superform's vector fields
    have no base components anywhere."""
    sf = a if isinstance(a, SuperForm) else superize(a, xi_solver=xi_solver)
    for S, xi in sf.xi.items():
        for i, comp in xi.components.items():
            if sf.chart.is_base(i):
                for env in points:
                    if abs(float(comp.evaluate(env))) > tol:
                        return False
    return True


def h_omega_bracket(hamiltonian, a, xi_solver=None, points=None, tol=1e-10) -> Form:
    """Bracket of the Hamiltonian n-form with an observable.

    For an (n-1)-form (or a ready HamiltonianPair) this is the n-form
    bracket -Xi(a) . d(H omega).  For an admissible lower-degree form the
    tau weights drop out and the bracket is the signed sum over leading
    base multivectors wedged with the component vector fields.
    """
    if isinstance(a, HamiltonianPair):
        chart = a.chart
        psi = chart.volume_form().scale(as_expr(hamiltonian))
        return -contract(a.xi, exterior_derivative(psi))
    chart = a.chart
    psi = chart.volume_form().scale(as_expr(hamiltonian))
    if a.degree == chart.n - 1:
        pair = xi_q(a) if xi_solver is None else HamiltonianPair(a, xi_solver((), a))
        return -contract(pair.xi, exterior_derivative(psi))
    sf = superize(a, xi_solver=xi_solver)
    if points is not None and not is_admissible(sf, points, tol):
        raise NotBracketable("form is not admissible")
    dpsi = exterior_derivative(psi)
    total = None
    for S, xi in sf.xi.items():
        if not xi.components:
            continue
        fields = [chart.coordinate_field(chart.base_names[alpha - 1]) for alpha in S]
        mv = wedge_vectors(fields + [xi]) if fields else xi.as_multivector()
        term = contract(mv, dpsi)
        total = term if total is None else total + term
    if total is None:
        return Form(chart, a.degree + 1, {})
    return -total


def noether_sides(hamiltonian, xi_config: VectorField):
    """Both sides of the symmetry identity for the momentum observable of a
    configuration vector field:

        {H omega, P_xi} = L_{Xi(P_xi)}(theta - H omega) + d(xi . H omega).

    When the Lie-derivative term vanishes the current P*_xi is closed along
    solutions."""
    chart = xi_config.chart
    h = as_expr(hamiltonian)
    pair = xi_p(xi_config)
    psi = chart.volume_form().scale(h)
    lhs = -contract(pair.xi, exterior_derivative(psi))
    rhs = lie_derivative(pair.xi, chart.theta() - psi) + exterior_derivative(
        contract(xi_config, psi))
    return lhs, rhs


# ---------------------------------------------------------------------------
# standard observables

def q_position(chart, i: int, f) -> Form:
    """Position observable: y^i times the contraction of a base vector field
    f = f^a d/dx^a into the volume form."""
    field = VectorField(chart, {a - 1: as_expr(c) for a, c in _as_base_components(chart, f)})
    return contract(field, chart.volume_form()).scale(chart.sym(chart.fiber_names[i - 1]))


def _as_base_components(chart, f):
    if isinstance(f, dict):
        return [(a, c) for a, c in f.items()]
    return [(a + 1, c) for a, c in enumerate(f)]


def p_momentum(chart, mu: str, g) -> Form:
    """Momentum observable g(x) d/dq^mu . theta."""
    return contract(chart.coordinate_field(mu), chart.theta()).scale(as_expr(g))


def p_momentum_starred(chart, mu: str, g, hamiltonian) -> Form:
    """g(x) d/dq^mu . (theta - H omega); generates the energy-momentum
    components.  Restricted to the zero level of H it coincides with
    ``p_momentum``."""
    psi = chart.theta() - chart.volume_form().scale(as_expr(hamiltonian))
    return contract(chart.coordinate_field(mu), psi).scale(as_expr(g))


def eta_slice(chart, hamiltonian) -> Form:
    """The slice-energy (n-1)-form: minus the first-base-direction
    contraction of theta - H omega."""
    return -p_momentum_starred(chart, chart.base_names[0], 1.0, hamiltonian)
