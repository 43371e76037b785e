import math

import numpy as np
import pytest

from polyfield import expr as ex
from polyfield.legendre import (
    ConstraintViolation, EnvelopeHamiltonian, Lagrangian, NoConvergence,
    SingularHessian, generating_w, hamiltonian_from_legendre,
    hamiltonian_tensor, legendre_solve, pairing, stress_energy, w_gradient,
    weyl_legendre,
)
from polyfield.phase import embed_point, full_chart, restrict_weyl, weyl_chart

from test_exterior import eval_on_vectors


def kg_lagrangian(chart, mass=1.0):
    # flat Minkowski scalar field: L = v1^2/2 - v2^2/2 - m^2 y^2/2
    return Lagrangian.parse(chart, f"v1^2/2 - v2^2/2 - {mass}^2*y^2/2")


def test_pairing_zero_momenta():
    chart = weyl_chart(2, 2)
    pt = chart.point()
    assert pairing(chart, pt, np.ones((2, 2))) == 0.0


def test_pairing_weyl_sector():
    chart = weyl_chart(2, 1)
    pt = chart.point(eps=1.0, p1=2.0)
    v = np.array([[3.0, 0.0]])
    assert pairing(chart, pt, v) == pytest.approx(7.0)


def test_pairing_full_chart_picks_up_velocity_minor():
    chart = full_chart(2, 2)
    pt = chart.point(p12_12=1.5)
    rng = np.random.default_rng(0)
    v = rng.normal(size=(2, 2))
    det = v[0, 0] * v[1, 1] - v[0, 1] * v[1, 0]
    assert pairing(chart, pt, v) == pytest.approx(1.5 * det, abs=1e-12)


def test_pairing_matches_canonical_form_evaluation():
    # independent oracle: <p, v> is the canonical n-form evaluated on the
    # frame columns (flat chart)
    chart = full_chart(2, 2)
    rng = np.random.default_rng(4)
    theta = chart.theta()
    for _ in range(10):
        pt = chart.random_point(rng)
        v = rng.normal(size=(2, 2))
        cols = []
        for a in range(2):
            comp = {a: 1.0}
            comp.update({2 + i: v[i, a] for i in range(2)})
            cols.append(comp)
        want = eval_on_vectors(theta, cols, pt)
        assert pairing(chart, pt, v) == pytest.approx(want, abs=1e-10)


def test_pairing_on_full_chart_with_pinned_momenta_is_weyl_pairing():
    full = full_chart(2, 2)
    weyl = restrict_weyl(full)
    rng = np.random.default_rng(8)
    for _ in range(25):
        pt_w = weyl.random_point(rng)
        pt_f = embed_point(weyl, full, pt_w)
        v = rng.normal(size=(2, 2))
        want = pt_w["eps"] + sum(
            pt_w[f"p{a}_{i}"] * v[i - 1, a - 1] for a in (1, 2) for i in (1, 2))
        assert pairing(full, pt_f, v) == pytest.approx(want, abs=1e-12)


def test_generating_w_zero_lagrangian():
    chart = weyl_chart(1, 1)
    L = Lagrangian.parse(chart, "0")
    assert generating_w(L, chart.point(), np.zeros((1, 1))) == 0.0


def test_generating_w_flat_kg():
    chart = weyl_chart(2, 1)
    L = Lagrangian.parse(chart, "v1^2/2 - v2^2/2")
    rng = np.random.default_rng(1)
    for _ in range(10):
        v1, v2, eps = rng.normal(size=3)
        pt = chart.point(eps=eps, p1=v1, p2=-v2)
        got = generating_w(L, pt, np.array([[v1, v2]]))
        assert got == pytest.approx(eps + 0.5 * v1 ** 2 - 0.5 * v2 ** 2, abs=1e-12)
        # and this (q, p) is the critical point of W in v
        assert np.max(np.abs(w_gradient(L, pt, np.array([[v1, v2]])))) <= 1e-12


def test_legendre_solve_quadratic_one_step():
    # p^a = g^{ab} v_b  <=>  v_a = g_{ab} p^b for the flat metric diag(1, -1)
    chart = weyl_chart(2, 1)
    L = kg_lagrangian(chart, mass=0.7)
    rng = np.random.default_rng(2)
    for _ in range(10):
        pt = chart.random_point(rng)
        v = legendre_solve(L, pt)
        assert v[0, 0] == pytest.approx(pt["p1"], abs=1e-10)
        assert v[0, 1] == pytest.approx(-pt["p2"], abs=1e-10)


def test_legendre_solve_quartic_against_grid_search():
    chart = weyl_chart(1, 1)
    L = Lagrangian.parse(chart, "v1^4/4")
    grid = np.linspace(-2.0, 2.0, 100_000)
    rng = np.random.default_rng(3)
    for _ in range(5):
        p = float(rng.uniform(0.5, 7.9))
        pt = chart.point(p1=p)
        v = legendre_solve(L, pt, v0=np.array([[1.0]]))
        # independent oracle: coarse search for the critical point of W
        scores = np.abs(p - grid ** 3)
        v_oracle = grid[int(np.argmin(scores))]
        assert abs(v[0, 0] - v_oracle) <= 1e-4
        assert v[0, 0] == pytest.approx(p ** (1.0 / 3.0), abs=1e-9)


def test_legendre_solve_singular_hessian():
    chart = weyl_chart(1, 1)
    L = Lagrangian.parse(chart, "v1^4/4")
    with pytest.raises(SingularHessian):
        legendre_solve(L, chart.point(p1=1.0))  # zero seed sits on the degenerate locus


def test_legendre_solve_no_convergence():
    chart = weyl_chart(1, 1)
    L = Lagrangian.parse(chart, "v1^4/4")
    with pytest.raises(NoConvergence):
        legendre_solve(L, chart.point(p1=8.0), v0=np.array([[0.05]]), maxiter=2)


def test_weyl_legendre_trivial_lagrangian():
    chart = weyl_chart(2, 1)
    L = Lagrangian.parse(chart, "0")
    out = weyl_legendre(L, chart.point(), np.zeros((1, 2)), w=0.25)
    assert out["p1"] == 0.0 and out["p2"] == 0.0
    assert out["eps"] == pytest.approx(0.25)


def test_weyl_legendre_kg_momenta_signs():
    chart = weyl_chart(2, 1)
    L = kg_lagrangian(chart)
    rng = np.random.default_rng(5)
    for _ in range(10):
        du = rng.normal(size=(1, 2))
        pt = chart.point(y=rng.normal())
        out = weyl_legendre(L, pt, du)
        assert out["p1"] == pytest.approx(du[0, 0], abs=1e-12)   # p^t = phi_t
        assert out["p2"] == pytest.approx(-du[0, 1], abs=1e-12)  # p^x = -phi_x


def test_weyl_then_solve_round_trip():
    chart = weyl_chart(2, 2)
    L = Lagrangian.parse(
        chart, "v1_1^2/2 + v1_2^2/2 + v2_1^2/2 + v2_2^2/2 + y1*v1_1/4 - y2^2/2")
    rng = np.random.default_rng(6)
    for _ in range(50):
        v = rng.normal(size=(2, 2))
        pt = chart.random_point(rng)
        mom = weyl_legendre(L, pt, v, w=float(rng.normal()))
        pt2 = dict(pt)
        pt2.update(mom)
        back = legendre_solve(L, pt2)
        assert np.max(np.abs(back - v)) <= 1e-9


def test_weyl_legendre_h_zero_gauge():
    # choosing w so that H vanishes: eps = L - (dL/dv) v
    chart = weyl_chart(2, 1)
    L = kg_lagrangian(chart)
    rng = np.random.default_rng(7)
    v = rng.normal(size=(1, 2))
    pt = chart.point(y=0.3)
    out = weyl_legendre(L, pt, v, w=0.0)
    dv = L.dv(pt, v)
    assert out["eps"] == pytest.approx(L.value(pt, v) - float(np.sum(dv * v)), abs=1e-12)
    # and then H(q, p) = w = 0 at the corresponding momenta
    pt2 = dict(pt)
    pt2.update(out)
    H = hamiltonian_from_legendre(L)
    assert H.value(pt2) == pytest.approx(0.0, abs=1e-10)


def test_envelope_hamiltonian_matches_closed_form_scalar_field():
    chart = weyl_chart(2, 1)
    L = kg_lagrangian(chart, mass=1.3)
    H = hamiltonian_from_legendre(L)
    closed = chart.parse("eps + p1^2/2 - p2^2/2 + 1.3^2*y^2/2")
    rng = np.random.default_rng(9)
    for _ in range(20):
        pt = chart.random_point(rng)
        assert H.value(pt) == pytest.approx(float(closed.evaluate(pt)), abs=1e-10)


def test_envelope_gradient_against_finite_differences():
    chart = weyl_chart(2, 1)
    L = Lagrangian.parse(chart, "v1^2/2 - v2^2/2 + y*v1/3 - sin(y)")
    H = hamiltonian_from_legendre(L)
    rng = np.random.default_rng(10)
    h = 1e-5
    for _ in range(20):
        pt = chart.random_point(rng)
        for name in chart.names:
            up, dn = dict(pt), dict(pt)
            up[name] += h
            dn[name] -= h
            fd = (H.value(up) - H.value(dn)) / (2 * h)
            an = H.partial(name).value(pt)
            assert abs(an - fd) <= 1e-5 * max(1.0, abs(fd))


def test_envelope_dh_deps_is_one():
    chart = weyl_chart(2, 2)
    L = Lagrangian.parse(chart, "v1_1^2/2 + v2_2^2/2 + v1_2^2/2 + v2_1^2/2 - y1^4/4")
    H = hamiltonian_from_legendre(L)
    rng = np.random.default_rng(11)
    for _ in range(10):
        pt = chart.random_point(rng)
        assert H.partial("eps").value(pt) == pytest.approx(1.0, abs=1e-12)


def test_hamiltonian_tensor_n1_is_energy():
    chart = weyl_chart(1, 1)
    L = Lagrangian.parse(chart, "v1^2/2 - y^2/2")
    H = hamiltonian_from_legendre(L)
    rng = np.random.default_rng(12)
    for _ in range(10):
        pt = chart.random_point(rng)
        T = hamiltonian_tensor(H, pt)
        v = pt["p1"]  # quadratic Legendre: v = p
        energy = pt["p1"] * v - (v ** 2 / 2 - pt["y"] ** 2 / 2)
        assert T[0, 0] == pytest.approx(energy, abs=1e-9)


def test_hamiltonian_tensor_zero_momenta_pure_potential():
    chart = weyl_chart(2, 1)
    L = Lagrangian.parse(chart, "v1^2/2 - v2^2/2 - y^2/2")
    H = hamiltonian_from_legendre(L)
    pt = chart.point(y=0.8)
    T = hamiltonian_tensor(H, pt)
    want = np.eye(2) * (0.8 ** 2 / 2)
    assert np.allclose(T, want, atol=1e-10)


def test_hamiltonian_tensor_equals_minus_stress_energy():
    chart = weyl_chart(2, 1)
    L = kg_lagrangian(chart, mass=0.9)
    H = hamiltonian_from_legendre(L)
    rng = np.random.default_rng(13)
    for _ in range(20):
        du = rng.normal(size=(1, 2))
        base = {nm: float(rng.normal()) for nm in ("x1", "x2")}
        pt = chart.point(base, y=float(rng.normal()))
        S = stress_energy(L, pt, du)
        mom = weyl_legendre(L, pt, du, w=float(rng.normal()))
        pt2 = dict(pt)
        pt2.update(mom)
        T = hamiltonian_tensor(H, pt2)
        assert np.allclose(T, -S, atol=1e-9)


def test_stress_energy_constant_field_no_potential():
    chart = weyl_chart(2, 1)
    L = Lagrangian.parse(chart, "v1^2/2 - v2^2/2")
    S = stress_energy(L, chart.point(y=1.0), np.zeros((1, 2)))
    assert np.allclose(S, 0.0)


def test_stress_energy_plane_wave_trace_identity():
    # S^a_a = n L - (dL/dv) v for any jet; checked on a Klein-Gordon plane wave
    chart = weyl_chart(2, 1)
    L = kg_lagrangian(chart, mass=1.0)
    omega, kappa = math.sqrt(2.0), 1.0
    rng = np.random.default_rng(14)
    for _ in range(10):
        t, x = rng.uniform(0, 2 * math.pi, size=2)
        phi = math.cos(omega * t - kappa * x)
        du = np.array([[omega * math.sin(omega * t - kappa * x),
                        -kappa * math.sin(omega * t - kappa * x)]])
        du[0, 0] *= -1.0  # d/dt cos = -omega sin
        du[0, 1] = kappa * math.sin(omega * t - kappa * x)
        pt = chart.point(x1=t, x2=x, y=phi)
        S = stress_energy(L, pt, du)
        lval = L.value(pt, du)
        dv = L.dv(pt, du)
        assert np.trace(S) == pytest.approx(2 * lval - float(np.sum(dv * du)), abs=1e-10)
        # energy density with the mostly-minus metric: -S^t_t = kinetic + potential
        want = 0.5 * du[0, 0] ** 2 + 0.5 * du[0, 1] ** 2 + 0.5 * phi ** 2
        assert -S[0, 0] == pytest.approx(want, abs=1e-10)


def test_maxwell_weyl_legendre_respects_constraint():
    from polyfield.phase import maxwell_chart
    chart = maxwell_chart(2)
    # L = -1/4 F F with F12 = v(A2 along x1) - v(A1 along x2); indices: fiber i, slot a
    L = Lagrangian.parse(chart, "-(v1_2 - v2_1)^2/2 + (v1_2 - v2_1)^2/4")
    rng = np.random.default_rng(15)
    dA = rng.normal(size=(2, 2))
    dA[0, 0] = dA[1, 1] = 0.0
    pt = chart.point()
    out = weyl_legendre(L, pt, dA)
    assert "pA1_2" in out
    # an incompatible-by-construction Lagrangian violates the storage constraint
    bad = Lagrangian.parse(chart, "v2_1^2/2")
    with pytest.raises(ConstraintViolation):
        weyl_legendre(bad, pt, np.array([[0.0, 1.0], [0.0, 0.0]]))
