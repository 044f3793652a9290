import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from discount_mfg.conjugates import (
    conjugate_table,
    coupling_conjugate,
    coupling_inverse,
    coupling_primitive,
    estimate_growth_constants,
    fstar_prox,
    hamiltonian_conjugate,
    monotone_root,
    perspective_prox,
    perspective_value,
)
from discount_mfg.errors import DomainError, NumericError
from discount_mfg.problem import CouplingSpec, HamiltonianSpec, Potential, ProblemSpec, power_spec

LINEAR = power_spec()  # H = p^2/2, f(m) = m
EXAMPLE = power_spec(V=Potential("example"))
QUADRATIC_F = power_spec(q=3.0)  # f(m) = m^2

exponents = st.sampled_from([1.5, 2.0, 3.0])


def varied_spec(r, q):
    return power_spec(kappa=0.7, r=r, V=Potential("cosine", 0.5), c_f=1.3, q=q, g=Potential("cosine", 0.2, 2))


class TestCouplingPrimitive:
    def test_examples(self):
        assert coupling_primitive(LINEAR, 0.3, 2.0) == pytest.approx(2.0)
        assert coupling_primitive(LINEAR, 0.3, 0.0) == 0.0
        assert coupling_primitive(QUADRATIC_F, 0.3, 3.0) == pytest.approx(9.0)

    def test_negative_density_is_domain_error(self):
        with pytest.raises(DomainError):
            coupling_primitive(LINEAR, 0.0, -0.1)

    def test_callback_matches_closed_form(self):
        cb = ProblemSpec(coupling=CouplingSpec(evaluator=lambda x, m: m**2))
        assert coupling_primitive(cb, 0.1, 3.0) == pytest.approx(9.0, rel=1e-12)


class TestCouplingConjugate:
    def test_examples(self):
        assert coupling_conjugate(LINEAR, 0.0, -1.0) == 0.0
        assert coupling_conjugate(LINEAR, 0.0, 0.0) == 0.0
        assert coupling_conjugate(LINEAR, 0.0, 2.0) == pytest.approx(2.0)

    def test_brute_force(self):
        ms = np.linspace(0, 10, 200001)
        for a in (0.5, 2.0, 3.7):
            brute = np.max(a * ms - ms**2 / 2)
            assert coupling_conjugate(LINEAR, 0.0, a) == pytest.approx(brute, rel=1e-6)

    @given(r=exponents, q=exponents, seed=st.integers(0, 2**31))
    def test_brute_force_varied(self, r, q, seed):
        spec = varied_spec(r, q)
        rng = np.random.default_rng(seed)
        x, a = rng.random(), rng.uniform(-2, 4)
        ms = np.linspace(0, 40, 400001)
        brute = max(0.0, float(np.max(a * ms - coupling_primitive(spec, x, ms))))
        assert abs(coupling_conjugate(spec, x, a) - brute) <= 1e-6 * (1 + abs(brute))

    @given(seed=st.integers(0, 2**31))
    def test_flat_below_f0(self, seed):
        spec = varied_spec(2.0, 3.0)
        rng = np.random.default_rng(seed)
        x = rng.random(50)
        a = spec.g(x) - rng.exponential(size=50)
        assert np.all(coupling_conjugate(spec, x, a) == 0.0)

    def test_fenchel_young_equality_1000_samples(self, rng):
        for r, q in ((2.0, 2.0), (1.5, 3.0), (3.0, 1.5)):
            spec = varied_spec(r, q)
            x, m = rng.random(1000), rng.uniform(1e-6, 5.0, 1000)
            a = spec.f(x, m)
            defect = coupling_primitive(spec, x, m) + coupling_conjugate(spec, x, a) - m * a
            assert np.max(np.abs(defect) / (1 + m**q)) <= 1e-10

    @given(seed=st.integers(0, 2**31))
    def test_fenchel_young_inequality(self, seed):
        spec = varied_spec(2.0, 3.0)
        rng = np.random.default_rng(seed)
        x, m, a = rng.random(100), rng.uniform(0, 5, 100), rng.uniform(-3, 10, 100)
        gap = coupling_primitive(spec, x, m) + coupling_conjugate(spec, x, a) - m * a
        assert np.all(gap >= -1e-12)

    def test_inverse_is_derivative(self):
        spec = varied_spec(2.0, 3.0)
        x, a, d = 0.3, np.array([0.5, 1.5, 4.0]), 1e-6
        num = (coupling_conjugate(spec, x, a + d) - coupling_conjugate(spec, x, a - d)) / (2 * d)
        assert_allclose(coupling_inverse(spec, x, a), num, rtol=1e-7)

    def test_callback_conjugate_and_inverse(self):
        cb = ProblemSpec(coupling=CouplingSpec(evaluator=lambda x, m: m))
        assert coupling_inverse(cb, 0.2, np.array([-1.0, 2.0])) == pytest.approx([0.0, 2.0])
        assert coupling_conjugate(cb, 0.2, 2.0) == pytest.approx(2.0, rel=1e-10)


class TestFstarProx:
    @given(q=exponents, seed=st.integers(0, 2**31))
    def test_optimality(self, q, seed):
        spec = varied_spec(2.0, q)
        rng = np.random.default_rng(seed)
        x, s, at = rng.random(), rng.uniform(0.05, 3.0), rng.uniform(-3.0, 6.0)
        a = float(fstar_prox(spec, x, s, at))
        obj = lambda b: coupling_conjugate(spec, x, b) + (b - at) ** 2 / (2 * s)
        grid = a + np.linspace(-1e-2, 1e-2, 2001)
        assert obj(a) <= np.min(obj(grid)) + 1e-13

    def test_callback_matches_power(self):
        cb = ProblemSpec(coupling=CouplingSpec(evaluator=lambda x, m: m))
        at = np.array([-1.0, 0.5, 3.0])
        assert_allclose(fstar_prox(cb, 0.1, 0.7, at), fstar_prox(LINEAR, 0.1, 0.7, at), rtol=1e-10)

    def test_rejects_non_positive_step(self):
        with pytest.raises(DomainError):
            fstar_prox(LINEAR, 0.0, 0.0, 1.0)


class TestHamiltonianConjugate:
    def test_examples(self):
        # x = 0 gives W = 4, x = 1/4 gives W = -4
        assert hamiltonian_conjugate(EXAMPLE, 0.0, 0.0) == pytest.approx(-4.0)
        assert hamiltonian_conjugate(LINEAR, 0.0, 3.0) == pytest.approx(4.5)
        assert hamiltonian_conjugate(EXAMPLE, 0.25, 2.0) == pytest.approx(6.0)

    @given(r=exponents, v=st.floats(-5, 5), x=st.floats(0, 1))
    def test_brute_force(self, r, v, x):
        spec = varied_spec(r, 2.0)
        ps = np.linspace(-30, 30, 600001)
        brute = float(np.max(ps * v - spec.H(np.full(ps.shape, x), ps)))
        assert abs(hamiltonian_conjugate(spec, x, v) - brute) <= 1e-6 * (1 + abs(brute))

    def test_brute_force_2d(self):
        spec = power_spec(kappa=0.5, r=2.0, V=Potential("cosine"), dimension=2)
        v, x = np.array([1.0, -0.5]), np.array([0.1, 0.2])
        p1, p2 = np.meshgrid(np.linspace(-3, 3, 1201), np.linspace(-3, 3, 1201), indexing="ij")
        ps = np.stack([p1, p2], -1)
        brute = np.max(ps @ v - spec.H(np.broadcast_to(x, ps.shape), ps))
        assert hamiltonian_conjugate(spec, x, v) == pytest.approx(brute, rel=1e-5)

    def test_callback_matches_power(self):
        cb = ProblemSpec(hamiltonian=HamiltonianSpec(evaluator=lambda x, p: 0.5 * p**2 + np.cos(2 * np.pi * x)))
        ref = power_spec(V=Potential("cosine"))
        v = np.array([-2.0, 0.0, 1.5])
        assert_allclose(hamiltonian_conjugate(cb, 0.3, v), hamiltonian_conjugate(ref, 0.3, v), atol=1e-7)


class TestPerspective:
    def test_examples(self):
        assert perspective_value(LINEAR, 0.0, 0.0, 0.0) == 0.0
        assert perspective_value(LINEAR, 0.0, 0.0, 1.0) == math.inf
        assert perspective_value(LINEAR, 0.0, 2.0, 2.0) == pytest.approx(1.0)

    def test_negative_density_is_domain_error(self):
        with pytest.raises(DomainError):
            perspective_value(LINEAR, 0.0, -1.0, 0.0)

    @given(r=exponents, t=st.floats(0.01, 0.99), seed=st.integers(0, 2**31))
    def test_joint_convexity(self, r, t, seed):
        spec = varied_spec(r, 2.0)
        rng = np.random.default_rng(seed)
        x = rng.random()
        (m1, m2), (w1, w2) = rng.uniform(0.01, 3, 2), rng.uniform(-3, 3, 2)
        mid = perspective_value(spec, x, t * m1 + (1 - t) * m2, t * w1 + (1 - t) * w2)
        comb = t * perspective_value(spec, x, m1, w1) + (1 - t) * perspective_value(spec, x, m2, w2)
        assert mid <= comb + 1e-12 * (1 + abs(comb))


class TestPerspectiveProx:
    def test_examples(self):
        assert perspective_prox(LINEAR, 0.0, 0.7, 0.0, 0.0) == (0.0, 0.0)
        m, w = perspective_prox(LINEAR, 0.0, 1.0, 1.0, 0.0)
        assert m == pytest.approx(1.0) and w == 0.0
        assert perspective_prox(LINEAR, 0.0, 1.0, -5.0, 0.0) == (0.0, 0.0)

    @given(r=exponents, seed=st.integers(0, 2**31))
    def test_beats_local_grid(self, r, seed):
        spec = power_spec(kappa=0.5, r=r, V=Potential("cosine", 0.5))
        rng = np.random.default_rng(seed)
        x, s = rng.random(), rng.uniform(0.1, 2.0)
        mt, wt = rng.uniform(-0.5, 2.0), rng.uniform(-2.0, 2.0)
        m, w = perspective_prox(spec, x, s, mt, wt)

        def obj(mm, ww):
            return perspective_value(spec, x, mm, ww) + ((mm - mt) ** 2 + (ww - wt) ** 2) / (2 * s)

        rad = 0.05 * (1 + abs(m) + abs(w))
        mm, ww = np.meshgrid(np.linspace(max(m - rad, 0.0), m + rad, 101), np.linspace(w - rad, w + rad, 101))
        assert obj(m, w) <= np.min(obj(mm, ww)) + 1e-12

    @given(r=exponents, seed=st.integers(0, 2**31))
    def test_first_order_conditions(self, r, seed):
        spec = power_spec(kappa=0.5, r=r, V=Potential("cosine", 0.5))
        rng = np.random.default_rng(seed)
        x, s = rng.random(), rng.uniform(0.1, 2.0)
        mt, wt = rng.uniform(0.5, 3.0), rng.uniform(-2.0, 2.0)
        m, w = perspective_prox(spec, x, s, mt, wt)
        if m <= 0:
            return
        # gradients of m K*(|w|/m) - V m
        c, rc = (1 - 1 / r) * (0.5 * r) ** (-1 / (r - 1)), r / (r - 1)
        v = abs(w) / m
        dm = c * v**rc - c * rc * v**rc - spec.V(x)
        dw = c * rc * v ** (rc - 1) * np.sign(w)
        assert abs(dm + (m - mt) / s) <= 1e-9 * (1 + abs(mt) / s)
        assert abs(dw + (w - wt) / s) <= 1e-9 * (1 + abs(wt) / s)

    def test_vectorised_2d(self):
        spec = power_spec(dimension=2)
        mt = np.array([1.0, 2.0])
        wt = np.array([[0.5, -0.5], [0.0, 0.0]])
        m, w = perspective_prox(spec, np.zeros((2, 2)), 0.5, mt, wt)
        assert m.shape == (2,) and w.shape == (2, 2)
        assert_allclose(w[1], [0.0, 0.0])
        assert w[0, 0] * wt[0, 1] - w[0, 1] * wt[0, 0] == pytest.approx(0.0)  # direction kept


class TestMonotoneRoot:
    def test_cubic(self):
        root = monotone_root(lambda z: (z**3 - 2, 3 * z**2), 0.0, 2.0, x0=1.5)
        assert root == pytest.approx(2 ** (1 / 3), abs=1e-12)

    def test_reports_failure(self):
        with pytest.raises(NumericError) as err:
            monotone_root(lambda z: (z - 5.0, np.ones_like(z)), 0.0, 1.0, maxit=5)
        assert err.value.trace and err.value.residual > 0


def test_growth_constants_sandwich(rng):
    spec = varied_spec(1.5, 3.0)
    consts = estimate_growth_constants(spec, samples=500, seed=1)
    C = consts["C_fstar"]
    a = rng.uniform(-20, 20, 300)
    vals = coupling_conjugate(spec, rng.random(300), a)
    assert np.all(vals <= C * np.abs(a) ** spec.p + C + 1e-9)
    assert consts["C_hstar"] >= 1.0


def test_conjugate_table_binds_spec():
    table = conjugate_table(LINEAR)
    assert table.fstar(0.0, 2.0) == pytest.approx(2.0)
    assert table.hstar(0.0, 3.0) == pytest.approx(4.5)
    assert table.perspective(0.0, 2.0, 2.0) == pytest.approx(1.0)
