import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from discount_mfg.errors import DomainError, UsageError
from discount_mfg.functionals import (
    A_and_gradient,
    cell_hamiltonian,
    constraint_residual,
    evaluate_A,
    evaluate_A_ergodic,
    evaluate_B,
    project_feasible,
)
from discount_mfg.grid import TorusGrid, discrete_gradient, divergence_array
from discount_mfg.example import example_fields
from discount_mfg.problem import Potential, flat_spec, power_spec


def test_B_examples(spec, grid128):
    n = grid128.n
    # the example potential has zero mean, so B(1, 0) = F(1) = 1/2
    assert evaluate_B(spec, grid128, np.ones(n), np.zeros((1, n))) == pytest.approx(0.5, abs=1e-12)
    assert evaluate_B(spec, grid128, np.zeros(n), np.zeros((1, n))) == 0.0


def test_B_infinite_on_empty_face_with_flux():
    g = TorusGrid(8)
    m = np.zeros(8)
    w = np.zeros((1, 8))
    w[0, 3] = 1.0
    assert evaluate_B(flat_spec(), g, m, w) == math.inf


def test_B_rejects_negative_density():
    g = TorusGrid(8)
    with pytest.raises(DomainError):
        evaluate_B(flat_spec(), g, -np.ones(8), np.zeros((1, 8)))


def test_A_flat_constant():
    g = TorusGrid(32)
    for eps in (0.3, 0.05):
        assert evaluate_A(flat_spec(), g, np.full(32, 1 / eps), eps) == pytest.approx(-0.5, abs=1e-12)


def test_A_example_at_zero():
    # F*(V) = V_+^2 / 2 integrates to 4/3 on the example potential
    errs = [abs(evaluate_A(power_spec(V=Potential("example")), TorusGrid(n), np.zeros(n), 1.0) - 4 / 3)
            for n in (64, 128, 256)]
    assert errs[-1] <= 1e-3
    assert errs[0] > errs[1] > errs[2]


def test_A_rejects_bad_epsilon():
    with pytest.raises(DomainError):
        evaluate_A(flat_spec(), TorusGrid(8), np.zeros(8), 0.0)


def test_A_shape_checked():
    with pytest.raises(UsageError):
        evaluate_A(flat_spec(), TorusGrid(8), np.zeros(9), 0.1)


def test_A_ergodic_examples():
    g = TorusGrid(16)
    zero = np.zeros(16)
    assert evaluate_A_ergodic(flat_spec(), g, zero, -1.0) == pytest.approx(-0.5)
    # F*(H - lambda) vanishes once lambda exceeds sup H
    assert evaluate_A_ergodic(flat_spec(), g, zero, 10.0) == pytest.approx(10.0)


def test_A_ergodic_same_value_across_theta():
    g = TorusGrid(1024)
    spec = power_spec(V=Potential("example"))
    vals = []
    for theta in (0.125, 0.1875, 0.25, 0.3125, 0.375):
        u, _, _, du = example_fields(g, theta)
        vals.append(evaluate_A_ergodic(spec, g, u, 0.0, du=du))
    assert max(vals) - min(vals) <= 1e-10
    # H(Du) = m on these fields, so the value is the integral of m^2 / 2
    assert vals[0] == pytest.approx(4 / 3, abs=1e-3)


def test_cell_hamiltonian_average_of_one_sided():
    g = TorusGrid(4)
    u = np.array([0.0, 1.0, 0.0, 0.0])
    # one-sided quotients at cell 1 are +4 and -4, so K = (8 + 8) / 2
    hv = cell_hamiltonian(flat_spec(), g, u)
    assert hv[1] == pytest.approx(8.0)
    assert hv[0] == pytest.approx(0.5 * 0.5 * 16)


def test_cell_hamiltonian_two_dimensional_consistent():
    g = TorusGrid(64, 2)
    spec = power_spec(dimension=2)
    u = g.sample(lambda x: np.sin(2 * np.pi * x[..., 0]) * np.cos(2 * np.pi * x[..., 1]))
    x = g.cell_centers()
    exact = 0.5 * (2 * np.pi) ** 2 * (
        (np.cos(2 * np.pi * x[..., 0]) * np.cos(2 * np.pi * x[..., 1])) ** 2
        + (np.sin(2 * np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., 1])) ** 2)
    assert np.max(np.abs(cell_hamiltonian(spec, g, u) - exact)) <= 0.05 * np.max(exact)


@given(seed=st.integers(0, 2**31), eps=st.floats(0.01, 1.0))
@settings(max_examples=20)
def test_A_gradient_matches_finite_differences(seed, eps):
    g = TorusGrid(16)
    spec = power_spec(V=Potential("cosine", 0.7), q=3.0)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(16)
    value, grad, _, _ = A_and_gradient(spec, g, u, eps)
    assert value == pytest.approx(evaluate_A(spec, g, u, eps), rel=1e-13, abs=1e-13)
    d = 1e-6
    for i in rng.choice(16, 4, replace=False):
        e = np.zeros(16)
        e[i] = d
        fd = (evaluate_A(spec, g, u + e, eps) - evaluate_A(spec, g, u - e, eps)) / (2 * d)
        assert fd == pytest.approx(g.cell_volume * grad[i], rel=1e-5, abs=1e-7)


def test_A_gradient_zero_at_flat_solution():
    g = TorusGrid(16)
    _, grad, m, w = A_and_gradient(flat_spec(), g, np.full(16, 2.0), 0.5)
    assert_allclose(grad, 0.0, atol=1e-14)
    assert_allclose(m, 1.0)
    assert_allclose(w, 0.0)


@given(seed=st.integers(0, 2**31), eps=st.floats(0.01, 1.0), d=st.sampled_from([1, 2]))
@settings(max_examples=20)
def test_projection_is_feasible(seed, eps, d):
    g = TorusGrid(12, d)
    rng = np.random.default_rng(seed)
    m = rng.uniform(0.2, 2.0, g.shape)
    w = 0.3 * rng.standard_normal(g.face_shape)
    mp, wp, method = project_feasible(g, eps, m, w)
    assert method == "flux"
    assert constraint_residual(g, eps, mp, wp) <= 1e-10
    assert g.cell_volume * mp.sum() == pytest.approx(1.0)


@given(seed=st.integers(0, 2**31), eps=st.floats(0.02, 1.0))
@settings(max_examples=20)
def test_weak_duality(seed, eps):
    g = TorusGrid(16)
    spec = power_spec(V=Potential("example"))
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(16)
    m, w, _ = project_feasible(g, eps, rng.uniform(0.1, 2.0, 16), 0.5 * rng.standard_normal((1, 16)))
    assert evaluate_A(spec, g, u, eps) + evaluate_B(spec, g, m, w) >= -1e-10


def test_duality_equality_on_flat_saddle():
    g = TorusGrid(16)
    eps = 0.2
    m, w = np.ones(16), np.zeros((1, 16))
    assert constraint_residual(g, eps, m, w) == 0.0
    total = evaluate_A(flat_spec(), g, np.full(16, 1 / eps), eps) + evaluate_B(flat_spec(), g, m, w)
    assert abs(total) <= 1e-14


def test_constraint_residual_measures_divergence():
    g = TorusGrid(8)
    w = np.zeros((1, 8))
    w[0, 0] = 1.0
    res = constraint_residual(g, 0.1, np.ones(8), w)
    assert res == pytest.approx(np.sqrt(g.cell_volume * np.sum(divergence_array(w, g.h) ** 2)))
    assert discrete_gradient(g.constant(1.0)).values.sum() == 0.0
