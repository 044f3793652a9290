import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from discount_mfg.errors import UsageError
from discount_mfg.example import example_density
from discount_mfg.grid import (
    CELL,
    FACE,
    NODE,
    Field,
    TorusGrid,
    discrete_divergence,
    discrete_gradient,
    dump_field,
    field_from_csv,
    field_to_csv,
    inner,
    integrate,
    l1_distance_to_function,
    l1_norm,
    l2_norm,
    laplacian_symbol,
    load_field,
    mean_zero,
    sobolev_h1_norm,
    sobolev_h1_seminorm,
    sup_norm,
)


def test_grid_geometry():
    g = TorusGrid(8, 2)
    assert g.h == 0.125
    assert g.shape == (8, 8) and g.face_shape == (2, 8, 8)
    assert_allclose(g.cell_volume * g.size, 1.0, rtol=0, atol=1e-15)
    assert_allclose(g.cell_centers()[0, 0], [1 / 16, 1 / 16])
    assert_allclose(g.face_centers(0)[-1, 0], [0.0, 1 / 16])  # last face wraps onto x = 0


@pytest.mark.parametrize("n, d", [(0, 1), (3.5, 1), (4, 3)])
def test_grid_rejects_bad_shapes(n, d):
    with pytest.raises(UsageError):
        TorusGrid(n, d)


def test_gradient_hand_example():
    g = TorusGrid(4)
    grad = discrete_gradient(g.cell([0, 1, 2, 1]))
    assert grad.kind == FACE
    assert_allclose(grad.values[0], [4, 4, -4, -4])


def test_divergence_hand_example():
    # face 0 sits between cells 0 and 1, so a unit flux there leaves cell 0 and enters cell 1
    g = TorusGrid(4)
    div = discrete_divergence(g.face([[1, 0, 0, 0]]))
    assert div.kind == CELL
    assert_allclose(div.values, [4, -4, 0, 0])


@pytest.mark.parametrize("d", [1, 2])
def test_constants_in_kernels(d):
    g = TorusGrid(6, d)
    assert sup_norm(discrete_gradient(g.constant(3.2))) == 0.0
    assert sup_norm(discrete_divergence(g.constant(-1.5, FACE))) == 0.0


def test_gradient_first_order_truncation():
    errors = []
    for n in (64, 128, 256):
        g = TorusGrid(n)
        grad = discrete_gradient(g.sample(lambda x: np.sin(2 * np.pi * x)))
        exact = g.sample(lambda x: 2 * np.pi * np.cos(2 * np.pi * x), FACE)
        errors.append(sup_norm(grad - exact))
    assert errors[-1] <= 10 * (1 / 256)
    # the face-centred quotient is in fact second order
    assert errors[0] / errors[1] > 1.9 and errors[1] / errors[2] > 1.9


@given(n=st.integers(4, 40), d=st.sampled_from([1, 2]), seed=st.integers(0, 2**31))
def test_summation_by_parts(n, d, seed):
    rng = np.random.default_rng(seed)
    g = TorusGrid(n, d)
    phi = g.cell(rng.standard_normal(g.shape))
    w = g.face(rng.standard_normal(g.face_shape))
    lhs = inner(discrete_divergence(w), phi)
    rhs = -inner(w, discrete_gradient(phi))
    assert abs(lhs - rhs) <= 1e-13 * l2_norm(w) * l2_norm(discrete_gradient(phi)) + 1e-300


@given(n=st.integers(4, 32), seed=st.integers(0, 2**31))
def test_divergence_is_mean_zero(n, seed):
    g = TorusGrid(n, 2)
    w = g.face(np.random.default_rng(seed).standard_normal(g.face_shape))
    assert abs(integrate(discrete_divergence(w))) <= 1e-12 * (1 + sup_norm(w) * n)


def test_integrate_and_mean_zero():
    g = TorusGrid(128)
    assert integrate(g.constant(1.0)) == pytest.approx(1.0, abs=1e-15)
    assert abs(integrate(g.sample(lambda x: np.sin(2 * np.pi * x)))) <= 1e-12
    u = g.sample(lambda x: x**2 + 3)
    assert abs(integrate(mean_zero(u))) <= 1e-14


def test_h1_seminorm_examples():
    assert sobolev_h1_seminorm(TorusGrid(16).constant(2.0)) == 0.0
    g = TorusGrid(256)
    assert sobolev_h1_seminorm(g.sample(lambda x: np.sin(2 * np.pi * x))) == pytest.approx(np.sqrt(2) * np.pi, abs=1e-2)
    # one triangle of the example density: height 4, slopes +-32 over total length 1/4
    g = TorusGrid(1024)
    tent = g.sample(lambda x: example_density(x) * (np.abs(x - 0.5) < 0.25))
    assert sobolev_h1_seminorm(tent) ** 2 == pytest.approx(256.0, rel=2e-2)
    assert sobolev_h1_norm(tent) > sobolev_h1_seminorm(tent)


def test_norms():
    g = TorusGrid(4)
    f = g.cell([1.0, -2.0, 0.0, 3.0])
    assert l1_norm(f) == pytest.approx(1.5)
    assert l2_norm(f) == pytest.approx(np.sqrt(14 / 4))
    assert sup_norm(f) == 3.0


def test_l1_distance_to_function_piecewise_constant():
    g = TorusGrid(8)
    assert l1_distance_to_function(g.constant(0.0), lambda x: np.ones_like(x)) == pytest.approx(1.0)
    # piecewise-constant sampling of x has continuum L1 error h/4
    f = g.sample(lambda x: x)
    assert l1_distance_to_function(f, lambda x: x, subcells=256) == pytest.approx(g.h / 4, rel=1e-3)


def test_laplacian_symbol_matches_stencil(rng):
    g = TorusGrid(16)
    u = rng.standard_normal(g.shape)
    lap = -discrete_divergence(discrete_gradient(g.cell(u))).values
    spectral = np.fft.irfft(np.fft.rfft(u) * laplacian_symbol(g), n=16)
    assert_allclose(lap, spectral, atol=1e-10)


def test_field_kind_and_grid_checks():
    g, g2 = TorusGrid(4), TorusGrid(8)
    with pytest.raises(UsageError):
        g.cell(np.zeros(5))
    with pytest.raises(UsageError):
        g.cell(np.zeros(4)) + g.face(np.zeros((1, 4)))
    with pytest.raises(UsageError):
        g.cell(np.zeros(4)) + g2.cell(np.zeros(8))
    with pytest.raises(UsageError):
        discrete_gradient(g.face(np.zeros((1, 4))))
    with pytest.raises(UsageError):
        discrete_divergence(g.cell(np.zeros(4)))


def test_field_is_immutable():
    f = TorusGrid(4).cell([1, 2, 3, 4])
    with pytest.raises(ValueError):
        f.values[0] = 7.0
    with pytest.raises(AttributeError):
        f.values = np.zeros(4)


def test_field_arithmetic():
    g = TorusGrid(4)
    a, b = g.cell([1, 2, 3, 4]), g.cell([1, 1, 1, 1])
    assert_array_equal((a - b).values, [0, 1, 2, 3])
    assert_array_equal((2 * a).values, [2, 4, 6, 8])
    assert (a + 0) == a


@pytest.mark.parametrize("kind, d", [(CELL, 1), (FACE, 1), (CELL, 2), (FACE, 2), (NODE, 1)])
def test_binary_round_trip(tmp_path, rng, kind, d):
    g = TorusGrid(5, d)
    f = Field(kind, rng.standard_normal(g.shape_for(kind)), g)
    back = load_field(dump_field(f, tmp_path / "f.bin"))
    assert back.kind == kind and back.grid == g
    assert_array_equal(back.values, f.values)


def test_binary_header_layout(tmp_path):
    g = TorusGrid(3)
    raw = dump_field(g.cell([1.0, 2.0, 3.0]), tmp_path / "f.bin").read_bytes()
    assert raw[:4] == b"MFGF"
    assert len(raw) == 12 + 3 * 8
    assert np.frombuffer(raw[12:], "<f8").tolist() == [1.0, 2.0, 3.0]


@pytest.mark.parametrize("kind, d", [(CELL, 1), (FACE, 1), (CELL, 2), (FACE, 2)])
def test_csv_round_trip_is_exact(tmp_path, rng, kind, d):
    g = TorusGrid(6, d)
    f = Field(kind, rng.standard_normal(g.shape_for(kind)), g)
    back = field_from_csv(field_to_csv(f, tmp_path / "f.csv"), kind, d)
    assert_array_equal(back.values, f.values)


def test_csv_layout(tmp_path):
    path = field_to_csv(TorusGrid(4).face([[1, 2, 3, 4]]), tmp_path / "w.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "axis,i,x,value"
    assert lines[1] == "0,0,0.25,1.0"


def test_corrupt_binary_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"XXXX" + bytes(20))
    with pytest.raises(UsageError):
        load_field(path)
