import numpy as np
import pytest
from hypothesis import given, strategies as st

from hmm_elast.material import (MaterialError, analytical_laminate_field, isotropic_plane_strain,
                                laminate_exact_tensor, matrix_inclusion_field, nonuniform_field,
                                nonuniform_modulus)


def test_isotropic_nu_zero():
    assert np.allclose(isotropic_plane_strain(7.0, 0.0).c, np.diag([7.0, 7.0, 3.5]))


def test_isotropic_beam_matrix():
    c = isotropic_plane_strain(40000, 0.2).c
    f = 40000 / (1.2 * 0.6)
    assert np.isclose(c[0, 0], 0.8 * f) and np.isclose(c[1, 1], 44444.444444444445)
    assert np.isclose(c[0, 1], 11111.111111111111)
    assert np.isclose(c[2, 2], 16666.666666666668)


@given(st.floats(1e-3, 1e6), st.floats(0.0, 0.49))
def test_isotropic_spd(E, nu):
    c = isotropic_plane_strain(E, nu).c
    assert np.array_equal(c, c.T)
    assert np.linalg.eigvalsh(c).min() > 0


@pytest.mark.parametrize("E, nu", [(-1, 0.2), (1, 0.5), (1, -0.1)])
def test_isotropic_invalid(E, nu):
    with pytest.raises(MaterialError):
        isotropic_plane_strain(E, nu)


def test_inclusion_equal_moduli_is_constant():
    f = matrix_inclusion_field(3e4, 3e4, 0.2, 5.0)
    pts = np.random.default_rng(0).uniform(-2.5, 2.5, (50, 2))
    assert np.allclose(f((0, 0), pts), isotropic_plane_strain(3e4, 0.2).c)


def test_inclusion_centre_and_corner():
    f = matrix_inclusion_field(1e5, 4e4, 0.2, 5.0, 0.25)
    assert np.allclose(f((0, 0), [0, 0])[0], isotropic_plane_strain(1e5, 0.2).c)
    assert np.allclose(f((0, 0), [2.5, 2.5])[0], isotropic_plane_strain(4e4, 0.2).c)


def test_inclusion_volume_fraction_on_grid():
    from hmm_elast import fem
    from hmm_elast.mesh import build_structured_quads

    f = matrix_inclusion_field(1e5, 4e4, 0.2, 5.0, 0.25)
    m = build_structured_quads(32, 32, (-2.5, -2.5), (5, 5))
    q = fem.gauss_quad(m.kind)
    N, _ = fem.shape_eval(m.kind, q.points)
    xq = fem.quadrature_points(m.element_coords(), N).reshape(-1, 2)
    inside = f((0, 0), xq)[:, 0, 0] == isotropic_plane_strain(1e5, 0.2).c[0, 0]
    assert inside.mean() == 1 / 16


def test_laminate_values():
    f = analytical_laminate_field(1.0)
    assert np.isclose(f((0, 0), [0, 0])[0, 0, 0], 100.0)
    x = np.column_stack([np.linspace(-0.5, 0.5, 20001)[:-1], np.zeros(20000)])
    c = f((0, 0), x)
    assert np.isclose(np.mean(1 / c[:, 0, 0]), 1 / 100, rtol=1e-12)
    assert np.isclose(np.mean(c[:, 0, 0]), 500 / np.sqrt(25 - 3.5 ** 2), rtol=1e-12)
    assert np.allclose(c[:, 0, 1], 35) and np.allclose(c[:, 2, 2], 50)


def test_laminate_exact_tensor():
    A = laminate_exact_tensor()
    assert np.isclose(A[1, 1], 140.0280, atol=1e-4)
    assert A[0, 0] == 100.0


def test_nonuniform_origin_and_symmetry():
    assert nonuniform_modulus(np.array([0.0, 0.0]), 0.1) == 3.0
    x = np.array([0.013, 0.071])
    assert np.isclose(nonuniform_modulus(x, 0.1), nonuniform_modulus(x[::-1], 0.1))


def test_nonuniform_depends_on_macro_point():
    f = nonuniform_field(0.05)
    assert not f.uniform
    a, b = f((0.1, 0.2), [0.01, 0.0]), f((0.3, 0.2), [0.01, 0.0])
    assert not np.allclose(a, b)


def test_uniform_fields_ignore_macro_point():
    for f in (analytical_laminate_field(0.1), matrix_inclusion_field(1e5, 4e4, 0.2, 5)):
        pts = np.random.default_rng(3).uniform(-0.05, 0.05, (10, 2))
        assert f.uniform
        assert np.array_equal(f((0, 0), pts), f((123.0, -4.0), pts))


def test_deterministic():
    f = nonuniform_field(0.005)
    pts = np.random.default_rng(5).uniform(-1, 1, (100, 2))
    assert np.array_equal(f((0.2, 0.1), pts), f((0.2, 0.1), pts))
