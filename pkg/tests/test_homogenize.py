import numpy as np
import pytest

from hmm_elast.homogenize import (a0h_convergence, homogenized_tensor_condensation,
                                  homogenized_tensor_unit_strain, volumetric_mean)
from hmm_elast.material import (ConstantField, analytical_laminate_field, isotropic_plane_strain,
                                matrix_inclusion_field, nonuniform_field)
from hmm_elast.micro import MicroCell

C = isotropic_plane_strain(3e4, 0.25).c


def test_constant_material_collapses():
    cell = MicroCell(2.0, ConstantField(C, 2.0), resolution=6)
    assert np.allclose(homogenized_tensor_unit_strain(cell).A0h, C, rtol=1e-10)
    assert np.allclose(volumetric_mean(cell), C)
    assert np.allclose(homogenized_tensor_condensation(cell).A0h, C, rtol=1e-10)


def test_laminate_160():
    cell = MicroCell(1.0, analytical_laminate_field(1.0), resolution=160)
    A = homogenized_tensor_unit_strain(cell).A0h
    assert abs(A[0, 0] - 100.0037) <= 1e-3
    assert abs(A[1, 1] - 140.0280) <= 1e-3
    assert abs(A[0, 1] - 35) <= 1e-9 and abs(A[2, 2] - 50) <= 1e-9
    assert abs(volumetric_mean(cell)[0, 0] - 140.0280) <= 1e-3


def test_inclusion_16():
    cell = MicroCell(5.0, matrix_inclusion_field(1e5, 4e4, 0.2, 5.0), resolution=16)
    A = homogenized_tensor_unit_strain(cell)
    for name, ref in {"A11": 46721.57, "A12": 11662.05, "A33": 17443.96}.items():
        assert A.component(name) == pytest.approx(ref, rel=5e-4)


@pytest.mark.parametrize("field, x", [
    (analytical_laminate_field(1.0), (0, 0)),
    (matrix_inclusion_field(1e5, 4e4, 0.2, 5.0), (0, 0)),
    (nonuniform_field(0.005), (0.3125, 0.1875)),
])
def test_route_equivalence(field, x):
    cell = MicroCell(field.eps, field, x, resolution=32)
    A = homogenized_tensor_unit_strain(cell).A0h
    B = homogenized_tensor_condensation(cell).A0h
    assert np.abs(A - B).max() <= 1e-8 * np.abs(A).max()


def test_tensor_symmetric_and_below_voigt():
    cell = MicroCell(5.0, matrix_inclusion_field(1e5, 4e4, 0.2, 5.0), resolution=12)
    A = homogenized_tensor_unit_strain(cell).A0h
    assert np.allclose(A, A.T, rtol=1e-12)
    assert np.linalg.eigvalsh(volumetric_mean(cell) - A).min() >= -1e-8 * np.abs(A).max()


def test_laminate_order_two():
    out = a0h_convergence(analytical_laminate_field(1.0), [10, 20, 40], 320)
    assert out["orders"]["A11"] == pytest.approx(2.0, abs=0.1)
    e = out["errors"]["A11"]
    assert 3.5 < e[0] / e[1] < 4.5


def test_constant_convergence_errors_vanish():
    out = a0h_convergence(ConstantField(C, 1.0), [2, 4, 8], 16)
    for errs in out["errors"].values():
        assert max(errs) < 1e-12 * np.abs(C).max()


def test_reference_must_be_finest():
    with pytest.raises(ValueError):
        a0h_convergence(analytical_laminate_field(1.0), [4, 8], 8)
