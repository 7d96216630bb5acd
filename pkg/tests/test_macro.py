import numpy as np
import pytest

from hmm_elast import benchmarks as bm, fem
from hmm_elast.macro import (TENSOR, TRANSFER, MacroProblem, assemble_fehmm, reactions, solve_macro,
                             solve_reference_singlescale)
from hmm_elast.material import ConstantField, isotropic_plane_strain, matrix_inclusion_field
from hmm_elast.mesh import build_structured_quads
from hmm_elast.postprocess import norm

C = isotropic_plane_strain(4e4, 0.2).c


def cantilever(field, nx=6, ny=2, mode=TRANSFER, load=(0, -1), resolution=4):
    m = build_structured_quads(nx, ny, (0, 0), (30, 10))
    return MacroProblem(m, field, resolution, dirichlet=[("left", (0, 1), 0.0)],
                        tractions=[("right", load)], mode=mode)


@pytest.mark.parametrize("mode", [TRANSFER, TENSOR])
def test_constant_material_equals_singlescale(mode):
    p = cantilever(ConstantField(C, 5.0), mode=mode)
    K, _, _ = assemble_fehmm(p)
    ref = fem.assemble_stiffness(p.mesh, C)
    assert abs(K - ref).max() <= 1e-9 * abs(ref).max()
    a = solve_macro(p)
    b = solve_reference_singlescale(p.mesh, C, p.dirichlet, p.tractions)
    assert np.allclose(a.D, b.D, rtol=1e-9, atol=1e-9 * np.abs(b.D).max())


def test_zero_load_zero_solution():
    sol = solve_macro(cantilever(matrix_inclusion_field(1e5, 4e4, 0.2, 5.0), load=(0, 0)))
    assert not np.any(sol.D)


def test_linearity_in_load():
    f = matrix_inclusion_field(1e5, 4e4, 0.2, 5.0)
    a = solve_macro(cantilever(f, load=(0, -1)))
    b = solve_macro(cantilever(f, load=(0, -2)))
    assert np.allclose(b.D, 2 * a.D, rtol=1e-12, atol=1e-14)


def test_transfer_equals_tensor_mode():
    f = matrix_inclusion_field(1e5, 4e4, 0.2, 5.0)
    a = solve_macro(cantilever(f, mode=TRANSFER))
    b = solve_macro(cantilever(f, mode=TENSOR))
    assert np.abs(a.D - b.D).max() <= 1e-9 * np.abs(b.D).max()


def test_equilibrium_of_reactions():
    sol = solve_macro(cantilever(matrix_inclusion_field(1e5, 4e4, 0.2, 5.0)))
    R = reactions(sol).reshape(-1, 2)
    left = sol.mesh.nodes_on("left")
    applied = sol.F.reshape(-1, 2)[sol.mesh.nodes_on("right")].sum(axis=0)
    assert np.allclose(R[left].sum(axis=0), -applied, rtol=1e-8)


def test_cache_does_not_change_result():
    f = matrix_inclusion_field(1e5, 4e4, 0.2, 5.0)
    p = cantilever(f)
    a = solve_macro(p)
    p.cache = False
    b = solve_macro(p)
    assert np.array_equal(a.D, b.D) or np.allclose(a.D, b.D, rtol=1e-13)


def test_threads_identical():
    f = bm.plate_nonuniform(eps=0.05).field
    m = build_structured_quads(3, 3, (-0.5, -0.5), (1, 1))
    kw = dict(dirichlet=[("left", (0, 1), 0.0)], tractions=[("right", (0, -0.01))])
    a = solve_macro(MacroProblem(m, f, 4, threads=1, **kw))
    b = solve_macro(MacroProblem(m, f, 4, threads=3, **kw))
    assert np.array_equal(a.D, b.D)


def test_beam_table_values(beam_50x10):
    assert norm(beam_50x10.mesh, beam_50x10.D, "max") == pytest.approx(11.7997, rel=5e-3)
    assert beam_50x10.energy() == pytest.approx(1080.26, rel=5e-3)


def test_plate_table_values(plate_20x20):
    assert norm(plate_20x20.mesh, plate_20x20.D, "max") == pytest.approx(77.7902e-3, rel=5e-3)
    assert plate_20x20.energy() == pytest.approx(81.6746e-3, rel=5e-3)


def test_plate_modes_agree(plate_20x20):
    from hmm_elast.studies import solve_one

    t = solve_one(bm.plate_laminate(), 20, 20, 20, TENSOR)
    assert abs(norm(t.mesh, t.D, "max") / norm(plate_20x20.mesh, plate_20x20.D, "max") - 1) <= 1e-9


def test_rejects_bad_mode():
    with pytest.raises(ValueError):
        cantilever(ConstantField(C), mode="nope")
