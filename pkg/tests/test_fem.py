import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from hmm_elast import fem
from hmm_elast.material import isotropic_plane_strain
from hmm_elast.mesh import build_structured_quads

C = isotropic_plane_strain(1000.0, 0.3).c


def oracle_q1(xe, c, n=4):
    # independent: explicit bilinear shape functions, n x n Gauss
    g, w = np.polynomial.legendre.leggauss(n)
    k = np.zeros((8, 8))
    sx, sy = np.array([-1, 1, 1, -1]), np.array([-1, -1, 1, 1])
    for a, wa in zip(g, w):
        for b, wb in zip(g, w):
            dxi = 0.25 * sx * (1 + b * sy)
            deta = 0.25 * sy * (1 + a * sx)
            J = np.array([dxi @ xe, deta @ xe])
            dx = np.linalg.solve(J, np.array([dxi, deta]))
            B = np.zeros((3, 8))
            B[0, 0::2], B[1, 1::2] = dx[0], dx[1]
            B[2, 0::2], B[2, 1::2] = dx[1], dx[0]
            k += wa * wb * np.linalg.det(J) * B.T @ c @ B
    return k


def test_shape_values():
    N, _ = fem.shape_eval("Q1", [0, 0])
    assert np.allclose(N, 0.25)
    N, _ = fem.shape_eval("Q1", [-1, -1])
    assert np.allclose(N, [1, 0, 0, 0])
    N, _ = fem.shape_eval("T3", [1 / 3, 1 / 3])
    assert np.allclose(N, 1 / 3)


def test_shape_outside_rejected():
    with pytest.raises(ValueError):
        fem.shape_eval("Q1", [1.5, 0])


def test_unit_q1_against_dense_oracle():
    xe = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
    k = fem.element_stiffness(xe, np.eye(3))
    assert np.allclose(k, oracle_q1(xe, np.eye(3)), atol=1e-13)


def test_distorted_q1_against_dense_oracle():
    xe = np.array([[0, 0], [2, 0.2], [2.3, 1.4], [-0.1, 1.1]])
    k = fem.element_stiffness(xe, C)
    # same 2x2 rule: a non-affine map is not integrated exactly
    assert np.allclose(k, oracle_q1(xe, C, n=2), rtol=1e-12, atol=1e-9)
    assert not np.allclose(k, oracle_q1(xe, C, n=4), rtol=1e-6)


def test_rigid_modes_in_kernel():
    xe = np.array([[0, 0], [2, 0.2], [2.3, 1.4], [-0.1, 1.1]])
    k = fem.element_stiffness(xe, C)
    tx = np.tile([1.0, 0.0], 4)
    rot = np.column_stack([-xe[:, 1], xe[:, 0]]).ravel()
    scale = np.abs(k).max()
    assert np.abs(k @ tx).max() <= 1e-12 * scale
    assert np.abs(k @ rot).max() <= 1e-12 * scale * 3
    ev = np.linalg.eigvalsh(k)
    assert np.sum(ev < 1e-10 * ev.max()) == 3


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_scaling_invariance(s):
    xe = np.array([[0, 0], [2, 0.2], [2.3, 1.4], [-0.1, 1.1]])
    assert np.allclose(fem.element_stiffness(s * xe, C), fem.element_stiffness(xe, C), rtol=1e-9)


def test_single_element_assembly():
    m = build_structured_quads(1, 1)
    K = fem.assemble_stiffness(m, C).toarray()
    d = fem.element_dofs(m.conn)[0]
    assert np.allclose(K[np.ix_(d, d)], fem.element_stiffness(m.element_coords()[0], C))


def test_two_element_assembly_dense_oracle():
    m = build_structured_quads(2, 1, lengths=(2, 1))
    K = fem.assemble_stiffness(m, C).toarray()
    ref = np.zeros((12, 12))
    for row in m.conn:
        d = np.column_stack([2 * row, 2 * row + 1]).ravel()
        ref[np.ix_(d, d)] += oracle_q1(m.coords[row], C)
    assert np.allclose(K, ref, atol=1e-9)


def test_assembly_psd(rng):
    m = build_structured_quads(4, 3)
    K = fem.assemble_stiffness(m, C)
    U = rng.standard_normal((K.shape[0], 1000))
    assert np.all(np.einsum("ij,ij->j", U, K @ U) >= -1e-9)


def test_load_zero_and_resultant():
    m = build_structured_quads(50, 10, (0, 0), (5000, 1000))
    assert not np.any(fem.assemble_load(m))
    F = fem.assemble_load(m, tractions=[("right", (0, -1))], thickness=100)
    assert np.isclose(F[1::2].sum(), -1e5) and np.isclose(F[0::2].sum(), 0)
    assert np.all(F.reshape(-1, 2)[m.nodes_on("left")] == 0)


def test_load_linearity():
    m = build_structured_quads(3, 3)
    a = fem.assemble_load(m, tractions=[("right", (1, 2))])
    b = fem.assemble_load(m, tractions=[("top", (0.5, -1))])
    both = fem.assemble_load(m, tractions=[("right", (1, 2)), ("top", (0.5, -1))])
    assert np.allclose(both, a + b)


def test_body_force_resultant():
    m = build_structured_quads(3, 2, lengths=(3, 2))
    F = fem.assemble_load(m, body_force=(0, -2), thickness=0.5)
    assert np.isclose(F[1::2].sum(), -2 * 6 * 0.5)


def test_all_fixed_returns_values():
    m = build_structured_quads(2, 2)
    K = fem.assemble_stiffness(m, C)
    vals = np.arange(K.shape[0], dtype=float)
    D = fem.solve_dirichlet(K, np.zeros(K.shape[0]), (np.arange(K.shape[0]), vals))
    assert np.array_equal(D, vals)


def test_homogeneous_problem_zero():
    m = build_structured_quads(3, 3)
    K = fem.assemble_stiffness(m, C)
    fixed = np.concatenate([2 * m.nodes_on("left"), 2 * m.nodes_on("left") + 1])
    D = fem.solve_dirichlet(K, np.zeros(K.shape[0]), (fixed, np.zeros(len(fixed))))
    assert not np.any(D)


def test_stretched_element_against_dense_solve():
    m = build_structured_quads(1, 1)
    K = fem.assemble_stiffness(m, C)
    left, right = m.nodes_on("left"), m.nodes_on("right")
    dofs = np.concatenate([2 * left, 2 * left + 1, 2 * right])
    vals = np.concatenate([np.zeros(4), np.full(2, 0.01)])
    D = fem.solve_dirichlet(K, np.zeros(8), (dofs, vals))
    Kd = K.toarray()
    free = np.setdiff1d(np.arange(8), dofs)
    ref = np.zeros(8)
    ref[dofs] = vals
    ref[free] = np.linalg.solve(Kd[np.ix_(free, free)], -Kd[np.ix_(free, dofs)] @ vals)
    assert np.allclose(D, ref, atol=1e-15)
    R = Kd @ D
    assert np.isclose(R[2 * right].sum(), -R[2 * left].sum())


def test_amg_matches_direct():
    m = build_structured_quads(40, 8, (0, 0), (5, 1))
    K = fem.assemble_stiffness(m, C)
    F = fem.assemble_load(m, tractions=[("right", (0, -1))])
    left = m.nodes_on("left")
    fixed = (np.concatenate([2 * left, 2 * left + 1]), np.zeros(2 * len(left)))
    a = fem.solve_dirichlet(K, F, fixed, method="direct")
    b = fem.solve_dirichlet(K, F, fixed, coords=m.coords, method="amg")
    assert np.allclose(a, b, rtol=1e-8, atol=1e-10 * np.abs(a).max())


def test_saddle_by_hand():
    d, lam = fem.solve_saddle(sp.identity(2), sp.csr_matrix([[1.0, 1.0]]), np.array([1.0]))
    assert np.allclose(d, [0.5, 0.5]) and np.allclose(lam, [-0.5])


def test_saddle_singular_reports():
    G = sp.csr_matrix([[1.0, 1.0], [2.0, 2.0]])
    with pytest.raises(fem.SolverError):
        fem.solve_saddle(sp.identity(2), G, np.array([1.0, 2.0]))
