"""Micro cells, periodic coupling, macro-driven micro solves and stiffness transfer."""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fem
from .mesh import Q1, Mesh, PeriodicPairing, build_periodic_pairing, build_structured_quads
from .material import MicroMaterialField


class MicroCell:
    """Centre-independent part of a microdomain: mesh in cell-local
    coordinates, stiffness, coupling matrix and the KKT factorization.

    For a uniformly periodic field one cell serves every microdomain of
    the same size and resolution.
    """

    def __init__(self, delta: float, field: MicroMaterialField, center=(0.0, 0.0),
                 resolution: int | None = None, mesh: Mesh | None = None):
        self.delta = float(delta)
        self.field = field
        self.center = np.asarray(center, dtype=float).reshape(2)
        if mesh is None:
            if resolution is None or resolution < 1:
                raise ValueError("micro resolution must be >= 1")
            h = 0.5 * self.delta
            mesh = build_structured_quads(resolution, resolution, (-h, -h), (self.delta, self.delta))
        else:
            lo, hi = mesh.bbox()
            mid = 0.5 * (lo + hi)
            mesh = Mesh(mesh.coords - mid, mesh.conn, mesh.kind, phase=mesh.phase, edges=mesh.edges,
                        node_ids=mesh.node_ids, elem_ids=mesh.elem_ids)
        self.mesh = mesh  # local coordinates, cell centred at the origin
        self.resolution = resolution
        self.pairing: PeriodicPairing = build_periodic_pairing(mesh, self.delta)
        self.volume = self.delta ** 2
        self._lock = threading.Lock()
        self._K = None
        self._G = None
        self._solver = None
        self._strain_states = None

    @property
    def y(self) -> np.ndarray:
        """Node offsets from the cell centre."""
        return self.mesh.coords

    def material(self, pts_local: np.ndarray) -> np.ndarray:
        return self.field(self.center, pts_local)

    def _coefficient(self):
        # phase-tagged meshes carry their material per element
        per_elem = getattr(self.field, "element_tensors", None)
        return per_elem(self.mesh) if per_elem is not None else self.material

    def quad_data(self):
        """(B, weights, C) at all micro quadrature points, flattened."""
        m = self.mesh
        quad = fem.gauss_quad(m.kind)
        N, dN = fem.shape_eval(m.kind, quad.points)
        xe = m.element_coords()
        B, det, _ = fem.b_matrices(xe, dN)
        C = fem.material_at(self._coefficient(), fem.quadrature_points(xe, N))
        return B, det * quad.weights, C

    @property
    def K(self) -> sp.csr_matrix:
        if self._K is None:
            self._K = fem.assemble_stiffness(self.mesh, self._coefficient())
        return self._K

    @property
    def G(self) -> sp.csr_matrix:
        if self._G is None:
            self._G = build_coupling_matrix(self)
        return self._G

    @property
    def solver(self) -> fem.SaddleSolver:
        with self._lock:
            if self._solver is None:
                self._solver = fem.SaddleSolver(self.K, self.G)
            return self._solver

    def solve(self, drive: np.ndarray) -> np.ndarray:
        """Constrained minimizer(s) for nodal drive column(s).

        Solved for the fluctuation w = d - drive (K w + G^T l = -K drive,
        G w = 0): rigid parts of the drive then contribute only round-off.
        """
        drive = np.asarray(drive, dtype=float)
        zero = np.zeros((self.G.shape[0],) + drive.shape[1:])
        w, _ = self.solver.solve(-(self.K @ drive), zero)
        return drive + w

    def linear_field(self, grad: np.ndarray) -> np.ndarray:
        """Nodal values of y -> grad @ y (grad is 2x2 displacement gradient)."""
        u = self.y @ np.asarray(grad, dtype=float).T
        return u.ravel()

    def strain_states(self) -> np.ndarray:
        """Micro solutions for the three unit Voigt strains (gamma = 1), (2M, 3)."""
        with self._lock:
            cached = self._strain_states
        if cached is None:
            grads = [np.array([[1.0, 0.0], [0.0, 0.0]]),
                     np.array([[0.0, 0.0], [0.0, 1.0]]),
                     np.array([[0.0, 0.5], [0.5, 0.0]])]
            drive = np.column_stack([self.linear_field(g) for g in grads])
            cached = self.solve(drive)
            with self._lock:
                self._strain_states = cached
        return cached


def build_coupling_matrix(cell: MicroCell) -> sp.csr_matrix:
    """Normalization rows (b_m weights) followed by periodic difference rows."""
    m = cell.mesh
    n = m.n_nodes
    nen = m.conn.shape[1]
    b = np.zeros(n)
    np.add.at(b, m.conn, np.repeat(m.element_areas()[:, None] / nen, nen, axis=1))
    pairs = cell.pairing.pairs
    L = len(pairs)
    rows, cols, vals = [], [], []
    for comp in range(2):
        rows.append(np.full(n, comp))
        cols.append(2 * np.arange(n) + comp)
        vals.append(b)
    for comp in range(2):
        r = 2 + 2 * np.arange(L) + comp
        rows += [r, r]
        cols += [2 * pairs[:, 1] + comp, 2 * pairs[:, 0] + comp]
        vals += [np.ones(L), -np.ones(L)]
    G = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(2 + 2 * L, 2 * n))
    return G.tocsr()


def normalization_weights(cell: MicroCell) -> np.ndarray:
    return np.asarray(cell.G[0, 0::2].todense()).ravel()


@dataclass
class MicroDomain:
    """Sampling cell at a macro quadrature point."""

    center: np.ndarray
    cell: MicroCell
    weight: float = 1.0

    @property
    def delta(self) -> float:
        return self.cell.delta

    @property
    def volume(self) -> float:
        return self.cell.volume


def macro_shape_at(xe: np.ndarray, x) -> tuple[np.ndarray, np.ndarray]:
    """Q1 shape values (4,) and physical gradients (4, 2) at physical point x."""
    xe = np.asarray(xe, dtype=float)
    x = np.asarray(x, dtype=float)
    xi = np.zeros(2)
    for _ in range(50):  # Newton inversion of the bilinear map
        N, dN = fem.shape_eval(Q1, np.clip(xi, -1, 1))
        r = N @ xe - x
        J = dN.T @ xe  # J[a, b] = d x_b / d xi_a
        step = np.linalg.solve(J.T, r)
        xi = xi - step
        if np.max(np.abs(step)) < 1e-15:
            break
    N, dN = fem.shape_eval(Q1, xi)
    J = dN.T @ xe
    grad = dN @ np.linalg.inv(J).T
    return N, grad


def macro_unit_displacement(macro_xe: np.ndarray, I: int, i: int, domain: MicroDomain) -> np.ndarray:
    """Micro nodal drive for the macro unit state (node I, direction i)."""
    N, grad = macro_shape_at(macro_xe, domain.center)
    return _unit_drives(N, grad, domain.cell.y)[:, 2 * I + i]


def _unit_drives(N: np.ndarray, grad: np.ndarray, y: np.ndarray) -> np.ndarray:
    # column 2I+i: (N_I + grad_I . y) e_i
    vals = N[None, :] + y @ grad.T  # (M, 4)
    D = np.zeros((2 * len(y), 2 * len(N)))
    D[0::2, 0::2] = vals
    D[1::2, 1::2] = vals
    return D


def macro_unit_drives(macro_xe: np.ndarray, domain: MicroDomain) -> np.ndarray:
    N, grad = macro_shape_at(macro_xe, domain.center)
    return _unit_drives(N, grad, domain.cell.y)


def solve_micro_states(domain: MicroDomain, macro_xe: np.ndarray):
    """Transfer matrix T (2M, 8) and K^mic for one microdomain."""
    drives = macro_unit_drives(macro_xe, domain)
    T = domain.cell.solve(drives)
    return T, domain.cell.K


def compress_stiffness(Ts, Ks, weights, volume: float) -> np.ndarray:
    """sum_l (w_l / |K_delta|) T_l^T K_l T_l, symmetrized.

    K annihilates constants, so each column's mean translation is removed
    before the product; this keeps round-off from the O(1) translation
    parts out of the compressed stiffness.
    """
    k = 0.0
    for T, K, w in zip(Ts, Ks, weights):
        Tc = _remove_translation(T)
        k = k + (w / volume) * (Tc.T @ (K @ Tc))
    return 0.5 * (k + k.T)


def _remove_translation(T: np.ndarray) -> np.ndarray:
    Tc = np.array(T, dtype=float)
    Tc[0::2] -= Tc[0::2].mean(axis=0)
    Tc[1::2] -= Tc[1::2].mean(axis=0)
    return Tc


def solve_micro_postprocess(domain: MicroDomain, u_e: np.ndarray, macro_xe: np.ndarray) -> np.ndarray:
    """Micro field u^h driven by the gradient part of the linearized macro field.

    The returned nodal field has zero weighted mean; the reconstructed
    total field is u^H(x_Kl) + u^h.
    """
    _, grad = macro_shape_at(macro_xe, domain.center)
    u = np.asarray(u_e, dtype=float).reshape(-1, 2)
    H = u.T @ grad  # displacement gradient at x_Kl
    return domain.cell.solve(domain.cell.linear_field(H))


def macro_value_at(macro_xe: np.ndarray, u_e: np.ndarray, x) -> np.ndarray:
    N, _ = macro_shape_at(macro_xe, x)
    return N @ np.asarray(u_e, dtype=float).reshape(-1, 2)


def cell_averages(cell: MicroCell, d: np.ndarray):
    """Volume averages <eps>, <sigma>, <sigma:eps> for nodal field(s) d."""
    B, w, C = cell.quad_data()
    dofs = fem.element_dofs(cell.mesh.conn)
    de = d[dofs]  # (ne, 2nen) or (ne, 2nen, k)
    eps = np.einsum("eqia,ea...->eqi...", B, de)
    sig = np.einsum("eqij,eqj...->eqi...", C, eps)
    V = cell.volume
    avg_eps = np.einsum("eq,eqi...->i...", w, eps) / V
    avg_sig = np.einsum("eq,eqi...->i...", w, sig) / V
    avg_work = np.einsum("eq,eqi...,eqi...->...", w, sig, eps) / V
    return avg_eps, avg_sig, avg_work


def hill_mandel_residual(cell: MicroCell, d: np.ndarray) -> float:
    """|<sigma:eps> - <sigma>:<eps>| / |<sigma:eps>| (Voigt, engineering shear)."""
    e, s, w = cell_averages(cell, d)
    if w == 0:
        return 0.0
    return float(abs(w - s @ e) / abs(w))


def dense_saddle_oracle(K, G, rhs_bottom):
    """Dense KKT solve used as an independent check on small cells."""
    K = np.asarray(K.todense() if sp.issparse(K) else K)
    G = np.asarray(G.todense() if sp.issparse(G) else G)
    n, m = K.shape[0], G.shape[0]
    A = np.block([[K, G.T], [G, np.zeros((m, m))]])
    rb = np.asarray(rhs_bottom, dtype=float)
    rt = np.zeros((n,) + rb.shape[1:])
    x = np.linalg.solve(A, np.concatenate([rt, rb]))
    return x[:n], x[n:]
