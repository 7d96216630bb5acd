"""Shape functions, quadrature, element/global assembly and linear solves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Q1, T3, Mesh, MeshError


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Quadrature:
    points: np.ndarray
    weights: np.ndarray


def gauss_quad(kind: str, n: int | None = None) -> Quadrature:
    """Tensor Gauss-Legendre rule (Q1, default 2x2) or centroid rule (T3)."""
    if kind == Q1:
        g, w = np.polynomial.legendre.leggauss(2 if n is None else n)
        # xi varies fastest
        X, Y = np.meshgrid(g, g)
        WX, WY = np.meshgrid(w, w)
        return Quadrature(np.column_stack([X.ravel(), Y.ravel()]), (WX * WY).ravel())
    if kind == T3:
        if n in (None, 1):
            return Quadrature(np.array([[1 / 3, 1 / 3]]), np.array([0.5]))
        if n == 3:
            return Quadrature(np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]]), np.full(3, 1 / 6))
        raise ValueError("T3 rules: 1 or 3 points")
    raise MeshError(f"unsupported element kind {kind!r}")


def shape_eval(kind: str, xi) -> tuple[np.ndarray, np.ndarray]:
    """Shape values (..., nen) and parametric gradients (..., nen, 2)."""
    xi = np.asarray(xi, dtype=float)
    s, t = xi[..., 0], xi[..., 1]
    tol = 1e-12
    if kind == Q1:
        if np.any(np.abs(s) > 1 + tol) or np.any(np.abs(t) > 1 + tol):
            raise ValueError("point outside the reference quadrilateral")
        sx = np.array([-1.0, 1.0, 1.0, -1.0])
        tx = np.array([-1.0, -1.0, 1.0, 1.0])
        a = 1 + s[..., None] * sx
        b = 1 + t[..., None] * tx
        N = 0.25 * a * b
        dN = np.stack([0.25 * sx * b, 0.25 * tx * a], axis=-1)
        return N, dN
    if kind == T3:
        if np.any(s < -tol) or np.any(t < -tol) or np.any(s + t > 1 + tol):
            raise ValueError("point outside the reference triangle")
        N = np.stack([1 - s - t, s, t], axis=-1)
        dN = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), N.shape + (2,)).copy()
        return N, dN
    raise MeshError(f"unsupported element kind {kind!r}")


def b_matrices(xe: np.ndarray, dN: np.ndarray):
    """Strain-displacement matrices at quadrature points.

    xe: (ne, nen, 2) element coordinates; dN: (nq, nen, 2) parametric
    gradients. Returns B (ne, nq, 3, 2 nen), detJ (ne, nq) and physical
    gradients (ne, nq, nen, 2).
    """
    J = np.einsum("qna,enb->eqab", dN, xe)  # J[a,b] = d x_b / d xi_a
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0):
        raise MeshError("non-positive Jacobian determinant")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    G = np.einsum("eqab,qnb->eqna", inv, dN)  # dN/dx
    ne, nq, nen = G.shape[:3]
    B = np.zeros((ne, nq, 3, 2 * nen))
    B[..., 0, 0::2] = G[..., 0]
    B[..., 1, 1::2] = G[..., 1]
    B[..., 2, 0::2] = G[..., 1]
    B[..., 2, 1::2] = G[..., 0]
    return B, det, G


def quadrature_points(xe: np.ndarray, N: np.ndarray) -> np.ndarray:
    """Physical quadrature coordinates (ne, nq, 2)."""
    return np.einsum("qn,enb->eqb", N, xe)


def material_at(material, xq: np.ndarray) -> np.ndarray:
    """Broadcast a material spec to (ne, nq, 3, 3)."""
    ne, nq = xq.shape[:2]
    if callable(material):
        return np.asarray(material(xq.reshape(-1, 2))).reshape(ne, nq, 3, 3)
    c = np.asarray(material, dtype=float)
    if c.shape == (3, 3):
        return np.broadcast_to(c, (ne, nq, 3, 3))
    if c.shape == (ne, 3, 3):
        return np.broadcast_to(c[:, None], (ne, nq, 3, 3))
    if c.shape == (ne, nq, 3, 3):
        return c
    raise ValueError(f"cannot broadcast material of shape {c.shape}")


def element_stiffness_batch(xe: np.ndarray, kind: str, material, quad: Quadrature | None = None,
                            thickness: float = 1.0, chunk: int = 32768) -> np.ndarray:
    """Element stiffness matrices (ne, 2 nen, 2 nen)."""
    quad = quad or gauss_quad(kind)
    N, dN = shape_eval(kind, quad.points)
    ne, nen = xe.shape[:2]
    out = np.empty((ne, 2 * nen, 2 * nen))
    C_all = None if callable(material) else material_at(material, quadrature_points(xe, N))
    for s in range(0, ne, chunk):
        sl = slice(s, s + chunk)
        B, det, _ = b_matrices(xe[sl], dN)
        C = material_at(material, quadrature_points(xe[sl], N)) if C_all is None else C_all[sl]
        w = thickness * det * quad.weights
        out[sl] = np.einsum("eq,eqia,eqij,eqjb->eab", w, B, C, B, optimize=True)
    return out


def element_stiffness(coords, material, kind: str | None = None, quad: Quadrature | None = None) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    kind = kind or (Q1 if len(coords) == 4 else T3)
    return element_stiffness_batch(coords[None], kind, material, quad)[0]


def element_dofs(conn: np.ndarray) -> np.ndarray:
    ne, nen = conn.shape
    d = np.empty((ne, 2 * nen), dtype=np.int64)
    d[:, 0::2] = 2 * conn
    d[:, 1::2] = 2 * conn + 1
    return d


def assemble_matrices(conn: np.ndarray, ke: np.ndarray, ndof: int, chunk: int = 65536) -> sp.csr_matrix:
    """Scatter element matrices in element order; duplicate sums are order fixed.

    Large meshes are scattered in element blocks to bound the COO memory.
    """
    n = 2 * conn.shape[1]
    K = sp.csr_matrix((ndof, ndof))
    for s in range(0, len(conn), chunk):
        dofs = element_dofs(conn[s:s + chunk])
        rows = np.repeat(dofs, n, axis=1).ravel()
        cols = np.tile(dofs, (1, n)).ravel()
        if ke.ndim == 2:
            vals = np.tile(ke.ravel(), len(dofs))
        else:
            vals = ke[s:s + chunk].reshape(len(dofs), -1).ravel()
        block = sp.coo_matrix((vals, (rows, cols)), shape=(ndof, ndof)).tocsr()
        K = block if s == 0 else K + block
    K.sum_duplicates()
    return K


def assemble_stiffness(mesh: Mesh, material, thickness: float = 1.0) -> sp.csr_matrix:
    ke = element_stiffness_batch(mesh.element_coords(), mesh.kind, material, thickness=thickness)
    return assemble_matrices(mesh.conn, ke, 2 * mesh.n_nodes)


def assemble_load(mesh: Mesh, body_force=None, tractions: Sequence[tuple[str, Sequence[float]]] = (),
                  thickness: float = 1.0) -> np.ndarray:
    """Consistent nodal forces from a constant body force and edge tractions."""
    F = np.zeros(2 * mesh.n_nodes)
    if body_force is not None:
        b = np.asarray(body_force, dtype=float)
        if np.any(b):
            quad = gauss_quad(mesh.kind)
            N, dN = shape_eval(mesh.kind, quad.points)
            _, det, _ = b_matrices(mesh.element_coords(), dN)
            w = thickness * det * quad.weights  # (ne, nq)
            nodal = np.einsum("eq,qn->en", w, N)
            for i in range(2):
                np.add.at(F, 2 * mesh.conn + i, nodal * b[i])
    for tag, t in tractions:
        t = np.asarray(t, dtype=float)
        pairs = mesh.edge_nodes(tag)
        length = np.linalg.norm(mesh.coords[pairs[:, 1]] - mesh.coords[pairs[:, 0]], axis=1)
        share = 0.5 * thickness * length  # linear edge shape functions
        for i in range(2):
            np.add.at(F, 2 * pairs[:, 0] + i, share * t[i])
            np.add.at(F, 2 * pairs[:, 1] + i, share * t[i])
    return F


def _factor(A: sp.spmatrix):
    try:
        return spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:
        raise SolverError(f"singular system: {exc}") from None


DIRECT_LIMIT = 300_000  # free dofs above which "auto" switches to AMG-CG


def solve_dirichlet(K: sp.spmatrix, F: np.ndarray, fixed, coords: np.ndarray | None = None,
                    method: str = "auto", tol: float = 1e-11) -> np.ndarray:
    """Solve K D = F with prescribed dofs; ``fixed`` is (dofs, values) or pairs.

    ``method`` is "direct" (sparse LU), "amg" (smoothed-aggregation
    preconditioned CG, for SPD systems; ``coords`` adds rigid-body
    near-null vectors) or "auto".
    """
    dofs, vals = _split_fixed(fixed, K.shape[0])
    n = K.shape[0]
    D = np.zeros(n) if F.ndim == 1 else np.zeros((n, F.shape[1]))
    free = np.ones(n, dtype=bool)
    free[dofs] = False
    D[dofs] = vals if F.ndim == 1 else np.asarray(vals)[:, None]
    if not free.any():
        return D
    K = sp.csr_matrix(K)
    Kf = K[free]
    rhs = F[free] - Kf[:, ~free] @ D[~free]
    Kff = Kf[:, free]
    del Kf
    if method == "auto":
        method = "direct" if free.sum() <= DIRECT_LIMIT or F.ndim > 1 else "amg"
    if method == "amg":
        D[free] = _solve_amg(Kff, rhs, free, coords, tol)
        return D
    if method != "direct":
        raise ValueError(f"unknown solve method {method!r}")
    lu = _factor(Kff)
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("singular reduced system (insufficient constraints)")
    if np.linalg.norm(Kff @ x - rhs) > 1e-10 * (np.linalg.norm(F) + 1):
        x += lu.solve(rhs - Kff @ x)  # one refinement step
    D[free] = x
    return D


def _solve_amg(A: sp.csr_matrix, b: np.ndarray, free: np.ndarray, coords, tol: float) -> np.ndarray:
    import pyamg

    B = None
    if coords is not None:
        xy = np.repeat(np.asarray(coords, dtype=float), 2, axis=0)
        comp = np.tile([0, 1], len(coords))
        B = np.zeros((len(xy), 3))
        B[comp == 0, 0] = 1.0
        B[comp == 1, 1] = 1.0
        B[comp == 0, 2] = -xy[comp == 0, 1]
        B[comp == 1, 2] = xy[comp == 1, 0]
        B = B[free]
    ml = pyamg.smoothed_aggregation_solver(A, B=B, symmetry="symmetric",
                                           strength=("symmetric", {"theta": 0.0}))
    res: list = []
    x = ml.solve(b, tol=tol, accel="cg", maxiter=400, residuals=res)
    if not np.all(np.isfinite(x)) or res[-1] > 1e2 * tol * max(res[0], 1e-300):
        raise SolverError(f"AMG-CG did not converge (relative residual {res[-1] / res[0]:.2e})")
    return x


def _split_fixed(fixed, n):
    if isinstance(fixed, tuple) and len(fixed) == 2 and np.ndim(fixed[0]) == 1:
        dofs = np.asarray(fixed[0], dtype=np.int64)
        vals = np.asarray(fixed[1], dtype=float)
    else:
        arr = list(fixed)
        dofs = np.array([int(d) for d, _ in arr], dtype=np.int64)
        vals = np.array([float(v) for _, v in arr])
    if dofs.size and (dofs.min() < 0 or dofs.max() >= n):
        raise ValueError("fixed dof out of range")
    return dofs, vals


class SaddleSolver:
    """One factorization of [[K, G^T], [G, 0]] reused for many right-hand sides."""

    def __init__(self, K: sp.spmatrix, G: sp.spmatrix):
        self.n = K.shape[0]
        self.m = G.shape[0]
        self.K = sp.csr_matrix(K)
        self.G = sp.csr_matrix(G)
        kkt = sp.bmat([[self.K, self.G.T], [self.G, None]], format="csc")
        try:
            self.lu = spla.splu(kkt)
        except RuntimeError as exc:
            rank = np.linalg.matrix_rank(G.toarray()) if G.shape[0] * G.shape[1] < 4e6 else None
            msg = f"singular KKT system: {exc}"
            if rank is not None and rank < G.shape[0]:
                msg += f" (constraint rank deficiency {G.shape[0] - rank})"
            raise SolverError(msg) from None

    def solve(self, rhs_top: np.ndarray | None, rhs_bottom: np.ndarray):
        rb = np.asarray(rhs_bottom, dtype=float)
        cols = rb.shape[1] if rb.ndim == 2 else None
        rt = np.zeros((self.n,) + ((cols,) if cols else ())) if rhs_top is None else np.asarray(rhs_top, float)
        rhs = np.concatenate([rt, rb])
        x = self.lu.solve(rhs)
        if not np.all(np.isfinite(x)):
            raise SolverError("singular KKT system")
        # one step of iterative refinement keeps residuals at round-off
        r_top = rt - (self.K @ x[: self.n] + self.G.T @ x[self.n:])
        r_bot = rb - self.G @ x[: self.n]
        x += self.lu.solve(np.concatenate([r_top, r_bot]))
        return x[: self.n], x[self.n:]


def solve_saddle(K, G, rhs_bottom, rhs_top=None):
    """Return (d, lambda) with K d + G^T lambda = rhs_top, G d = rhs_bottom."""
    return SaddleSolver(K, G).solve(rhs_top, rhs_bottom)
