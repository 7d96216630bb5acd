"""Stresses, norms, error measurement, convergence orders and patch recovery."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import fem
from .mesh import Q1, Mesh, MeshError, NestedMap, nested_map
from .micro import MicroDomain, cell_averages, macro_value_at, solve_micro_postprocess

NORMS = ("L2", "H1", "energy", "max")


# --------------------------------------------------------------------- norms

def _quad_fields(mesh: Mesh, u: np.ndarray):
    """Values, gradients and weights of the nodal field at element Gauss points."""
    quad = fem.gauss_quad(mesh.kind)
    N, dN = fem.shape_eval(mesh.kind, quad.points)
    _, det, G = fem.b_matrices(mesh.element_coords(), dN)
    ue = u.reshape(-1, 2)[mesh.conn]  # (ne, nen, 2)
    val = np.einsum("qn,enc->eqc", N, ue)
    grad = np.einsum("eqna,enc->eqca", G, ue)
    return val, grad, det * quad.weights


def norm(mesh: Mesh, u: np.ndarray, kind: str, scale: float = 1.0, K=None, thickness: float = 1.0) -> float:
    """L2, H1, energy or max norm of a nodal displacement field.

    L2 and H1 integrate the Q1 interpolant with 2x2 Gauss over the volume
    (area times ``thickness``). The H1 derivative term is the symmetric
    gradient, eps:eps with tensor shear eps12 = gamma/2; ``H1grad`` uses
    the full gradient instead. Both are evaluated in coordinates
    multiplied by ``scale``, which in 2D leaves the derivative term
    unchanged and weights the L2 term by scale^2. ``max`` is the largest
    nodal displacement magnitude. ``energy`` is sqrt(u^T K u).
    """
    u = np.asarray(u, dtype=float).ravel()
    if kind == "max":
        return float(np.linalg.norm(u.reshape(-1, 2), axis=1).max()) if u.size else 0.0
    if kind == "energy":
        if K is None:
            raise ValueError("energy norm requires the stiffness matrix")
        return float(np.sqrt(max(u @ (K @ u), 0.0)))
    val, grad, w = _quad_fields(mesh, u)
    l2 = thickness * np.einsum("eq,eqc,eqc->", w, val, val)
    if kind == "L2":
        return float(np.sqrt(l2))
    if kind == "H1":
        sym = 0.5 * (grad + np.swapaxes(grad, -1, -2))
        semi = thickness * np.einsum("eq,eqca,eqca->", w, sym, sym)
        return float(np.sqrt(semi + scale ** 2 * l2))
    if kind == "H1grad":
        semi = thickness * np.einsum("eq,eqca,eqca->", w, grad, grad)
        return float(np.sqrt(semi + scale ** 2 * l2))
    raise ValueError(f"unknown norm {kind!r}")


def prolong(coarse: Mesh, u_coarse: np.ndarray, nmap: NestedMap) -> np.ndarray:
    """Exact Q1 interpolation of a coarse nodal field at the fine nodes."""
    N, _ = fem.shape_eval(coarse.kind, nmap.fine_local)
    ue = np.asarray(u_coarse, dtype=float).reshape(-1, 2)[coarse.conn[nmap.fine_elem]]
    return np.einsum("fn,fnc->fc", N, ue).ravel()


def error_between(coarse, reference, nmap: NestedMap | None = None, kinds: Sequence[str] = NORMS,
                  scale: float = 1.0) -> dict[str, float]:
    """Errors of a coarse solution against a nested fine reference."""
    if nmap is None:
        nmap = nested_map(coarse.mesh, reference.mesh)
    e = reference.D - prolong(coarse.mesh, coarse.D, nmap)
    t = reference.thickness
    return {k: norm(reference.mesh, e, k, scale, reference.K, t) for k in kinds}


# ------------------------------------------------ non-nested structured grids

def _grid_lines(mesh: Mesh):
    if mesh.grid is None:
        raise MeshError("overlay integration needs structured grids")
    nx, ny, (x0, y0), (lx, ly) = mesh.grid
    return x0 + lx * np.arange(nx + 1) / nx, y0 + ly * np.arange(ny + 1) / ny


def _grid_eval(mesh: Mesh, u: np.ndarray, X: np.ndarray, Y: np.ndarray):
    """Value and gradient of a structured-grid Q1 field at points (X, Y)."""
    xs, ys = _grid_lines(mesh)
    nx, ny = len(xs) - 1, len(ys) - 1
    i = np.clip(np.searchsorted(xs, X, side="right") - 1, 0, nx - 1)
    j = np.clip(np.searchsorted(ys, Y, side="right") - 1, 0, ny - 1)
    hx = xs[i + 1] - xs[i]
    hy = ys[j + 1] - ys[j]
    s = (X - xs[i]) / hx
    t = (Y - ys[j]) / hy
    U = np.asarray(u, dtype=float).reshape(ny + 1, nx + 1, 2)
    u00, u10 = U[j, i], U[j, i + 1]
    u01, u11 = U[j + 1, i], U[j + 1, i + 1]
    s_, t_ = s[..., None], t[..., None]
    val = (1 - s_) * (1 - t_) * u00 + s_ * (1 - t_) * u10 + (1 - s_) * t_ * u01 + s_ * t_ * u11
    dx = ((1 - t_) * (u10 - u00) + t_ * (u11 - u01)) / hx[..., None]
    dy = ((1 - s_) * (u01 - u00) + s_ * (u11 - u10)) / hy[..., None]
    return val, np.stack([dx, dy], axis=-1)


def error_overlay(coarse, reference, kinds: Sequence[str] = ("L2", "H1"), scale: float = 1.0,
                  chunk: int = 2_000_000) -> dict[str, float]:
    """L2/H1 errors between Q1 fields on two structured grids of one domain.

    Integration runs over the common refinement of both grids, where the
    integrand is a polynomial of degree <= 2 per direction, so 2x2 Gauss
    is exact.
    """
    xa, ya = _grid_lines(coarse.mesh)
    xb, yb = _grid_lines(reference.mesh)
    xs = np.unique(np.concatenate([xa, xb]))
    ys = np.unique(np.concatenate([ya, yb]))
    g = 0.5 / np.sqrt(3.0)
    xm, hx = 0.5 * (xs[1:] + xs[:-1]), np.diff(xs)
    ym, hy = 0.5 * (ys[1:] + ys[:-1]), np.diff(ys)
    qx = np.concatenate([xm - g * hx, xm + g * hx])
    wx = np.concatenate([0.5 * hx, 0.5 * hx])
    qy = np.concatenate([ym - g * hy, ym + g * hy])
    wy = np.concatenate([0.5 * hy, 0.5 * hy])
    l2 = semi = 0.0
    rows = max(1, chunk // len(qx))
    for a in range(0, len(qy), rows):
        Y, X = np.meshgrid(qy[a:a + rows], qx, indexing="ij")
        W = np.outer(wy[a:a + rows], wx)
        va, ga = _grid_eval(coarse.mesh, coarse.D, X, Y)
        vb, gb = _grid_eval(reference.mesh, reference.D, X, Y)
        dv, dg = va - vb, ga - gb
        l2 += np.einsum("ij,ijc,ijc->", W, dv, dv)
        sym = 0.5 * (dg + np.swapaxes(dg, -1, -2))
        semi += np.einsum("ij,ijca,ijca->", W, sym, sym)
    t = reference.thickness
    out = {}
    if "L2" in kinds:
        out["L2"] = float(np.sqrt(t * l2))
    if "H1" in kinds:
        out["H1"] = float(np.sqrt(t * (semi + scale ** 2 * l2)))
    return out


# ------------------------------------------------------- convergence orders

@dataclass
class ConvergenceReport:
    norm: str
    sizes: list
    errors: list
    order: float
    pairwise: list = field(default_factory=list)


def convergence_order(sizes: Sequence[float], errors: Sequence[float], norm_id: str = "") -> ConvergenceReport:
    """Least-squares slope of log(error) against log(size), plus pairwise orders."""
    h = np.asarray(sizes, dtype=float)
    e = np.asarray(errors, dtype=float)
    if len(h) < 3 or len(e) != len(h):
        raise ValueError("need at least three (size, error) points")
    d = np.diff(h)
    if not (np.all(d < 0) or np.all(d > 0)):
        raise ValueError("mesh sizes must be strictly monotone")
    lh, le = np.log(h), np.log(e)
    slope = np.polyfit(lh, le, 1)[0]
    pairwise = list(np.diff(le) / np.diff(lh))
    return ConvergenceReport(norm_id, list(h), list(e), float(slope), [float(p) for p in pairwise])


def optimal_refinement_schedule(norm_id: str, counts: Sequence[int]) -> list[tuple[int, int]]:
    """Micro resolution matched to macro element count M (h ~ H or h ~ sqrt(H))."""
    out = []
    for M in counts:
        M = int(M)
        if M < 1:
            raise ValueError("macro counts must be >= 1")
        if norm_id == "L2":
            L = M
        elif norm_id == "H1":
            L = int(np.floor(np.sqrt(M) + 0.5))
        else:
            raise ValueError("schedule defined for L2 and H1 only")
        out.append((M, L))
    return out


# ------------------------------------------------- strains and stresses

def element_center_strains(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Voigt strain (engineering shear) at element centres, (ne, 3)."""
    centre = np.zeros((1, 2)) if mesh.kind == Q1 else np.full((1, 2), 1 / 3)
    _, dN = fem.shape_eval(mesh.kind, centre)
    B, _, _ = fem.b_matrices(mesh.element_coords(), dN)
    de = np.asarray(u, dtype=float).ravel()[fem.element_dofs(mesh.conn)]
    return np.einsum("eia,ea->ei", B[:, 0], de)


def element_center_stresses(sol, tensors=None) -> np.ndarray:
    """sigma = A0h eps(u^H) at element centres; A0h averaged over the element's sampling points."""
    A = sol.tensors if tensors is None else tensors
    if A is None:
        raise ValueError("homogenized tensors are not available for this solution")
    A = np.asarray(A)
    if A.ndim == 4:
        A = A.mean(axis=1)
    elif A.shape == (3, 3):
        A = np.broadcast_to(A, (sol.mesh.n_elems, 3, 3))
    eps = element_center_strains(sol.mesh, sol.D)
    return np.einsum("eij,ej->ei", A, eps)


def von_mises(sigma, nu: float) -> np.ndarray:
    """Plane-strain von Mises stress with sigma_zz = nu (sxx + syy)."""
    s = np.asarray(sigma, dtype=float)
    sx, sy, txy = s[..., 0], s[..., 1], s[..., 2]
    sz = nu * (sx + sy)
    return np.sqrt(0.5 * ((sx - sy) ** 2 + (sy - sz) ** 2 + (sz - sx) ** 2) + 3 * txy ** 2)


def reconstruct_micro(sol, element: int, qp: int, cell_for=None):
    """Total micro field u^H(x_Kl) + u^h on the microdomain of (element, qp).

    Returns (domain, nodal field). ``cell_for(center)`` supplies the micro
    cell; by default a fresh one is built from the solution's problem.
    """
    from .macro import macro_quadrature
    from .micro import MicroCell

    p = sol.problem
    xq, wq = macro_quadrature(sol.mesh)
    x = xq[element, qp]
    cell = cell_for(x) if cell_for else MicroCell(p.delta, p.field, x if not p.field.uniform else (0, 0),
                                                  p.resolution, p.micro_mesh)
    dom = MicroDomain(x, cell, wq[element, qp])
    xe = sol.mesh.coords[sol.mesh.conn[element]]
    ue = sol.u[sol.mesh.conn[element]]
    uh = solve_micro_postprocess(dom, ue, xe)
    base = macro_value_at(xe, ue, x)
    return dom, uh + np.tile(base, cell.mesh.n_nodes), uh


def macro_stress(domain: MicroDomain, uh: np.ndarray | None = None, A0h=None, macro_strain=None,
                 route: str = "average") -> np.ndarray:
    """Macro stress by averaging micro stresses or by A0h eps(u^H)."""
    if route == "average":
        _, s, _ = cell_averages(domain.cell, uh)
        return s
    if route == "tensor":
        return np.asarray(A0h) @ np.asarray(macro_strain)
    raise ValueError(f"unknown route {route!r}")


# ------------------------------------------------------------------- SPR

def _node_patches(mesh: Mesh):
    n2e = [[] for _ in range(mesh.n_nodes)]
    for e, row in enumerate(mesh.conn):
        for n in row:
            n2e[n].append(e)
    return n2e


def spr_recover(mesh: Mesh, sigma_e: np.ndarray, min_samples: int = 4) -> np.ndarray:
    """Nodal stresses by a least-squares fit of P = [1, x, y, xy] to element-centre samples.

    Each node's patch is its adjacent elements, widened by one ring while
    it has fewer than ``min_samples`` centres. Coordinates are taken
    relative to the node and scaled by the patch size.
    """
    if mesh.kind != Q1:
        raise MeshError("patch recovery is implemented for Q1 meshes")
    sigma_e = np.asarray(sigma_e, dtype=float)
    centres = mesh.element_coords().mean(axis=1)
    n2e = _node_patches(mesh)
    out = np.zeros((mesh.n_nodes, sigma_e.shape[1]))
    groups: dict[int, list] = {}
    patches = []
    for n in range(mesh.n_nodes):
        patch = set(n2e[n])
        while len(patch) < min_samples:
            ring = {e2 for e in patch for m in mesh.conn[e] for e2 in n2e[m]}
            if ring == patch:
                break
            patch = ring
        patches.append(sorted(patch))
    for n, patch in enumerate(patches):
        groups.setdefault(len(patch), []).append(n)
    for size, nodes in groups.items():
        nodes = np.array(nodes)
        idx = np.array([patches[n] for n in nodes])  # (g, size)
        d = centres[idx] - mesh.coords[nodes][:, None, :]
        h = np.abs(d).max(axis=(1, 2))[:, None]
        x, y = d[..., 0] / h, d[..., 1] / h
        P = np.stack([np.ones_like(x), x, y, x * y], axis=-1)  # (g, size, 4)
        A = np.einsum("gsi,gsj->gij", P, P)
        b = np.einsum("gsi,gsc->gic", P, sigma_e[idx])
        cond = np.linalg.cond(A)
        if np.any(~np.isfinite(cond)) or np.any(cond > 1e12):
            bad = nodes[np.argmax(np.where(np.isfinite(cond), cond, np.inf))]
            raise np.linalg.LinAlgError(f"singular patch normal matrix at node {mesh.node_ids[bad]}")
        a = np.linalg.solve(A, b)
        out[nodes] = a[:, 0, :]  # P evaluated at the node (origin) is [1, 0, 0, 0]
    return out


def nodal_energy_error(dsigma: np.ndarray, A0h: np.ndarray) -> np.ndarray:
    """e_N = sqrt(dsigma^T A0h^-1 dsigma) per node."""
    Ainv = np.linalg.inv(np.asarray(A0h))
    return np.sqrt(np.maximum(np.einsum("ni,ij,nj->n", dsigma, Ainv, dsigma), 0.0))


@dataclass
class OrderMap:
    coarse_nodes: np.ndarray  # node indices in the coarsest mesh
    coords: np.ndarray
    errors: np.ndarray  # (levels, n)
    component_errors: np.ndarray  # (levels, n, 3)
    sizes: np.ndarray
    order: np.ndarray
    component_order: np.ndarray  # (n, 3)


def local_order_map(solutions: Sequence, reference, A0h: np.ndarray, sizes: Sequence[float] | None = None,
                    recovered: Sequence[np.ndarray] | None = None, ref_recovered: np.ndarray | None = None) -> OrderMap:
    """Per-node convergence order of SPR stresses over a hierarchy of meshes.

    Nodes of the coarsest mesh are tracked through every level; the error
    at each level is the energy-weighted difference to the reference's
    recovered stress at the same point.
    """
    coarse = solutions[0].mesh
    if ref_recovered is None:
        ref_recovered = spr_recover(reference.mesh, element_center_stresses(reference, A0h))
    ref_map = nested_map(coarse, reference.mesh)
    ref_sig = ref_recovered[ref_map.coarse_to_fine]
    errs, comps = [], []
    for k, sol in enumerate(solutions):
        rec = recovered[k] if recovered is not None else spr_recover(sol.mesh, element_center_stresses(sol, A0h))
        nm = nested_map(coarse, sol.mesh) if sol.mesh is not coarse else None
        idx = nm.coarse_to_fine if nm is not None else np.arange(coarse.n_nodes)
        ds = rec[idx] - ref_sig
        errs.append(nodal_energy_error(ds, A0h))
        comps.append(np.abs(ds))
    errs = np.array(errs)
    comps = np.array(comps)
    if sizes is None:
        sizes = [float(np.sqrt(s.mesh.element_areas().mean())) for s in solutions]
    lh = np.log(np.asarray(sizes, dtype=float))
    order = _ls_slopes(lh, errs)
    corder = np.stack([_ls_slopes(lh, comps[:, :, c]) for c in range(3)], axis=1)
    return OrderMap(np.arange(coarse.n_nodes), coarse.coords.copy(), errs, comps, np.asarray(sizes), order, corder)


def _ls_slopes(lh: np.ndarray, e: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        le = np.log(np.where(e > 0, e, np.nan))
    x = lh - lh.mean()
    ok = np.all(np.isfinite(le), axis=0)
    slopes = np.full(e.shape[1], np.nan)
    slopes[ok] = (x @ (le[:, ok] - le[:, ok].mean(axis=0))) / (x @ x)
    return slopes
