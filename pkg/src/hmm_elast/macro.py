"""FE-HMM macro assembly (transfer and tensor modes), macro solve, single-scale FEM."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import fem
from .homogenize import homogenized_tensor_unit_strain
from .material import MicroMaterialField
from .mesh import Q1, Mesh
from .micro import MicroCell, MicroDomain, compress_stiffness, macro_unit_drives

log = logging.getLogger(__name__)

TRANSFER = "transfer"
TENSOR = "tensor"


class MicroSolveError(RuntimeError):
    pass


@dataclass
class MacroProblem:
    """Macro boundary value problem with its micro sampling specification.

    ``dirichlet`` is a list of (edge tag, components, value); ``tractions``
    a list of (edge tag, traction vector).
    """

    mesh: Mesh
    field: MicroMaterialField
    resolution: int
    delta: float | None = None
    dirichlet: Sequence = ()
    tractions: Sequence = ()
    body_force: Sequence[float] | None = None
    mode: str = TRANSFER
    thickness: float = 1.0
    cache: bool = True
    threads: int = 1
    micro_mesh: Mesh | None = None

    def __post_init__(self):
        if self.delta is None:
            self.delta = self.field.eps
        if self.resolution < 1 and self.micro_mesh is None:
            raise ValueError("micro resolution must be >= 1")
        if self.mode not in (TRANSFER, TENSOR):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mesh.kind != Q1:
            raise ValueError("macro meshes must be Q1")
        if not np.isclose(self.delta, self.field.eps):
            log.warning("delta != eps: error estimates assume delta/eps integer with periodic coupling")

    def fixed_dofs(self):
        return dirichlet_dofs(self.mesh, self.dirichlet)


def dirichlet_dofs(mesh: Mesh, dirichlet) -> tuple[np.ndarray, np.ndarray]:
    dofs = {}
    for tag, comps, value in dirichlet:
        for n in mesh.nodes_on(tag):
            for c in comps:
                dofs[2 * int(n) + int(c)] = float(value)
    keys = np.array(sorted(dofs), dtype=np.int64)
    return keys, np.array([dofs[k] for k in keys])


@dataclass
class MacroSolution:
    mesh: Mesh
    D: np.ndarray
    K: sp.csr_matrix
    F: np.ndarray
    thickness: float = 1.0
    tensors: np.ndarray | None = None  # A0h per element and quadrature point (ne, 4, 3, 3)
    problem: MacroProblem | None = None

    @property
    def u(self) -> np.ndarray:
        return self.D.reshape(-1, 2)

    def energy(self) -> float:
        return float(np.sqrt(max(self.D @ (self.K @ self.D), 0.0)))


def _geom_key(xe: np.ndarray) -> bytes:
    rel = xe - xe[0]
    scale = float(np.abs(rel).max()) or 1.0
    return np.round(rel / scale, 12).tobytes() + np.float64(scale).round(12).tobytes()


class _CellCache:
    """Micro cells keyed by (field, delta, resolution) for uniform fields."""

    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.cells: dict = {}
        self.kmac: dict = {}
        self.tensors: dict = {}

    def cell(self, problem: MacroProblem, center) -> MicroCell:
        f = problem.field
        if not (self.enabled and f.uniform):
            return MicroCell(problem.delta, f, center, problem.resolution, problem.micro_mesh)
        key = (f.key, problem.delta, problem.resolution, id(problem.micro_mesh))
        c = self.cells.get(key)
        if c is None:
            c = self.cells.setdefault(key, MicroCell(problem.delta, f, (0.0, 0.0), problem.resolution,
                                                     problem.micro_mesh))
        return c


def macro_quadrature(mesh: Mesh):
    return _quadrature(mesh.element_coords())


def _quadrature(xe: np.ndarray):
    quad = fem.gauss_quad(Q1)
    N, dN = fem.shape_eval(Q1, quad.points)
    _, det, _ = fem.b_matrices(xe, dN)
    return fem.quadrature_points(xe, N), det * quad.weights  # (ne, 4, 2), (ne, 4)


def _element_transfer(problem, cache, xe, xq, wq):
    Ts, Ks = [], []
    for l in range(len(xq)):
        cell = cache.cell(problem, xq[l])
        dom = MicroDomain(xq[l], cell, wq[l])
        T = cell.solve(macro_unit_drives(xe, dom))
        Ts.append(T)
        Ks.append(cell.K)
    return compress_stiffness(Ts, Ks, wq, cell.volume)


def _qp_tensor(problem, cache, x):
    cell = cache.cell(problem, x)
    if cache.enabled and problem.field.uniform:
        key = id(cell)
        if key not in cache.tensors:
            cache.tensors[key] = homogenized_tensor_unit_strain(cell).A0h
        return cache.tensors[key]
    return homogenized_tensor_unit_strain(cell).A0h


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def assemble_fehmm(problem: MacroProblem, cache: _CellCache | None = None):
    """Return (K^mac, F, A0h per quadrature point)."""
    mesh = problem.mesh
    cache = cache or _CellCache(problem.cache)
    uniform = cache.enabled and problem.field.uniform
    # congruent grid cells with a uniformly periodic field share one element matrix
    congruent = uniform and mesh.grid is not None
    xe_all = mesh.element_coords()[:1] if congruent else mesh.element_coords()
    xq, wq = _quadrature(xe_all)
    ne = len(xe_all)

    def tensor_of(e):
        try:
            return np.stack([_qp_tensor(problem, cache, xq[e, l]) for l in range(4)])
        except Exception as exc:  # annotate with location
            raise MicroSolveError(f"element {mesh.elem_ids[e]}: {exc}") from exc

    def kmac_of(e):
        key = _geom_key(xe_all[e]) if uniform else None
        if key is not None and key in cache.kmac:
            return cache.kmac[key]
        try:
            k = _element_transfer(problem, cache, xe_all[e], xq[e], wq[e])
        except Exception as exc:
            raise MicroSolveError(f"element {mesh.elem_ids[e]}: {exc}") from exc
        if key is not None:
            k = cache.kmac.setdefault(key, k)
        return k

    threads = 1 if uniform else problem.threads
    if problem.mode == TENSOR:
        tensors = np.stack(_map(tensor_of, range(ne), threads))
        ke = fem.element_stiffness_batch(xe_all, Q1, tensors, thickness=problem.thickness)
    else:
        ke = problem.thickness * np.stack(_map(kmac_of, range(ne), threads))
        tensors = np.stack([tensor_of(e) for e in range(ne)]) if uniform else None
    if congruent:
        ke = ke[0]
        tensors = np.broadcast_to(tensors, (mesh.n_elems,) + tensors.shape[1:])
    K = fem.assemble_matrices(mesh.conn, ke, 2 * mesh.n_nodes)
    F = fem.assemble_load(mesh, problem.body_force, problem.tractions, problem.thickness)
    return K, F, tensors


def solve_macro(problem: MacroProblem, cache: _CellCache | None = None) -> MacroSolution:
    K, F, tensors = assemble_fehmm(problem, cache)
    D = fem.solve_dirichlet(K, F, problem.fixed_dofs(), coords=problem.mesh.coords)
    return MacroSolution(problem.mesh, D, K, F, problem.thickness, tensors, problem)


def solve_reference_singlescale(mesh: Mesh, material, dirichlet=(), tractions=(), body_force=None,
                                thickness: float = 1.0) -> MacroSolution:
    """Standard FEM with a directly given coefficient (constant, per element, or callable)."""
    c = None if callable(material) else np.asarray(material, dtype=float)
    if c is not None and c.shape == (3, 3) and mesh.grid is not None:
        # congruent elements: one element matrix serves the whole grid
        ke = fem.element_stiffness_batch(mesh.element_coords()[:1], mesh.kind, c, thickness=thickness)[0]
    else:
        ke = fem.element_stiffness_batch(mesh.element_coords(), mesh.kind, material, thickness=thickness)
    K = fem.assemble_matrices(mesh.conn, ke, 2 * mesh.n_nodes)
    del ke
    F = fem.assemble_load(mesh, body_force, tractions, thickness)
    D = fem.solve_dirichlet(K, F, dirichlet_dofs(mesh, dirichlet), coords=mesh.coords)
    tensors = None
    if c is not None and c.shape == (3, 3):
        tensors = np.broadcast_to(c, (mesh.n_elems, 4, 3, 3))
    return MacroSolution(mesh, D, K, F, thickness, tensors)


def reactions(sol: MacroSolution) -> np.ndarray:
    """Nodal reaction forces K D - F."""
    return sol.K @ sol.D - sol.F
