"""Homogenized tensors: unit strain states, Voigt mean, static condensation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .micro import MicroCell

COMPONENTS = {"A11": (0, 0), "A12": (0, 1), "A22": (1, 1), "A33": (2, 2)}


@dataclass(frozen=True)
class HomogenizedTensor:
    A0h: np.ndarray
    resolution: int | None
    delta: float
    x: tuple = (0.0, 0.0)
    route: str = "unit-strain"

    def component(self, name: str) -> float:
        return float(self.A0h[COMPONENTS[name]])


def _cell_bilinear(cell: MicroCell, d: np.ndarray) -> np.ndarray:
    B, w, C = cell.quad_data()
    dofs = fem.element_dofs(cell.mesh.conn)
    eps = np.einsum("eqia,eak->eqik", B, d[dofs])
    A = np.einsum("eq,eqik,eqij,eqjl->kl", w, eps, C, eps, optimize=True) / cell.volume
    return A


def _prov(cell, route):
    return dict(resolution=cell.resolution, delta=cell.delta, x=tuple(cell.center), route=route)


def homogenized_tensor_unit_strain(cell: MicroCell) -> HomogenizedTensor:
    """A_IJ = (1/|K|) int eps(u_I) : A : eps(u_J) over the three unit strain solutions."""
    A = _cell_bilinear(cell, cell.strain_states())
    return HomogenizedTensor(A, **_prov(cell, "unit-strain"))


def volumetric_mean(cell: MicroCell) -> np.ndarray:
    _, w, C = cell.quad_data()
    return np.einsum("eq,eqij->ij", w, C) / cell.volume


def homogenized_tensor_condensation(cell: MicroCell) -> HomogenizedTensor:
    """A_Voigt - (1/|K|) Lbar^T X with K X = Lbar solved on the periodic, zero-mean space."""
    B, w, C = cell.quad_data()
    dofs = fem.element_dofs(cell.mesh.conn)
    Le = np.einsum("eq,eqia,eqij->eaj", w, B, C)
    Lbar = np.zeros((2 * cell.mesh.n_nodes, 3))
    np.add.at(Lbar, dofs, Le)
    X, _ = cell.solver.solve(Lbar, np.zeros((cell.G.shape[0], 3)))
    A = np.einsum("eq,eqij->ij", w, C) / cell.volume - Lbar.T @ X / cell.volume
    return HomogenizedTensor(A, **_prov(cell, "condensation"))


def a0h_convergence(field_, resolutions, L_ref: int, delta: float | None = None, center=(0.0, 0.0),
                    route: str = "unit-strain"):
    """Component errors |A(L) - A(L_ref)| and fitted orders in h/eps."""
    from .postprocess import convergence_order

    resolutions = [int(L) for L in resolutions]
    if any(L >= L_ref for L in resolutions):
        raise ValueError("L_ref must exceed every resolution")
    delta = field_.eps if delta is None else delta
    fn = homogenized_tensor_unit_strain if route == "unit-strain" else homogenized_tensor_condensation
    tensors = {L: fn(MicroCell(delta, field_, center, resolution=L)).A0h for L in resolutions + [L_ref]}
    ref = tensors[L_ref]
    sizes = [1.0 / L for L in resolutions]
    out = {"tensors": tensors, "errors": {}, "orders": {}}
    for name, idx in COMPONENTS.items():
        errs = [abs(tensors[L][idx] - ref[idx]) for L in resolutions]
        out["errors"][name] = errs
        out["orders"][name] = convergence_order(sizes, errs, name).order if min(errs) > 0 else float("nan")
    return out
