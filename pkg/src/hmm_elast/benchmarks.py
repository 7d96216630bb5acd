"""Benchmark problem definitions: inclusion beam and the two unit plates."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .macro import MacroProblem, MacroSolution, TENSOR, solve_reference_singlescale
from .material import (MicroMaterialField, PhaseField, analytical_laminate_field, laminate_exact_tensor,
                       matrix_inclusion_field, nonuniform_field)
from .mesh import Mesh, build_structured_quads

BEAM = "beam-inclusion"
PLATE = "plate-laminate"
PLATE_NONUNIFORM = "plate-nonuniform"
IMPORTED = "imported-rve"
BENCHMARKS = (BEAM, PLATE, PLATE_NONUNIFORM, IMPORTED)

DIRECTIONS = {"+x": (1.0, 0.0), "-x": (-1.0, 0.0), "+y": (0.0, 1.0), "-y": (0.0, -1.0)}


@dataclass
class Benchmark:
    """Rectangle clamped on the left with a constant line load on the right edge."""

    name: str
    field: MicroMaterialField
    origin: tuple = (0.0, 0.0)
    lengths: tuple = (1.0, 1.0)
    thickness: float = 1.0
    load: float = 1.0
    direction: str = "-y"
    delta: float | None = None
    micro_mesh: Mesh | None = None
    exact_tensor: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    @property
    def traction(self) -> tuple:
        try:
            d = DIRECTIONS[self.direction]
        except KeyError:
            raise ValueError(f"load direction must be one of {sorted(DIRECTIONS)}") from None
        return (self.load * d[0], self.load * d[1])

    def mesh(self, nx: int, ny: int | None = None) -> Mesh:
        return build_structured_quads(nx, nx if ny is None else ny, self.origin, self.lengths)

    def bc(self) -> dict:
        return dict(dirichlet=[("left", (0, 1), 0.0)], tractions=[("right", self.traction)],
                    thickness=self.thickness)

    def problem(self, nx: int, ny: int | None = None, resolution: int = 16, mode: str = TENSOR,
                mesh: Mesh | None = None, threads: int = 1, cache: bool = True) -> MacroProblem:
        mesh = self.mesh(nx, ny) if mesh is None else mesh
        return MacroProblem(mesh, self.field, resolution, delta=self.delta, mode=mode, threads=threads,
                            cache=cache, micro_mesh=self.micro_mesh, **self.bc())

    def singlescale(self, mesh: Mesh, material) -> MacroSolution:
        """Standard FEM on ``mesh`` with a given homogenized coefficient."""
        return solve_reference_singlescale(mesh, material, **self.bc())

    def with_(self, **changes) -> "Benchmark":
        return replace(self, **changes)


def beam(eps: float = 5.0, E_inclusion: float = 1e5, E_matrix: float = 4e4, nu: float = 0.2,
         load: float = 1.0, direction: str = "-y", thickness: float = 100.0,
         side_fraction: float = 0.25, delta: float | None = None) -> Benchmark:
    """5000 x 1000 mm cantilever with square inclusions (volume fraction 1/16)."""
    f = matrix_inclusion_field(E_inclusion, E_matrix, nu, eps, side_fraction)
    return Benchmark(BEAM, f, (0.0, 0.0), (5000.0, 1000.0), thickness, load, direction, delta,
                     params=dict(eps=eps, E_inclusion=E_inclusion, E_matrix=E_matrix, nu=nu))


def plate_laminate(eps: float = 0.025, load: float = 1.0, direction: str = "-y", thickness: float = 0.1,
                   coords: str = "local", c12: float = 35.0, c33: float = 50.0,
                   delta: float | None = None) -> Benchmark:
    """Unit plate with the analytical laminate; the exact tensor is known."""
    f = analytical_laminate_field(eps, coords, c12, c33)
    return Benchmark(PLATE, f, (0.0, 0.0), (1.0, 1.0), thickness, load, direction, delta,
                     exact_tensor=laminate_exact_tensor(c12, c33), params=dict(eps=eps, c12=c12, c33=c33))


def plate_nonuniform(eps: float = 0.005, nu: float = 0.3, load: float = 0.01, direction: str = "-y",
                     thickness: float = 0.1, delta: float | None = None) -> Benchmark:
    """Unit plate, coordinates centred in the domain, non-uniformly periodic modulus."""
    f = nonuniform_field(eps, nu)
    return Benchmark(PLATE_NONUNIFORM, f, (-0.5, -0.5), (1.0, 1.0), thickness, load, direction, delta,
                     params=dict(eps=eps, nu=nu))


def imported_rve(micro_mesh: Mesh, E_inclusion: float = 1e5, E_matrix: float = 4e4, nu: float = 0.2,
                 load: float = 1.0, direction: str = "-y", thickness: float = 100.0) -> Benchmark:
    """Inclusion beam whose cell is an imported two-phase mesh (phase 1 = inclusion)."""
    lo, hi = micro_mesh.bbox()
    delta = float(hi[0] - lo[0])
    f = PhaseField(micro_mesh, E_inclusion, E_matrix, nu, delta)
    return Benchmark(IMPORTED, f, (0.0, 0.0), (5000.0, 1000.0), thickness, load, direction, delta,
                     micro_mesh=micro_mesh, params=dict(E_inclusion=E_inclusion, E_matrix=E_matrix, nu=nu))
