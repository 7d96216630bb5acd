"""Finite element heterogeneous multiscale method (FE-HMM) for 2D linear elasticity."""

from .mesh import Mesh, MeshError, build_structured_quads, import_two_phase_mesh, refine_hierarchical
from .material import (ElasticVoigt2D, analytical_laminate_field, isotropic_plane_strain, matrix_inclusion_field,
                       nonuniform_field)
from .micro import MicroCell
from .homogenize import homogenized_tensor_condensation, homogenized_tensor_unit_strain
from .macro import MacroProblem, MacroSolution, solve_macro, solve_reference_singlescale
from .postprocess import convergence_order, error_between, norm, spr_recover

__version__ = "0.1.0"

__all__ = [
    "Mesh", "MeshError", "build_structured_quads", "import_two_phase_mesh", "refine_hierarchical",
    "ElasticVoigt2D", "analytical_laminate_field", "isotropic_plane_strain", "matrix_inclusion_field",
    "nonuniform_field", "MicroCell", "homogenized_tensor_condensation", "homogenized_tensor_unit_strain",
    "MacroProblem", "MacroSolution", "solve_macro", "solve_reference_singlescale", "convergence_order",
    "error_between", "norm", "spr_recover",
]
