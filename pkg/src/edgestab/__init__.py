"""Edge-based nonlinear diffusion stabilization for P1 finite elements."""
from .mesh import Mesh, build_mesh, build_stencils, extract_edges
from .problems import ProblemSpec, rotating_layer_problem, skew_advection_problem, smooth_problem
from .solver import Discretization, SolverConfig, SolveReport, fixed_point_solve
from .stabilizer import StabilizerParams, assemble_dh, compute_xi

__all__ = [
    "Mesh",
    "build_mesh",
    "build_stencils",
    "extract_edges",
    "ProblemSpec",
    "smooth_problem",
    "rotating_layer_problem",
    "skew_advection_problem",
    "Discretization",
    "SolverConfig",
    "SolveReport",
    "fixed_point_solve",
    "StabilizerParams",
    "assemble_dh",
    "compute_xi",
]

__version__ = "0.1.0"
