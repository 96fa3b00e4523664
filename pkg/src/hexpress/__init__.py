"""Mask-overlay topology optimization with design-dependent pressure loads."""
from .mesh import HexMesh, element_centroid, generate_mesh
from .fem import MaterialParams, assemble_stiffness, element_stiffness, solve_displacement
from .masks import DensityField, Mask, MaskSet, density_field, density_jacobian
from .pressure import PressureModelParams, assemble_flow, solve_pressure
from .adjoint import Analysis, ConstraintSpec, ObjectiveSpec
from .optimizer import OptimizerConfig, relax_step, run
from .smoothing import SmoothingConfig, boundary_nodes, smooth
from .problems import ProblemSpec, builtin, load_problem, save_problem

__version__ = "0.1.0"

__all__ = [
    "HexMesh", "element_centroid", "generate_mesh",
    "MaterialParams", "assemble_stiffness", "element_stiffness", "solve_displacement",
    "DensityField", "Mask", "MaskSet", "density_field", "density_jacobian",
    "PressureModelParams", "assemble_flow", "solve_pressure",
    "Analysis", "ConstraintSpec", "ObjectiveSpec",
    "OptimizerConfig", "relax_step", "run",
    "SmoothingConfig", "boundary_nodes", "smooth",
    "ProblemSpec", "builtin", "load_problem", "save_problem",
]
