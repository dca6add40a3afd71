"""Intersection-free implicit contact dynamics on tetrahedral meshes.

Contact distances are carried by a diagonal constraint Jacobian whose
determinant is the distance ratio d / d_hat; the barrier Hessian is
constructed and PSD-projected in closed form (including the nearly-parallel
edge-edge case) and drives a projected-Newton solver with CCD-bounded line
search and a matrix-free preconditioned CG linear solver.
"""

from .barrier import BarrierParams, LocalQuadratic
from .elasticity import ElasticMaterial
from .gap import DiagonalJacobian, GapValue, build_diagonal_jacobian, gap_function
from .mesh import Scene, SimMesh, compute_lumped_masses, load_obj_surface, load_tet_mesh
from .proximity import (
    ContactStencil,
    DistanceResult,
    StencilKind,
    classify_edge_edge,
    classify_point_triangle,
    find_contact_pairs,
)
from .solver import SimState, SolverConfig, advance_time_step

__all__ = [
    "BarrierParams",
    "ContactStencil",
    "DiagonalJacobian",
    "DistanceResult",
    "ElasticMaterial",
    "GapValue",
    "LocalQuadratic",
    "Scene",
    "SimMesh",
    "SimState",
    "SolverConfig",
    "StencilKind",
    "advance_time_step",
    "build_diagonal_jacobian",
    "classify_edge_edge",
    "classify_point_triangle",
    "compute_lumped_masses",
    "find_contact_pairs",
    "gap_function",
    "load_obj_surface",
    "load_tet_mesh",
]

__version__ = "0.1.0"
