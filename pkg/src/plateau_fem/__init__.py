"""P1 finite-element minimal surfaces spanning a contour, with adaptive boundary refinement.

The package maps a triangulated unit disk onto a surface bounded by a
given curve (or by an arc together with a support plane) by relaxing the
discrete Dirichlet energy, inserting boundary nodes where the image of a
boundary triangle is much longer than its neighbours.
"""

from .assembly import (
    EnergyReport,
    StiffnessMatrix,
    SurfaceMap,
    area_and_conformality,
    assemble,
    dirichlet_energy,
    element_stiffness,
)
from .geometry import (
    Curve,
    FreeBoundaryContour,
    PlanarSurface,
    arc_midpoint,
    builtin,
    fourier_curve,
    hausdorff_to_curve,
    project_to_plane,
)
from .mesh import DiskMesh, generate_disk_mesh, load_mesh, save_mesh, validate_mesh
from .refine import bisect_boundary_triangle, detect_defective, regular_refine_boundary_triangle
from .relax import RunState, SolverConfig, Strategy, Termination, init_surface, run

__all__ = [
    "Curve", "DiskMesh", "EnergyReport", "FreeBoundaryContour", "PlanarSurface",
    "RunState", "SolverConfig", "StiffnessMatrix", "Strategy", "SurfaceMap", "Termination",
    "arc_midpoint", "area_and_conformality", "assemble", "bisect_boundary_triangle",
    "builtin", "detect_defective", "dirichlet_energy", "element_stiffness", "fourier_curve",
    "generate_disk_mesh", "hausdorff_to_curve", "init_surface", "load_mesh",
    "project_to_plane", "regular_refine_boundary_triangle", "run", "save_mesh", "validate_mesh",
]
