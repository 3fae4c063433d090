"""Meshless (PHS-RBF) steady and transient heat conduction on scattered points."""

__version__ = "0.1.0"

from .pointcloud import (  # noqa: E402
    PointCloud,
    average_spacing,
    generate,
    generate_annulus,
    generate_ellipse_in_circle,
    generate_sphere_in_cuboid,
    generate_spherical_shell,
    load_point_file,
    write_point_file,
)
from .rbf_operator import PhsKernel, stencil_weights  # noqa: E402
from .solver import (  # noqa: E402
    SolutionField,
    TransientConfig,
    solve_steady,
    solve_transient,
    steady_problem,
)

__all__ = [
    "PointCloud",
    "PhsKernel",
    "SolutionField",
    "TransientConfig",
    "average_spacing",
    "generate",
    "generate_annulus",
    "generate_ellipse_in_circle",
    "generate_sphere_in_cuboid",
    "generate_spherical_shell",
    "load_point_file",
    "solve_steady",
    "solve_transient",
    "steady_problem",
    "stencil_weights",
    "write_point_file",
]
