"""Layer potentials on high-order triangulated surfaces."""

from ._lcq import (
    ArgumentError,
    Cache,
    Error,
    GeometryError,
    Kernel,
    LayerSolution,
    Mesh,
    QuadratureError,
    UnsupportedError,
    ValidationError,
    apply,
    greens_identity_error,
    load_kpatch,
    parse_kpatch,
    point_field,
    precompute,
    run_cli,
    solve_cfie,
    sphere,
    stellarator,
)

__all__ = [
    "ArgumentError",
    "Cache",
    "Error",
    "GeometryError",
    "Kernel",
    "LayerSolution",
    "Mesh",
    "QuadratureError",
    "UnsupportedError",
    "ValidationError",
    "apply",
    "greens_identity_error",
    "load_kpatch",
    "parse_kpatch",
    "point_field",
    "precompute",
    "run_cli",
    "solve_cfie",
    "sphere",
    "stellarator",
]
