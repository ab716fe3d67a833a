"""Numerical verification of two-point concavity principles on locally symmetric spaces."""
from .errors import (
    BaseMismatch,
    ConeViolation,
    ConfigError,
    DegenerateSegment,
    DegenerateSpan,
    DomainViolation,
    GridMismatch,
    SolverFailure,
    TwoPointError,
)
from .geometry import Euclidean, ManifoldModel, Sphere, TangentVec
from .geodesic import GeodesicSegment, ParallelFrame, build_frame, connect
from .field import DomainSpec, Grid, ScalarField, disk, interval, product, rectangle, spherical_cap
from .pde import SemilinearSpec, solve_heat, solve_liouville, solve_torsion
from .concavity import IsotropicFSpec, ScanConfig, chain_audit, scan_min, z_value

__version__ = "0.1.0"

__all__ = [
    "BaseMismatch", "ConeViolation", "ConfigError", "DegenerateSegment", "DegenerateSpan", "DomainViolation",
    "GridMismatch", "SolverFailure", "TwoPointError",
    "Euclidean", "ManifoldModel", "Sphere", "TangentVec",
    "GeodesicSegment", "ParallelFrame", "build_frame", "connect",
    "DomainSpec", "Grid", "ScalarField", "disk", "interval", "product", "rectangle", "spherical_cap",
    "SemilinearSpec", "solve_heat", "solve_liouville", "solve_torsion",
    "IsotropicFSpec", "ScanConfig", "chain_audit", "scan_min", "z_value",
]
