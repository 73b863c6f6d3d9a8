"""Numerical experiments on the gradient blow-up between two close perfect conductors."""
__version__ = "0.1.0"

from .geometry import (INFINITY, Configuration, GapPatch, GeometryError,
                       RegionKind, RegionTag, VanishingOrders, classify,
                       config_gamma, gamma_of, preset, validate_gap)
from .capacity import (GapIntegralSpec, angular_constant, gap_integral,
                       gap_integral_mc, radial_integral, reduction_sandwich,
                       verify_claim)
from .grid import (Field, Grid, GridError, NodeClass, build_grid, read_lattice,
                   solve_dirichlet, write_lattice)
from .pde import FunctionalsReport, comparison_field, energy_inner, functionals
from .analysis import (HRule, SweepTable, find_boundary_data, fit_exponent,
                       sweep, verify_theorems)

__all__ = [
    "INFINITY", "Configuration", "GapPatch", "GeometryError", "RegionKind",
    "RegionTag", "VanishingOrders", "classify", "config_gamma", "gamma_of",
    "preset", "validate_gap",
    "GapIntegralSpec", "angular_constant", "gap_integral", "gap_integral_mc",
    "radial_integral", "reduction_sandwich", "verify_claim",
    "Field", "Grid", "GridError", "NodeClass", "build_grid", "read_lattice",
    "solve_dirichlet", "write_lattice",
    "FunctionalsReport", "comparison_field", "energy_inner", "functionals",
    "HRule", "SweepTable", "find_boundary_data", "fit_exponent", "sweep",
    "verify_theorems",
]
