"""Finite-volume solver and entropy-solution checks for degenerate
parabolic-hyperbolic equations with zero-flux boundaries."""

__version__ = "0.1.0"

from .grid import Field, RectDomain, UniformGrid, build_grid, integrate, l1_distance
from .model import (DiffusionModel, FluxModel, InitialData, InvalidModelError, Problem,
                    make_builtin)
from .solver import SolverConfig, SolverError, Trajectory, run, step

__all__ = [
    "DiffusionModel", "Field", "FluxModel", "InitialData", "InvalidModelError", "Problem",
    "RectDomain", "SolverConfig", "SolverError", "Trajectory", "UniformGrid", "build_grid",
    "integrate", "l1_distance", "make_builtin", "run", "step",
]
