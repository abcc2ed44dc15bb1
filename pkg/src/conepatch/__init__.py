"""Cone-patched simulation of the damped semilinear wave equation.

``u_tt - Δu + f(u) + g(u_t) = 0`` with power source ``f`` and power damping
``g``, solved on local patches cut from the data and assembled along
light cones.
"""
__version__ = "0.1.0"

from .gridfield import Field, Geometry, GridSpec, bump, gaussian, mesa, norm_Lq, seminorm_grad
from .nonlinearity import DampingSpec, SourceSpec, check_assumptions
from .local_solver import Outcome, State, Trajectory, energy, solve_on_patch

__all__ = [
    "DampingSpec",
    "Field",
    "Geometry",
    "GridSpec",
    "Outcome",
    "SourceSpec",
    "State",
    "Trajectory",
    "bump",
    "check_assumptions",
    "energy",
    "gaussian",
    "mesa",
    "norm_Lq",
    "seminorm_grad",
    "solve_on_patch",
]
