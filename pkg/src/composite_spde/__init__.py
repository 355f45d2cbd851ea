"""Stochastic heat flow in a two-material medium and optimal control of its diffusivity."""

from .kernel import CompositeMedium, green, green_mass, lambda_coeff
from .discretization import SpaceTimeGrid, sample_paths
from .linear import InitialCondition, StateField, solve_linear
from .picard import CoefficientSpec, picard_solve, euler_oracle

__all__ = [
    "CompositeMedium", "green", "green_mass", "lambda_coeff",
    "SpaceTimeGrid", "sample_paths",
    "InitialCondition", "StateField", "solve_linear",
    "CoefficientSpec", "picard_solve", "euler_oracle",
]
