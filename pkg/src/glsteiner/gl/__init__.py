"""Ginzburg-Landau relaxation on the tube-excised lattice."""

from .energy import (FieldState, Potential, aligned_dual_field, dual_objective, energy_density,
                     energy_gradient, node_densities, total_energy)
from .grid import GridError, GridSpec, build_grid, uniform_grid
from .minimize import EnergyIncreaseError, MinimizeReport, minimize, prolongate
from .recovery import RecoveryError, random_init, recovery_init

__all__ = [
    "FieldState", "Potential", "aligned_dual_field", "dual_objective", "energy_density", "energy_gradient",
    "node_densities", "total_energy", "GridError", "GridSpec", "build_grid", "uniform_grid",
    "EnergyIncreaseError", "MinimizeReport", "minimize", "prolongate", "RecoveryError", "random_init",
    "recovery_init",
]
