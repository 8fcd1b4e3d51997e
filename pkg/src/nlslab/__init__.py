"""Numerical laboratory for semiclassical solitons of a weakly coupled NLS system."""

from .evolution import EvolutionConfig, WavePair, evolve, initial_data, strang_step
from .grid import Grid, make_grid
from .ground_state import GroundStatePair, solve_ground_state
from .hamiltonian import PhasePoint, lissajous_portrait, verlet_step
from .potentials import Potential

__all__ = [
    "EvolutionConfig",
    "Grid",
    "GroundStatePair",
    "PhasePoint",
    "Potential",
    "WavePair",
    "evolve",
    "initial_data",
    "lissajous_portrait",
    "make_grid",
    "solve_ground_state",
    "strang_step",
    "verlet_step",
]
