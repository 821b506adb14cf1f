"""Exact solvers for the moving-target TSP with linear trajectories and time windows."""

from .bnb import MipResult, solve_instance, solve_mip
from .formulations import build_bigm, build_gcs, recover_tour, relax
from .graph import Graph, build as build_graph
from .instance import Instance, InstanceError, Target, assign_windows, generate, load, parse, save, serialize
from .oracle import brute_force, check_feasible, fixed_sequence_optimum, quickest_tour
from .tour import Tour

__all__ = [
    "Instance", "InstanceError", "Target", "Tour", "Graph", "MipResult",
    "generate", "assign_windows", "load", "save", "parse", "serialize", "build_graph",
    "build_bigm", "build_gcs", "relax", "recover_tour", "solve_mip", "solve_instance",
    "brute_force", "check_feasible", "fixed_sequence_optimum", "quickest_tour",
]

__version__ = "0.1.0"
