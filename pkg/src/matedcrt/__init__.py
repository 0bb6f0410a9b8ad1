"""Mated-CRT maps from correlated Brownian walks, with random-walk and electrical tools."""

__version__ = "0.1.0"

from ._accel import backend
from .errors import (
    AccuracyError,
    ConsistencyError,
    ContaminationError,
    ConvergenceError,
    DomainError,
    FormatError,
    MatedCrtError,
    ResourceError,
    TopologyError,
)
from .graph_core import MultiGraph, bfs_ball, bfs_distances, degree, induced_subgraph, parse_edge_list
from .map_builder import (
    MatedCrtGraph,
    build_adjacency,
    build_adjacency_bruteforce,
    face_census,
    load_graph,
    planar_order,
    save_graph,
)
from .resistance import (
    BoundaryCondition,
    current_flow,
    dirichlet_energy,
    effective_resistance,
    expected_exit_time,
    harmonic_solve,
    path_flow,
)
from .walk_gen import CorrelatedWalk, WalkParams, generate_walk, load_walk, save_walk
from .walker import green_cumulative, green_mc, return_prob_exact, simulate_walk

__all__ = [name for name in dir() if not name.startswith("_")]
