from .lindblad import NoiseModel, collapse_operators, evolve_lindblad_dense, site_operator
from .trajectories import TrajectoryPlan, TrajectoryResult, evolve_trajectories
from .unitary import KrylovConvergenceError, Propagator, evolve_bose_densities, evolve_unitary, propagate_sector

__all__ = [
    "KrylovConvergenceError",
    "NoiseModel",
    "Propagator",
    "TrajectoryPlan",
    "TrajectoryResult",
    "collapse_operators",
    "evolve_bose_densities",
    "evolve_lindblad_dense",
    "evolve_trajectories",
    "evolve_unitary",
    "propagate_sector",
    "site_operator",
]
