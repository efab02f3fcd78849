"""Simulation and verification laboratory for the one-dimensional Axelrod
model and its coupled system of annihilating-coalescing random walks."""

from .model import (
    Configuration,
    ModelParams,
    apply_update,
    edge_disagreement_counts,
    is_absorbed,
    overlap,
    sample_pi0,
)
from .engine import (
    ArrowRecord,
    CorruptLogError,
    EventLog,
    Trajectory,
    read_trajectory_log,
    replay,
    run,
    run_gillespie,
    run_harris,
    write_trajectory_log,
)
from .seeding import derive_seed, rng_from_seed

__version__ = "0.1.0"
