"""Capacities, simulation and dimension estimates for dynamical percolation on trees."""

from .tree import (
    PercolationParams,
    Tree,
    build_explicit,
    build_from_level_counts,
    build_galton_watson,
    build_spherical,
    level_counts,
    meet_depth,
    prune_leafless,
)
from .target_set import TargetSet, cantor, discretize, empty_target, from_intervals, point
from .kernels import KernelMatrix, KernelSpec, assemble_matrix, ss_energy_series, R_of_n
from .capacity import (
    CapacityResult,
    DimSweep,
    ProductMeasure,
    capacity_sweep,
    dimh_SG,
    energy,
    hps_condition,
    minimize_energy,
    potential,
    sandwich_bounds,
)
from .dynamics import (
    HitEstimate,
    PercolationTrace,
    SimulationRun,
    estimate_hit_probability,
    exceptional_dim_estimate,
    hits_target,
    percolation_trace,
    simulate_edges,
    z_statistic,
)

__version__ = "0.1.0"
