"""Event-driven Monte Carlo for Kac's N-particle model of the homogeneous
Boltzmann equation with noncutoff hard potentials."""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, InvariantViolation, PopulationExplosion
from .kernels import (
    KernelSpec,
    RateTable,
    G_of,
    H_of,
    b_angular,
    build_rate_table,
    cutoff_angle,
    g_difference_l2,
    read_rate_table,
    theta_of,
    write_rate_table,
)
from .geometry import (
    displacement,
    displacement_cutoff,
    frame_of,
    gamma_of,
    tanaka_coordinate,
    tanaka_identity_batch,
    tanaka_rotation,
)
from .particle import EmpiricalMeasure, SimConfig, State, Trajectory, empirical, normalize_to_sphere, sample_initial, simulate
from .metrics import W_p, check_comparisons, d_p, w1, w2
from .moments import MomentTrace, lambda_k, lambda_p_coefficient, povzner_beta, stopping_time_Tb
from .coupling import CoupledPair, bar_d_p_squared, couple_pair, couple_scan, couple_simulate
from .branching import Environment, SignedParticle, branch_simulate, estimate_fst
from .rng import stream
