"""Distributed stochastic subgradient consensus over random noisy networks.

Simulation library and CLI for the distributed subgradient algorithm in which
nodes exchange states over a randomly switching digraph through channels with
additive and relative-state multiplicative noise, using diminishing consensus
and descent step sizes.
"""

from .config import (ExperimentConfig, build_init, build_noise, build_objective,
                     build_process, build_schedule, config_from_dict,
                     load_config, save_config, validate_config)
from .engine import (InitialStates, MonteCarloResult, StepRecord, apply_step,
                     consensus_projection, default_record_ks,
                     delta_recursion_check, monte_carlo, run_trajectory,
                     step_compact, step_per_node)
from .errors import (ConfigError, DivergenceDetected, FactorizationError,
                     NoStationaryDistributionError, NonConvergenceError,
                     NonSymmetricError, ParseError, SubgradNetError,
                     ValidationError)
from .experiment import (ExperimentConstants, ExperimentResult,
                         estimate_constants, run_experiment,
                         run_trajectory_from_config)
from .graphs import (DeterministicCycle, IndependentEdges, LaplacianStats,
                     MarkovSwitching, is_balanced, joint_connectivity_report,
                     lambda2, laplacian, mean_graph_spanning_check,
                     sample_sequence, spectral_norm, symmetrized_laplacian,
                     validate_adjacency)
from .noise import (CommNoiseModel, draw_channel_noise, psi_matrix,
                    stacked_noise_matrices)
from .objectives import (CustomObjective, LassoProblem, QuadraticObjective,
                         global_optimum, quadratic_objective, soft_threshold)
from .stepsize import (FAILS, HOLDS, INCONCLUSIVE, ConditionCheck,
                       ConditionReport, StepSchedule, kahan_cumsum,
                       verify_conditions)

__version__ = "0.1.0"
