"""Differentially private federated bandits.

Two cooperative UCB algorithms share private reward statistics released by a
tree-based continual-sum mechanism: a master-worker variant that averages
indices centrally on a doubling schedule, and a decentralized variant whose
agents mix count and sum estimates with neighbours every slot.
"""
from .decentralized import DecentralizedUCB, consensus_update, decentralized_index, decentralized_regret_bound
from .dp import (NOISE_OFF, HybridMechanism, LaplaceScale, MechanismBank, PrivateSumReport,
                 error_certificate, laplace_inverse_cdf, sample_laplace)
from .env import ArmModel, BanditEnv, evenly_spaced_means, make_arms
from .exceptions import (ConfigError, EmptyMechanismError, FedbanError, GraphValidationError,
                         InvariantViolation, NumericalFault, PrivacyViolation, SpectralGapError,
                         TraceIntegrityError)
from .graph import Graph, MixingMatrix, build_graph, consensus_distance, jacobi_eigh, mixing_matrix
from .harness import ExperimentConfig, load_config, load_trace, run_experiment, summarize, sweep
from .master import MasterWorkerUCB, central_average, master_regret_bound, ucb_index
from .rng import replica_seed, replica_seeds, run_streams

__version__ = "0.1.0"
