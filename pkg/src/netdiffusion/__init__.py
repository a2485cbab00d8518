"""Diffusion over weighted directed multi-agent networks.

Conservative (P1) and non-conservative (P2) pairwise update protocols,
their expected dynamics and sample paths, exogenous inputs and control,
spectral redesign and reinforcement-learning structure adaptation.
"""

from .design import RespectrumPlan, edge_changes, expand_cluster_edits, respectrum
from .dynamics import (SwitchingSchedule, Trajectory, consensus_value, convergence_bound, expected_trajectory,
                       shares_steady_eigenvector, simulate_switching, stationary_value_conservative)
from .errors import DiffusionError
from .exogenous import (Constant, Impulse, LearningGains, Piecewise, Stability, bibo_stability,
                        check_stubborn_invertibility, dynamic_learning_trajectory, inhomogeneous_trajectory,
                        pid_expanded_response, reduce_stubborn, stubborn_steady_state)
from .graph import (P1, P2, Edge, Protocol, TransitionRateMatrix, WeightedDigraph, build_graph,
                    generate_random_graph, load_graph, save_graph, transition_rate_matrix)
from .mdp import MdpConfig, epsilon_greedy, run_qlearning, run_trials, stationary_distribution
from .modal import ControllerSpec, controlled_response, fiedler_analysis, from_quasi, subsumed_response, to_quasi
from .montecarlo import Discretized, ExactEvent, sample_paths
from .spectral import (degenerate_basis_choice, eigendecompose, is_ctmc_generator, matrix_exponential,
                       steady_state_vectors)

__version__ = "0.1.0"

__all__ = [
    "P1", "P2", "Protocol", "Edge", "WeightedDigraph", "TransitionRateMatrix", "build_graph",
    "generate_random_graph", "load_graph", "save_graph", "transition_rate_matrix",
    "eigendecompose", "degenerate_basis_choice", "matrix_exponential", "steady_state_vectors", "is_ctmc_generator",
    "Trajectory", "SwitchingSchedule", "expected_trajectory", "stationary_value_conservative", "consensus_value",
    "simulate_switching", "shares_steady_eigenvector", "convergence_bound",
    "ExactEvent", "Discretized", "sample_paths",
    "Constant", "Impulse", "Piecewise", "LearningGains", "Stability", "inhomogeneous_trajectory",
    "reduce_stubborn", "check_stubborn_invertibility", "stubborn_steady_state", "dynamic_learning_trajectory",
    "pid_expanded_response", "bibo_stability",
    "ControllerSpec", "to_quasi", "from_quasi", "controlled_response", "subsumed_response", "fiedler_analysis",
    "RespectrumPlan", "respectrum", "edge_changes", "expand_cluster_edits",
    "MdpConfig", "run_qlearning", "run_trials", "stationary_distribution", "epsilon_greedy",
    "DiffusionError", "__version__",
]
