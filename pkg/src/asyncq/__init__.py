"""Asynchronous Q-learning on a single Markovian trajectory, with variance reduction."""

from .chain import (RNG_ALGORITHM, StateActionChain, TrajectorySampler, build_example_chain,
                    cover_time_exact, cover_time_mc, induce_chain, mixing_time, occupancy_check)
from .config import ExperimentConfig
from .diagnostics import compute_diagnostics, fit_blockwise_decay
from .errors import ConvergenceError, NotErgodicError, UsageError
from .mdp import Policy, TabularMdp, load_mdp, random_mdp, value_iteration
from .qlearning import (Adaptive, Constant, Linear, Polynomial, RescaledLinear, run_qlearning,
                        run_td, theorem1_eta, theorem2_eta)
from .trace import EpochTrace, RunTrace
from .vrq import VrConfig, run_vrq, vrq_params

__version__ = "0.1.0"
