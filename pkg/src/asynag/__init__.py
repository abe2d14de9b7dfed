"""Asynchronous push-sum Nash equilibrium seeking for networked aggregative games."""

from .augmented import (
    build_augmented_matrix,
    compute_b_from_trace,
    consensus_residual,
    equivalence_report,
    replay,
)
from .campaign import ExperimentConfig, gap_metric, run_campaign, verify_run
from .cournot import CournotGame, CournotParams, cournot_F_i, generate_instance, solve_ne
from .engine import SCHEMES, ScriptedTiming, TimingModel, run_simulation, synchronous_push_sum
from .game import ActionSet, ConfigurationError, Game, QuadraticGame, project
from .kernels import BACKEND
from .pcpa import Schedule, pcpa_run, round_robin, validate_schedule
from .stepsize import StepsizeSchedule, aggressive_stepsize, rho_value
from .topology import Digraph, delay_constants, from_edges, is_strongly_connected, make_topology
from .trace import EventTrace, TraceFormatError

__version__ = "0.1.0"
