"""Simulated-annealing SGLD for convex objectives behind noisy oracles."""
from .backend import BACKEND
from .geometry import ConvexBody, contains, make_body, roundness_probability, sample_uniform_ball_intersect
from .objective import ConvexObjective, make_test_objective, shift_to_zero
from .noise import (
    NoisyOracle,
    make_equation_system_oracle,
    make_oracle,
    make_ripple_noise,
    noisy_eval,
    verify_noise_bounds,
)
from .smoothing import (
    DerivedConstants,
    SmoothedOracle,
    derived_constants,
    make_smoothed,
    select_sigma,
    smoothed_value_mc,
    stochastic_gradient,
)
from .chains import ChainTrace, SgldParams, coupled_run, hitting_time, metropolis_sgld_run, sgld_run
from .annealing import (
    AnnealConfig,
    AnnealResult,
    InfeasibleSchedule,
    anneal_run,
    binary_search_shift,
    build_schedule,
    compute_i_max,
    compute_k_max,
    compute_schedule,
)
from .config import ConfigError, RunConfig, build_instance, load_config, parse_config

__version__ = "0.1.0"
