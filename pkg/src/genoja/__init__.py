"""Streaming solvers for the top generalized eigenvector of a symmetric-definite pair."""

from genoja.core import EigenReference, ProblemSpec, b_normalize, random_problem, sin2_b, solve_reference
from genoja.solvers import (
    SolverConfig,
    SolverState,
    StepSchedule,
    gen_oja_step,
    initial_state,
    oja_step,
    run,
    run_single,
    schedule_at,
    streaming_average,
    two_step_baseline,
)
from genoja.streams import (
    StreamSpec,
    deterministic_stream,
    make_cca_stream,
    make_gaussian_gev_stream,
    make_pca_stream,
    next_sample,
    open_stream,
)
from genoja.trace import Trace, fit_tail_slope, log_checkpoints

__all__ = [
    "EigenReference",
    "ProblemSpec",
    "SolverConfig",
    "SolverState",
    "StepSchedule",
    "StreamSpec",
    "Trace",
    "b_normalize",
    "deterministic_stream",
    "fit_tail_slope",
    "gen_oja_step",
    "initial_state",
    "log_checkpoints",
    "make_cca_stream",
    "make_gaussian_gev_stream",
    "make_pca_stream",
    "next_sample",
    "oja_step",
    "open_stream",
    "random_problem",
    "run",
    "run_single",
    "schedule_at",
    "sin2_b",
    "solve_reference",
    "streaming_average",
    "two_step_baseline",
]
