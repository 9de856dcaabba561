"""Hybrid random/greedy parallel block-coordinate minimization of ``F + G``.

``F`` is smooth (possibly nonconvex), ``G`` is convex and block-separable
(nonsmooth allowed), and each block lives in a closed convex set.  Every
iteration samples a random set of blocks, keeps the ones whose best-response
distance is within a factor ``sigma`` of the largest, and moves them a step
``gamma`` toward their best responses.  A fast LASSO path
(``||Ax - b||^2 + c ||x||_1``) ships with a generator of instances with a
known minimizer.
"""
from .blocksolve import BestResponse, ErrorBoundSpec, best_response_map, error_bound, inexactness_budget, solve_block
from .driver import (
    Constant,
    Diminishing,
    IterationTrace,
    SolveResult,
    SolverConfig,
    init_state,
    iterate,
    run,
    step_size_next,
)
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DescentViolation,
    HyflexaError,
    NumericError,
    SolverError,
)
from .io import load_instance, save_instance
from .lasso import LassoProblem, ResidualCache, generate_nesterov, lasso_best_response, soft_threshold
from .oracle import check_coordinatewise_stationarity, reference_prox_gradient
from .problem import (
    BlockPartition,
    CompositeProblem,
    FeasibleBlock,
    eval_block_gradient,
    eval_objective,
    l1_nonsmooth,
    quadratic_problem,
    zero_nonsmooth,
)
from .sampling import (
    DoublyUniform,
    FullyParallel,
    MinimalRho,
    Nice,
    NonoverlappingUniform,
    Sequential,
    Threshold,
    Uniform,
    draw,
    greedy_subselect,
    inclusion_probability,
    make_rng,
)
from .surrogate import ExactBlock, ProximalLinear, RegularizedNewton, build_surrogate

__version__ = "0.1.0"
