"""Main loop of the hybrid random/greedy parallel block method.

One iteration:

1. draw a random block set ``S`` (coordinator, seeded RNG);
2. compute best responses and error bounds ``E_i`` for ``i in S`` (worker pool);
3. keep the greedy subset ``S^ = {i in S : E_i >= sigma max_S E}``;
4. move ``x <- x + gamma (z^ - x)`` on ``S^`` only and advance ``gamma``.

Worker parallelism only changes who computes each block; results are
assembled in block order, so traces are bit-identical for any worker count.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from .blocksolve import (
    DEFAULT_INNER_MAX_ITERS,
    ErrorBoundSpec,
    inexactness_budget,
    solve_block,
)
from .exceptions import ConfigError, DescentViolation, HyflexaError, NumericError, SolverError
from .lasso import (
    DEFAULT_REFRESH_EVERY,
    LassoProblem,
    ResidualCache,
    _residual_add,
    column_dots,
    default_tau,
    soft_threshold,
)
from .problem import CompositeProblem
from .sampling import (
    FullyParallel,
    MinimalRho,
    Threshold,
    draw,
    greedy_from_config,
    greedy_mask,
    make_rng,
    sampling_from_config,
)
from .surrogate import ExactBlock, ProximalLinear, RegularizedNewton, build_surrogate, surrogate_from_config

__all__ = [
    "Diminishing",
    "Constant",
    "SolverConfig",
    "IterationTrace",
    "SolveResult",
    "SolverState",
    "step_size_next",
    "init_state",
    "iterate",
    "run",
    "make_engine",
    "DESCENT_SLACK",
]

DESCENT_SLACK = 1e-8
DEFAULT_DIVERGENCE_FACTOR = 1e20


@dataclass(frozen=True)
class Diminishing:
    """``gamma^k = gamma^{k-1} (1 - theta gamma^{k-1})``."""

    gamma0: float = 1.0
    theta: float = 1e-2

    def __post_init__(self):
        if not 0 < self.gamma0 <= 1:
            raise ConfigError(f"gamma0 must lie in (0, 1], got {self.gamma0}")
        if not 0 < self.theta < 1:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")

    @property
    def initial(self) -> float:
        return self.gamma0

    def next(self, gamma: float) -> float:
        return step_size_next(gamma, self.theta)


@dataclass(frozen=True)
class Constant:
    gamma: float = 1.0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"constant step must lie in (0, 1], got {self.gamma}")

    @property
    def initial(self) -> float:
        return self.gamma

    def next(self, gamma: float) -> float:
        return gamma


def step_size_next(gamma_prev: float, theta: float) -> float:
    return gamma_prev * (1.0 - theta * gamma_prev)


@dataclass(frozen=True)
class SolverConfig:
    """Solver parameters.

    ``sampling=None`` means fully parallel sampling and ``surrogate=None``
    picks the engine default (the exact-block model with
    ``tau_i = 1e-3 * 2||a_i||^2`` for LASSO, ProximalLinear(1) otherwise).
    ``alpha1 = 0`` requests exact block solves.

    ``full_every > 0`` records the full residual ``||x^(x) - x||`` every that
    many iterations.  ``objective_target`` stops the run as soon as
    ``V(x^k)`` drops to that value (status ``"target"``).

    ``divergence_factor`` aborts with NumericError once
    ``V(x^k) > divergence_factor * (1 + |V(x^0)|)``.  Far enough out, block
    updates fall below floating-point resolution, ``x^ == x`` bitwise and the
    residual test would otherwise report a spurious fixed point.
    """

    sampling: object = None
    greedy: Union[Threshold, MinimalRho] = Threshold(0.0)
    surrogate: object = None
    schedule: Union[Diminishing, Constant] = Diminishing()
    error_bound: ErrorBoundSpec = ErrorBoundSpec()
    alpha1: float = 0.0
    alpha2: float = 1.0
    max_iters: int = 1000
    residual_tol: float = 1e-6
    seed: int = 0
    workers: int = 1
    record_trace: bool = True
    full_every: int = 0
    inner_max_iters: int = DEFAULT_INNER_MAX_ITERS
    check_descent: bool = False
    objective_target: Optional[float] = None
    refresh_every: int = DEFAULT_REFRESH_EVERY
    divergence_factor: float = DEFAULT_DIVERGENCE_FACTOR

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ConfigError("max_iters must be >= 1")
        if not self.residual_tol >= 0:
            raise ConfigError("residual_tol must be >= 0")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ConfigError("alpha1 and alpha2 must be nonnegative")
        if self.full_every < 0:
            raise ConfigError("full_every must be >= 0")
        if not self.divergence_factor > 0:
            raise ConfigError("divergence_factor must be positive")

    @classmethod
    def from_mapping(cls, cfg: dict, num_blocks: int, hessian=None) -> "SolverConfig":
        """Build from flat dotted keys (``sampling.rule``, ``step.theta``, ``run.tol`` ...)."""
        kind = str(cfg.get("step.kind", "diminishing")).lower()
        if kind == "diminishing":
            schedule = Diminishing(float(cfg.get("step.gamma0", 1.0)), float(cfg.get("step.theta", 1e-2)))
        elif kind == "constant":
            schedule = Constant(float(cfg.get("step.constant", 1.0)))
        else:
            raise ConfigError(f"unknown step.kind {kind!r}")
        eb = str(cfg.get("error_bound.kind", "exact"))
        error_bound = ErrorBoundSpec(eb, cfg.get("error_bound.lower", 1.0), cfg.get("error_bound.upper", 1.0))
        target = cfg.get("run.objective_target")
        return cls(
            sampling=sampling_from_config(cfg, num_blocks),
            greedy=greedy_from_config(cfg),
            surrogate=surrogate_from_config(cfg, hessian),
            schedule=schedule,
            error_bound=error_bound,
            alpha1=float(cfg.get("inexact.alpha1", 0.0)),
            alpha2=float(cfg.get("inexact.alpha2", 1.0)),
            max_iters=int(cfg.get("run.max_iters", 1000)),
            residual_tol=float(cfg.get("run.tol", 1e-6)),
            seed=int(cfg.get("seed", 0)),
            workers=int(cfg.get("run.workers", 1)),
            full_every=int(cfg.get("diag.full_every", 0)),
            inner_max_iters=int(cfg.get("inner.max_iters", DEFAULT_INNER_MAX_ITERS)),
            check_descent=bool(cfg.get("diag.check_descent", False)),
            objective_target=None if target is None else float(target),
            divergence_factor=float(cfg.get("run.divergence_factor", DEFAULT_DIVERGENCE_FACTOR)),
        )


@dataclass
class IterationTrace:
    k: int
    objective: float
    residual: float
    full_residual: Optional[float]
    gamma: float
    sampled: int
    updated: int
    elapsed: float


@dataclass
class SolveResult:
    final_x: np.ndarray
    final_objective: float
    iterations: int
    converged: bool
    trace: List[IterationTrace]
    status: str = "max_iters"


# --------------------------------------------------------------------------
# Engines: how best responses, error bounds and updates are computed for a
# particular problem type.  The driver only sees sorted block sets, arrays of
# error-bound values and opaque per-block points.


def _chunks(S, workers):
    if workers <= 1 or len(S) <= 1:
        return [S]
    return [c for c in np.array_split(np.asarray(S), min(workers, len(S))) if len(c)]


def _pmap(pool, fn, parts):
    if pool is None or len(parts) == 1:
        return [fn(p) for p in parts]
    return list(pool.map(fn, parts))


class GenericEngine:
    """Composite problems through ``build_surrogate`` + ``solve_block``."""

    def __init__(self, problem: CompositeProblem, config: SolverConfig, pool=None):
        self.problem = problem
        self.kind = config.surrogate if config.surrogate is not None else ProximalLinear(1.0)
        self.config = config
        self.pool = pool
        self.workers = int(config.workers)
        self.x = None

    def reset(self, x0):
        self.x = np.array(x0, dtype=float)
        self._grad = None

    def objective(self) -> float:
        return self.problem.objective(self.x)

    def _gradient(self):
        if self._grad is None:
            self._grad = np.asarray(self.problem.gradient(self.x), dtype=float)
        return self._grad

    def best_responses(self, S, gamma, remember=True):
        P, x, cfg = self.problem, self.x, self.config
        grad = self._gradient()

        def work(chunk):
            out = []
            for i in chunk:
                i = int(i)
                sur = build_surrogate(self.kind, P, i, x)
                gi = grad[P.partition.slice(i)]
                eps = inexactness_budget(gamma, float(np.linalg.norm(gi)), cfg.alpha1, cfg.alpha2)
                out.append((sur, solve_block(P, sur, i, x, eps, cfg.inner_max_iters)))
            return out

        res = [r for part in _pmap(self.pool, work, _chunks(S, self.workers)) for r in part]
        points = [br.point for _, br in res]
        E = np.array([cfg.error_bound.factor(int(i)) * float(np.linalg.norm(p - P.block(x, int(i))))
                      for i, p in zip(S, points)])
        acc = np.array([br.achieved_accuracy for _, br in res])
        if remember:
            self._last = (S, res)
        return points, E, acc

    def all_distances(self, gamma):
        S = np.arange(self.problem.num_blocks)
        points, E, _ = self.best_responses(S, gamma, remember=False)
        d = np.array([np.linalg.norm(p - self.problem.block(self.x, i)) for i, p in enumerate(points)])
        return E, d

    def descent_gap(self, S, points, mask) -> float:
        """lhs - rhs of the per-iteration descent inequality on the kept blocks."""
        P, x = self.problem, self.x
        S_last, res = self._last
        grad = self._gradient()
        G0 = P.nonsmooth.value(x)
        lhs = rhs = 0.0
        for i, (sur, br), keep in zip(S, res, mask):
            if not keep:
                continue
            sl = P.partition.slice(int(i))
            d = br.point - x[sl]
            lhs += float(grad[sl] @ d)
            rhs += -sur.strong_convexity * float(d @ d) + G0 - P.nonsmooth.value(P.with_block(x, int(i), br.point))
        return lhs - rhs

    def update(self, S, points, mask, gamma):
        x = self.x.copy()
        for i, p, keep in zip(S, points, mask):
            if keep:
                sl = self.problem.partition.slice(int(i))
                x[sl] = x[sl] + gamma * (p - x[sl])
        self.x = x
        self._grad = None


class LassoEngine:
    """Closed-form scalar best responses with an incrementally maintained residual."""

    def __init__(self, problem: LassoProblem, config: SolverConfig, pool=None):
        self.problem = problem
        self.config = config
        self.pool = pool
        self.workers = int(config.workers)
        kind = config.surrogate
        sq2 = 2.0 * problem.column_sq_norms
        n = problem.n
        if kind is None:
            curv = sq2 + default_tau(problem)
        elif isinstance(kind, ExactBlock):
            curv = sq2 + np.broadcast_to(np.asarray(kind.pad, dtype=float), (n,))
        elif isinstance(kind, RegularizedNewton):
            curv = sq2 + kind.q_shift
        elif isinstance(kind, ProximalLinear):
            curv = np.broadcast_to(np.asarray(kind.tau, dtype=float), (n,)).copy()
        else:
            raise ConfigError(f"unsupported surrogate for LASSO: {kind!r}")
        if np.any(curv <= 0):
            raise ConfigError("zero column with zero proximal weight: degenerate subproblem")
        self.curvature = np.ascontiguousarray(curv, dtype=float)
        if config.error_bound.kind == "exact":
            self.factors = None
        else:
            self.factors = np.array([config.error_bound.factor(i) for i in range(n)])
        self.x = None
        self.cache = None

    def reset(self, x0):
        self.x = np.array(x0, dtype=float)
        self.cache = ResidualCache(self.problem, self.x, self.config.refresh_every)

    def objective(self) -> float:
        r = self.cache.r
        return float(r @ r) + self.problem.c * float(np.abs(self.x).sum())

    def _dots(self, S):
        P, r = self.problem, self.cache.r
        if S.size * 8 >= P.n:
            return (P._AT @ r)[S]
        parts = _chunks(S, self.workers)
        return np.concatenate(_pmap(self.pool, lambda c: column_dots(P.A, c, r), parts))

    def best_responses(self, S, gamma, remember=True):
        S = np.asarray(S, dtype=np.intp)
        g = 2.0 * self._dots(S)
        q = self.curvature[S]
        xs = self.x[S]
        pts = soft_threshold(xs - g / q, self.problem.c / q)
        E = np.abs(pts - xs)
        if self.factors is not None:
            E = E * self.factors[S]
        if remember:
            self._last = (S, g, pts)
        return pts, E, np.zeros(S.size)

    def all_distances(self, gamma):
        S = np.arange(self.problem.n)
        pts, E, _ = self.best_responses(S, gamma, remember=False)
        return E, np.abs(pts - self.x)

    def descent_gap(self, S, points, mask) -> float:
        _, g, pts = self._last
        xs = self.x[S][mask]
        d = pts[mask] - xs
        q = self.curvature[S][mask]
        c = self.problem.c
        lhs = float(g[mask] @ d)
        rhs = float(-(q * d) @ d + c * (np.abs(xs) - np.abs(pts[mask])).sum())
        return lhs - rhs

    def update(self, S, points, mask, gamma):
        S_hat = np.asarray(S)[mask]
        delta = gamma * (points[mask] - self.x[S_hat])
        self.x[S_hat] += delta
        _residual_add(self.problem.A, self.cache.r, S_hat, delta)
        cache = self.cache
        cache.generation += 1
        if cache.refresh_every and cache.generation % cache.refresh_every == 0:
            cache.validate(self.x)


def make_engine(problem, config: SolverConfig, pool=None):
    if isinstance(problem, LassoProblem):
        return LassoEngine(problem, config, pool)
    if isinstance(problem, CompositeProblem):
        return GenericEngine(problem, config, pool)
    raise ConfigError(f"unsupported problem type {type(problem).__name__}")


# --------------------------------------------------------------------------


def _num_blocks(problem) -> int:
    return problem.n if isinstance(problem, LassoProblem) else problem.num_blocks


@dataclass
class SolverState:
    """Mutable loop state; ``engine`` holds the iterate and any caches."""

    k: int
    gamma: float
    rng: np.random.Generator
    engine: object
    rule: object
    t_start: float = field(default_factory=time.perf_counter)
    converged: bool = False
    status: str = "running"
    last: Optional[IterationTrace] = None
    v0: Optional[float] = None

    @property
    def x(self) -> np.ndarray:
        return self.engine.x


def init_state(problem, config: SolverConfig, x0=None, pool=None) -> SolverState:
    N = _num_blocks(problem)
    dim = problem.n if isinstance(problem, LassoProblem) else problem.dim
    x0 = np.zeros(dim) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (dim,):
        raise ValueError(f"x0 must have length {dim}")
    if isinstance(problem, CompositeProblem) and not problem.is_feasible(x0):
        raise ConfigError("x0 is not feasible")
    rule = config.sampling if config.sampling is not None else FullyParallel(N)
    if rule.num_blocks != N:
        raise ConfigError(f"sampling rule is for {rule.num_blocks} blocks, problem has {N}")
    engine = make_engine(problem, config, pool)
    engine.reset(x0)
    return SolverState(0, config.schedule.initial, make_rng(config.seed), engine, rule)


def iterate(state: SolverState, problem, config: SolverConfig) -> SolverState:
    """One pass: termination test, sampling, greedy selection, update, step advance."""
    eng = state.engine
    k, gamma = state.k, state.gamma
    try:
        V = eng.objective()
        if state.v0 is None:
            state.v0 = V
        if not np.isfinite(V) or V > config.divergence_factor * (1.0 + abs(state.v0)):
            raise NumericError(f"objective {V:.3e} at iteration {k}: iterates diverged "
                               f"(V(x^0) = {state.v0:.3e})", term="objective")
        if config.objective_target is not None and V <= config.objective_target:
            state.status, state.last = "target", IterationTrace(
                k, V, float("nan"), None, gamma, 0, 0, time.perf_counter() - state.t_start)
            return state
        S = draw(state.rule, state.rng)
        points, E, acc = eng.best_responses(S, gamma)
        residual = float(E.max())
        full_E = full = None
        if config.full_every and k % config.full_every == 0:
            full_E, d = eng.all_distances(gamma)
            full = float(np.linalg.norm(d))
        if residual <= config.residual_tol:
            if full_E is None:
                full_E, d = eng.all_distances(gamma)
                full = float(np.linalg.norm(d))
            if float(full_E.max()) <= config.residual_tol:
                state.converged, state.status = True, "converged"
                state.last = IterationTrace(k, V, residual, full, gamma, int(S.size), 0,
                                            time.perf_counter() - state.t_start)
                return state
        mask = greedy_mask(S, E, config.greedy)
        if config.check_descent and not np.any(acc):
            gap = eng.descent_gap(S, points, mask)
            if gap > DESCENT_SLACK:
                raise DescentViolation(f"descent inequality violated at iteration {k} by {gap:.3e}")
        eng.update(S, points, mask, gamma)
    except SolverError:
        raise
    except HyflexaError as exc:
        raise SolverError(f"iteration {k}: {exc}", k, [], exc) from exc
    state.last = IterationTrace(k, V, residual, full, gamma, int(S.size), int(mask.sum()),
                                time.perf_counter() - state.t_start)
    state.k = k + 1
    state.gamma = config.schedule.next(gamma)
    return state


def run(problem, config: SolverConfig, x0=None) -> SolveResult:
    """Iterate until the residual test passes or ``max_iters`` passes are done.

    The residual test is ``max_{i in S^k} E_i <= residual_tol``, confirmed by
    the same test over all blocks before stopping.
    """
    trace: List[IterationTrace] = []
    passes = 0
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        state = init_state(problem, config, x0, pool)
        state.t_start = time.perf_counter()
        for _ in range(int(config.max_iters)):
            try:
                iterate(state, problem, config)
            except SolverError as exc:
                exc.trace = trace
                raise
            passes += 1
            if config.record_trace:
                trace.append(state.last)
            if state.status != "running":
                break
    finally:
        if pool is not None:
            pool.shutdown()
    status = state.status if state.status != "running" else "max_iters"
    x = state.x.copy()
    return SolveResult(x, state.engine.objective(), passes, status == "converged", trace, status)
