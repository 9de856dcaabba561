"""Block best responses, error bounds and the inexactness budget.

The best response of block ``i`` at ``x^k`` is the unique minimizer of
``F~_i(x_i; x^k) + G(x_i, x_-i^k)`` over ``X_i``.  Quadratic models with a
block prox are solved in closed form; everything else goes through an
iterative inner solver that stops on a certified distance bound.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .exceptions import ConfigError, ConvergenceError, NumericError
from .problem import CompositeProblem
from .surrogate import BlockSurrogate, build_surrogate

__all__ = [
    "BestResponse",
    "ErrorBoundSpec",
    "solve_block",
    "error_bound",
    "inexactness_budget",
    "best_response_map",
    "DEFAULT_INNER_MAX_ITERS",
]

DEFAULT_INNER_MAX_ITERS = 10_000


@dataclass(frozen=True)
class BestResponse:
    block: int
    point: np.ndarray
    achieved_accuracy: float
    exact: bool
    inner_iterations: int = 0


@dataclass(frozen=True)
class ErrorBoundSpec:
    """``kind="exact"`` gives ``||x^_i - x_i^k||``; ``kind="scaled"`` a value in
    ``[lower_i d_i, upper_i d_i]`` (the midpoint of the two bounds)."""

    kind: str = "exact"
    lower: Union[float, np.ndarray] = 1.0
    upper: Union[float, np.ndarray] = 1.0

    def __post_init__(self):
        if self.kind not in ("exact", "scaled"):
            raise ConfigError(f"unknown error bound kind {self.kind!r}")
        lo = np.asarray(self.lower, dtype=float)
        up = np.asarray(self.upper, dtype=float)
        if np.any(lo <= 0) or np.any(up <= 0) or np.any(lo > up):
            raise ConfigError("scaled error bound needs 0 < lower <= upper")

    def factor(self, i: int) -> float:
        if self.kind == "exact":
            return 1.0
        lo = self.lower if np.ndim(self.lower) == 0 else np.asarray(self.lower)[i]
        up = self.upper if np.ndim(self.upper) == 0 else np.asarray(self.upper)[i]
        return 0.5 * (float(lo) + float(up))


def error_bound(spec: ErrorBoundSpec, i: int, xk_block, best_response: BestResponse) -> float:
    """Error-bound value ``E_i(x^k)`` from a computed best response.

    ``xk_block`` is block ``i`` of the current iterate.
    """
    d = np.asarray(best_response.point, dtype=float) - np.asarray(xk_block, dtype=float)
    return spec.factor(i) * float(np.linalg.norm(d))


def inexactness_budget(gamma_k: float, block_grad_norm: float, alpha1: float, alpha2: float) -> float:
    """Admissible accuracy ``gamma^k * alpha1 * min(alpha2, 1/||grad_i F||)``.

    A zero gradient norm gives ``min(alpha2, inf) = alpha2``.
    """
    if alpha1 == 0:
        return 0.0
    cap = alpha2 if block_grad_norm == 0 else min(alpha2, 1.0 / block_grad_norm)
    return gamma_k * alpha1 * cap


def _closed_form(problem: CompositeProblem, sur: BlockSurrogate, i: int):
    """Exact minimizer when one exists in closed form, else ``None``."""
    G = problem.nonsmooth
    fb = problem.feasible[i]
    xk, g = sur.anchor_block, sur.anchor_gradient
    prox_ok = G.block_prox is not None and (fb.kind == "unconstrained" or G.coordinatewise)

    if sur.kind == "proximal_linear" and prox_ok:
        tau = float(sur.hessian)
        return fb.project(G.block_prox(i, xk - g / tau, 1.0 / tau))
    if sur.kind == "newton":
        H = sur.hessian
        if xk.size == 1 and prox_ok:
            h = float(H[0, 0])
            return fb.project(G.block_prox(i, xk - g / h, 1.0 / h))
        if G.is_zero and fb.kind == "unconstrained":
            return xk - np.linalg.solve(H, g)
    return None


def solve_block(problem: CompositeProblem, surrogate: BlockSurrogate, i: int, x_k,
                epsilon: float = 0.0, max_iters: int = DEFAULT_INNER_MAX_ITERS) -> BestResponse:
    """Best response of block ``i`` to accuracy ``epsilon``.

    Raises
    ------
    ConfigError
        ``epsilon == 0`` on a block with no closed form.
    ConvergenceError
        The inner solver needed more than ``max_iters`` iterations.
    """
    if epsilon < 0:
        raise ConfigError("epsilon must be nonnegative")
    point = _closed_form(problem, surrogate, i)
    if point is not None:
        if not np.all(np.isfinite(point)):
            raise NumericError(f"non-finite best response for block {i}", term="best_response")
        return BestResponse(i, point, 0.0, True)
    if epsilon == 0:
        raise ConfigError(f"block {i}: exact solve requested but no closed form is available; "
                          "set inexact.alpha1 > 0")
    G = problem.nonsmooth
    fb = problem.feasible[i]
    if G.block_prox is not None and (fb.kind == "unconstrained" or G.coordinatewise):
        return _prox_gradient(problem, surrogate, i, epsilon, max_iters)
    return _subgradient(problem, surrogate, i, x_k, epsilon, max_iters)


def _prox_gradient(problem, sur, i, epsilon, max_iters):
    # ||z+ - x^|| <= ||w|| / q with w = grad f(z+) - grad f(z) + (z - z+)/t in d(phi)(z+)
    G = problem.nonsmooth
    fb = problem.feasible[i]
    q = sur.strong_convexity

    def prox(v, t):
        return fb.project(G.block_prox(i, v, t))

    z = fb.project(sur.anchor_block)
    fz, gz = sur.value(z), sur.grad(z)
    t = 1.0 / q
    best = np.inf
    for it in range(1, max_iters + 1):
        while True:
            zn = prox(z - t * gz, t)
            d = zn - z
            fzn = sur.value(zn)
            if fzn <= fz + float(gz @ d) + float(d @ d) / (2 * t) + 1e-15 * abs(fz):
                break
            t *= 0.5
            if t < 1e-300:
                raise NumericError(f"block {i}: line search collapsed", term="inner_step")
        gzn = sur.grad(zn)
        w = gzn - gz + (z - zn) / t
        acc = float(np.linalg.norm(w)) / q
        best = min(best, acc)
        z, fz, gz = zn, fzn, gzn
        if acc <= epsilon:
            return BestResponse(i, z, acc, False, it)
        t *= 1.25
    raise ConvergenceError(f"block {i}: inner prox-gradient hit {max_iters} iterations "
                           f"(best certified accuracy {best:.3e})", achieved_accuracy=best)


def _subgradient(problem, sur, i, x_k, epsilon, max_iters):
    # Weighted-average subgradient method for strongly convex objectives; the
    # certificate 2B/(q sqrt(k+1)) uses the largest subgradient norm seen (B).
    G = problem.nonsmooth
    if G.subgradient is None:
        raise ConfigError(f"block {i}: nonsmooth term has neither a block prox nor a subgradient")
    fb = problem.feasible[i]
    sl = problem.partition.slice(i)
    q = sur.strong_convexity
    x_full = np.array(x_k, dtype=float)

    def subgrad(z):
        x_full[sl] = z
        return sur.grad(z) + np.asarray(G.subgradient(x_full), dtype=float)[sl]

    z = fb.project(sur.anchor_block)
    avg = np.zeros_like(z)
    wsum = 0.0
    B = 0.0
    acc = np.inf
    for k in range(max_iters):
        s = subgrad(z)
        B = max(B, float(np.linalg.norm(s)))
        w = k + 1.0
        avg += w * z
        wsum += w
        acc = 2.0 * B / (q * np.sqrt(k + 1.0))
        if acc <= epsilon:
            return BestResponse(i, fb.project(avg / wsum), acc, False, k + 1)
        z = fb.project(z - (2.0 / (q * (k + 2.0))) * s)
    raise ConvergenceError(f"block {i}: inner subgradient method hit {max_iters} iterations "
                           f"(best certified accuracy {acc:.3e})", achieved_accuracy=acc)


def best_response_map(problem: CompositeProblem, kind, x, epsilon: float = 0.0,
                      max_iters: int = DEFAULT_INNER_MAX_ITERS) -> np.ndarray:
    """Full best-response vector ``x^(x)`` (block by block)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(problem.num_blocks):
        sur = build_surrogate(kind, problem, i, x)
        out[problem.partition.slice(i)] = solve_block(problem, sur, i, x, epsilon, max_iters).point
    return out
