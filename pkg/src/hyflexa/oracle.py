"""Independent reference computations for tests and instance certification.

Nothing here reuses the solver's numeric kernels: gradients are recomputed
from ``A`` directly, the reference solver is plain full-vector ISTA, and
scalar minimizers come from grid search.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import NumericError

__all__ = [
    "StationarityReport",
    "check_coordinatewise_stationarity",
    "reference_prox_gradient",
    "power_method_lipschitz",
    "scalar_bruteforce_min",
]


@dataclass(frozen=True)
class StationarityReport:
    """Per-block stationarity violations.

    ``method`` is ``"exact-l1"`` for l1 (or zero) ``G`` and ``"directional"``
    for the sampled fallback, which only certifies the directions it tried.
    ``subgradient_violations`` holds, on the l1 path, the distance from 0 to
    ``grad_j F + c d|x_j|`` evaluated at ``x`` itself.  It jumps by about
    ``c`` when ``x_j`` moves off zero, so iterates that approach a zero
    coordinate geometrically never pass it; ``passed`` uses the continuous
    prox residual instead (see :func:`check_coordinatewise_stationarity`).
    """

    max_violation: float
    per_block_violations: np.ndarray
    passed: bool
    tol: float
    method: str
    subgradient_violations: Optional[np.ndarray] = None


def _interval_distance(lo, hi):
    """Distance from 0 to ``[lo, hi]``, elementwise."""
    return np.maximum(lo, 0.0) + np.maximum(-hi, 0.0)


def check_coordinatewise_stationarity(problem, x, tol: float) -> StationarityReport:
    """Per-block stationarity violations at ``x``.

    LASSO instances and composite problems whose ``G`` is a multiple of the
    l1 norm (including zero) are checked exactly through the unit-step prox
    residual ``|x_j - P_X(soft(x_j - grad_j F, c))|``.  It vanishes exactly
    at coordinate-wise stationary points, equals ``|grad_j F + c sign(x_j)|``
    away from the kink and ``max(|grad_j F| - c, 0)`` at ``x_j = 0``, and is
    continuous in ``x``.  Anything else falls back to sampled one-sided
    directional derivatives.
    """
    x = np.asarray(x, dtype=float)
    if hasattr(problem, "column_sq_norms"):  # LassoProblem
        A = problem.A
        g = 2.0 * np.asarray(A.T @ (A @ x - problem.b)).ravel()
        viol = _l1_prox_residual(g, x, problem.c, None, None)
        sub = _l1_coordinate_violation(g, x, problem.c, None, None)
        return _report(viol, tol, "exact-l1", sub)

    G = problem.nonsmooth
    if G.l1_weight is not None:
        g = np.asarray(problem.gradient(x), dtype=float)
        lo = np.full(x.size, -np.inf)
        up = np.full(x.size, np.inf)
        for i, fb in enumerate(problem.feasible):
            if fb.kind == "box":
                sl = problem.partition.slice(i)
                lo[sl], up[sl] = fb.lower, fb.upper
        coord = _l1_prox_residual(g, x, G.l1_weight, lo, up)
        sub = _l1_coordinate_violation(g, x, G.l1_weight, lo, up)
        blocks = [problem.partition.slice(i) for i in range(problem.num_blocks)]
        per_block = np.array([np.linalg.norm(coord[sl]) for sl in blocks])
        sub_block = np.array([np.linalg.norm(sub[sl]) for sl in blocks])
        return _report(per_block, tol, "exact-l1", sub_block)
    return _directional(problem, x, tol)


def _l1_prox_residual(g, x, c, lo, up):
    u = x - g
    z = np.sign(u) * np.maximum(np.abs(u) - c, 0.0)
    if lo is not None:
        z = np.clip(z, lo, up)
    return np.abs(x - z)


def _l1_coordinate_violation(g, x, c, lo, up):
    nz = x != 0
    a = np.where(nz, g + c * np.sign(x), g - c)
    b = np.where(nz, g + c * np.sign(x), g + c)
    if lo is not None:
        # normal cone of the box: (-inf, 0] at the lower bound, [0, inf) at the upper one
        a = np.where(x >= up, -np.inf, a)
        b = np.where(x <= lo, np.inf, b)
    return _interval_distance(a, b)


def _report(viol, tol, method, sub=None):
    viol = np.asarray(viol, dtype=float)
    mx = float(viol.max()) if viol.size else 0.0
    return StationarityReport(mx, viol, mx <= tol, tol, method, sub)


def _directional(problem, x, tol, t=1e-7, n_random=8, seed=0):
    rng = np.random.default_rng(seed)
    V0 = problem.objective(x)
    per_block = np.zeros(problem.num_blocks)
    for i in range(problem.num_blocks):
        sl = problem.partition.slice(i)
        ni = sl.stop - sl.start
        dirs = list(np.eye(ni)) + list(-np.eye(ni)) + list(rng.standard_normal((n_random, ni)))
        worst = 0.0
        for d in dirs:
            d = d / np.linalg.norm(d)
            y = x.copy()
            y[sl] = problem.feasible[i].project(x[sl] + t * d)
            step = np.linalg.norm(y[sl] - x[sl])
            if step < 0.5 * t:
                continue  # direction leaves the feasible set
            worst = max(worst, -(problem.objective(y) - V0) / step)
        per_block[i] = worst
    return _report(per_block, tol, "directional")


def power_method_lipschitz(A, iters: int = 100, seed: int = 0) -> float:
    """``2 sigma_max(A)^2`` (Lipschitz constant of ``grad ||Ax - b||^2``) by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    return 2.0 * lam


def reference_prox_gradient(problem, iters: int, step: float = None, x0=None, tol: float = 0.0):
    """Full-vector ISTA on a LASSO instance.

    ``step`` defaults to ``0.99 / L`` with ``L`` from 100 power iterations.
    Returns ``(x, V)``.  Raises NumericError if the objective ever increases,
    which signals a step larger than ``1/L``.
    """
    A = problem.A
    Ad = A.toarray() if A.shape[0] * A.shape[1] <= 10_000_000 else A
    b, c = problem.b, problem.c
    if step is None:
        step = 0.99 / power_method_lipschitz(Ad)
    x = np.zeros(A.shape[1]) if x0 is None else np.array(x0, dtype=float)

    def V(z):
        r = Ad @ z - b
        return float(r @ r) + c * float(np.abs(z).sum())

    v = V(x)
    for _ in range(int(iters)):
        g = 2.0 * (Ad.T @ (Ad @ x - b))
        u = x - step * g
        xn = np.sign(u) * np.maximum(np.abs(u) - step * c, 0.0)
        vn = V(xn)
        if vn > v + 1e-12 * max(1.0, abs(v)):
            raise NumericError(f"objective increased ({v!r} -> {vn!r}); step too large", term="step")
        moved = float(np.max(np.abs(xn - x))) if x.size else 0.0
        x, v = xn, vn
        if moved <= tol:
            break
    return x, v


def scalar_bruteforce_min(objective, lo: float, hi: float, step: float) -> float:
    """Grid argmin of a scalar function on ``lo, lo + step, ..., <= hi``."""
    if not lo < hi or not step > 0:
        raise ValueError("need lo < hi and step > 0")
    grid = lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-9)) + 1)
    try:
        vals = np.asarray(objective(grid), dtype=float)
        if vals.shape != grid.shape:
            raise ValueError
    except (TypeError, ValueError):
        vals = np.array([objective(float(t)) for t in grid])
    return float(grid[int(np.argmin(vals))])
