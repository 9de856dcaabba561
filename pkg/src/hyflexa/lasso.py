"""LASSO specialization: ``F(x) = ||Ax - b||^2``, ``G(x) = c ||x||_1``, scalar blocks.

Note the convention: there is no ``1/2`` in front of the squared residual, so
``grad F = 2 A^T (Ax - b)`` and the optimality threshold on ``|a_i^T r|`` is
``c / 2``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .exceptions import ConfigError, NumericError
from .problem import BlockPartition, CompositeProblem, l1_nonsmooth
from .sampling import make_rng

logger = logging.getLogger(__name__)

__all__ = [
    "LassoProblem",
    "ResidualCache",
    "soft_threshold",
    "lasso_best_response",
    "lasso_best_responses",
    "apply_update",
    "generate_nesterov",
    "column_dots",
    "default_tau",
]

DEFAULT_TAU_FRACTION = 1e-3
DEFAULT_REFRESH_EVERY = 1000
MIN_ALIGNMENT = 0.1


def soft_threshold(u, kappa):
    """``sign(u) * max(|u| - kappa, 0)``, elementwise."""
    return np.sign(u) * np.maximum(np.abs(u) - kappa, 0.0)


@dataclass
class LassoProblem:
    """LASSO instance.

    ``A`` is kept in compressed sparse column form (dense input is converted),
    which makes single-column access and incremental residual updates cheap.
    """

    A: sp.csc_matrix
    b: np.ndarray
    c: float
    known_optimum: Optional[tuple] = None
    metadata: dict = field(default_factory=dict)
    column_sq_norms: np.ndarray = field(init=False)

    def __post_init__(self):
        A = self.A
        A = sp.csc_matrix(A, dtype=float) if not sp.issparse(A) else A.tocsc().astype(float)
        A.sum_duplicates()
        A.sort_indices()
        self.A = A
        self.b = np.asarray(self.b, dtype=float).ravel()
        if self.b.shape != (A.shape[0],):
            raise ConfigError(f"b has length {self.b.size}, expected {A.shape[0]}")
        self.c = float(self.c)
        if not self.c > 0:
            raise ConfigError("l1 weight c must be positive")
        self.column_sq_norms = np.asarray(A.multiply(A).sum(axis=0)).ravel()
        self._AT = A.T.tocsr()

    @property
    def shape(self):
        return self.A.shape

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def residual(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) - self.b

    def objective(self, x) -> float:
        r = self.residual(x)
        return float(r @ r) + self.c * float(np.abs(x).sum())

    def gradient(self, x) -> np.ndarray:
        return 2.0 * (self._AT @ self.residual(x))

    @property
    def optimal_value(self) -> Optional[float]:
        return None if self.known_optimum is None else self.known_optimum[1]

    def relative_error(self, value: float) -> float:
        """``(V - V*) / V*``; needs a known optimum."""
        if self.known_optimum is None:
            raise ConfigError("relative error needs a known optimal value")
        vstar = self.known_optimum[1]
        return (value - vstar) / vstar

    def as_composite(self) -> CompositeProblem:
        """Generic view with scalar blocks (slow path; used for cross-checks)."""
        A, b, AT = self.A, self.b, self._AT

        def smooth(x):
            r = A @ x - b
            return float(r @ r)

        return CompositeProblem(
            partition=BlockPartition.scalar(self.n),
            smooth=smooth,
            gradient=lambda x: 2.0 * (AT @ (A @ x - b)),
            nonsmooth=l1_nonsmooth(self.c),
        )

    def block_hessian(self, i, x=None) -> np.ndarray:
        return np.array([[2.0 * self.column_sq_norms[i]]])


def default_tau(problem: LassoProblem) -> np.ndarray:
    """Proximal weights ``tau_i = 1e-3 * 2 ||a_i||^2``."""
    return DEFAULT_TAU_FRACTION * 2.0 * problem.column_sq_norms


class ResidualCache:
    """``r = Ax - b`` for the current iterate, updated incrementally.

    Every ``refresh_every`` updates the residual is recomputed from scratch;
    ``drift`` keeps the last measured discrepancy.
    """

    def __init__(self, problem: LassoProblem, x, refresh_every: int = DEFAULT_REFRESH_EVERY):
        self.problem = problem
        self.refresh_every = int(refresh_every)
        self.r = problem.residual(x)
        self.generation = 0
        self.drift = 0.0

    def validate(self, x) -> float:
        fresh = self.problem.residual(x)
        self.drift = float(np.linalg.norm(fresh - self.r))
        tol = 1e-8 * (1.0 + float(np.linalg.norm(self.problem.b)))
        if self.drift > tol:
            logger.warning("residual drift %.3e exceeds %.3e; recomputed", self.drift, tol)
        self.r = fresh
        return self.drift


def column_dots(A: sp.csc_matrix, S, r) -> np.ndarray:
    """``a_i^T r`` for the columns ``S``.

    Each entry is a sum over that column's stored values only, so the result
    for a column does not depend on which other columns are requested.
    """
    S = np.asarray(S, dtype=np.intp)
    indptr = A.indptr
    starts = indptr[S]
    lengths = indptr[S + 1] - starts
    out = np.zeros(S.size)
    nz = lengths > 0
    if not nz.any():
        return out
    starts, lengths = starts[nz], lengths[nz]
    seg = np.cumsum(lengths) - lengths
    pos = np.arange(lengths.sum()) + np.repeat(starts - seg, lengths)
    prod = A.data[pos] * r[A.indices[pos]]
    out[nz] = np.add.reduceat(prod, seg)
    return out


def lasso_best_response(problem: LassoProblem, i: int, x_k, cache: ResidualCache, tau_i: float) -> float:
    """Exact minimizer of ``F(x_i, x_-i^k) + tau_i/2 (x_i - x_i^k)^2 + c |x_i|``.

    With ``q_i = 2||a_i||^2 + tau_i`` and
    ``u_i = (2 a_i^T (b - A x^k + a_i x_i^k) + tau_i x_i^k) / q_i`` the answer
    is ``soft_threshold(u_i, c / q_i)``.
    """
    q = 2.0 * problem.column_sq_norms[i] + tau_i
    if q <= 0:
        raise NumericError(f"column {i} is zero and tau_i = 0: degenerate subproblem", term="q_i")
    sl = slice(problem.A.indptr[i], problem.A.indptr[i + 1])
    a_i, rows = problem.A.data[sl], problem.A.indices[sl]
    xi = float(x_k[i])
    corr = float(a_i @ (-cache.r[rows] + a_i * xi))
    u = (2.0 * corr + tau_i * xi) / q
    return float(soft_threshold(u, problem.c / q))


def lasso_best_responses(problem: LassoProblem, S, x_k, r, curvature) -> np.ndarray:
    """Vectorized best responses for blocks ``S`` with per-block model curvature.

    ``curvature[i]`` is the coefficient of ``(x_i - x_i^k)^2 / 2`` in the
    model, so the minimizer is ``soft(x_i - g_i / q_i, c / q_i)`` with
    ``g_i = 2 a_i^T r``.
    """
    S = np.asarray(S, dtype=np.intp)
    g = 2.0 * column_dots(problem.A, S, r)
    q = curvature[S]
    return soft_threshold(x_k[S] - g / q, problem.c / q)


def apply_update(problem: LassoProblem, cache: ResidualCache, x_k, S_hat, z_hat, gamma: float):
    """``x+ = x^k + gamma (z^ - x^k)`` on ``S_hat`` with ``r += A_S (x+ - x^k)_S``.

    Returns ``(x_new, cache)``; the cache is updated in place.
    """
    S_hat = np.asarray(S_hat, dtype=np.intp)
    x_new = np.array(x_k, dtype=float)
    delta = gamma * (np.asarray(z_hat, dtype=float) - x_new[S_hat])
    x_new[S_hat] += delta
    _residual_add(problem.A, cache.r, S_hat, delta)
    cache.generation += 1
    if cache.refresh_every and cache.generation % cache.refresh_every == 0:
        cache.validate(x_new)
    return x_new, cache


def _residual_add(A, r, S, delta):
    n = A.shape[1]
    if S.size * 8 >= n:
        full = np.zeros(n)
        full[S] = delta
        r += A @ full
        return
    indptr = A.indptr
    for j, d in zip(S, delta):
        if d != 0.0:
            sl = slice(indptr[j], indptr[j + 1])
            r[A.indices[sl]] += d * A.data[sl]


def _round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def generate_nesterov(m: int, n: int, s_A: float, s_sol: float, seed: int, c: float = 1.0,
                      certify: bool = True) -> LassoProblem:
    """Random LASSO instance with a known minimizer.

    Columns of ``A`` have entries uniform on ``[-1, 1]`` kept with probability
    ``s_A / 100``.  A residual ``r*`` is drawn standard normal and each column
    is rescaled so that ``a_i^T r* = -(c/2) sign(x*_i)`` on the support of
    ``x*`` and ``|a_i^T r*| = xi_i c/2`` (``xi_i`` uniform on ``(0, 1]``) off
    it.  With ``b = A x* - r*`` these are exactly the optimality conditions,
    so ``x*`` is a global minimizer.  Columns with
    ``|a_i^T r*| < 0.1 ||a_i||`` are redrawn, which caps every rescaled
    column norm at ``5 c``.

    Parameters
    ----------
    m, n : int
        Rows and columns of ``A``.
    s_A : float
        Percentage of nonzeros per column, in ``(0, 100]``.
    s_sol : float
        Percentage of nonzeros in ``x*``, in ``[0, 100]``; the support size is
        ``round(n * s_sol / 100)``.
    seed : int
    c : float
        l1 weight.
    """
    m, n = int(m), int(n)
    if m < 1 or n < 1:
        raise ConfigError("m and n must be positive")
    if not 0 < s_A <= 100:
        raise ConfigError("s_A must lie in (0, 100]")
    if not 0 <= s_sol <= 100:
        raise ConfigError("s_sol must lie in [0, 100]")
    rng = make_rng(seed)
    density = s_A / 100.0
    k = _round_half_up(n * s_sol / 100.0)

    rstar = rng.standard_normal(m)
    support = np.sort(rng.choice(n, size=k, replace=False)) if k else np.array([], dtype=np.intp)
    xstar = np.zeros(n)
    xstar[support] = rng.choice([-1.0, 1.0], size=k) * (1.0 - rng.random(k))
    offscale = 1.0 - rng.random(n)

    def draw_column():
        while True:
            mask = rng.random(m) < density
            rows = np.flatnonzero(mask)
            if rows.size == 0:
                continue
            vals = rng.uniform(-1.0, 1.0, size=rows.size)
            t = float(vals @ rstar[rows])
            # t ~ N(0, ||a||^2); near-orthogonal columns would need a huge rescale
            if abs(t) >= MIN_ALIGNMENT * float(np.linalg.norm(vals)):
                return rows, vals, t

    on_support = np.zeros(n, dtype=bool)
    on_support[support] = True
    indptr = np.zeros(n + 1, dtype=np.int64)
    all_rows, all_vals = [], []
    half_c = 0.5 * c
    for j in range(n):
        rows, vals, t = draw_column()
        if on_support[j]:
            vals = vals * (-half_c * np.sign(xstar[j]) / t)
        else:
            vals = vals * (offscale[j] * half_c / abs(t))
        all_rows.append(rows)
        all_vals.append(vals)
        indptr[j + 1] = indptr[j] + rows.size
    A = sp.csc_matrix((np.concatenate(all_vals), np.concatenate(all_rows), indptr), shape=(m, n))
    b = A @ xstar - rstar

    prob = LassoProblem(A, b, c, metadata={"m": m, "n": n, "s_A": s_A, "s_sol": s_sol, "seed": int(seed)})
    vstar = prob.objective(xstar)
    prob.known_optimum = (xstar, vstar)
    if certify:
        from .oracle import check_coordinatewise_stationarity

        rep = check_coordinatewise_stationarity(prob, xstar, 1e-8)
        if not rep.passed:
            raise NumericError(f"generated optimum fails stationarity ({rep.max_violation:.3e})", term="x*")
    return prob
