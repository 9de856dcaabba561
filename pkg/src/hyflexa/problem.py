"""Composite problem ``V(x) = F(x) + G(x)`` over a block-structured feasible set.

``F`` is smooth (possibly nonconvex), ``G`` convex (possibly nonsmooth) and the
feasible set is a Cartesian product of per-block sets, each either the whole
space or a box.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import ConfigError, NumericError

__all__ = [
    "BlockPartition",
    "FeasibleBlock",
    "Nonsmooth",
    "CompositeProblem",
    "zero_nonsmooth",
    "l1_nonsmooth",
    "nonseparable_nonsmooth",
    "quadratic_problem",
    "eval_objective",
    "eval_block_gradient",
    "project_block",
]


@dataclass(frozen=True)
class BlockPartition:
    """Partition of ``n`` coordinates into ``N`` contiguous blocks."""

    block_sizes: tuple
    offsets: tuple = field(init=False)
    total_dim: int = field(init=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.block_sizes)
        if len(sizes) == 0:
            raise ConfigError("a partition needs at least one block")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"block sizes must be >= 1, got {sizes}")
        object.__setattr__(self, "block_sizes", sizes)
        object.__setattr__(self, "offsets", tuple(int(v) for v in np.concatenate([[0], np.cumsum(sizes)])))
        object.__setattr__(self, "total_dim", int(sum(sizes)))

    @classmethod
    def scalar(cls, n: int) -> "BlockPartition":
        return cls((1,) * int(n))

    @classmethod
    def uniform(cls, n: int, size: int) -> "BlockPartition":
        """Blocks of ``size`` coordinates; the last block takes the remainder."""
        n, size = int(n), int(size)
        full, rem = divmod(n, size)
        return cls((size,) * full + ((rem,) if rem else ()))

    @property
    def num_blocks(self) -> int:
        return len(self.block_sizes)

    @property
    def is_scalar(self) -> bool:
        return self.total_dim == self.num_blocks

    def slice(self, i: int) -> slice:
        self.check_index(i)
        return slice(self.offsets[i], self.offsets[i + 1])

    def check_index(self, i) -> None:
        if not (0 <= int(i) < self.num_blocks):
            raise IndexError(f"block index {i} out of range for {self.num_blocks} blocks")


@dataclass(frozen=True)
class FeasibleBlock:
    """Per-block feasible set: ``unconstrained`` or ``box(lower, upper)``."""

    kind: str = "unconstrained"
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "unconstrained":
            return
        if self.kind != "box":
            raise ConfigError(f"unknown feasible-set kind {self.kind!r}")
        lo = np.asarray(self.lower, dtype=float)
        up = np.asarray(self.upper, dtype=float)
        if lo.shape != up.shape or lo.ndim != 1:
            raise ConfigError("box bounds must be 1-d arrays of equal length")
        if np.any(lo > up):
            raise ConfigError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    @classmethod
    def box(cls, lower, upper) -> "FeasibleBlock":
        return cls("box", lower, upper)

    def project(self, z: np.ndarray) -> np.ndarray:
        return project_block(self, z)

    def contains(self, z: np.ndarray) -> bool:
        if self.kind == "unconstrained":
            return True
        z = np.asarray(z, dtype=float)
        return bool(np.all(z >= self.lower) and np.all(z <= self.upper))


def project_block(feasible: FeasibleBlock, z) -> np.ndarray:
    """Euclidean projection of ``z`` onto a block set."""
    z = np.asarray(z, dtype=float)
    if feasible.kind == "unconstrained":
        return z.copy()
    if z.shape != feasible.lower.shape:
        raise ValueError(f"expected block of length {feasible.lower.size}, got {z.shape}")
    return np.minimum(np.maximum(z, feasible.lower), feasible.upper)


@dataclass(frozen=True)
class Nonsmooth:
    """Convex term ``G``.

    Parameters
    ----------
    value : callable
        ``x -> G(x)`` on the full vector.
    block_value : callable, optional
        ``(i, x_i) -> G_i(x_i)``; present iff ``G`` is block separable.
    block_prox : callable, optional
        ``(i, v, t) -> argmin_u G_i(u) + ||u - v||^2 / (2 t)``.
    coordinatewise : bool
        The prox acts on each coordinate independently, so clamping its output
        to a box gives the prox of ``G_i`` plus the box indicator.
    subgradient : callable, optional
        ``x -> xi in dG(x)``; used by the inner solver when there is no prox.
    l1_weight : float, optional
        Set when ``G = l1_weight * ||x||_1``; enables exact stationarity checks.
    """

    value: Callable[[np.ndarray], float]
    block_value: Optional[Callable[[int, np.ndarray], float]] = None
    block_prox: Optional[Callable[[int, np.ndarray, float], np.ndarray]] = None
    coordinatewise: bool = False
    subgradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    l1_weight: Optional[float] = None
    is_zero: bool = False

    @property
    def separable(self) -> bool:
        return self.block_value is not None


def zero_nonsmooth() -> Nonsmooth:
    return Nonsmooth(
        value=lambda x: 0.0,
        block_value=lambda i, xi: 0.0,
        block_prox=lambda i, v, t: np.array(v, dtype=float),
        coordinatewise=True,
        subgradient=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        l1_weight=0.0,
        is_zero=True,
    )


def _soft(v, kappa):
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def l1_nonsmooth(c: float) -> Nonsmooth:
    """``G(x) = c * ||x||_1``."""
    c = float(c)
    if c < 0:
        raise ConfigError("l1 weight must be nonnegative")
    return Nonsmooth(
        value=lambda x: c * float(np.sum(np.abs(x))),
        block_value=lambda i, xi: c * float(np.sum(np.abs(xi))),
        block_prox=lambda i, v, t: _soft(np.asarray(v, dtype=float), c * t),
        coordinatewise=True,
        subgradient=lambda x: c * np.sign(x),
        l1_weight=c,
    )


def nonseparable_nonsmooth(value, subgradient=None) -> Nonsmooth:
    """A convex ``G`` known only through its value (and optionally a subgradient)."""
    return Nonsmooth(value=value, subgradient=subgradient)


@dataclass(frozen=True)
class CompositeProblem:
    """``min V(x) = F(x) + G(x)`` subject to ``x_i in X_i``.

    Evaluators must be side-effect free; workers call them concurrently.
    """

    partition: BlockPartition
    smooth: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    nonsmooth: Nonsmooth = field(default_factory=zero_nonsmooth)
    feasible: Optional[Sequence[FeasibleBlock]] = None
    lipschitz: Optional[float] = None

    def __post_init__(self):
        N = self.partition.num_blocks
        feas = self.feasible
        if feas is None:
            feas = (FeasibleBlock(),) * N
        feas = tuple(feas)
        if len(feas) != N:
            raise ConfigError(f"need {N} feasible blocks, got {len(feas)}")
        for i, fb in enumerate(feas):
            if fb.kind == "box" and fb.lower.size != self.partition.block_sizes[i]:
                raise ConfigError(f"box for block {i} has wrong length")
        object.__setattr__(self, "feasible", feas)
        if self.lipschitz is not None and not self.lipschitz > 0:
            raise ConfigError("Lipschitz hint must be positive")

    @property
    def num_blocks(self) -> int:
        return self.partition.num_blocks

    @property
    def dim(self) -> int:
        return self.partition.total_dim

    def block(self, x, i):
        return np.asarray(x)[self.partition.slice(i)]

    def with_block(self, x, i, xi) -> np.ndarray:
        """Copy of ``x`` with block ``i`` replaced by ``xi``."""
        y = np.array(x, dtype=float)
        y[self.partition.slice(i)] = xi
        return y

    def project(self, x) -> np.ndarray:
        x = np.array(x, dtype=float)
        for i, fb in enumerate(self.feasible):
            if fb.kind != "unconstrained":
                sl = self.partition.slice(i)
                x[sl] = fb.project(x[sl])
        return x

    def is_feasible(self, x) -> bool:
        return all(fb.contains(self.block(x, i)) for i, fb in enumerate(self.feasible))

    def objective(self, x) -> float:
        return eval_objective(self, x)

    def block_gradient(self, i, x) -> np.ndarray:
        return eval_block_gradient(self, i, x)


def _check_dim(problem, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.dim,):
        raise ValueError(f"expected vector of length {problem.dim}, got shape {x.shape}")
    return x


def eval_objective(problem: CompositeProblem, x) -> float:
    x = _check_dim(problem, x)
    f = float(problem.smooth(x))
    if not np.isfinite(f):
        raise NumericError(f"smooth term is not finite: {f}", term="F")
    g = float(problem.nonsmooth.value(x))
    if not np.isfinite(g):
        raise NumericError(f"nonsmooth term is not finite: {g}", term="G")
    return f + g


def eval_block_gradient(problem: CompositeProblem, i: int, x) -> np.ndarray:
    sl = problem.partition.slice(i)
    x = _check_dim(problem, x)
    return np.asarray(problem.gradient(x), dtype=float)[sl].copy()


def quadratic_problem(Q, p=None, partition=None, nonsmooth=None, feasible=None) -> CompositeProblem:
    """``F(x) = 0.5 x^T Q x + p^T x`` with ``Q`` symmetric.

    Handy for tests and demos; the Lipschitz hint is the spectral norm of ``Q``.
    """
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    p = np.zeros(n) if p is None else np.asarray(p, dtype=float)
    if partition is None:
        partition = BlockPartition.scalar(n)
    return CompositeProblem(
        partition=partition,
        smooth=lambda x: 0.5 * float(x @ (Q @ x)) + float(p @ x),
        gradient=lambda x: Q @ x + p,
        nonsmooth=nonsmooth if nonsmooth is not None else zero_nonsmooth(),
        feasible=feasible,
        lipschitz=float(np.linalg.norm(Q, 2)) or None,
    )
