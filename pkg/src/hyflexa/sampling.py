"""Proper sampling rules for the random block set and the greedy subselection.

All draws come from ``numpy.random.Generator(Philox(seed))``; the Philox
counter-based stream is part of the reproducibility contract, so a fixed
seed gives the same sequence of sets on every platform numpy supports.

Block indices are 0-based throughout.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .exceptions import ConfigError

__all__ = [
    "make_rng",
    "Uniform",
    "DoublyUniform",
    "NonoverlappingUniform",
    "Nice",
    "Sequential",
    "FullyParallel",
    "Threshold",
    "MinimalRho",
    "draw",
    "inclusion_probability",
    "set_probability",
    "greedy_subselect",
    "greedy_mask",
    "sampling_from_config",
    "greedy_from_config",
]


def make_rng(seed: int) -> np.random.Generator:
    """Philox-backed generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


@dataclass(frozen=True)
class Uniform:
    """Every block included with probability ``expected_size / N``.

    Realized as independent Bernoulli(p) inclusions conditioned on a
    nonempty draw, with ``p`` solved so that the conditional inclusion
    probability is exactly ``expected_size / N``.  Nonempty draws force
    ``expected_size >= 1``.
    """

    num_blocks: int
    expected_size: float

    def __post_init__(self):
        N, e = self.num_blocks, float(self.expected_size)
        _check_n(N)
        if not 1.0 <= e <= N:
            raise ConfigError(f"expected_size must lie in [1, N={N}], got {e}")

    @cached_property
    def bernoulli_p(self) -> float:
        N, e = self.num_blocks, float(self.expected_size)
        target = e / N
        if e >= N:
            return 1.0
        if e <= 1.0:
            return 0.0  # limit law: exactly one block
        return brentq(lambda p: p / -np.expm1(N * np.log1p(-p)) - target, 1e-300, 1.0 - 1e-16,
                      xtol=1e-300, rtol=4 * np.finfo(float).eps)


@dataclass(frozen=True)
class DoublyUniform:
    """Cardinality ``j`` with probability ``pmf[j-1]``, then a uniform ``j``-subset."""

    num_blocks: int
    pmf: tuple

    def __post_init__(self):
        _check_n(self.num_blocks)
        pmf = np.asarray(self.pmf, dtype=float)
        if pmf.shape != (self.num_blocks,):
            raise ConfigError(f"cardinality pmf must have {self.num_blocks} entries (sizes 1..N)")
        if np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-12:
            raise ConfigError("cardinality pmf must be nonnegative and sum to 1")
        object.__setattr__(self, "pmf", tuple(float(v) for v in pmf))


@dataclass(frozen=True)
class NonoverlappingUniform:
    """One of ``P`` disjoint parts covering all blocks, each with probability ``1/P``."""

    num_blocks: int
    parts: tuple

    def __post_init__(self):
        _check_n(self.num_blocks)
        parts = tuple(tuple(sorted(int(j) for j in p)) for p in self.parts)
        if not parts or any(len(p) == 0 for p in parts):
            raise ConfigError("partition parts must be nonempty")
        flat = [j for p in parts for j in p]
        if sorted(flat) != list(range(self.num_blocks)):
            raise ConfigError("parts must be disjoint and cover every block exactly once")
        object.__setattr__(self, "parts", parts)

    @classmethod
    def contiguous(cls, num_blocks: int, count: int) -> "NonoverlappingUniform":
        if not 1 <= count <= num_blocks:
            raise ConfigError(f"partition count must lie in [1, {num_blocks}]")
        return cls(num_blocks, tuple(tuple(a) for a in np.array_split(np.arange(num_blocks), count)))


@dataclass(frozen=True)
class Nice:
    """Uniform over all subsets of exactly ``tau`` blocks."""

    num_blocks: int
    tau: int

    def __post_init__(self):
        _check_n(self.num_blocks)
        if not 1 <= int(self.tau) <= self.num_blocks:
            raise ConfigError(f"tau must lie in [1, {self.num_blocks}], got {self.tau}")


@dataclass(frozen=True)
class Sequential:
    """One block chosen uniformly at random."""

    num_blocks: int

    def __post_init__(self):
        _check_n(self.num_blocks)


@dataclass(frozen=True)
class FullyParallel:
    """All blocks, every time."""

    num_blocks: int

    def __post_init__(self):
        _check_n(self.num_blocks)


def _check_n(N):
    if int(N) < 1:
        raise ConfigError("need at least one block")


def _subset(rng, N, j):
    return np.sort(rng.choice(N, size=j, replace=False))


def draw(rule, rng: np.random.Generator) -> np.ndarray:
    """Draw a nonempty sorted array of block indices."""
    N = rule.num_blocks
    if isinstance(rule, FullyParallel):
        return np.arange(N)
    if isinstance(rule, Sequential):
        return np.array([rng.integers(N)])
    if isinstance(rule, Nice):
        return _subset(rng, N, int(rule.tau))
    if isinstance(rule, DoublyUniform):
        j = int(rng.choice(N, p=rule.pmf)) + 1
        return _subset(rng, N, j)
    if isinstance(rule, NonoverlappingUniform):
        return np.array(rule.parts[rng.integers(len(rule.parts))])
    if isinstance(rule, Uniform):
        p = rule.bernoulli_p
        if p == 0.0:
            return np.array([rng.integers(N)])
        while True:
            S = np.flatnonzero(rng.random(N) < p)
            if S.size:
                return S
    raise ConfigError(f"unknown sampling rule {rule!r}")


def inclusion_probability(rule, i: int) -> float:
    """``P(i in S)`` under the rule's law."""
    N = rule.num_blocks
    if not 0 <= i < N:
        raise IndexError(f"block index {i} out of range")
    if isinstance(rule, FullyParallel):
        return 1.0
    if isinstance(rule, Sequential):
        return 1.0 / N
    if isinstance(rule, Nice):
        return rule.tau / N
    if isinstance(rule, DoublyUniform):
        return float(np.dot(rule.pmf, np.arange(1, N + 1))) / N
    if isinstance(rule, NonoverlappingUniform):
        return 1.0 / len(rule.parts)
    if isinstance(rule, Uniform):
        return float(rule.expected_size) / N
    raise ConfigError(f"unknown sampling rule {rule!r}")


def set_probability(rule, S: Sequence[int]) -> float:
    """``P(S = given set)`` under the rule's law."""
    N = rule.num_blocks
    S = tuple(sorted(int(j) for j in S))
    k = len(S)
    if k == 0:
        return 0.0
    if isinstance(rule, FullyParallel):
        return float(k == N)
    if isinstance(rule, Sequential):
        return 1.0 / N if k == 1 else 0.0
    if isinstance(rule, Nice):
        return 1.0 / comb(N, rule.tau) if k == rule.tau else 0.0
    if isinstance(rule, DoublyUniform):
        return rule.pmf[k - 1] / comb(N, k)
    if isinstance(rule, NonoverlappingUniform):
        return 1.0 / len(rule.parts) if S in rule.parts else 0.0
    if isinstance(rule, Uniform):
        p = rule.bernoulli_p
        if p == 0.0:
            return 1.0 / N if k == 1 else 0.0
        if p == 1.0:
            return float(k == N)
        return p ** k * (1 - p) ** (N - k) / -np.expm1(N * np.log1p(-p))
    raise ConfigError(f"unknown sampling rule {rule!r}")


@dataclass(frozen=True)
class Threshold:
    """Keep ``{i in S : E_i >= sigma * max_S E}``."""

    sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 1.0:
            raise ConfigError(f"sigma must lie in [0, 1], got {self.sigma}")


@dataclass(frozen=True)
class MinimalRho:
    """Keep only the argmax of ``E`` over ``S`` (lowest index on ties)."""

    rho: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError(f"rho must lie in (0, 1], got {self.rho}")


def greedy_mask(S, E, policy) -> np.ndarray:
    """Boolean mask over the positions of ``S`` marking the kept blocks."""
    S = np.asarray(S)
    E = np.asarray(E, dtype=float)
    if S.size == 0:
        raise ValueError("greedy subselection needs a nonempty sampled set")
    if isinstance(policy, Threshold):
        if policy.sigma == 0.0:
            return np.ones(S.size, dtype=bool)
        return E >= policy.sigma * E.max()
    if isinstance(policy, MinimalRho):
        cand = np.flatnonzero(E == E.max())
        mask = np.zeros(S.size, dtype=bool)
        mask[cand[np.argmin(S[cand])]] = True
        return mask
    raise ConfigError(f"unknown greedy policy {policy!r}")


def greedy_subselect(S, E, policy) -> np.ndarray:
    """Greedy subset of the sampled blocks ``S``.

    ``E`` is either aligned with ``S`` or a mapping from block index to its
    error-bound value.  Returns the kept block indices, sorted.
    """
    S = np.asarray(sorted(int(j) for j in S), dtype=int)
    if isinstance(E, dict):
        E = [E[int(j)] for j in S]
    return S[greedy_mask(S, E, policy)]


def sampling_from_config(cfg: dict, num_blocks: int):
    """Rule from ``sampling.*`` keys; defaults to fully parallel."""
    name = str(cfg.get("sampling.rule", "full")).lower().replace("-", "_")
    N = num_blocks
    if name in ("full", "fully_parallel", "fp"):
        return FullyParallel(N)
    if name in ("sequential", "seq"):
        return Sequential(N)
    if name in ("nice", "ns"):
        return Nice(N, min(int(cfg.get("sampling.tau", 1)), N))
    if name in ("uniform", "u"):
        return Uniform(N, float(cfg.get("sampling.expected_size", 1.0)))
    if name in ("nu", "nonoverlapping", "nonoverlapping_uniform"):
        return NonoverlappingUniform.contiguous(N, int(cfg.get("sampling.partition_count", 1)))
    if name in ("du", "doubly_uniform"):
        pmf = cfg.get("sampling.pmf")
        if pmf is None:
            raise ConfigError("doubly uniform sampling needs sampling.pmf")
        if isinstance(pmf, str):
            pmf = [float(v) for v in pmf.split(",")]
        return DoublyUniform(N, tuple(pmf))
    raise ConfigError(f"unknown sampling.rule {name!r}")


def greedy_from_config(cfg: dict):
    mode = str(cfg.get("greedy.mode", "threshold")).lower()
    if mode == "threshold":
        return Threshold(float(cfg.get("greedy.sigma", 0.0)))
    if mode in ("rho", "minimal_rho"):
        return MinimalRho(float(cfg.get("greedy.rho", 1.0)))
    raise ConfigError(f"unknown greedy.mode {mode!r}")
