"""Per-block strongly convex models of the smooth term.

Every model ``F~_i(.; x^k)`` built here is strongly convex in the block
variable and reproduces the block gradient of ``F`` at the anchor point.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .exceptions import ConfigError, NumericError
from .problem import CompositeProblem

__all__ = [
    "ProximalLinear",
    "RegularizedNewton",
    "ExactBlock",
    "BlockSurrogate",
    "build_surrogate",
    "block_param",
    "surrogate_from_config",
]


def block_param(value, i: int) -> float:
    """Scalar parameter for block ``i`` from a scalar or per-block sequence."""
    if np.ndim(value) == 0:
        return float(value)
    return float(np.asarray(value)[i])


@dataclass(frozen=True)
class ProximalLinear:
    """Linearization plus proximal term ``tau_i/2 ||x_i - x_i^k||^2``."""

    tau: Union[float, np.ndarray] = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.tau, dtype=float) <= 0):
            raise ConfigError("ProximalLinear requires tau_i > 0 for every block")


@dataclass(frozen=True)
class RegularizedNewton:
    """Second-order model with block Hessian shifted by ``q_shift * I``.

    ``hessian(i, x)`` returns the ``n_i x n_i`` block of the Hessian of F.
    """

    hessian: Callable[[int, np.ndarray], np.ndarray]
    q_shift: float = 0.0

    def __post_init__(self):
        if self.q_shift < 0:
            raise ConfigError("q_shift must be nonnegative")


@dataclass(frozen=True)
class ExactBlock:
    """``F(x_i, x_-i^k) + pad/2 ||x_i - x_i^k||^2``.

    ``convexity`` is a caller-asserted strong convexity modulus of
    ``F(., x_-i)``; the model's modulus is ``pad + convexity`` and must be > 0.
    """

    pad: Union[float, np.ndarray] = 0.0
    convexity: float = 0.0

    def __post_init__(self):
        pad = np.asarray(self.pad, dtype=float)
        if np.any(pad < 0) or self.convexity < 0:
            raise ConfigError("pad and convexity must be nonnegative")
        if np.any(pad + self.convexity <= 0):
            raise ConfigError("ExactBlock needs pad > 0 or an asserted convexity modulus > 0")


SurrogateKind = Union[ProximalLinear, RegularizedNewton, ExactBlock]


@dataclass(frozen=True)
class BlockSurrogate:
    """Model of F around ``anchor`` restricted to block ``block``.

    For the quadratic kinds ``hessian`` holds the model curvature (a scalar
    ``tau`` for ProximalLinear, a matrix for RegularizedNewton) and
    ``anchor_gradient`` the block gradient at the anchor.
    """

    block: int
    anchor: np.ndarray
    anchor_block: np.ndarray
    anchor_gradient: np.ndarray
    strong_convexity: float
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    kind: str
    hessian: Optional[Union[float, np.ndarray]] = None

    @property
    def is_quadratic(self) -> bool:
        return self.kind in ("proximal_linear", "newton")


def build_surrogate(kind: SurrogateKind, problem: CompositeProblem, i: int, anchor_x) -> BlockSurrogate:
    sl = problem.partition.slice(i)
    x = np.array(anchor_x, dtype=float)
    xk = x[sl].copy()
    g = np.asarray(problem.gradient(x), dtype=float)[sl].copy()
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite gradient at surrogate anchor", term="gradient")

    if isinstance(kind, ProximalLinear):
        tau = block_param(kind.tau, i)
        if tau <= 0:
            raise ConfigError(f"tau for block {i} must be positive, got {tau}")
        f0 = float(problem.smooth(x))

        def value(xi):
            d = np.asarray(xi, dtype=float) - xk
            return f0 + float(g @ d) + 0.5 * tau * float(d @ d)

        def grad(xi):
            return g + tau * (np.asarray(xi, dtype=float) - xk)

        return BlockSurrogate(i, x, xk, g, tau, value, grad, "proximal_linear", tau)

    if isinstance(kind, RegularizedNewton):
        H = np.atleast_2d(np.asarray(kind.hessian(i, x), dtype=float))
        H = 0.5 * (H + H.T) + kind.q_shift * np.eye(xk.size)
        qmin = float(np.linalg.eigvalsh(H)[0])
        if not qmin > 0:
            raise NumericError(f"regularized block Hessian is not positive definite (min eig {qmin:.3e})",
                               term="hessian")
        f0 = float(problem.smooth(x))

        def value(xi):
            d = np.asarray(xi, dtype=float) - xk
            return f0 + float(g @ d) + 0.5 * float(d @ (H @ d))

        def grad(xi):
            return g + H @ (np.asarray(xi, dtype=float) - xk)

        return BlockSurrogate(i, x, xk, g, qmin, value, grad, "newton", H)

    if isinstance(kind, ExactBlock):
        pad = block_param(kind.pad, i)

        def value(xi):
            d = np.asarray(xi, dtype=float) - xk
            return float(problem.smooth(problem.with_block(x, i, xi))) + 0.5 * pad * float(d @ d)

        def grad(xi):
            d = np.asarray(xi, dtype=float) - xk
            return np.asarray(problem.gradient(problem.with_block(x, i, xi)), dtype=float)[sl] + pad * d

        return BlockSurrogate(i, x, xk, g, pad + float(kind.convexity), value, grad, "exact")

    raise ConfigError(f"unknown surrogate kind {kind!r}")


def surrogate_from_config(cfg: dict, hessian=None) -> Optional[SurrogateKind]:
    """Build a kind from ``surrogate.kind`` / ``surrogate.tau`` / ``surrogate.q_shift`` keys.

    Returns ``None`` when no kind is given (the engine then picks its default).
    """
    kind = cfg.get("surrogate.kind")
    if kind is None:
        return None
    kind = str(kind).lower().replace("-", "_")
    if kind in ("proximal_linear", "linear", "prox"):
        return ProximalLinear(cfg.get("surrogate.tau", 1.0))
    if kind in ("newton", "regularized_newton"):
        if hessian is None:
            raise ConfigError("RegularizedNewton needs a Hessian evaluator")
        return RegularizedNewton(hessian, float(cfg.get("surrogate.q_shift", 0.0)))
    if kind in ("exact", "exact_block"):
        return ExactBlock(pad=cfg.get("surrogate.tau", 0.0), convexity=float(cfg.get("surrogate.convexity", 0.0)))
    raise ConfigError(f"unknown surrogate.kind {kind!r}")
