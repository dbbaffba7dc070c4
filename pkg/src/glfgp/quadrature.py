"""Gauss-Legendre rules and tensorized, box-scaled quadrature grids.

The 1-D rule is computed by Newton iteration on the three-term Legendre
recurrence, seeded with Chebyshev-type initial guesses.  Grids are the tensor
product of 1-D rules flattened in row-major (C) order, so flat index ``j``
corresponds to the multi-index ``np.unravel_index(j, s)``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CapacityError, InvalidArgument

MAX_RULE_SIZE = 10**5
MAX_GRID_SIZE = 10**8

SYMMETRIC_BOX = "symmetric_box"
POSITIVE_BOX = "positive_box"


@dataclass(frozen=True)
class GaussLegendreRule:
    m: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


def _legendre_and_derivative(m: int, x: np.ndarray):
    p0 = np.ones_like(x)
    p1 = x.copy()
    for k in range(2, m + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    # P'_m from P_m and P_{m-1}; x is bounded away from +-1 for interior roots
    dp = m * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


_cache_lock = threading.Lock()


@lru_cache(maxsize=256)
def _rule_arrays(m: int):
    half = (m + 1) // 2
    k = np.arange(1, half + 1)
    # Tricomi-style initial guess, accurate to O(m^-3)
    theta = np.pi * (4 * k - 1) / (4 * m + 2)
    x = np.cos(theta) * (1 - (m - 1) / (8.0 * m**3))
    for _ in range(100):
        p, dp = _legendre_and_derivative(m, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) <= 2e-16:
            break
    p, dp = _legendre_and_derivative(m, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)

    nodes = np.empty(m)
    weights = np.empty(m)
    # x is decreasing in k; mirror to get increasing nodes
    nodes[:half] = -x
    weights[:half] = w
    nodes[m - half:] = x[::-1]
    weights[m - half:] = w[::-1]
    if m % 2 == 1:
        nodes[half - 1] = 0.0
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre(m: int) -> GaussLegendreRule:
    """Return the ``m``-point Gauss-Legendre rule on ``[-1, 1]``.

    Nodes are strictly increasing and exactly antisymmetric; the rule is
    exact for polynomials of degree ``2m - 1``.  Results are cached per ``m``.
    """
    if isinstance(m, bool) or int(m) != m or m < 1:
        raise InvalidArgument(f"rule size must be a positive integer, got {m!r}")
    m = int(m)
    if m > MAX_RULE_SIZE:
        raise InvalidArgument(f"rule size {m} exceeds {MAX_RULE_SIZE}")
    if m == 1:
        nodes, weights = np.zeros(1), np.full(1, 2.0)
    else:
        with _cache_lock:
            nodes, weights = _rule_arrays(m)
    return GaussLegendreRule(m=m, nodes=nodes, weights=weights)


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor-product quadrature grid over a scaled box.

    ``nodes`` has shape ``(s_tot, d)`` and ``base_weights`` shape ``(s_tot,)``;
    row ``j`` belongs to multi-index ``unflatten(j)``.
    """

    U: np.ndarray
    s: tuple
    nodes: np.ndarray
    base_weights: np.ndarray
    domain_kind: str = SYMMETRIC_BOX

    @property
    def dim(self) -> int:
        return len(self.s)

    @property
    def total_size(self) -> int:
        return int(np.prod(self.s))

    def flatten(self, index) -> int:
        return int(np.ravel_multi_index(tuple(index), self.s))

    def unflatten(self, j: int) -> tuple:
        return tuple(int(i) for i in np.unravel_index(j, self.s))

    @property
    def volume(self) -> float:
        v = float(np.prod(self.U))
        return v * 2.0**self.dim if self.domain_kind == SYMMETRIC_BOX else v


def tensor_grid(U, s, domain_kind: str = SYMMETRIC_BOX) -> QuadratureGrid:
    """Build the tensorized Gauss-Legendre grid on ``prod [-U_k, U_k]``
    (``symmetric_box``) or ``prod [0, U_k]`` (``positive_box``)."""
    U = np.atleast_1d(np.asarray(U, dtype=float))
    s = tuple(int(v) for v in np.atleast_1d(s))
    if U.ndim != 1 or len(U) != len(s) or len(s) == 0:
        raise InvalidArgument("U and s must be non-empty vectors of equal length")
    if np.any(~np.isfinite(U)) or np.any(U <= 0):
        raise InvalidArgument(f"U must be positive and finite, got {U}")
    if any(v < 1 for v in s):
        raise InvalidArgument(f"quadrature sizes must be >= 1, got {s}")
    if domain_kind not in (SYMMETRIC_BOX, POSITIVE_BOX):
        raise InvalidArgument(f"unknown domain kind {domain_kind!r}")
    total = 1
    for v in s:
        total *= v
    if total > MAX_GRID_SIZE:
        raise CapacityError(f"grid of size {total} exceeds {MAX_GRID_SIZE}")

    axes_nodes, axes_weights = [], []
    for Uk, sk in zip(U, s):
        rule = gauss_legendre(sk)
        if domain_kind == SYMMETRIC_BOX:
            axes_nodes.append(Uk * rule.nodes)
            axes_weights.append(Uk * rule.weights)
        else:
            axes_nodes.append(Uk * (rule.nodes + 1.0) / 2.0)
            axes_weights.append(Uk * rule.weights / 2.0)

    mesh = np.meshgrid(*axes_nodes, indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in mesh], axis=1)
    weights = axes_weights[0]
    for w in axes_weights[1:]:
        weights = np.multiply.outer(weights, w)
    return QuadratureGrid(
        U=U, s=s, nodes=nodes, base_weights=np.asarray(weights).reshape(-1),
        domain_kind=domain_kind,
    )
