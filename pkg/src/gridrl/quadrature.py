"""Quadrature rules on the unit cube [0,1]^d and on bounded intervals.

Integrands of the randomization variable ``u`` are often unbounded at the
faces of the cube (the Gaussian executor ``mu + sigma * ndtri(u)`` is the
main example).  The default rule therefore grades Gauss-Legendre panels
geometrically toward both endpoints of each axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError

__all__ = [
    "UnitCubeQuadrature",
    "gauss_legendre_cube",
    "graded_cube",
    "monte_carlo_cube",
    "default_cube",
    "interval_rule",
    "composite_interval_rule",
]


@dataclass(frozen=True, eq=False)
class UnitCubeQuadrature:
    """Nodes ``(J, d)`` and weights ``(J,)`` approximating ``int_{[0,1]^d} f du``."""

    nodes: np.ndarray
    weights: np.ndarray
    label: str = ""

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if nodes.shape[0] != weights.shape[0]:
            raise ConfigError("quadrature nodes and weights differ in length")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def d(self) -> int:
        return self.nodes.shape[1]

    def __len__(self) -> int:
        return self.weights.shape[0]

    def integrate(self, f) -> np.ndarray:
        """Apply the rule to ``f(nodes)``, whose leading axis runs over nodes."""
        vals = np.asarray(f(self.nodes), dtype=float)
        return np.tensordot(self.weights, vals, axes=(0, 0))


@lru_cache(maxsize=None)
def _leggauss(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def interval_rule(lo: float, hi: float, order: int):
    """Gauss-Legendre nodes and weights on ``[lo, hi]``."""
    x, w = _leggauss(order)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def composite_interval_rule(breaks, order: int):
    """Gauss-Legendre rule of the given order on every panel of ``breaks``."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = _leggauss(order)
    a, b = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + half * (x + 1.0)).ravel()
    weights = (half * w).ravel()
    return nodes, weights


def _graded_1d(panels: int, order: int):
    # geometric panels [0, 2^-(panels)], ..., [1/4, 1/2] mirrored onto [1/2, 1]
    inner = [0.5 * 2.0 ** (-j) for j in range(panels - 1, -1, -1)]
    breaks = np.array([0.0] + inner)
    x, w = composite_interval_rule(breaks, order)
    nodes = np.concatenate([x, 1.0 - x[::-1]])
    weights = np.concatenate([w, w[::-1]])
    return nodes, weights


def _tensor(nodes1, weights1, d):
    grids = np.meshgrid(*([nodes1] * d), indexing="ij")
    wgrids = np.meshgrid(*([weights1] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return nodes, weights


def gauss_legendre_cube(d: int, order: int = 64) -> UnitCubeQuadrature:
    """Tensor Gauss-Legendre rule with ``order`` nodes per axis."""
    if d < 1 or order < 1:
        raise ConfigError("gauss_legendre_cube needs d >= 1 and order >= 1")
    x, w = interval_rule(0.0, 1.0, order)
    nodes, weights = _tensor(x, w, d)
    return UnitCubeQuadrature(nodes, weights, f"gauss-legendre({order})^{d}")


def graded_cube(d: int, panels: int = 24, order: int = 8) -> UnitCubeQuadrature:
    """Tensor rule of endpoint-graded composite Gauss-Legendre panels.

    Each axis carries ``2 * panels * order`` nodes.  With the defaults the
    second moment of the clamped inverse normal CDF is reproduced to about
    2e-9, where a single 64-node panel only reaches about 6e-4.
    """
    if d < 1 or panels < 1 or order < 1:
        raise ConfigError("graded_cube needs positive d, panels and order")
    x, w = _graded_1d(panels, order)
    nodes, weights = _tensor(x, w, d)
    return UnitCubeQuadrature(nodes, weights, f"graded({panels}x{order})^{d}")


def monte_carlo_cube(d: int, n_nodes: int = 2**16, seed: int = 0) -> UnitCubeQuadrature:
    """Equal-weight Monte Carlo rule from a fixed seed."""
    if d < 1 or n_nodes < 1:
        raise ConfigError("monte_carlo_cube needs d >= 1 and n_nodes >= 1")
    rng = np.random.Generator(np.random.Philox(seed))
    nodes = rng.random((n_nodes, d))
    weights = np.full(n_nodes, 1.0 / n_nodes)
    return UnitCubeQuadrature(nodes, weights, f"monte-carlo({n_nodes})^{d}")


@lru_cache(maxsize=8)
def default_cube(d: int) -> UnitCubeQuadrature:
    """Default rule: graded tensor Gauss-Legendre for d <= 2, Monte Carlo above."""
    if d == 1:
        return graded_cube(1, 24, 8)
    if d == 2:
        return graded_cube(2, 12, 6)
    return monte_carlo_cube(d)
