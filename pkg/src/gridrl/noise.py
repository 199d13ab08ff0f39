"""Samplers for the driving noise: Brownian increments, Poisson random
measures, uniform marks, and white-noise martingale measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from .errors import InputError, NumericalError, SpecError
from .model import JumpDiffusionModel, LevyMeasure, RandomizedPolicy, inverse_normal_cdf
from .quadrature import UnitCubeQuadrature, default_cube
from .rng import RandomizationDraw, SeedSpec, StreamLike, as_stream

__all__ = [
    "JumpEvent",
    "JumpEvents",
    "NoisePanel",
    "sample_brownian",
    "sample_poisson_measure",
    "attach_uniform_marks_limit",
    "attach_grid_marks",
    "build_noise_panel",
    "effective_covariance",
    "effective_covariance_batch",
    "psd_factor",
    "sample_white_noise_integral",
    "standard_eta",
]

PSD_TOL = 1e-8


@dataclass(frozen=True)
class JumpEvent:
    """Atom ``(t, z, u)`` of an extended Poisson measure."""

    t: float
    z: np.ndarray
    u: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class JumpEvents:
    """Column store of jump atoms: times ``(J,)``, marks ``(J, q)``, uniforms ``(J, d)`` or None."""

    t: np.ndarray
    z: np.ndarray
    u: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        if z.shape[0] != t.shape[0]:
            raise InputError("jump times and marks differ in length")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "z", z)
        if self.u is not None:
            u = np.asarray(self.u, dtype=float)
            if u.ndim == 1:
                u = u[:, None]
            if u.shape[0] != t.shape[0]:
                raise InputError("jump times and uniform marks differ in length")
            object.__setattr__(self, "u", u)

    @classmethod
    def empty(cls, q: int = 1, d: Optional[int] = None) -> "JumpEvents":
        return cls(np.zeros(0), np.zeros((0, q)), None if d is None else np.zeros((0, d)))

    def __len__(self) -> int:
        return self.t.shape[0]

    def __iter__(self) -> Iterator[JumpEvent]:
        for j in range(len(self)):
            yield JumpEvent(float(self.t[j]), self.z[j], None if self.u is None else self.u[j])

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.z, axis=-1)

    def select(self, mask) -> "JumpEvents":
        return JumpEvents(self.t[mask], self.z[mask], None if self.u is None else self.u[mask])

    def with_marks(self, u: np.ndarray) -> "JumpEvents":
        return JumpEvents(self.t, self.z, u)


def sample_brownian(grid: np.ndarray, p: int, stream: StreamLike) -> np.ndarray:
    """Increments ``(N, p)`` with variance equal to the step length."""
    grid = np.asarray(grid, dtype=float)
    dt = np.diff(grid)
    if np.any(dt <= 0):
        raise InputError("simulation grid must be strictly increasing")
    rng = as_stream(stream)
    return rng.standard_normal((dt.size, p)) * np.sqrt(dt)[:, None]


def sample_poisson_measure(levy: LevyMeasure, T: float, stream: StreamLike) -> JumpEvents:
    """Jumps on ``(0, T]`` with ``|z|`` above the sampling cutoff, by thinning.

    Candidate times come from a homogeneous clock with rate
    ``levy.rate_bound(T)``; each is kept with probability ``rate(t) / bound``.
    """
    if levy.is_zero:
        return JumpEvents.empty(levy.q)
    bound = levy.rate_bound(T)
    if not (math.isfinite(bound) and bound >= 0):
        raise SpecError(f"jump rate bound {bound} is not finite")
    rng = as_stream(stream)
    n = rng.poisson(bound * T)
    if n == 0:
        return JumpEvents.empty(levy.q)
    times = np.sort(T * (1.0 - rng.random(n)))
    accept = rng.random(n)
    rates = np.array([levy.rate(t) for t in times])
    if np.any(rates > bound * (1 + 1e-12)):
        raise SpecError("jump rate exceeds its declared bound")
    keep = accept * bound < rates
    times = times[keep]
    marks = levy.sample_marks(rng, times)
    return JumpEvents(times, marks)


def attach_uniform_marks_limit(jumps: JumpEvents, d: int, stream: StreamLike) -> JumpEvents:
    """Give each jump an independent uniform mark on ``[0,1]^d``."""
    rng = as_stream(stream)
    return jumps.with_marks(rng.random((len(jumps), d)))


def attach_grid_marks(jumps: JumpEvents, draw: RandomizationDraw) -> JumpEvents:
    """Mark a jump at ``t`` in ``(t_{i-1}, t_i]`` with ``xi_i``."""
    T = draw.partition.T
    if len(jumps) and (np.any(jumps.t <= 0.0) or np.any(jumps.t > T)):
        bad = jumps.t[(jumps.t <= 0.0) | (jumps.t > T)][0]
        raise InputError(f"jump time {bad} outside (0, {T}]")
    if not len(jumps):
        return jumps.with_marks(np.zeros((0, draw.d)))
    return jumps.with_marks(draw.lookup(jumps.t))


@dataclass(frozen=True, eq=False)
class NoisePanel:
    """Brownian increments and jump list of one path on a simulation grid."""

    grid: np.ndarray
    dB: np.ndarray
    jumps: JumpEvents
    levy: LevyMeasure
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def B(self) -> np.ndarray:
        """Brownian path ``(N+1, p)`` starting at 0."""
        return np.vstack([np.zeros((1, self.dB.shape[1])), np.cumsum(self.dB, axis=0)])

    def region_quadrature(self, k: int, lo: float, hi: float):
        """Levy quadrature for ``{lo < |z| <= hi}`` frozen at step start ``s_k``."""
        key = (k, lo, hi)
        if key not in self._cache:
            self._cache[key] = self.levy.quadrature(float(self.grid[k]), lo, hi)
        return self._cache[key]


def build_noise_panel(grid, p: int, levy: LevyMeasure, seed: SeedSpec) -> NoisePanel:
    """Panel drawn from the ``bm`` and ``jumps`` sub-streams of ``seed``."""
    grid = np.asarray(grid, dtype=float)
    dB = sample_brownian(grid, p, seed.child("bm"))
    jumps = sample_poisson_measure(levy, float(grid[-1]), seed.child("jumps"))
    return NoisePanel(grid, dB, jumps, levy)


# ---------------------------------------------------------------------------
# White-noise covariance
# ---------------------------------------------------------------------------


def psd_factor(S: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Matrix ``L`` with ``L L^T = S`` after clamping tiny negative eigenvalues.

    Works on stacks ``(..., n, n)``.  Raises :class:`NumericalError` when an
    eigenvalue is below ``-tol * trace``.
    """
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    if S.shape[-1] == 1:
        v = S[..., 0, 0]
        if np.any(v < -tol * np.abs(v)) or np.any(~np.isfinite(v)):
            raise NumericalError("covariance is negative or not finite")
        return np.sqrt(np.maximum(v, 0.0))[..., None, None]
    if not np.all(np.isfinite(S)):
        raise NumericalError("covariance is not finite")
    lam, V = np.linalg.eigh(S)
    trace = np.trace(S, axis1=-2, axis2=-1)
    if np.any(lam[..., 0] < -tol * np.abs(trace)):
        raise NumericalError(f"covariance not PSD: min eigenvalue {lam.min():.3e}")
    return V * np.sqrt(np.maximum(lam, 0.0))[..., None, :]


def effective_covariance_batch(
    policies: Sequence[RandomizedPolicy],
    model: JumpDiffusionModel,
    t: float,
    states: np.ndarray,
    quadrature: Optional[UnitCubeQuadrature] = None,
    actions: Optional[Sequence[np.ndarray]] = None,
) -> np.ndarray:
    """Stack of white-noise covariances for states ``(B, K, m)``; returns ``(B, K m, K m)``.

    Block ``(k, j)`` is ``sum_l int a^l(t, x_k, h_k(u)) a^l(t, x_j, h_j(u))^T du``.
    ``actions`` optionally supplies ``h_k`` at the quadrature nodes, ``(B, J, d)``
    per policy.
    """
    states = np.asarray(states, dtype=float)
    B, K, m = states.shape
    if K != len(policies):
        raise InputError("number of states differs from number of policies")
    quad = quadrature or default_cube(policies[0].d)
    U = quad.nodes
    J = U.shape[0]
    blocks = []
    for k, pol in enumerate(policies):
        x = states[:, k, None, :]
        y = pol.h(t, x, U[None, :, :]) if actions is None else actions[k]
        a = np.asarray(model.a(t, np.broadcast_to(x, (B, J, m)), y), dtype=float)
        a = np.broadcast_to(a, (B, J) + a.shape[-2:])
        blocks.append(a)
    A = np.stack(blocks, axis=1)  # (B, K, J, m, p)
    if not np.all(np.isfinite(A)):
        raise NumericalError(f"diffusion coefficient not finite at t={t}")
    S = np.einsum("bkjal,bqjcl,j->bkaqc", A, A, quad.weights, optimize=True)
    S = S.reshape(B, K * m, K * m)
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def effective_covariance(
    policies: Sequence[RandomizedPolicy],
    model: JumpDiffusionModel,
    t: float,
    states,
    quadrature: Optional[UnitCubeQuadrature] = None,
) -> np.ndarray:
    """Covariance ``(K m, K m)`` of the joint white-noise increments at states ``(K, m)``."""
    states = np.asarray(states, dtype=float).reshape(len(policies), -1)
    S = effective_covariance_batch(policies, model, t, states[None], quadrature)[0]
    psd_factor(S)
    return S


# ---------------------------------------------------------------------------
# White-noise integrals
# ---------------------------------------------------------------------------


def standard_eta(t, u):
    """``eta(u) = (Phi^{-1}(u_1), 1)`` whose Gram matrix over ``[0,1]`` is the identity."""
    z = inverse_normal_cdf(u[..., 0])
    return np.stack([z, np.ones_like(z)], axis=-1)


def sample_white_noise_integral(
    eta: Callable,
    grid,
    n_paths: int,
    stream: StreamLike,
    quadrature: Optional[UnitCubeQuadrature] = None,
    d: int = 1,
) -> np.ndarray:
    """Increments ``(n_paths, N, r)`` of ``B^eta = int int eta(s,u) M(ds, du)``.

    The white-noise measure ``M`` with intensity ``du ds`` is realized on the
    cells of the quadrature rule: the mass of cell ``j`` over step ``k`` is
    ``N(0, ds_k * w_j)``, independent across cells and steps.
    """
    quad = quadrature or default_cube(d)
    grid = np.asarray(grid, dtype=float)
    dt = np.diff(grid)
    rng = as_stream(stream)
    sw = np.sqrt(quad.weights)
    out = None
    for k, s in enumerate(grid[:-1]):
        E = np.asarray(eta(float(s), quad.nodes), dtype=float)  # (J, r)
        if out is None:
            out = np.empty((n_paths, dt.size, E.shape[-1]))
        W = rng.standard_normal((n_paths, sw.size)) * (sw * math.sqrt(dt[k]))
        out[:, k, :] = W @ E
    return out
