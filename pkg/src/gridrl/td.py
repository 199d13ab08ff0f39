"""Entropy-regularized policy evaluation by TD(0) on the sampling partition.

The value model is linear in its parameters,
``J_theta(t, x) = head(t, x) + sum_l theta_l phi_l(t, x)``, with every basis
function vanishing at the horizon so that ``J_theta(T, .) = g`` holds for all
``theta``.  One episode of grid-sampling dynamics produces the update

    theta += alpha_k * sum_i phi(t_{i-1}, X_{i-1}) * [ J(t_i, X_i) - J(t_{i-1}, X_{i-1})
                                                      + lam * dt_i * log hdot(t_{i-1}, X_{i-1}, y_i) ]

with ``y_i = h(t_{i-1}, X_{i-1}, xi_i)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DivergenceError, InputError, LogDensityError, SpecError
from .model import JumpDiffusionModel, Partition, RandomizedPolicy, entropy
from .rng import RandomizationDraw
from .sde import PathRecord, SolverConfig, simulate

__all__ = [
    "ValueModel",
    "TDConfig",
    "TDResult",
    "LossEstimate",
    "td0_episode_update",
    "run_td0",
    "martingale_loss",
    "DIVERGENCE_GUARD",
]

DIVERGENCE_GUARD = 1e8


@dataclass(frozen=True, eq=False)
class ValueModel:
    """Linear value function ``head + theta . phi`` on ``[0, T]``."""

    head: Callable
    basis: tuple
    theta: np.ndarray
    T: float

    def __post_init__(self):
        object.__setattr__(self, "basis", tuple(self.basis))
        theta = np.asarray(self.theta, dtype=float).reshape(-1).copy()
        if theta.size != len(self.basis):
            raise ConfigError(f"{theta.size} parameters for {len(self.basis)} basis functions")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def time_to_go(cls, g: Callable, state_basis: Sequence[Callable], T: float, theta=None) -> "ValueModel":
        """Head ``g(x)`` and basis ``(T - t) psi_l(x)``; the terminal pin holds by construction."""

        def make(psi_l):
            return lambda t, x: (T - t) * np.asarray(psi_l(x), dtype=float)

        basis = tuple(make(p) for p in state_basis)
        theta = np.zeros(len(basis)) if theta is None else theta
        return cls(lambda t, x: np.asarray(g(x), dtype=float), basis, theta, T)

    @property
    def L(self) -> int:
        return len(self.basis)

    def with_theta(self, theta) -> "ValueModel":
        return ValueModel(self.head, self.basis, theta, self.T)

    def features(self, t, x) -> np.ndarray:
        """Gradient in ``theta``: the basis values, shape ``(..., L)``."""
        x = np.asarray(x, dtype=float)
        return np.stack([np.broadcast_to(np.asarray(f(t, x), float), x.shape[:-1]) for f in self.basis], axis=-1)

    def value(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        head = np.broadcast_to(np.asarray(self.head(t, x), float), x.shape[:-1])
        return head + self.features(t, x) @ self.theta

    def check_terminal(self, xs, g: Optional[Callable] = None) -> None:
        """Raise :class:`SpecError` unless every basis function vanishes at ``T`` on ``xs``."""
        feats = self.features(self.T, np.asarray(xs, float))
        if np.any(feats != 0.0):
            raise SpecError("basis functions do not vanish at the horizon")
        if g is not None and np.any(self.value(self.T, xs) != np.asarray(g(np.asarray(xs, float)))):
            raise SpecError("value model does not match the terminal reward")


@dataclass(frozen=True)
class TDConfig:
    """Temperature, step-size schedule ``alpha0 / (1 + k / k0)`` and episode grid."""

    temperature: float
    alpha0: float
    k0: float
    episodes: int
    partition: Partition
    refine: int = 1
    guard: float = DIVERGENCE_GUARD
    batch_episodes: int = 4096

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError("temperature must be non-negative")
        if self.alpha0 < 0 or self.k0 <= 0:
            raise ConfigError("step size needs alpha0 >= 0 and k0 > 0")
        if self.episodes < 1:
            raise ConfigError("episode count must be positive")

    def step_size(self, k: int) -> float:
        return self.alpha0 / (1.0 + k / self.k0)

    def solver(self, batch_size: int = 1024) -> SolverConfig:
        return SolverConfig(self.partition, refine=self.refine, batch_size=batch_size)


def _log_density(policy, t, x, y, where):
    dens = policy.density(t, x, y)
    bad = ~(dens > 0.0) | ~np.isfinite(dens)
    if np.any(bad):
        j = np.argwhere(bad)[0]
        raise LogDensityError(f"relaxed density vanishes at the executed action {where(j)}")
    return np.log(dens)


def td0_episode_update(
    value: ValueModel,
    path: PathRecord,
    draw: RandomizationDraw,
    policy: RandomizedPolicy,
    config: TDConfig,
    k: int = 0,
) -> np.ndarray:
    """Parameter increment from one grid-sampling episode (step size ``alpha_k``)."""
    pts = draw.partition.points
    if not np.array_equal(pts, config.partition.points):
        raise InputError("draw and configuration use different partitions")
    if not draw.partition.contains(path.times):
        raise InputError("path is not recorded at the partition points")
    lam = config.temperature
    X = np.stack([path.value_at(t) for t in pts])
    inc = np.zeros(value.L)
    for i in range(1, pts.size):
        t0, t1 = float(pts[i - 1]), float(pts[i])
        x0, x1 = X[i - 1], X[i]
        y = policy.execute(t0, x0, draw.xi[i - 1])
        if lam != 0.0:
            logd = float(_log_density(policy, t0, x0, y, lambda j: f"on interval {i}: y={y.tolist()}"))
        else:
            logd = 0.0
        td = float(value.value(t1, x1) - value.value(t0, x0)) + lam * (t1 - t0) * logd
        inc += value.features(t0, x0) * td
    return config.step_size(k) * inc


@dataclass(frozen=True)
class TDResult:
    theta: np.ndarray
    trajectory: np.ndarray
    increment_norms: np.ndarray

    def tail_average(self, n: int = 100) -> np.ndarray:
        return self.trajectory[-n:].mean(axis=0)

    def to_csv(self) -> str:
        L = self.trajectory.shape[1]
        head = "episode," + ",".join(f"theta_{l + 1}" for l in range(L)) + ",increment_norm"
        lines = [head]
        norms = np.concatenate([[0.0], self.increment_norms])
        for e, (row, nrm) in enumerate(zip(self.trajectory, norms)):
            lines.append(f"{e}," + ",".join(f"{v:.12g}" for v in row) + f",{nrm:.12g}")
        return "\n".join(lines) + "\n"


def _episode_terms(value: ValueModel, policy: RandomizedPolicy, lam: float, pts, X, xi):
    """Affine pieces ``(a, A)`` with ``increment = alpha (a + A theta)``.

    ``X`` holds states at the partition points ``(P, n+1, m)`` and ``xi``
    the draws ``(P, n, d)``.
    """
    P, n1, m = X.shape
    t_prev = pts[:-1]
    feats = np.stack([value.features(float(t), X[:, j]) for j, t in enumerate(pts)], axis=1)  # (P, n+1, L)
    heads = np.stack(
        [np.broadcast_to(np.asarray(value.head(float(t), X[:, j]), float), (P,)) for j, t in enumerate(pts)], axis=1
    )
    c = np.diff(heads, axis=1)
    if lam != 0.0:
        for i in range(n1 - 1):
            t0 = float(t_prev[i])
            y = policy.h(t0, X[:, i], xi[:, i])
            c[:, i] += lam * (pts[i + 1] - pts[i]) * _log_density(
                policy, t0, X[:, i], y, lambda j, i=i: f"on interval {i + 1} (episode offset {j[0]})"
            )
    phi0 = feats[:, :-1]
    a = np.einsum("pil,pi->pl", phi0, c)
    A = np.einsum("pil,pik->plk", phi0, np.diff(feats, axis=1))
    return a, A


def run_td0(
    model: JumpDiffusionModel,
    policy: RandomizedPolicy,
    value: ValueModel,
    config: TDConfig,
    master_seed: int,
    threads: int = 1,
) -> TDResult:
    """Sequential TD(0) over fresh grid-sampling episodes.

    Episode ``k`` uses the streams of path index ``k`` under purpose ``td0``;
    episodes are simulated in vectorized batches before the sequential
    parameter recursion.
    """
    pts = config.partition.points
    solver = config.solver()
    idx = np.searchsorted(solver.grid, pts)
    theta = value.theta.copy()
    traj = np.empty((config.episodes + 1, value.L))
    traj[0] = theta
    norms = np.empty(config.episodes)
    k = 0
    while k < config.episodes:
        n = min(config.batch_episodes, config.episodes - k)
        batch = simulate("grid", model, [policy], solver, n, master_seed, threads=threads, purpose="td0", start_index=k)
        X = batch.values[:, idx, 0, :]
        a, A = _episode_terms(value, policy, config.temperature, pts, X, batch.xi)
        for j in range(n):
            inc = config.step_size(k) * (a[j] + A[j] @ theta)
            theta = theta + inc
            if not np.all(np.isfinite(theta)) or np.max(np.abs(theta)) > config.guard:
                raise DivergenceError(f"TD(0) parameters exceeded {config.guard:g} at episode {k}")
            traj[k + 1] = theta
            norms[k] = float(np.linalg.norm(inc))
            k += 1
    return TDResult(theta, traj, norms)


@dataclass(frozen=True)
class LossEstimate:
    """Bias-corrected martingale loss with its standard error, per time step and total."""

    loss: float
    se: float
    per_step: np.ndarray
    buckets: int


def _entropy_rate(policy, t, X):
    if policy.entropy_fn is not None:
        return np.broadcast_to(np.asarray(policy.entropy_fn(t, X), float), X.shape[:-1])
    return np.array([entropy(policy, t, x) for x in X])


def martingale_loss(
    value: ValueModel,
    model: JumpDiffusionModel,
    policy: RandomizedPolicy,
    config: TDConfig,
    n_paths: int = 10_000,
    times=None,
    master_seed: int = 0,
    buckets: int = 16,
    solver: Optional[SolverConfig] = None,
    threads: int = 1,
) -> LossEstimate:
    """Sum over steps of the squared conditional mean of ``M_{t_{j+1}} - M_{t_j}``.

    ``M_t = J_theta(t, X_t) - lam int_0^t Ent(s, X_s) ds`` along limit paths.
    Conditional means given ``X_{t_j}`` use equal-count buckets of the first
    state component.  Each bucket contributes ``w_b (mean_b^2 - se_b^2)``, an
    unbiased estimate of its squared conditional mean.
    """
    solver = solver or config.solver()
    grid = solver.grid
    times = config.partition.points if times is None else np.asarray(times, dtype=float)
    idx = np.searchsorted(grid, times)
    if np.any(idx >= grid.size) or not np.allclose(grid[idx], times, rtol=0, atol=1e-12):
        raise InputError("loss times must be simulation grid points")
    batch = simulate("limit", model, [policy], solver, n_paths, master_seed, threads=threads, purpose="mloss")
    X = batch.values[:, :, 0, :]  # (P, N+1, m)
    lam = config.temperature
    ent_int = np.zeros((n_paths, grid.size))
    if lam != 0.0:
        rates = np.stack([_entropy_rate(policy, float(s), X[:, k]) for k, s in enumerate(grid[:-1])], axis=1)
        ent_int[:, 1:] = np.cumsum(rates * np.diff(grid)[None, :], axis=1)
    M = np.stack([value.value(float(grid[j]), X[:, j]) for j in idx], axis=1) - lam * ent_int[:, idx]
    D = np.diff(M, axis=1)
    nb = int(buckets)
    if n_paths < 2 * nb:
        nb = max(1, n_paths // 2)
        warnings.warn(f"too few paths for {buckets} buckets; using {nb}", RuntimeWarning, stacklevel=2)
    per_step = np.zeros(D.shape[1])
    var_total = 0.0
    for j in range(D.shape[1]):
        state = X[:, idx[j], 0]
        groups = [np.arange(n_paths)] if np.ptp(state) == 0.0 else np.array_split(np.argsort(state, kind="stable"), nb)
        for grp in groups:
            if grp.size < 2:
                continue
            vals = D[grp, j]
            w = grp.size / n_paths
            mean = vals.mean()
            se2 = vals.var(ddof=1) / grp.size
            per_step[j] += w * (mean * mean - se2)
            var_total += w * w * (4.0 * mean * mean * se2 + 2.0 * se2 * se2)
    return LossEstimate(float(per_step.sum()), math.sqrt(var_total), per_step, nb)
