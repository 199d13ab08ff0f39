"""Euler-Maruyama path solvers with jumps.

Four dynamics share one engine:

``classical``
    feedback control ``y = h(s, X)``;
``grid``
    randomized control ``y = h(s, X, xi_i)`` on ``(t_{i-1}, t_i]``;
``limit``
    drift and diffusion averaged over ``u`` with jointly Gaussian
    increments of covariance ``ds * Sigma`` across ``K`` policies, jumps
    marked with independent uniforms;
``exploratory``
    drift ``int b hdot dy`` and volatility ``sqrt(int a^2 hdot dy)``
    (scalar, no jumps).

Paths are simulated in batches of fixed size; each path owns the streams
``<purpose>/bm``, ``/jumps``, ``/xi``, ``/umarks`` and ``/bridge`` derived
from ``(master_seed, purpose, path_index)``, so results depend neither on the
batch layout nor on the number of worker threads.  Jump times are inserted
into the grid: the Brownian increment of the step is split with a Brownian
bridge and the jump uses the pre-jump state.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import CoefficientError, ConfigError, DivergenceError, InputError, NumericalError, SpecError
from .model import JumpDiffusionModel, Partition, RandomizedPolicy
from .noise import (
    JumpEvents,
    attach_grid_marks,
    attach_uniform_marks_limit,
    effective_covariance_batch,
    psd_factor,
    sample_brownian,
    sample_poisson_measure,
)
from .quadrature import UnitCubeQuadrature, composite_interval_rule, default_cube
from .rng import RandomizationDraw, SeedSpec, as_stream, derive_stream, sample_grid_randomization

__all__ = [
    "OVERFLOW_GUARD",
    "SolverConfig",
    "PathRecord",
    "PathBatch",
    "simulate",
    "solve_classical",
    "solve_grid_sampling",
    "solve_limit_joint",
    "solve_exploratory",
    "realized_covariation",
]

OVERFLOW_GUARD = 1e12
NEG_VAR_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SolverConfig:
    """Sampling partition, simulation grid and quadrature settings.

    Parameters
    ----------
    partition : sampling partition of the randomization process
    refine : number of Euler steps per partition interval
    quadrature : rule for ``u``-integrals (default :func:`default_cube`)
    overflow : divergence guard on ``|X|``
    batch_size : paths per vectorized batch (fixed, independent of threads)
    y_panels, y_order : composite Gauss-Legendre rule over the density
        support used by the exploratory solver
    """

    partition: Partition
    refine: int = 32
    quadrature: Optional[UnitCubeQuadrature] = None
    overflow: float = OVERFLOW_GUARD
    batch_size: int = 256
    y_panels: int = 16
    y_order: int = 8

    def __post_init__(self):
        if self.refine < 1 or self.batch_size < 1:
            raise ConfigError("refine and batch_size must be >= 1")
        grid = self.partition.refine(self.refine)
        grid.setflags(write=False)
        object.__setattr__(self, "_grid", grid)

    @property
    def grid(self) -> np.ndarray:
        return self._grid

    @property
    def T(self) -> float:
        return self.partition.T

    def u_quadrature(self, d: int) -> UnitCubeQuadrature:
        if self.quadrature is not None:
            if self.quadrature.d != d:
                raise ConfigError(f"quadrature dimension {self.quadrature.d} differs from control dimension {d}")
            return self.quadrature
        return default_cube(d)


@dataclass(frozen=True, eq=False)
class PathRecord:
    """Cadlag path: values after any jump at each recorded time."""

    times: np.ndarray
    values: np.ndarray
    jump_flag: np.ndarray
    jumps: JumpEvents
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape[0] != self.times.shape[0] or self.jump_flag.shape[0] != self.times.shape[0]:
            raise InputError("path arrays differ in length")
        if not np.all(np.isfinite(self.values)):
            raise NumericalError("path contains non-finite values")

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def value_at(self, t: float) -> np.ndarray:
        """Right-continuous value at ``t``."""
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(j, 0)]


@dataclass(frozen=True, eq=False)
class PathBatch:
    """Values of ``P`` paths and ``K`` policies on the simulation grid.

    ``values`` has shape ``(P, N+1, K, m)``; ``extra[p]`` lists
    ``(step, t, state (K, m))`` for inserted jump times of path ``p``.
    ``xi`` holds the randomization draws ``(P, n, d)`` of grid-sampling runs.
    """

    grid: np.ndarray
    values: np.ndarray
    events: list
    extra: list
    seeds: list
    meta: dict
    xi: Optional[np.ndarray] = None

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def terminal(self) -> np.ndarray:
        return self.values[:, -1]

    def records(self) -> list:
        """List over paths of lists over policies of :class:`PathRecord`."""
        out = []
        N1 = self.grid.size
        for p in range(self.n_paths):
            ins = self.extra[p]
            if ins:
                steps = np.array([e[0] for e in ins])
                times = np.insert(self.grid, steps + 1, [e[1] for e in ins])
                flags = np.zeros(times.size, dtype=bool)
                flags[steps + 1 + np.arange(len(ins))] = True
            else:
                times = self.grid.copy()
                flags = np.zeros(N1, dtype=bool)
            ev = self.events[p]
            on_grid = np.isin(self.grid, ev.t) if len(ev) else None
            row = []
            K = self.values.shape[2]
            for k in range(K):
                vals = self.values[p, :, k, :]
                if ins:
                    vals = np.insert(vals, steps + 1, np.stack([e[2][k] for e in ins]), axis=0)
                fl = flags.copy()
                if on_grid is not None and np.any(on_grid):
                    fl[np.searchsorted(times, self.grid[on_grid])] = True
                meta = dict(self.meta)
                meta.update(seed=self.seeds[p].master_seed, stream=self.seeds[p].purpose, path_index=self.seeds[p].index)
                if "policy_ids" in self.meta:
                    meta["policy_id"] = self.meta["policy_ids"][k]
                if "bias_bound" in self.meta:
                    meta["bias_bound"] = float(self.meta["bias_bound"][p, k])
                meta.pop("policy_ids", None)
                row.append(PathRecord(times, vals, fl, ev, meta))
            out.append(row)
        return out


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------


def _finite(arr, what, k, s):
    if not np.all(np.isfinite(arr)):
        raise CoefficientError(f"{what} not finite at step {k} (s={s})")
    return arr


class _Dynamics:
    K: int
    noise_dim: int
    kind: str

    def __init__(self, model: JumpDiffusionModel, config: SolverConfig):
        self.model = model
        self.config = config
        self.m = model.dims.m
        self.levy = model.levy
        self._comp_cache: dict = {}

    def prepare(self, seeds):
        return {}

    def marks(self, jumps: JumpEvents, seed: SeedSpec, ctx_row) -> JumpEvents:
        return jumps

    def controls(self, k, s, X, ctx, u=None):
        raise NotImplementedError

    def comp_nodes(self, k, s):
        """Levy quadrature on the compensated region ``(cutoff, r]`` at step ``k``."""
        r = self.levy.truncation_radius
        eps = self.levy.sampling_cutoff
        if self.levy.is_zero or r <= eps:
            return None
        key = k
        if key not in self._comp_cache:
            z, w = self.levy.quadrature(float(s), eps, r)
            self._comp_cache[key] = (z, w) if w.size else None
        return self._comp_cache[key]

    def bias_rate(self, k, s, X, ctx):
        """``int_{|z| <= cutoff} |gamma|^2 nu(dz)`` for the unsampled jumps, per path and policy."""
        return None

    def jump(self, t, X, z, u, ctx_row):
        Y = self.controls(None, t, X, ctx_row, u=u)
        g = np.asarray(self.model.gamma(t, X, Y, z[None, None, :]), dtype=float)
        return _finite(g, "jump coefficient", "jump", t)


class _EulerDynamics(_Dynamics):
    """Shared increment for dynamics with an executed action ``Y (B, K, d)``."""

    def increment(self, k, s, ds, X, dW, ctx):
        Y = self.controls(k, s, X, ctx)
        b = np.asarray(self.model.b(s, X, Y), dtype=float)
        a = np.asarray(self.model.a(s, X, Y), dtype=float)
        _finite(b, "drift", k, s)
        _finite(a, "diffusion", k, s)
        inc = b * ds + np.einsum("bkmp,bp->bkm", np.broadcast_to(a, X.shape + (a.shape[-1],)), dW)
        nodes = self.comp_nodes(k, s)
        if nodes is not None:
            z, w = nodes
            g = np.asarray(self.model.gamma(s, X[:, :, None, :], Y[:, :, None, :], z[None, None]), dtype=float)
            _finite(g, "jump coefficient", k, s)
            inc = inc - ds * np.einsum("bkjm,j->bkm", np.broadcast_to(g, X.shape[:2] + (w.size, self.m)), w)
        return inc

    def bias_rate(self, k, s, X, ctx):
        eps = self.levy.sampling_cutoff
        if eps <= 0.0 or self.levy.is_zero:
            return None
        Y = self.controls(k, s, X, ctx)
        z, w = self.levy.quadrature(float(s), 0.0, eps)
        g = np.asarray(self.model.gamma(s, X[:, :, None, :], Y[:, :, None, :], z[None, None]), dtype=float)
        g = np.broadcast_to(g, X.shape[:2] + (w.size, self.m))
        return np.einsum("bkj,j->bk", np.sum(g**2, axis=-1), w)


class _Classical(_EulerDynamics):
    kind = "classical"

    def __init__(self, model, config, feedback: Sequence[Callable]):
        super().__init__(model, config)
        self.feedback = list(feedback)
        self.K = len(self.feedback)
        self.noise_dim = model.dims.p

    def controls(self, k, s, X, ctx, u=None):
        return np.stack([np.asarray(f(s, X[:, j, :]), dtype=float) for j, f in enumerate(self.feedback)], axis=1)


class _GridSampling(_EulerDynamics):
    kind = "grid"

    def __init__(self, model, config, policies: Sequence[RandomizedPolicy], draw: Optional[RandomizationDraw] = None):
        super().__init__(model, config)
        self.policies = list(policies)
        self.K = len(self.policies)
        self.noise_dim = model.dims.p
        self.draw = draw
        self.d = self.policies[0].d
        self.step_interval = np.asarray(config.partition.interval_index(config.grid[1:])) - 1
        if draw is not None and draw.partition.n != config.partition.n:
            raise InputError("draw partition differs from the solver partition")
        if draw is not None and not np.array_equal(draw.partition.points, config.partition.points):
            raise InputError("draw partition differs from the solver partition")

    def prepare(self, seeds):
        if self.draw is not None:
            xi = np.broadcast_to(self.draw.xi, (len(seeds),) + self.draw.xi.shape)
        else:
            xi = np.stack(
                [sample_grid_randomization(self.config.partition, s.child("xi"), self.d).xi for s in seeds]
            )
        return {"xi": xi}

    def marks(self, jumps, seed, ctx_row):
        draw = RandomizationDraw(self.config.partition, ctx_row["xi"][0])
        return attach_grid_marks(jumps, draw)

    def controls(self, k, s, X, ctx, u=None):
        if u is None:
            u = ctx["xi"][:, self.step_interval[k], :]
        else:
            u = np.broadcast_to(u, (X.shape[0], u.shape[-1]))
        return np.stack([pol.h(s, X[:, j, :], u) for j, pol in enumerate(self.policies)], axis=1)


class _Limit(_Dynamics):
    kind = "limit"

    def __init__(self, model, config, policies: Sequence[RandomizedPolicy]):
        super().__init__(model, config)
        self.policies = list(policies)
        self.K = len(self.policies)
        self.d = self.policies[0].d
        self.noise_dim = self.K * self.m
        if all(p.u_free for p in self.policies):
            # u-averages of u-free executors are exact on a single node
            self.quad = UnitCubeQuadrature(np.full((1, self.d), 0.5), np.ones(1), "u-free")
        else:
            self.quad = config.u_quadrature(self.d)

    def marks(self, jumps, seed, ctx_row):
        return attach_uniform_marks_limit(jumps, self.d, seed.child("umarks"))

    def controls(self, k, s, X, ctx, u=None):
        # only used for jumps: u is the event's uniform mark
        u = np.broadcast_to(u, (X.shape[0], u.shape[-1]))
        return np.stack([pol.h(s, X[:, j, :], u) for j, pol in enumerate(self.policies)], axis=1)

    @property
    def state_free(self) -> bool:
        return self.model.state_free and all(p.state_free for p in self.policies)

    def _node_actions(self, s, X):
        U = self.quad.nodes[None, :, :]
        return [np.asarray(pol.h(s, X[:, j, None, :], U), dtype=float) for j, pol in enumerate(self.policies)]

    def increment(self, k, s, ds, X, dW, ctx):
        B, K, m = X.shape
        if self.state_free:
            drift, L = self._averages(k, s, X[:1])
            inc = drift * ds + np.einsum("ij,bj->bi", L[0], dW).reshape(B, K, m)
        else:
            drift, L = self._averages(k, s, X)
            inc = drift * ds + np.einsum("bij,bj->bi", L, dW).reshape(B, K, m)
        return inc

    def _averages(self, k, s, X):
        """Averaged drift minus small-jump compensator ``(B, K, m)`` and covariance factor."""
        B, K, m = X.shape
        J = len(self.quad)
        w = self.quad.weights
        Ys = self._node_actions(s, X)
        drift = np.empty_like(X)
        for j, Y in enumerate(Ys):
            xj = np.broadcast_to(X[:, j, None, :], (B, J, m))
            b = np.asarray(self.model.b(s, xj, Y), dtype=float)
            _finite(b, "drift", k, s)
            drift[:, j, :] = np.einsum("bjm,j->bm", np.broadcast_to(b, (B, J, m)), w)
        S = effective_covariance_batch(self.policies, self.model, s, X, self.quad, actions=Ys)
        L = psd_factor(S)
        nodes = self.comp_nodes(k, s)
        if nodes is not None:
            z, wz = nodes
            for j, Y in enumerate(Ys):
                g = np.asarray(
                    self.model.gamma(s, X[:, j, None, None, :], Y[:, :, None, :], z[None, None]), dtype=float
                )
                _finite(g, "jump coefficient", k, s)
                g = np.broadcast_to(g, (B, J, wz.size, m))
                drift[:, j, :] -= np.einsum("bjzm,j,z->bm", g, w, wz)
        return drift, L

    def bias_rate(self, k, s, X, ctx):
        eps = self.levy.sampling_cutoff
        if eps <= 0.0 or self.levy.is_zero:
            return None
        z, wz = self.levy.quadrature(float(s), 0.0, eps)
        out = np.empty(X.shape[:2])
        for j, Y in enumerate(self._node_actions(s, X)):
            g = np.asarray(self.model.gamma(s, X[:, j, None, None, :], Y[:, :, None, :], z[None, None]), dtype=float)
            g = np.broadcast_to(g, (X.shape[0], len(self.quad), wz.size, self.m))
            out[:, j] = np.einsum("bjz,j,z->b", np.sum(g**2, axis=-1), self.quad.weights, wz)
        return out


class _Exploratory(_Dynamics):
    kind = "exploratory"

    def __init__(self, model, config, policies: Sequence[RandomizedPolicy]):
        super().__init__(model, config)
        dims = model.dims
        if (dims.m, dims.p, dims.d) != (1, 1, 1):
            raise SpecError("the exploratory solver requires m = p = d = 1")
        if model.has_jumps:
            raise SpecError("the exploratory solver requires a model without jumps")
        self.policies = list(policies)
        for pol in self.policies:
            if pol.relaxed_density is None or pol.support is None:
                raise SpecError(f"policy {pol.name} lacks a density or support descriptor")
        self.K = len(self.policies)
        self.noise_dim = 1
        breaks = np.linspace(0.0, 1.0, config.y_panels + 1)
        self.v, self.wv = composite_interval_rule(breaks, config.y_order)

    def averaged(self, k, s, X):
        """Drift ``(B, K)`` and variance ``(B, K)`` averaged over the relaxed control."""
        B = X.shape[0]
        drift = np.empty((B, self.K))
        var = np.empty((B, self.K))
        for j, pol in enumerate(self.policies):
            x = X[:, j, :]
            lo, hi = pol.support(s, x)
            lo, hi = np.asarray(lo, float)[..., 0], np.asarray(hi, float)[..., 0]
            span = (hi - lo)[:, None]
            y = lo[:, None] + span * self.v[None, :]
            xj = np.broadcast_to(x[:, None, :], (B, self.v.size, 1))
            dens = np.asarray(pol.relaxed_density(s, xj, y[..., None]), dtype=float)
            b = np.asarray(self.model.b(s, xj, y[..., None]), dtype=float)[..., 0]
            a = np.asarray(self.model.a(s, xj, y[..., None]), dtype=float)[..., 0, 0]
            wts = span * self.wv[None, :] * dens
            _finite(wts, "relaxed density", k, s)
            _finite(b, "drift", k, s)
            _finite(a, "diffusion", k, s)
            drift[:, j] = np.sum(wts * np.broadcast_to(b, wts.shape), axis=1)
            var[:, j] = np.sum(wts * np.broadcast_to(a, wts.shape) ** 2, axis=1)
        if np.any(var < -NEG_VAR_TOL):
            raise NumericalError(f"negative averaged variance {var.min():.3e} at step {k}")
        return drift, np.maximum(var, 0.0)

    def increment(self, k, s, ds, X, dW, ctx):
        if self.model.state_free and all(p.state_free for p in self.policies):
            drift, var = self.averaged(k, s, X[:1])
        else:
            drift, var = self.averaged(k, s, X)
        return (drift * ds + np.sqrt(var) * dW[:, :1])[..., None]


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------


def _run_batch(dyn: _Dynamics, seeds: Sequence[SeedSpec]):
    cfg = dyn.config
    grid = cfg.grid
    T = float(grid[-1])
    N = grid.size - 1
    dts = np.diff(grid)
    B = len(seeds)
    K, m, r = dyn.K, dyn.m, dyn.noise_dim
    dW = np.stack([sample_brownian(grid, r, s.child("bm")) for s in seeds])  # (B, N, r)
    ctx = dyn.prepare(seeds)
    events = []
    by_step: dict = {}
    for b, s in enumerate(seeds):
        if dyn.levy.is_zero:
            ev = JumpEvents.empty(dyn.levy.q)
        else:
            ev = sample_poisson_measure(dyn.levy, T, s.child("jumps"))
            ev = dyn.marks(ev, s, {key: v[b : b + 1] for key, v in ctx.items()})
        events.append(ev)
        if len(ev):
            steps = np.searchsorted(grid, ev.t, side="left") - 1
            for j, k in enumerate(steps):
                by_step.setdefault(int(k), {}).setdefault(b, []).append(j)
    X = np.broadcast_to(dyn.model.x0, (B, K, m)).copy()
    out = np.empty((B, N + 1, K, m))
    out[:, 0] = X
    extra = [[] for _ in range(B)]
    bridges: dict = {}
    bias = np.zeros((B, K))
    for k in range(N):
        s, ds = float(grid[k]), float(dts[k])
        rate = dyn.bias_rate(k, s, X, ctx)
        if rate is not None:
            bias += rate * ds
        Xn = X + dyn.increment(k, s, ds, X, dW[:, k, :], ctx)
        for b, idxs in by_step.get(k, {}).items():
            if b not in bridges:
                bridges[b] = derive_stream(seeds[b].child("bridge"))
            Xn[b] = _jump_step(dyn, k, s, ds, X[b : b + 1], dW[b, k], events[b], idxs, bridges[b], ctx, b, extra[b], grid)
        bad = ~np.isfinite(Xn) | (np.abs(Xn) > cfg.overflow)
        if np.any(bad):
            b = int(np.argwhere(bad)[0][0])
            raise DivergenceError(
                f"state exceeded the overflow guard {cfg.overflow:g} at step {k + 1} (t={grid[k + 1]}) "
                f"on path {seeds[b].index}"
            )
        X = Xn
        out[:, k + 1] = X
    return out, events, extra, bias, ctx.get("xi")


def _jump_step(dyn, k, s0, ds, X, G, ev: JumpEvents, idxs, bridge, ctx, b, extra_b, grid):
    """Sub-step path ``b`` over step ``k`` through its jump times."""
    ctx_row = {key: v[b : b + 1] for key, v in ctx.items()}
    x = X.copy()
    s, W = s0, np.zeros_like(G)
    end = s0 + ds
    for j in idxs:
        tau = float(ev.t[j])
        rem = end - s
        delta = tau - s
        if rem > 0.0:
            frac = delta / rem
            sd = math.sqrt(max(delta * (end - tau) / rem, 0.0))
            Wt = W + (G - W) * frac + sd * bridge.standard_normal(G.shape)
        else:
            Wt = G.copy()
        x = x + dyn.increment(k, s, delta, x, (Wt - W)[None, :], ctx_row)
        u = None if ev.u is None else ev.u[j]
        x = x + dyn.jump(tau, x, ev.z[j], u, ctx_row)
        if tau < end:
            extra_b.append((k, tau, x[0].copy()))
        s, W = tau, Wt
    x = x + dyn.increment(k, s, end - s, x, (G - W)[None, :], ctx_row)
    return x[0]


def simulate(
    kind: str,
    model: JumpDiffusionModel,
    policies,
    config: SolverConfig,
    n_paths: int,
    master_seed: int,
    threads: int = 1,
    purpose: str = "path",
    start_index: int = 0,
    draw: Optional[RandomizationDraw] = None,
) -> PathBatch:
    """Simulate ``n_paths`` paths of the ``K`` given policies jointly.

    ``kind`` is one of ``classical``, ``grid``, ``limit``, ``exploratory``;
    for ``classical`` the policies are feedback maps ``h(t, x)``.
    """
    if n_paths < 1:
        raise ConfigError("number of paths must be positive")
    if threads < 1:
        raise ConfigError("number of threads must be positive")
    if not isinstance(policies, (list, tuple)):
        policies = [policies]
    if kind == "classical":
        dyn = _Classical(model, config, policies)
        ids = [getattr(p, "__name__", "feedback") for p in policies]
    elif kind == "grid":
        dyn = _GridSampling(model, config, policies, draw)
        ids = [p.name for p in policies]
    elif kind == "limit":
        dyn = _Limit(model, config, policies)
        ids = [p.name for p in policies]
    elif kind == "exploratory":
        dyn = _Exploratory(model, config, policies)
        ids = [p.name for p in policies]
    else:
        raise ConfigError(f"unknown solver kind {kind!r}")
    if abs(config.T - model.horizon) > 1e-12 * max(1.0, model.horizon):
        raise ConfigError(f"partition horizon {config.T} differs from the model horizon {model.horizon}")
    seeds = [SeedSpec(master_seed, purpose, start_index + i) for i in range(n_paths)]
    chunks = [seeds[i : i + config.batch_size] for i in range(0, n_paths, config.batch_size)]
    if threads == 1 or len(chunks) == 1:
        results = [_run_batch(dyn, c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: _run_batch(dyn, c), chunks))
    values = np.concatenate([r[0] for r in results])
    events = [e for r in results for e in r[1]]
    extra = [e for r in results for e in r[2]]
    bias = np.concatenate([r[3] for r in results])
    xi = np.concatenate([r[4] for r in results]) if kind == "grid" else None
    meta = {
        "scheme": "euler-maruyama-jumps",
        "solver": kind,
        "model": model.name,
        "policy_ids": ids,
        "refine": config.refine,
        "n_intervals": config.partition.n,
        "bias_bound": bias,
    }
    return PathBatch(config.grid, values, events, extra, seeds, meta, xi)


def _single(kind, model, policies, config, seed: SeedSpec, draw=None):
    many = isinstance(policies, (list, tuple))
    batch = simulate(kind, model, policies, config, 1, seed.master_seed, purpose=seed.purpose, start_index=seed.index, draw=draw)
    recs = batch.records()[0]
    return recs if many else recs[0]


def solve_classical(model, policy, config: SolverConfig, seed: SeedSpec):
    """One path of the classical SDE under feedback ``policy(t, x)`` (or a list of them)."""
    return _single("classical", model, policy, config, seed)


def solve_grid_sampling(model, policy, draw: RandomizationDraw, config: SolverConfig, seed: SeedSpec):
    """One path of the grid-sampling SDE for a fixed randomization draw."""
    return _single("grid", model, policy, config, seed, draw)


def solve_limit_joint(model, policies, config: SolverConfig, seed: SeedSpec):
    """``K`` paths of the grid-sampling limit SDE sharing one noise source."""
    if not isinstance(policies, (list, tuple)):
        policies = [policies]
    return _single("limit", model, list(policies), config, seed)


def solve_exploratory(model, policy, config: SolverConfig, seed: SeedSpec):
    """One path of the exploratory SDE (a list of policies shares one Brownian motion)."""
    return _single("exploratory", model, policy, config, seed)


def realized_covariation(path1: Union[PathRecord, np.ndarray], path2: Union[PathRecord, np.ndarray]):
    """``sum_k dX1_k dX2_k^T`` over the common grid; a scalar when ``m = 1``.

    Arrays of shape ``(..., N+1, m)`` are accepted and reduced over the
    time axis.
    """
    if isinstance(path1, PathRecord) or isinstance(path2, PathRecord):
        if not (isinstance(path1, PathRecord) and isinstance(path2, PathRecord)):
            raise InputError("cannot mix path records and arrays")
        if path1.times.shape != path2.times.shape or not np.array_equal(path1.times, path2.times):
            raise InputError("paths are recorded on different grids")
        v1, v2 = path1.values, path2.values
    else:
        v1, v2 = np.asarray(path1, float), np.asarray(path2, float)
        if v1.shape[-2] != v2.shape[-2]:
            raise InputError("paths are recorded on different grids")
    d1 = np.diff(v1, axis=-2)
    d2 = np.diff(v2, axis=-2)
    cov = np.einsum("...ka,...kb->...ab", d1, d2)
    if cov.shape[-2:] == (1, 1):
        cov = cov[..., 0, 0]
        return float(cov) if np.ndim(cov) == 0 else cov
    return cov
