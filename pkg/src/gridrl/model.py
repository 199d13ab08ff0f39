"""Domain types for controlled jump-diffusions and randomized policies.

Shapes follow one broadcasting convention throughout the package: ``t`` is
a scalar time, states ``x`` have trailing axis ``m``, actions ``y`` trailing
axis ``d``, jump marks ``z`` trailing axis ``q`` and uniforms ``u`` trailing
axis ``d``.  Coefficients return ``b`` with shape ``(..., m)``, ``a`` with
shape ``(..., m, p)`` and ``gamma`` with shape ``(..., m)``.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate as _spi
from scipy import special as _sps
from scipy import stats as _stats

from .errors import CoefficientError, ConfigError, NumericalError, PolicySpecError, SpecError
from .quadrature import composite_interval_rule, interval_rule

__all__ = [
    "Dimensions",
    "Partition",
    "JumpSizeLaw",
    "DiracSizes",
    "NormalSizes",
    "UniformSizes",
    "LevyMeasure",
    "NoJumps",
    "CompoundPoisson",
    "TruncatedStable",
    "JumpDiffusionModel",
    "RandomizedPolicy",
    "U_CLAMP",
    "inverse_normal_cdf",
    "gaussian_policy",
    "uniform_policy",
    "deterministic_policy",
    "eval_coeffs",
    "eval_jump",
    "policy_pushforward_check",
    "ks_threshold",
    "entropy",
]

U_CLAMP = 1e-12
_SQRT2PI = math.sqrt(2.0 * math.pi)


def inverse_normal_cdf(u):
    """Standard normal quantile with ``u`` clamped to ``[1e-12, 1 - 1e-12]``."""
    return _sps.ndtri(np.clip(u, U_CLAMP, 1.0 - U_CLAMP))


@dataclass(frozen=True)
class Dimensions:
    """State ``m``, Brownian ``p``, control ``d`` and jump-mark ``q`` dimensions."""

    m: int = 1
    p: int = 1
    d: int = 1
    q: int = 1

    def __post_init__(self):
        for name in ("m", "p", "d", "q"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise SpecError(f"dimension {name} must be a positive integer, got {v!r}")


@dataclass(frozen=True, eq=False)
class Partition:
    """Grid ``0 = t_0 < t_1 < ... < t_n = T``.

    Interval ``i`` (1-based) is the half-open ``(t_{i-1}, t_i]``; time 0 is
    assigned to interval 1.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1).copy()
        if pts.size < 2:
            raise ConfigError("a partition needs at least two points")
        if pts[0] != 0.0:
            raise ConfigError("a partition must start at 0")
        if not np.all(np.isfinite(pts)) or np.any(np.diff(pts) <= 0.0):
            raise ConfigError("partition points must be finite and strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def equidistant(cls, T: float, n: int) -> "Partition":
        if n < 1 or not T > 0:
            raise ConfigError(f"equidistant partition needs n >= 1 and T > 0, got n={n}, T={T}")
        pts = np.linspace(0.0, float(T), int(n) + 1)
        return cls(pts)

    @property
    def n(self) -> int:
        return self.points.size - 1

    @property
    def T(self) -> float:
        return float(self.points[-1])

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.points)))

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.points)

    def interval_index(self, t):
        """1-based index ``i`` with ``t`` in ``(t_{i-1}, t_i]``; ``t = 0`` maps to 1."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0) or np.any(t_arr > self.T):
            raise ConfigError(f"time outside [0, {self.T}]")
        idx = np.searchsorted(self.points, t_arr, side="left")
        idx = np.maximum(idx, 1)
        return int(idx) if idx.ndim == 0 else idx

    def rho(self, t):
        """Left grid point ``t_{i-1}`` of the interval containing ``t``."""
        return self.points[np.asarray(self.interval_index(t)) - 1]

    def sigma(self, t):
        """Right grid point ``t_i`` of the interval containing ``t``."""
        return self.points[np.asarray(self.interval_index(t))]

    def refine(self, k: int) -> np.ndarray:
        """Simulation grid splitting every interval into ``k`` equal steps."""
        if k < 1:
            raise ConfigError("refinement factor must be >= 1")
        a = self.points[:-1, None]
        h = np.diff(self.points)[:, None]
        inner = a + h * (np.arange(k)[None, :] / k)
        return np.concatenate([inner.ravel(), self.points[-1:]])

    def contains(self, grid: np.ndarray) -> bool:
        """Whether every partition point is a node of ``grid``."""
        return bool(np.all(np.isin(self.points, grid)))


# ---------------------------------------------------------------------------
# Levy measures
# ---------------------------------------------------------------------------


class JumpSizeLaw(ABC):
    """Probability law of jump marks for a compound Poisson measure."""

    q: int = 1

    @abstractmethod
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``(n, q)`` marks."""

    @abstractmethod
    def quadrature(self, lo: float, hi: float):
        """Nodes ``(J, q)`` and probability weights for ``{lo < |z| <= hi}``."""


@dataclass(frozen=True)
class DiracSizes(JumpSizeLaw):
    """All jumps carry the same mark ``z0``."""

    z0: float = 1.0

    def __post_init__(self):
        if self.z0 == 0.0:
            raise SpecError("jump marks must be non-zero")

    def sample(self, rng, n):
        return np.full((n, 1), float(self.z0))

    def quadrature(self, lo, hi):
        r = abs(self.z0)
        if lo < r <= hi:
            return np.array([[float(self.z0)]]), np.array([1.0])
        return np.zeros((0, 1)), np.zeros(0)


@dataclass(frozen=True)
class NormalSizes(JumpSizeLaw):
    """Scalar Gaussian marks ``N(mean, std^2)``."""

    mean: float = 0.0
    std: float = 1.0
    order: int = 24
    panels: int = 16

    def __post_init__(self):
        if not self.std > 0:
            raise SpecError("normal jump sizes need std > 0")

    def sample(self, rng, n):
        return (self.mean + self.std * rng.standard_normal(n))[:, None]

    def quadrature(self, lo, hi):
        span_lo = self.mean - 12.0 * self.std
        span_hi = self.mean + 12.0 * self.std
        nodes, weights = [], []
        for a, b in ((-hi, -lo), (lo, hi)):
            a, b = max(a, span_lo), min(b, span_hi)
            if b <= a:
                continue
            x, w = composite_interval_rule(np.linspace(a, b, self.panels + 1), self.order)
            nodes.append(x)
            weights.append(w * _stats.norm.pdf(x, self.mean, self.std))
        if not nodes:
            return np.zeros((0, 1)), np.zeros(0)
        return np.concatenate(nodes)[:, None], np.concatenate(weights)


@dataclass(frozen=True)
class UniformSizes(JumpSizeLaw):
    """Scalar marks uniform on ``[low, high]``."""

    low: float = 0.5
    high: float = 1.5
    order: int = 32

    def __post_init__(self):
        if not self.high > self.low:
            raise SpecError("uniform jump sizes need high > low")

    def sample(self, rng, n):
        return rng.uniform(self.low, self.high, n)[:, None]

    def quadrature(self, lo, hi):
        dens = 1.0 / (self.high - self.low)
        nodes, weights = [], []
        for a, b in ((-hi, -lo), (lo, hi)):
            a, b = max(a, self.low), min(b, self.high)
            if b <= a:
                continue
            x, w = interval_rule(a, b, self.order)
            nodes.append(x)
            weights.append(w * dens)
        if not nodes:
            return np.zeros((0, 1)), np.zeros(0)
        return np.concatenate(nodes)[:, None], np.concatenate(weights)


class LevyMeasure(ABC):
    """Time-indexed Levy measure ``nu_t(dz)`` on ``R^q minus {0}``.

    Only the region ``|z| > sampling_cutoff`` is simulated.  Jumps with
    ``0 < |z| <= truncation_radius`` enter the dynamics compensated.
    """

    q: int = 1
    truncation_radius: float = 0.0
    sampling_cutoff: float = 0.0

    @abstractmethod
    def rate(self, t) -> float:
        """Mass ``nu_t({|z| > sampling_cutoff})``."""

    @abstractmethod
    def rate_bound(self, T: float) -> float:
        """Upper bound of :meth:`rate` on ``[0, T]`` used for thinning."""

    @abstractmethod
    def sample_marks(self, rng: np.random.Generator, times: np.ndarray) -> np.ndarray:
        """Marks ``(J, q)`` for jumps at ``times`` from the normalized law."""

    @abstractmethod
    def quadrature(self, t: float, lo: float = 0.0, hi: float = math.inf):
        """Nodes ``(J, q)`` and weights so that sum w f(z) ~ int_{lo<|z|<=hi} f dnu_t."""

    @abstractmethod
    def second_moment(self, t: float, lo: float, hi: float) -> float:
        """``int_{lo<|z|<=hi} |z|^2 nu_t(dz)``."""

    @abstractmethod
    def mass(self, t: float, lo: float, hi: float = math.inf) -> float:
        """``nu_t({lo < |z| <= hi})`` for ``lo > 0``."""

    @property
    def is_zero(self) -> bool:
        return False

    def check_integrability(self, T: float, order: int = 16) -> float:
        """Return ``int_0^T int (|z|^2 1{|z|<=r} + 1{|z|>r}) nu_t(dz) dt``.

        Raises :class:`SpecError` when the value is not finite.
        """
        r = self.truncation_radius
        ts, ws = interval_rule(0.0, T, order)
        total = 0.0
        for t, w in zip(ts, ws):
            small = self.second_moment(t, 0.0, r) if r > 0 else 0.0
            large = self.mass(t, max(r, 0.0), math.inf) if r > 0 else self.mass(t, 0.0)
            total += w * (small + large)
        if not math.isfinite(total):
            raise SpecError("Levy measure violates the integrability condition")
        return total


@dataclass(frozen=True)
class NoJumps(LevyMeasure):
    """The zero measure."""

    q: int = 1
    truncation_radius: float = 0.0
    sampling_cutoff: float = 0.0

    @property
    def is_zero(self):
        return True

    def rate(self, t):
        return 0.0

    def rate_bound(self, T):
        return 0.0

    def sample_marks(self, rng, times):
        return np.zeros((len(times), self.q))

    def quadrature(self, t, lo=0.0, hi=math.inf):
        return np.zeros((0, self.q)), np.zeros(0)

    def second_moment(self, t, lo, hi):
        return 0.0

    def mass(self, t, lo, hi=math.inf):
        return 0.0


@dataclass(frozen=True)
class CompoundPoisson(LevyMeasure):
    """Finite-activity measure ``nu_t = lam(t) * law``.

    ``intensity`` is a non-negative constant or a callable of time; for a
    callable ``bound`` must dominate it on the horizon.
    """

    intensity: float | Callable[[float], float] = 1.0
    sizes: JumpSizeLaw = field(default_factory=DiracSizes)
    truncation_radius: float = 0.0
    bound: Optional[float] = None

    def __post_init__(self):
        if self.truncation_radius < 0:
            raise SpecError("truncation radius must be non-negative")
        if callable(self.intensity):
            if self.bound is None or not math.isfinite(self.bound) or self.bound < 0:
                raise SpecError("a time-dependent Poisson rate needs a finite bound")
        elif not (math.isfinite(self.intensity) and self.intensity >= 0):
            raise SpecError(f"Poisson rate must be finite and non-negative, got {self.intensity}")

    @property
    def q(self):
        return self.sizes.q

    @property
    def sampling_cutoff(self):
        return 0.0

    @property
    def is_zero(self):
        return not callable(self.intensity) and self.intensity == 0.0

    def rate(self, t):
        if callable(self.intensity):
            lam = float(self.intensity(t))
            if not (math.isfinite(lam) and lam >= 0):
                raise SpecError(f"Poisson rate at t={t} is {lam}")
            return lam
        return float(self.intensity)

    def rate_bound(self, T):
        if callable(self.intensity):
            return float(self.bound)
        return float(self.intensity)

    def sample_marks(self, rng, times):
        return self.sizes.sample(rng, len(times))

    def quadrature(self, t, lo=0.0, hi=math.inf):
        nodes, weights = self.sizes.quadrature(lo, hi)
        return nodes, self.rate(t) * weights

    def second_moment(self, t, lo, hi):
        nodes, weights = self.quadrature(t, lo, hi)
        return float(np.sum(weights * np.sum(nodes**2, axis=-1)))

    def mass(self, t, lo, hi=math.inf):
        return float(np.sum(self.quadrature(t, lo, hi)[1]))


@dataclass(frozen=True)
class TruncatedStable(LevyMeasure):
    """Symmetric ``nu(dz) = c |z|^{-1-alpha} dz`` on ``0 < |z| <= z_max`` (q = 1).

    Only jumps with ``|z| > cutoff`` are simulated; the small-jump second
    moment is known in closed form, ``2 c rho^{2-alpha} / (2 - alpha)``.
    """

    c: float = 1.0
    alpha: float = 1.0
    cutoff: float = 0.05
    z_max: float = 2.0
    truncation_radius: float = 1.0
    order: int = 32

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise SpecError("stable index must lie in (0, 2)")
        if not (self.c > 0 and 0 < self.cutoff < self.z_max and math.isfinite(self.z_max)):
            raise SpecError("truncated stable measure needs c > 0 and 0 < cutoff < z_max < inf")
        if self.truncation_radius < self.cutoff:
            raise SpecError("truncation radius must be at least the sampling cutoff")

    q = 1

    @property
    def sampling_cutoff(self):
        return self.cutoff

    def _tail(self, r):
        # nu({|z| > r}) for 0 < r
        r = min(r, self.z_max)
        return 2.0 * self.c * (r ** (-self.alpha) - self.z_max ** (-self.alpha)) / self.alpha

    def rate(self, t):
        return self._tail(self.cutoff)

    def rate_bound(self, T):
        return self._tail(self.cutoff)

    def sample_marks(self, rng, times):
        n = len(times)
        a = self.alpha
        lo, hi = self.cutoff ** (-a), self.z_max ** (-a)
        mag = (lo - rng.random(n) * (lo - hi)) ** (-1.0 / a)
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return (sign * mag)[:, None]

    def _half_line(self, lo, hi):
        hi = min(hi, self.z_max)
        if hi <= lo:
            return np.zeros(0), np.zeros(0)
        a = self.alpha
        if lo == 0.0:
            # z = hi * v**beta removes the singular density at the origin
            beta = 2.0 / (2.0 - a)
            v, w = interval_rule(0.0, 1.0, self.order)
            z = hi * v**beta
            jac = hi * beta * v ** (beta - 1.0)
            return z, w * jac * self.c * z ** (-1.0 - a)
        s, w = interval_rule(math.log(lo), math.log(hi), self.order)
        z = np.exp(s)
        return z, w * self.c * z ** (-a)

    def quadrature(self, t, lo=0.0, hi=math.inf):
        if lo == 0.0 and hi > 0.0:
            # panel boundaries keep integrands with kinks at the cutoff accurate
            parts = [self._half_line(0.0, min(hi, self.cutoff)), self._half_line(self.cutoff, hi)]
        else:
            parts = [self._half_line(lo, hi)]
        z = np.concatenate([p[0] for p in parts])
        w = np.concatenate([p[1] for p in parts])
        return np.concatenate([-z[::-1], z])[:, None], np.concatenate([w[::-1], w])

    def second_moment(self, t, lo, hi):
        hi = min(hi, self.z_max)
        if hi <= lo:
            return 0.0
        e = 2.0 - self.alpha
        return 2.0 * self.c * (hi**e - lo**e) / e

    def mass(self, t, lo, hi=math.inf):
        if lo <= 0.0:
            return math.inf
        return self._tail(lo) - (self._tail(hi) if hi < self.z_max else 0.0)

    def unsampled_second_moment(self) -> float:
        """``int_{|z| <= cutoff} |z|^2 nu(dz)``, the basis of the small-jump bias bound."""
        return self.second_moment(0.0, 0.0, self.cutoff)


# ---------------------------------------------------------------------------
# Model and policies
# ---------------------------------------------------------------------------


def _zero_gamma(t, x, y, z):
    return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)[:-1] + (1,)))


@dataclass(frozen=True)
class JumpDiffusionModel:
    """Controlled jump-diffusion ``dX = b dt + a dB + int gamma dN``.

    Attributes
    ----------
    dims : Dimensions
    x0 : initial state, shape ``(m,)``
    b, a, gamma : vectorized coefficient maps (see module docstring)
    levy : Levy measure driving the jumps
    horizon : terminal time ``T``
    name : identifier used in metadata
    state_free : declares that ``b``, ``a`` and ``gamma`` ignore ``x``; solvers
        then evaluate control averages once per step instead of per path
    """

    dims: Dimensions
    x0: np.ndarray
    b: Callable
    a: Callable
    gamma: Callable = _zero_gamma
    levy: LevyMeasure = field(default_factory=NoJumps)
    horizon: float = 1.0
    name: str = "custom"
    notes: str = ""
    state_free: bool = False

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float).reshape(-1).copy()
        if x0.shape != (self.dims.m,):
            raise SpecError(f"x0 has shape {x0.shape}, expected ({self.dims.m},)")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        if not self.horizon > 0:
            raise SpecError("horizon must be positive")
        if not self.levy.is_zero and self.levy.q != self.dims.q:
            raise SpecError("Levy measure mark dimension differs from dims.q")

    @property
    def has_jumps(self) -> bool:
        return not self.levy.is_zero


def _check_finite(val, what, t, x, y):
    if not np.all(np.isfinite(val)):
        bad = np.argwhere(~np.isfinite(np.asarray(val)))
        where = tuple(bad[0]) if bad.size else ()
        raise CoefficientError(
            f"{what} is not finite at t={t}, index {where} (x={np.asarray(x).ravel()[:4]}, "
            f"y={np.asarray(y).ravel()[:4]})"
        )


def eval_coeffs(model: JumpDiffusionModel, t: float, x, y, check: bool = True):
    """Evaluate ``(b(t,x,y), a(t,x,y))`` with shape checks and finiteness guard."""
    if not (0.0 <= t <= model.horizon):
        raise ConfigError(f"t={t} outside [0, {model.horizon}]")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    drift = np.asarray(model.b(t, x, y), dtype=float)
    diff = np.asarray(model.a(t, x, y), dtype=float)
    if check:
        _check_finite(drift, "drift", t, x, y)
        _check_finite(diff, "diffusion", t, x, y)
    return drift, diff


def eval_jump(model: JumpDiffusionModel, t: float, x, y, z):
    """Evaluate ``gamma(t,x,y,z)`` with the finiteness guard."""
    val = np.asarray(model.gamma(t, np.asarray(x, float), np.asarray(y, float), np.asarray(z, float)))
    _check_finite(val, "jump coefficient", t, x, y)
    return val


@dataclass(frozen=True)
class RandomizedPolicy:
    """Executor ``h(t, x, u)`` of a relaxed control.

    ``relaxed_density(t, x, y)`` returns the density of the executed action
    (trailing axis of ``y`` is ``d``); ``entropy_fn(t, x)`` its closed-form
    Shannon entropy; ``support(t, x)`` a ``(lo, hi)`` box outside of which
    the density is negligible.  The last three are optional.  ``state_free``
    declares that ``h`` ignores ``x``.
    """

    h: Callable
    d: int = 1
    relaxed_density: Optional[Callable] = None
    entropy_fn: Optional[Callable] = None
    support: Optional[Callable] = None
    name: str = "policy"
    u_free: bool = False
    state_free: bool = False

    def execute(self, t, x, u):
        return np.asarray(self.h(t, np.asarray(x, float), np.asarray(u, float)), dtype=float)

    def density(self, t, x, y):
        if self.relaxed_density is None:
            raise SpecError(f"policy {self.name} has no relaxed density")
        return np.asarray(self.relaxed_density(t, np.asarray(x, float), np.asarray(y, float)), float)


def _param(v, t, x):
    """Constant or ``(t, x) -> array`` parameter, broadcast against ``x[..., 0]``."""
    if callable(v):
        return np.asarray(v(t, x), dtype=float)
    return np.full(np.shape(x)[:-1], float(v))


def gaussian_policy(mean=0.0, std=1.0, name: Optional[str] = None) -> RandomizedPolicy:
    """Scalar Gaussian executor ``h = mean + std * Phi^{-1}(u)``.

    ``mean`` and ``std`` are constants or callables of ``(t, x)``.
    """
    if not callable(std) and not std > 0:
        raise SpecError("Gaussian policy needs std > 0")

    def h(t, x, u):
        mu = _param(mean, t, x)
        sd = _param(std, t, x)
        z = inverse_normal_cdf(u[..., 0])
        return (mu + sd * z)[..., None]

    def dens(t, x, y):
        mu = _param(mean, t, x)
        sd = _param(std, t, x)
        zz = (y[..., 0] - mu) / sd
        return np.exp(-0.5 * zz * zz) / (_SQRT2PI * sd)

    def ent(t, x):
        sd = _param(std, t, x)
        return 0.5 * np.log(2.0 * np.pi * np.e * sd**2)

    def support(t, x):
        mu = _param(mean, t, x)
        sd = _param(std, t, x)
        return (mu - 12.0 * sd)[..., None], (mu + 12.0 * sd)[..., None]

    label = name or f"gaussian(mean={mean if not callable(mean) else 'fn'}, std={std if not callable(std) else 'fn'})"
    return RandomizedPolicy(
        h=h,
        d=1,
        relaxed_density=dens,
        entropy_fn=ent,
        support=support,
        name=label,
        state_free=not (callable(mean) or callable(std)),
    )


def uniform_policy(name: str = "uniform") -> RandomizedPolicy:
    """Identity executor ``h(t,x,u) = u`` with the uniform density on [0,1]."""

    def h(t, x, u):
        return np.broadcast_to(u, np.broadcast_shapes(np.shape(x)[:-1] + (1,), np.shape(u))).copy()

    def dens(t, x, y):
        y0 = y[..., 0]
        return np.where((y0 >= 0.0) & (y0 <= 1.0), 1.0, 0.0)

    def ent(t, x):
        return np.zeros(np.shape(x)[:-1])

    def support(t, x):
        shape = np.shape(x)[:-1] + (1,)
        return np.zeros(shape), np.ones(shape)

    return RandomizedPolicy(
        h=h, d=1, relaxed_density=dens, entropy_fn=ent, support=support, name=name, state_free=True
    )


def deterministic_policy(fn: Callable, d: int = 1, name: str = "feedback") -> RandomizedPolicy:
    """Wrap a feedback map ``fn(t, x) -> (..., d)`` as a ``u``-free executor."""

    def h(t, x, u):
        val = np.asarray(fn(t, x), dtype=float)
        shape = np.broadcast_shapes(val.shape, np.shape(u)[:-1] + (d,))
        return np.broadcast_to(val, shape)

    return RandomizedPolicy(h=h, d=d, name=name, u_free=True)


def ks_threshold(n: int, level: float = 0.99) -> float:
    """Quantile of the one-sample Kolmogorov-Smirnov statistic for ``n`` samples."""
    return float(_stats.kstwo.ppf(level, n))


def policy_pushforward_check(
    policy: RandomizedPolicy,
    t: float,
    x,
    n_samples: int = 100_000,
    bins: int = 8192,
    rng: Optional[np.random.Generator] = None,
    norm_tol: float = 1e-4,
) -> float:
    """Sup distance between the empirical CDF of ``h(t,x,U)`` and the CDF of the density.

    The reference CDF is the cumulative trapezoid of ``relaxed_density`` on
    ``bins`` points of the support box.  Only scalar actions are supported.
    """
    if policy.relaxed_density is None or policy.support is None:
        raise PolicySpecError(f"policy {policy.name} lacks a density or support descriptor")
    if policy.d != 1:
        raise PolicySpecError("pushforward check is implemented for scalar actions")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(0))
    x = np.asarray(x, dtype=float).reshape(-1)
    lo, hi = policy.support(t, x)
    lo, hi = float(np.ravel(lo)[0]), float(np.ravel(hi)[0])
    grid = np.linspace(lo, hi, bins)
    dens = policy.density(t, x, grid[:, None])
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    if abs(cdf[-1] - 1.0) > norm_tol:
        raise PolicySpecError(f"relaxed density integrates to {cdf[-1]:.6g}, not 1")
    u = rng.random((n_samples, 1))
    samples = np.sort(policy.execute(t, x, u)[..., 0])
    ref = np.interp(samples, grid, cdf)
    k = np.arange(1, n_samples + 1)
    return float(max(np.max(k / n_samples - ref), np.max(ref - (k - 1) / n_samples)))


def entropy(policy: RandomizedPolicy, t: float, x) -> float:
    """Shannon entropy ``-int hdot log hdot dy`` of the relaxed control at ``(t, x)``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if policy.entropy_fn is not None:
        return float(np.asarray(policy.entropy_fn(t, x)).reshape(-1)[0])
    if policy.relaxed_density is None or policy.support is None:
        raise PolicySpecError(f"policy {policy.name} lacks a density or support descriptor")
    if policy.d != 1:
        raise PolicySpecError("numeric entropy is implemented for scalar actions")
    lo, hi = policy.support(t, x)
    lo, hi = float(np.ravel(lo)[0]), float(np.ravel(hi)[0])

    def integrand(y):
        p = float(policy.density(t, x, np.array([[y]]))[0])
        return -p * math.log(p) if p > 0.0 else 0.0

    val, err = _spi.quad(integrand, lo, hi, limit=200, epsabs=1e-11, epsrel=1e-10, full_output=False)[:2]
    if not math.isfinite(val) or err > 1e-6 * max(1.0, abs(val)):
        raise NumericalError(f"entropy quadrature did not converge (estimate {val}, error {err})")
    return float(val)
