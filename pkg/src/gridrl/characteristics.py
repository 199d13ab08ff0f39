"""Limit characteristics and triangular-array diagnostics.

For a bundle of bounded test integrands ``f = (f_0, f_1..f_p, f_{p+1}, f_{p+2})``
the pre-limit process has interval increments

    dX_i = int f_0(s, xi_i) ds + sum_l int f_l(s, xi_i) dB^l
           + int int_{|z|<=R} f_{p+1}(s, z, xi_i) |z| (N - nu ds)(ds, dz)
           + int int_{|z|>R} f_{p+2}(s, z, xi_i) N(ds, dz)

and ``sum_i E g(dX_i) - g(0)`` approaches ``int_0^T Psi_f(g)(s) ds``.  This
module evaluates ``Psi`` and the limit characteristics by quadrature, and the
pre-limit sums by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InputError, NumericalError, SpecError
from .model import LevyMeasure, NoJumps, Partition
from .noise import psd_factor
from .quadrature import UnitCubeQuadrature, composite_interval_rule, default_cube, interval_rule
from .rng import SeedSpec, derive_stream

__all__ = [
    "TruncationFunction",
    "TestFunction",
    "TestFunctionBundle",
    "CharacteristicsTriple",
    "TriangularEstimate",
    "ConvergenceRow",
    "ConvergenceReport",
    "MomentRow",
    "psi",
    "integrated_psi",
    "limit_characteristics",
    "triangular_sum",
    "convergence_report",
    "moment_compare",
    "sine_test",
    "truncation_component",
    "truncation_product",
    "builtin_bundle",
    "BUILTIN_BUNDLES",
]


# ---------------------------------------------------------------------------
# truncation and test functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncationFunction:
    """Radial truncation ``h(y) = y psi(|y|) / |y|``.

    ``psi(r) = r`` up to ``r_inner``; on the shell ``psi'`` falls from 1 to 0
    along ``1 - (3 tau^2 - 2 tau^3)`` so ``h`` is C^2, and beyond ``r_outer``
    ``psi`` stays at ``r_inner + (r_outer - r_inner) / 2``.
    """

    r_inner: float = 1.0
    r_outer: float = 2.0

    def __post_init__(self):
        if not (0 < self.r_inner < self.r_outer):
            raise SpecError("truncation radii must satisfy 0 < r_inner < r_outer")

    @property
    def width(self) -> float:
        return self.r_outer - self.r_inner

    @property
    def plateau(self) -> float:
        return self.r_inner + 0.5 * self.width

    def radial(self, r):
        """``psi(r)``, ``psi'(r)`` and ``psi''(r)``."""
        r = np.asarray(r, dtype=float)
        w = self.width
        tau = np.clip((r - self.r_inner) / w, 0.0, 1.0)
        shell = self.r_inner + w * (tau - tau**3 + 0.5 * tau**4)
        psi = np.where(r <= self.r_inner, r, shell)
        d1 = np.where(r <= self.r_inner, 1.0, 1.0 - 3.0 * tau**2 + 2.0 * tau**3)
        d2 = np.where((r > self.r_inner) & (r < self.r_outer), (-6.0 * tau + 6.0 * tau**2) / w, 0.0)
        return psi, d1, d2

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1)
        psi, _, _ = self.radial(r)
        scale = np.where(r <= self.r_inner, 1.0, psi / np.where(r > 0, r, 1.0))
        return y * scale[..., None]

    def _phi(self, r):
        # phi(r) = psi(r) / r and its first two derivatives, for r > r_inner
        psi, d1, d2 = self.radial(r)
        phi = psi / r
        p1 = (d1 * r - psi) / r**2
        p2 = (d2 * r**2 - 2.0 * d1 * r + 2.0 * psi) / r**3
        return phi, p1, p2

    def jacobian(self, y):
        """``d h_i / d y_j`` with shape ``(..., m, m)``."""
        y = np.asarray(y, dtype=float)
        m = y.shape[-1]
        r = np.linalg.norm(y, axis=-1)
        eye = np.eye(m)
        inner = r <= self.r_inner
        rs = np.where(inner, 1.0, r)
        phi, p1, _ = self._phi(rs)
        phi = np.where(inner, 1.0, phi)
        p1 = np.where(inner, 0.0, p1)
        outer = np.einsum("...i,...j->...ij", y, y)
        return phi[..., None, None] * eye + (p1 / rs)[..., None, None] * outer

    def hessian(self, y):
        """``d^2 h_i / d y_j d y_k`` with shape ``(..., m, m, m)``."""
        y = np.asarray(y, dtype=float)
        m = y.shape[-1]
        r = np.linalg.norm(y, axis=-1)
        eye = np.eye(m)
        inner = r <= self.r_inner
        rs = np.where(inner, 1.0, r)
        _, p1, p2 = self._phi(rs)
        a = np.where(inner, 0.0, p1 / rs)
        c = np.where(inner, 0.0, (p2 - p1 / rs) / rs**2)
        t1 = (
            np.einsum("ij,...k->...ijk", eye, y)
            + np.einsum("ik,...j->...ijk", eye, y)
            + np.einsum("jk,...i->...ijk", eye, y)
        )
        t2 = np.einsum("...i,...j,...k->...ijk", y, y, y)
        return a[..., None, None, None] * t1 + c[..., None, None, None] * t2


@dataclass(frozen=True, eq=False)
class TestFunction:
    """``g`` in C^2_b with its value map and derivatives at the origin."""

    __test__ = False

    value: Callable
    grad0: np.ndarray
    hess0: np.ndarray
    name: str = "g"

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.grad0, dtype=float))
        H = np.atleast_2d(np.asarray(self.hess0, dtype=float))
        if H.shape != (g.size, g.size):
            raise SpecError("test function Hessian does not match its gradient")
        object.__setattr__(self, "grad0", g)
        object.__setattr__(self, "hess0", H)

    @property
    def m(self) -> int:
        return self.grad0.size

    def __call__(self, y):
        return np.asarray(self.value(np.asarray(y, dtype=float)), dtype=float)

    def combine(self, other: "TestFunction", alpha: float = 1.0, beta: float = 1.0) -> "TestFunction":
        """``alpha * self + beta * other``."""
        return TestFunction(
            lambda y: alpha * self(y) + beta * other(y),
            alpha * self.grad0 + beta * other.grad0,
            alpha * self.hess0 + beta * other.hess0,
            f"{alpha}*{self.name}+{beta}*{other.name}",
        )


def sine_test() -> TestFunction:
    """``g(y) = sin(y)`` for scalar states."""
    return TestFunction(lambda y: np.sin(y[..., 0]), [1.0], [[0.0]], "sin")


def truncation_component(trunc: TruncationFunction, k: int, m: int = 1) -> TestFunction:
    """``g = h^(k)``."""
    e = np.zeros(m)
    e[k] = 1.0
    return TestFunction(lambda y: trunc(y)[..., k], e, np.zeros((m, m)), f"h{k}")


def truncation_product(trunc: TruncationFunction, k: int, k2: int, m: int = 1) -> TestFunction:
    """``g = h^(k) h^(k2)``; its Hessian at 0 is ``e_k e_k2^T + e_k2 e_k^T``."""
    H = np.zeros((m, m))
    H[k, k2] += 1.0
    H[k2, k] += 1.0

    def value(y):
        hy = trunc(y)
        return hy[..., k] * hy[..., k2]

    return TestFunction(value, np.zeros(m), H, f"h{k}*h{k2}")


# ---------------------------------------------------------------------------
# bundles
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TestFunctionBundle:
    """Bounded integrands ``f_0``, ``f_1..f_p``, ``f_{p+1}``, ``f_{p+2}`` and radius ``R``.

    ``f0(s, u)`` and each ``fb[l](s, u)`` return ``(..., m)``; ``f_small`` and
    ``f_large`` are maps ``(s, z, u) -> (..., m)``.  Missing entries are zero.
    ``bounds`` declares sup norms under the keys ``f0``, ``fb``, ``small``
    and ``large``.
    """

    __test__ = False

    m: int = 1
    d: int = 1
    R: float = 1.0
    T: float = 1.0
    f0: Optional[Callable] = None
    fb: tuple = ()
    f_small: Optional[Callable] = None
    f_large: Optional[Callable] = None
    levy: LevyMeasure = field(default_factory=NoJumps)
    bounds: dict = field(default_factory=dict)
    name: str = "bundle"

    def __post_init__(self):
        if self.R < 0:
            raise SpecError("bundle radius R must be non-negative")
        object.__setattr__(self, "fb", tuple(self.fb))
        for key, val in self.bounds.items():
            if not (math.isfinite(val) and val >= 0):
                raise SpecError(f"declared bound {key}={val} is not a finite non-negative number")

    @property
    def p(self) -> int:
        return len(self.fb)

    def eval_f0(self, s, u):
        if self.f0 is None:
            return np.zeros(np.shape(u)[:-1] + (self.m,))
        return np.broadcast_to(np.asarray(self.f0(s, u), float), np.shape(u)[:-1] + (self.m,))

    def eval_fb(self, l, s, u):
        f = self.fb[l]
        if f is None:
            return np.zeros(np.shape(u)[:-1] + (self.m,))
        return np.broadcast_to(np.asarray(f(s, u), float), np.shape(u)[:-1] + (self.m,))

    def _eval_jump(self, f, s, z, u):
        shape = np.broadcast_shapes(np.shape(z)[:-1], np.shape(u)[:-1]) + (self.m,)
        if f is None:
            return np.zeros(shape)
        return np.broadcast_to(np.asarray(f(s, z, u), float), shape)

    def eval_small(self, s, z, u):
        return self._eval_jump(self.f_small, s, z, u)

    def eval_large(self, s, z, u):
        return self._eval_jump(self.f_large, s, z, u)

    def check_bounds(self, quad: Optional[UnitCubeQuadrature] = None, n_times: int = 9, tol: float = 1e-9):
        """Verify declared sup norms on a grid of times, quadrature nodes and Levy nodes."""
        quad = quad or default_cube(self.d)
        U = quad.nodes
        for s in np.linspace(0.0, self.T, n_times):
            checks = [("f0", self.eval_f0(s, U))]
            checks += [("fb", self.eval_fb(l, s, U)) for l in range(self.p)]
            z, _ = self.levy.quadrature(s, 0.0, math.inf)
            if z.size:
                checks.append(("small", self.eval_small(s, z[:, None, :], U[None])))
                checks.append(("large", self.eval_large(s, z[:, None, :], U[None])))
            for key, vals in checks:
                sup = float(np.max(np.linalg.norm(vals, axis=-1))) if vals.size else 0.0
                if key in self.bounds and sup > self.bounds[key] * (1 + tol) + tol:
                    raise SpecError(f"bundle {self.name}: sup|{key}| = {sup:.6g} exceeds declared {self.bounds[key]}")
        return True


# ---------------------------------------------------------------------------
# Psi and limit characteristics
# ---------------------------------------------------------------------------


def _check(val, what):
    if not np.all(np.isfinite(val)):
        raise NumericalError(f"{what} quadrature produced a non-finite value")
    return val


def psi(
    bundle: TestFunctionBundle,
    g: TestFunction,
    levy: Optional[LevyMeasure] = None,
    s: float = 0.0,
    quad: Optional[UnitCubeQuadrature] = None,
) -> float:
    """``Psi_f(g)(s)``: diffusion, small-jump and large-jump terms by quadrature."""
    levy = bundle.levy if levy is None else levy
    quad = quad or default_cube(bundle.d)
    U, wu = quad.nodes, quad.weights
    m = bundle.m
    if g.m != m:
        raise InputError("test function dimension differs from bundle dimension")
    g0 = float(g(np.zeros(m)))
    F0 = bundle.eval_f0(s, U)
    total = math.fsum(wu * (F0 @ g.grad0))
    for l in range(bundle.p):
        Fl = bundle.eval_fb(l, s, U)
        total += 0.5 * math.fsum(wu * np.einsum("ja,ab,jb->j", Fl, g.hess0, Fl))
    if not levy.is_zero:
        if bundle.R > 0:
            z, wz = levy.quadrature(s, 0.0, bundle.R)
            if wz.size:
                F = bundle.eval_small(s, z[:, None, :], U[None]) * np.linalg.norm(z, axis=-1)[:, None, None]
                vals = g(F) - g0 - F @ g.grad0
                total += float(np.einsum("zj,z,j->", vals, wz, wu))
        z, wz = levy.quadrature(s, bundle.R, math.inf)
        if wz.size:
            F = bundle.eval_large(s, z[:, None, :], U[None])
            vals = g(F) - g0
            total += float(np.einsum("zj,z,j->", vals, wz, wu))
    return _check(float(total), "Psi")


def integrated_psi(bundle, g, levy=None, t: Optional[float] = None, quad=None, panels: int = 8, order: int = 8):
    """``int_0^t Psi_f(g)(s) ds`` by composite Gauss-Legendre in time."""
    t = bundle.T if t is None else t
    s, w = composite_interval_rule(np.linspace(0.0, t, panels + 1), order)
    return math.fsum(wi * psi(bundle, g, levy, float(si), quad) for si, wi in zip(s, w))


def _jump_images(bundle, levy, s, quad):
    """Images ``y`` and weights of the change of variables defining ``nu^X`` at time ``s``.

    Returns ``(Y, W)`` with ``Y`` of shape ``(M, m)``.
    """
    U, wu = quad.nodes, quad.weights
    ys, ws = [], []
    if levy.is_zero:
        return np.zeros((0, bundle.m)), np.zeros(0)
    if bundle.R > 0:
        z, wz = levy.quadrature(s, 0.0, bundle.R)
        if wz.size:
            F = bundle.eval_small(s, z[:, None, :], U[None]) * np.linalg.norm(z, axis=-1)[:, None, None]
            ys.append(F.reshape(-1, bundle.m))
            ws.append(np.outer(wz, wu).ravel())
    z, wz = levy.quadrature(s, bundle.R, math.inf)
    if wz.size:
        F = bundle.eval_large(s, z[:, None, :], U[None])
        ys.append(F.reshape(-1, bundle.m))
        ws.append(np.outer(wz, wu).ravel())
    if not ys:
        return np.zeros((0, bundle.m)), np.zeros(0)
    Y = np.concatenate(ys)
    W = np.concatenate(ws)
    return Y, W


@dataclass(frozen=True, eq=False)
class CharacteristicsTriple:
    """Drift, second characteristic and jump functional of the limit process.

    ``drift[k]``, ``C[k]`` and ``C_tilde[k]`` are the values at ``times[k]``.
    """

    times: np.ndarray
    drift: np.ndarray
    C: np.ndarray
    C_tilde: np.ndarray
    bundle: TestFunctionBundle
    levy: LevyMeasure
    trunc: TruncationFunction
    quad: UnitCubeQuadrature
    order: int = 8

    def _time_nodes(self, t):
        breaks = np.append(self.times[self.times < t], t)
        return composite_interval_rule(breaks, self.order)

    def jump_integral(self, g: Callable, t: Optional[float] = None) -> float:
        """``int_0^t int g(y) nu^X(ds, dy)``."""
        t = float(self.times[-1]) if t is None else t
        if t <= 0:
            return 0.0
        total = []
        for s, w in zip(*self._time_nodes(t)):
            Y, W = _jump_images(self.bundle, self.levy, float(s), self.quad)
            if W.size == 0:
                continue
            keep = np.linalg.norm(Y, axis=-1) > 0.0
            vals = np.asarray(g(Y[keep]), dtype=float)
            total.append(w * np.dot(W[keep], vals))
        return _check(math.fsum(total), "jump functional")

    def tail_mass(self, kappa: float, t: Optional[float] = None) -> float:
        """``nu^X([0, t] x {|y| >= kappa})``."""
        return self.jump_integral(lambda y: (np.linalg.norm(y, axis=-1) >= kappa).astype(float), t)

    def tail_bound(self, kappa: float, t: Optional[float] = None) -> float:
        """Chebyshev-type bound on :meth:`tail_mass` from the declared sup norms."""
        t = float(self.times[-1]) if t is None else t
        b = self.bundle
        fs, fl = b.bounds.get("small", math.inf), b.bounds.get("large", math.inf)
        s, w = self._time_nodes(t)
        second = math.fsum(wi * self.levy.second_moment(float(si), 0.0, b.R) for si, wi in zip(s, w)) if b.R > 0 else 0.0
        mass = math.fsum(wi * self.levy.mass(float(si), b.R) for si, wi in zip(s, w)) if b.R > 0 else math.fsum(
            wi * self.levy.mass(float(si), 0.0) for si, wi in zip(s, w)
        )
        small_term = fs**2 / kappa**2 * second if second > 0 else 0.0
        large_term = fl / kappa * mass if mass > 0 else 0.0
        return small_term + large_term

    def check_monotone(self, tol: float = 1e-10) -> bool:
        """``C_tilde`` symmetric with PSD increments at the stored times."""
        Ct = self.C_tilde
        if not np.allclose(Ct, np.swapaxes(Ct, -1, -2), atol=tol):
            return False
        inc = np.diff(Ct, axis=0)
        lam = np.linalg.eigvalsh(0.5 * (inc + np.swapaxes(inc, -1, -2)))
        return bool(np.all(lam >= -tol * max(1.0, float(np.max(np.abs(Ct))))))


def limit_characteristics(
    bundle: TestFunctionBundle,
    levy: Optional[LevyMeasure] = None,
    trunc: Optional[TruncationFunction] = None,
    grid=None,
    quad: Optional[UnitCubeQuadrature] = None,
    order: int = 8,
) -> CharacteristicsTriple:
    """Characteristics of the limit process with respect to ``trunc`` on ``grid``."""
    levy = bundle.levy if levy is None else levy
    trunc = trunc or TruncationFunction()
    quad = quad or default_cube(bundle.d)
    grid = np.linspace(0.0, bundle.T, 33) if grid is None else np.asarray(grid, dtype=float)
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise InputError("characteristics grid must start at 0 and increase")
    U, wu = quad.nodes, quad.weights
    m = bundle.m

    def rates(s):
        F0 = bundle.eval_f0(s, U)
        b = wu @ F0
        C = np.zeros((m, m))
        for l in range(bundle.p):
            Fl = bundle.eval_fb(l, s, U)
            C += np.einsum("j,ja,jb->ab", wu, Fl, Fl)
        nuhh = np.zeros((m, m))
        if not levy.is_zero:
            if bundle.R > 0:
                z, wz = levy.quadrature(s, 0.0, bundle.R)
                if wz.size:
                    F = bundle.eval_small(s, z[:, None, :], U[None]) * np.linalg.norm(z, axis=-1)[:, None, None]
                    b = b + np.einsum("zja,z,j->a", trunc(F) - F, wz, wu)
            z, wz = levy.quadrature(s, bundle.R, math.inf)
            if wz.size:
                F = bundle.eval_large(s, z[:, None, :], U[None])
                b = b + np.einsum("zja,z,j->a", trunc(F), wz, wu)
            Y, W = _jump_images(bundle, levy, s, quad)
            if W.size:
                hY = trunc(Y)
                nuhh = np.einsum("n,na,nb->ab", W, hY, hY)
        return b, C, nuhh

    drift = np.zeros((grid.size, m))
    Cs = np.zeros((grid.size, m, m))
    Ct = np.zeros((grid.size, m, m))
    for k in range(grid.size - 1):
        s_nodes, s_w = interval_rule(grid[k], grid[k + 1], order)
        db, dC, dN = np.zeros(m), np.zeros((m, m)), np.zeros((m, m))
        for s, w in zip(s_nodes, s_w):
            b, C, N = rates(float(s))
            db += w * b
            dC += w * C
            dN += w * N
        drift[k + 1] = drift[k] + db
        Cs[k + 1] = Cs[k] + dC
        Ct[k + 1] = Ct[k] + dC + dN
    for arr, what in ((drift, "drift"), (Cs, "second characteristic")):
        _check(arr, what)
    return CharacteristicsTriple(grid, drift, Cs, Ct, bundle, levy, trunc, quad, order)


# ---------------------------------------------------------------------------
# triangular arrays
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TriangularEstimate:
    """Monte Carlo estimate of ``sum_i (E g(dX_i) - g(0))`` with its standard error."""

    estimate: float
    se: float
    per_interval: np.ndarray
    n_paths: int


def _interval_increments(bundle, levy, a, b, P, rng, order):
    m, d = bundle.m, bundle.d
    xi = rng.random((P, d))
    s_nodes, s_w = interval_rule(a, b, order)
    inc = np.zeros((P, m))
    for s, w in zip(s_nodes, s_w):
        inc += w * bundle.eval_f0(float(s), xi)
    if bundle.p:
        cov = np.zeros((P, m, m))
        for l in range(bundle.p):
            for s, w in zip(s_nodes, s_w):
                F = bundle.eval_fb(l, float(s), xi)
                cov += w * np.einsum("pa,pb->pab", F, F)
        L = psd_factor(cov)
        inc += np.einsum("pab,pb->pa", L, rng.standard_normal((P, m)))
    if not levy.is_zero:
        eps = levy.sampling_cutoff
        bound = levy.rate_bound(b)
        counts = rng.poisson(bound * (b - a), P)
        total = int(counts.sum())
        if total:
            owner = np.repeat(np.arange(P), counts)
            times = b - (b - a) * rng.random(total)
            keep = rng.random(total) * bound < np.array([levy.rate(t) for t in times])
            owner, times = owner[keep], times[keep]
            z = levy.sample_marks(rng, times)
            norms = np.linalg.norm(z, axis=-1)
            contrib = np.zeros((owner.size, m))
            small = norms <= bundle.R
            for j in np.flatnonzero(small):
                contrib[j] = bundle.eval_small(float(times[j]), z[j], xi[owner[j]]) * norms[j]
            for j in np.flatnonzero(~small):
                contrib[j] = bundle.eval_large(float(times[j]), z[j], xi[owner[j]])
            np.add.at(inc, owner, contrib)
        if bundle.R > eps:
            for s, w in zip(s_nodes, s_w):
                zq, wz = levy.quadrature(float(s), eps, bundle.R)
                if wz.size:
                    F = bundle.eval_small(float(s), zq[None, :, :], xi[:, None, :])
                    F = F * np.linalg.norm(zq, axis=-1)[None, :, None]
                    inc -= w * np.einsum("pza,z->pa", F, wz)
    return inc


def triangular_sum(
    bundle: TestFunctionBundle,
    g: TestFunction,
    partition: Partition,
    levy: Optional[LevyMeasure] = None,
    n_paths: int = 10_000,
    seed: int = 0,
    crn: bool = False,
    order: int = 8,
) -> TriangularEstimate:
    """Monte Carlo ``sum_i (E g(dX_i) - g(0))`` with fresh ``xi_i`` and noise per interval.

    With ``crn`` the stream of interval ``i`` does not depend on the mesh, so
    sweeps over meshes share random numbers interval by interval.
    """
    levy = bundle.levy if levy is None else levy
    if n_paths < 2:
        raise InputError("triangular_sum needs at least two paths")
    g0 = float(g(np.zeros(bundle.m)))
    pts = partition.points
    means = np.empty(partition.n)
    var_sum = 0.0
    purpose = "triangular" if crn else f"triangular/n{partition.n}"
    for i in range(partition.n):
        rng = derive_stream(SeedSpec(seed, purpose, i))
        inc = _interval_increments(bundle, levy, float(pts[i]), float(pts[i + 1]), n_paths, rng, order)
        vals = g(inc) - g0
        _check(vals, "test function")
        means[i] = vals.mean()
        var_sum += vals.var(ddof=1)
    return TriangularEstimate(math.fsum(means), math.sqrt(var_sum / n_paths), means, n_paths)


@dataclass(frozen=True)
class ConvergenceRow:
    mesh_n: int
    estimate: float
    target: float
    abs_error: float
    mc_se: float


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-mesh errors and a flag for a non-increasing trend within noise."""

    rows: tuple
    trend_ok: bool
    bundle: str = ""

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.abs_error for r in self.rows])

    @property
    def ses(self) -> np.ndarray:
        return np.array([r.mc_se for r in self.rows])

    def to_csv(self) -> str:
        lines = ["mesh_n,estimate,target,abs_error,mc_se"]
        for r in self.rows:
            lines.append(f"{r.mesh_n},{r.estimate:.12g},{r.target:.12g},{r.abs_error:.12g},{r.mc_se:.12g}")
        return "\n".join(lines) + "\n"


def convergence_report(
    bundle: TestFunctionBundle,
    g: TestFunction,
    meshes: Sequence[int] = (4, 16, 64, 256),
    levy: Optional[LevyMeasure] = None,
    n_paths: int = 10_000,
    seed: int = 0,
    crn: bool = False,
    trend_sigmas: float = 3.0,
) -> ConvergenceReport:
    """Errors ``|sum_i (E g(dX_i) - g(0)) - int_0^T Psi|`` over equidistant meshes."""
    meshes = [int(n) for n in meshes]
    if any(n < 1 for n in meshes) or meshes != sorted(meshes):
        raise InputError("meshes must be increasing positive integers")
    levy = bundle.levy if levy is None else levy
    target = integrated_psi(bundle, g, levy)
    rows = []
    for n in meshes:
        est = triangular_sum(bundle, g, Partition.equidistant(bundle.T, n), levy, n_paths, seed, crn)
        rows.append(ConvergenceRow(n, est.estimate, target, abs(est.estimate - target), est.se))
    trend = all(
        b.abs_error <= a.abs_error + trend_sigmas * math.hypot(a.mc_se, b.mc_se) for a, b in zip(rows, rows[1:])
    )
    return ConvergenceReport(tuple(rows), trend, bundle.name)


# ---------------------------------------------------------------------------
# built-in bundles
# ---------------------------------------------------------------------------


def builtin_bundle(name: str):
    """Return ``(bundle, g)`` for a built-in diagnostic case.

    ``drift_only``: ``f_0 = 1`` with ``g = sin``; the pre-limit sum is
    ``n sin(1/n)``.  ``brownian_only``: ``f_1 = 1`` with ``g = h^2``.
    ``jump_only``: ``f_{p+2} = 0.25`` under compound Poisson jumps of rate 2
    with ``g = h``; increments stay in the linear range of ``h`` except with
    probability below 2e-4, so the sum barely depends on the mesh.
    ``zero``: all integrands vanish.
    """
    from .model import CompoundPoisson, DiracSizes

    trunc = TruncationFunction()
    one = lambda s, u: np.ones(np.shape(u)[:-1] + (1,))  # noqa: E731
    if name == "drift_only":
        return TestFunctionBundle(f0=one, bounds={"f0": 1.0}, name=name), sine_test()
    if name == "brownian_only":
        return TestFunctionBundle(fb=(one,), bounds={"fb": 1.0}, name=name), truncation_product(trunc, 0, 0)
    if name == "jump_only":
        levy = CompoundPoisson(2.0, DiracSizes(1.0))
        c = lambda s, z, u: np.full(np.broadcast_shapes(np.shape(z)[:-1], np.shape(u)[:-1]) + (1,), 0.25)  # noqa: E731
        return (
            TestFunctionBundle(R=0.5, f_large=c, levy=levy, bounds={"large": 0.25}, name=name),
            truncation_component(trunc, 0),
        )
    if name == "zero":
        return TestFunctionBundle(name=name), sine_test()
    raise InputError(f"unknown built-in bundle {name!r}")


BUILTIN_BUNDLES = ("drift_only", "brownian_only", "jump_only", "zero")


# ---------------------------------------------------------------------------
# finite-dimensional moment comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentRow:
    t: float
    functional: str
    pre_mean: float
    limit_mean: float
    abs_diff: float
    pooled_se: float


def moment_compare(pre_values, pre_grid, limit_values, limit_grid, times, functionals: dict):
    """Compare ``E phi`` between pre-limit and limit path ensembles.

    ``pre_values`` and ``limit_values`` are arrays ``(P, N+1, K, m)`` on their
    grids; each functional maps the path prefix ``(P, j+1, K, m)`` up to time
    ``t`` to ``(P,)``, so both state moments and path functionals such as
    realized covariation fit.
    """
    rows = []
    for t in times:
        jp = _grid_index(pre_grid, t)
        jl = _grid_index(limit_grid, t)
        for name, phi in functionals.items():
            a = np.asarray(phi(pre_values[:, : jp + 1]), dtype=float)
            b = np.asarray(phi(limit_values[:, : jl + 1]), dtype=float)
            se = math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
            rows.append(MomentRow(float(t), name, float(a.mean()), float(b.mean()), float(abs(a.mean() - b.mean())), se))
    return rows


def _grid_index(grid, t):
    j = int(np.argmin(np.abs(np.asarray(grid) - t)))
    if abs(grid[j] - t) > 1e-9 * max(1.0, abs(t)):
        raise InputError(f"time {t} is not a grid point")
    return j
