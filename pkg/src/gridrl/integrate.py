"""Grid random measures driven by the randomization process.

A :class:`GridMeasurePanel` couples a :class:`RandomizationDraw` with the
noise of one path.  Every integral has two evaluations:

* the *measure side* enumerates the atoms of the random measure (one
  ``(s_k, xi^Pi_{s_{k+1}})`` slice per simulation step, one
  ``(t, z, xi^Pi_t)`` atom per jump), looking ``xi`` up from the step
  process;
* the *sum side* loops over partition intervals and integrates the field
  with the interval's ``xi_i`` against plain Lebesgue measure, Brownian
  increments or the Poisson measure.

Both use the left-endpoint rule on the simulation grid and ``math.fsum``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InputError, IntegrandError, SpecError
from .noise import JumpEvents, NoisePanel, attach_grid_marks, build_noise_panel
from .rng import RandomizationDraw, SeedSpec, sample_grid_randomization
from .model import LevyMeasure, Partition

__all__ = [
    "GridMeasurePanel",
    "build_grid_panel",
    "integrate_MD",
    "integrate_MB",
    "integrate_MJ",
    "compensator_MJ",
    "integrate_MD_sum",
    "integrate_MB_sum",
    "integrate_MJ_sum",
]


@dataclass(frozen=True, eq=False)
class GridMeasurePanel:
    """Randomization draw and path noise on a simulation grid refining the partition."""

    draw: RandomizationDraw
    noise: NoisePanel

    def __post_init__(self):
        if not self.draw.partition.contains(self.noise.grid):
            raise InputError("simulation grid does not contain the partition points")

    @property
    def grid(self) -> np.ndarray:
        return self.noise.grid

    @property
    def partition(self) -> Partition:
        return self.draw.partition

    @property
    def step_interval(self) -> np.ndarray:
        """1-based partition interval of each simulation step ``(s_k, s_{k+1}]``."""
        return np.asarray(self.partition.interval_index(self.grid[1:]))

    @property
    def events(self) -> JumpEvents:
        """Jump atoms with their ``xi`` marks."""
        return attach_grid_marks(self.noise.jumps, self.draw)


def build_grid_panel(partition: Partition, refine: int, p: int, levy: LevyMeasure, seed: SeedSpec, d: int = 1):
    """Draw ``xi`` and the path noise from sub-streams of ``seed``."""
    draw = sample_grid_randomization(partition, seed.child("xi"), d)
    noise = build_noise_panel(partition.refine(refine), p, levy, seed)
    return GridMeasurePanel(draw, noise)


def _checked(vals, s, panel: GridMeasurePanel, what: str, step_start: bool = True) -> np.ndarray:
    """Reject non-finite integrand values, naming the partition interval.

    ``s`` are step-start times (interval opened at ``s``) unless
    ``step_start`` is False, in which case they are jump times in
    ``(t_{i-1}, t_i]``.
    """
    vals = np.asarray(vals, dtype=float).reshape(-1)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        s_arr = np.broadcast_to(np.asarray(s, dtype=float).reshape(-1), vals.shape)
        s_bad = float(s_arr[int(np.argmax(bad))])
        part = panel.partition
        if step_start:
            i = min(int(np.searchsorted(part.points, s_bad, side="right")), part.n)
        else:
            i = part.interval_index(s_bad)
        raise IntegrandError(f"{what} integrand not finite on interval {i} at s={s_bad}")
    return vals


# ---------------------------------------------------------------------------
# measure side
# ---------------------------------------------------------------------------


def integrate_MD(panel: GridMeasurePanel, Y: Callable) -> float:
    """``int int Y_s(u) M_D^Pi(ds, du)`` by atom enumeration."""
    s = panel.grid[:-1]
    u = panel.draw.lookup(panel.grid[1:])
    vals = _checked(Y(s, u), s, panel, "M_D")
    return math.fsum(vals * np.diff(panel.grid))


def integrate_MB(panel: GridMeasurePanel, l: int, Y: Callable) -> float:
    """``int int Y_s(u) M_B^Pi_l(ds, du)``; ``l`` is the 0-based Brownian component."""
    if not (0 <= l < panel.noise.dB.shape[1]):
        raise InputError(f"Brownian component {l} out of range")
    s = panel.grid[:-1]
    u = panel.draw.lookup(panel.grid[1:])
    vals = _checked(Y(s, u), s, panel, "M_B")
    return math.fsum(vals * panel.noise.dB[:, l])


def _region_bounds(levy: LevyMeasure, region: str, radius: Optional[float]):
    R = levy.truncation_radius if radius is None else float(radius)
    eps = levy.sampling_cutoff
    if region == "small":
        if eps > 0.0:
            raise SpecError(f"small-jump region {{|z| <= {R}}} extends below the sampling cutoff {eps}")
        return 0.0, R
    if region == "large":
        if R < eps:
            raise SpecError(f"region {{|z| > {R}}} extends below the sampling cutoff {eps}")
        return R, math.inf
    if region == "all":
        if eps > 0.0:
            raise SpecError("full jump region extends below the sampling cutoff")
        return 0.0, math.inf
    raise InputError(f"unknown jump region {region!r}")


def _in_region(norms, lo, hi):
    return (norms > lo) & (norms <= hi)


def compensator_MJ(panel: GridMeasurePanel, Y: Callable, region: str = "all", radius: Optional[float] = None) -> float:
    """``int int int Y_s(z, u) mu_J^Pi(ds, dz, du)`` with Levy quadrature at step starts."""
    lo, hi = _region_bounds(panel.noise.levy, region, radius)
    return math.fsum(_compensator_terms(panel, Y, lo, hi))


def _compensator_terms(panel, Y, lo, hi) -> np.ndarray:
    grid = panel.grid
    dt = np.diff(grid)
    u_steps = panel.draw.lookup(grid[1:])
    terms = []
    for k in range(dt.size):
        z, w = panel.noise.region_quadrature(k, lo, hi)
        if w.size == 0:
            continue
        s = np.full(w.size, grid[k])
        u = np.broadcast_to(u_steps[k], (w.size, u_steps.shape[1]))
        vals = _checked(Y(s, z, u), s, panel, "compensator")
        terms.append(vals * w * dt[k])
    return np.concatenate(terms) if terms else np.zeros(0)


def integrate_MJ(
    panel: GridMeasurePanel,
    Y: Callable,
    compensated: bool = False,
    region: str = "all",
    radius: Optional[float] = None,
) -> float:
    """``int int int Y_s(z, u) (M_J^Pi - [mu_J^Pi]) (ds, dz, du)`` over a jump region.

    ``region`` is ``"small"`` (``0 < |z| <= R``), ``"large"`` (``|z| > R``)
    or ``"all"``; ``R`` defaults to the truncation radius of the measure.
    """
    lo, hi = _region_bounds(panel.noise.levy, region, radius)
    ev = panel.events
    ev = ev.select(_in_region(ev.norms, lo, hi))
    terms = [np.zeros(0)]
    if len(ev):
        terms.append(_checked(Y(ev.t, ev.z, ev.u), ev.t, panel, "M_J", step_start=False))
    if compensated:
        terms.append(-_compensator_terms(panel, Y, lo, hi))
    return math.fsum(np.concatenate(terms))


# ---------------------------------------------------------------------------
# sum side
# ---------------------------------------------------------------------------


def _interval_slices(panel: GridMeasurePanel):
    grid = panel.grid
    pos = np.searchsorted(grid, panel.partition.points)
    for i in range(1, panel.partition.n + 1):
        yield i, slice(pos[i - 1], pos[i])


def integrate_MD_sum(panel: GridMeasurePanel, Y: Callable) -> float:
    """``sum_i int_{t_{i-1}}^{t_i} Y_s(xi_i) ds``."""
    terms = []
    dt = np.diff(panel.grid)
    for i, sl in _interval_slices(panel):
        s = panel.grid[sl]
        u = np.broadcast_to(panel.draw.xi[i - 1], (s.size, panel.draw.d))
        terms.append(_checked(Y(s, u), s, panel, "M_D") * dt[sl])
    return math.fsum(np.concatenate(terms))


def integrate_MB_sum(panel: GridMeasurePanel, l: int, Y: Callable) -> float:
    """``sum_i int_{t_{i-1}}^{t_i} Y_s(xi_i) dB^l_s``."""
    terms = []
    for i, sl in _interval_slices(panel):
        s = panel.grid[sl]
        u = np.broadcast_to(panel.draw.xi[i - 1], (s.size, panel.draw.d))
        terms.append(_checked(Y(s, u), s, panel, "M_B") * panel.noise.dB[sl, l])
    return math.fsum(np.concatenate(terms))


def integrate_MJ_sum(
    panel: GridMeasurePanel,
    Y: Callable,
    compensated: bool = False,
    region: str = "all",
    radius: Optional[float] = None,
) -> float:
    """``sum_i int int Y_s(z, xi_i) (N - [nu ds])(ds, dz)`` over a jump region."""
    levy = panel.noise.levy
    lo, hi = _region_bounds(levy, region, radius)
    jumps = panel.noise.jumps
    jumps = jumps.select(_in_region(jumps.norms, lo, hi))
    pts = panel.partition.points
    dt = np.diff(panel.grid)
    terms = []
    for i, sl in _interval_slices(panel):
        xi = panel.draw.xi[i - 1]
        inside = (jumps.t > pts[i - 1]) & (jumps.t <= pts[i])
        if np.any(inside):
            t = jumps.t[inside]
            u = np.broadcast_to(xi, (t.size, xi.size))
            terms.append(_checked(Y(t, jumps.z[inside], u), t, panel, "M_J", step_start=False))
        if compensated:
            for k in range(sl.start, sl.stop):
                z, w = levy.quadrature(float(panel.grid[k]), lo, hi)
                if w.size == 0:
                    continue
                s = np.full(w.size, panel.grid[k])
                u = np.broadcast_to(xi, (w.size, xi.size))
                terms.append(-_checked(Y(s, z, u), s, panel, "compensator") * w * dt[k])
    return math.fsum(np.concatenate(terms)) if terms else 0.0
