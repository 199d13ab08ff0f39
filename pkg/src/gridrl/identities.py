"""Randomized checks of the grid random-measure integration identities.

Each instance draws a random non-uniform partition, refinement, field and
noise panel, then compares the measure-side integral (atom enumeration with
``xi`` looked up from the step process) against the per-interval sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrate import (
    GridMeasurePanel,
    integrate_MB,
    integrate_MB_sum,
    integrate_MD,
    integrate_MD_sum,
    integrate_MJ,
    integrate_MJ_sum,
)
from .model import CompoundPoisson, NormalSizes, Partition
from .noise import build_noise_panel
from .rng import SeedSpec, derive_stream, sample_grid_randomization

__all__ = ["IdentityResult", "run_identity_suite", "relative_gap", "IDENTITY_TOL"]

IDENTITY_TOL = 1e-12


def relative_gap(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


@dataclass(frozen=True)
class IdentityResult:
    measure: str
    instances: int
    max_rel_gap: float
    tol: float = IDENTITY_TOL

    @property
    def passed(self) -> bool:
        return self.max_rel_gap <= self.tol


def _random_partition(rng, T):
    n = int(rng.integers(1, 12))
    inner = np.sort(rng.uniform(0.0, T, n - 1)) if n > 1 else np.zeros(0)
    pts = np.unique(np.concatenate([[0.0], inner, [T]]))
    return Partition(pts)


def _random_field(rng, with_z: bool):
    c = rng.normal(size=6)
    om, ph = rng.uniform(0.5, 6.0), rng.uniform(0.0, 2 * math.pi)
    k = int(rng.integers(1, 4))
    if with_z:
        return lambda s, z, u: (
            c[0] + c[1] * np.sin(om * s + ph) + c[2] * u[..., 0] ** k + c[3] * s * u[..., 0]
            + c[4] * z[..., 0] + c[5] * np.cos(z[..., 0] * u[..., 0])
        )
    return lambda s, u: c[0] + c[1] * np.sin(om * s + ph) + c[2] * u[..., 0] ** k + c[3] * s * u[..., 0]


def _random_panel(rng, seed, i, jumps=False):
    T = float(rng.uniform(0.5, 3.0))
    part = _random_partition(rng, T)
    refine = int(rng.integers(1, 9))
    p = int(rng.integers(1, 3))
    if jumps:
        levy = CompoundPoisson(
            float(rng.uniform(1.0, 8.0)), NormalSizes(float(rng.normal()), float(rng.uniform(0.3, 1.5))),
            truncation_radius=float(rng.uniform(0.2, 1.5)),
        )
    else:
        levy = CompoundPoisson(0.0)
    spec = SeedSpec(seed, "identity", i)
    draw = sample_grid_randomization(part, spec.child("xi"))
    noise = build_noise_panel(part.refine(refine), p, levy, spec)
    return GridMeasurePanel(draw, noise), p


def run_identity_suite(n_instances: int = 20, seed: int = 0) -> list:
    """Largest relative gap per measure over ``n_instances`` random instances."""
    rng = derive_stream(SeedSpec(seed, "identity-instances", 0))
    gaps = {"M_D": 0.0, "M_B": 0.0, "M_J": 0.0}
    for i in range(n_instances):
        panel, _ = _random_panel(rng, seed, 3 * i)
        Y = _random_field(rng, False)
        gaps["M_D"] = max(gaps["M_D"], relative_gap(integrate_MD(panel, Y), integrate_MD_sum(panel, Y)))

        panel, p = _random_panel(rng, seed, 3 * i + 1)
        Y = _random_field(rng, False)
        for l in range(p):
            gaps["M_B"] = max(gaps["M_B"], relative_gap(integrate_MB(panel, l, Y), integrate_MB_sum(panel, l, Y)))

        panel, _ = _random_panel(rng, seed, 3 * i + 2, jumps=True)
        Y = _random_field(rng, True)
        for region in ("small", "large", "all"):
            for comp in (False, True):
                a = integrate_MJ(panel, Y, compensated=comp, region=region)
                b = integrate_MJ_sum(panel, Y, compensated=comp, region=region)
                gaps["M_J"] = max(gaps["M_J"], relative_gap(a, b))
    return [IdentityResult(k, n_instances, v) for k, v in gaps.items()]
