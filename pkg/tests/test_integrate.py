import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridrl.errors import IntegrandError, SpecError
from gridrl.identities import run_identity_suite
from gridrl.integrate import (
    GridMeasurePanel,
    build_grid_panel,
    compensator_MJ,
    integrate_MB,
    integrate_MB_sum,
    integrate_MD,
    integrate_MD_sum,
    integrate_MJ,
    integrate_MJ_sum,
)
from gridrl.model import CompoundPoisson, NormalSizes, Partition, TruncatedStable
from gridrl.noise import NoisePanel, build_noise_panel, sample_brownian, sample_poisson_measure
from gridrl.rng import SeedSpec, derive_stream, sample_grid_randomization


def ones(s, u):
    return np.ones(np.shape(s))


def ones_z(s, z, u):
    return np.ones(np.shape(s))


def panel(n=8, refine=4, levy=None, seed=0, T=1.0, p=1):
    return build_grid_panel(Partition.equidistant(T, n), refine, p, levy or CompoundPoisson(0.0), SeedSpec(seed, "panel"))


def test_md_total_mass():
    assert integrate_MD(panel(T=2.5), ones) == pytest.approx(2.5, rel=1e-15)


def test_md_step_function():
    pnl = panel(n=5, refine=3, T=2.0)
    val = integrate_MD(pnl, lambda s, u: u[..., 0])
    assert val == pytest.approx(0.4 * pnl.draw.xi[:, 0].sum(), rel=1e-14)


def test_md_u_independent_integrand():
    # left-endpoint rule over the simulation grid
    pnl = panel(n=4, refine=8, T=1.0)
    grid = pnl.grid
    ref = float(np.sum(grid[:-1] * np.diff(grid)))
    assert integrate_MD(pnl, lambda s, u: s) == pytest.approx(ref, rel=1e-14)
    assert ref == pytest.approx(0.5, abs=1 / 32)


def test_mb_constant_telescopes():
    pnl = panel(p=2)
    for l in range(2):
        assert integrate_MB(pnl, l, ones) == pytest.approx(pnl.noise.dB[:, l].sum(), rel=1e-14)


def test_mb_xi_free_matches_plain_integral():
    pnl = panel()
    f = lambda s, u: np.sin(3 * s)  # noqa: E731
    plain = math.fsum(np.sin(3 * pnl.grid[:-1]) * pnl.noise.dB[:, 0])
    assert integrate_MB(pnl, 0, f) == plain


def _fast_panels(part, refine, levy, n, seed):
    """Panels drawn from one shared generator (the per-path stream setup dominates otherwise)."""
    rng = derive_stream(SeedSpec(seed, "fast-panels"))
    grid = part.refine(refine)
    for _ in range(n):
        draw = sample_grid_randomization(part, rng)
        yield GridMeasurePanel(draw, NoisePanel(grid, sample_brownian(grid, 1, rng), sample_poisson_measure(levy, part.T, rng), levy))


def test_mb_isometry_indicator():
    part = Partition.equidistant(1.0, 4)
    ind = lambda s, u: (u[..., 0] <= 0.5).astype(float)  # noqa: E731
    vals = np.array([integrate_MB(p, 0, ind) for p in _fast_panels(part, 1, CompoundPoisson(0.0), 100_000, 1)])
    assert np.mean(vals**2) == pytest.approx(0.5, abs=0.01)


LEVY = CompoundPoisson(2.0, NormalSizes(0.0, 1.0), truncation_radius=0.5)


def test_mj_counts():
    part = Partition.equidistant(1.0, 4)
    counts = np.array([integrate_MJ(p, ones_z) for p in _fast_panels(part, 2, LEVY, 100_000, 2)])
    assert counts.mean() == pytest.approx(2.0, abs=0.014)


def test_mj_compensated_martingale():
    part = Partition.equidistant(1.0, 2)
    Y = lambda s, z, u: z[..., 0] ** 2 * (1 + u[..., 0])  # noqa: E731
    comp = np.array([integrate_MJ(p, Y, compensated=True) for p in _fast_panels(part, 1, LEVY, 4000, 3)])
    assert abs(comp.mean()) < 4 * comp.std(ddof=1) / math.sqrt(comp.size)


def test_mj_no_jumps_is_zero():
    pnl = panel(levy=CompoundPoisson(0.0))
    assert integrate_MJ(pnl, ones_z) == 0.0


def test_mj_regions_add_up():
    pnl = panel(levy=CompoundPoisson(30.0, NormalSizes(0.0, 1.0), truncation_radius=0.5), seed=3)
    Y = lambda s, z, u: s + z[..., 0] * u[..., 0]  # noqa: E731
    for comp in (False, True):
        a = integrate_MJ(pnl, Y, comp, "small") + integrate_MJ(pnl, Y, comp, "large")
        assert a == pytest.approx(integrate_MJ(pnl, Y, comp, "all"), rel=1e-12, abs=1e-12)


def test_mj_compensator_of_one_is_rate_times_time():
    pnl = panel(levy=LEVY)
    assert compensator_MJ(pnl, ones_z) == pytest.approx(2.0, rel=1e-10)


def test_mj_region_below_cutoff_is_spec_error():
    levy = TruncatedStable(0.5, 1.2, 0.05, 2.0, truncation_radius=1.0)
    pnl = panel(levy=levy)
    with pytest.raises(SpecError):
        integrate_MJ(pnl, ones_z, region="small")
    integrate_MJ(pnl, ones_z, region="large")


def test_non_finite_integrand_reports_location():
    pnl = panel(n=4, refine=2)
    with np.errstate(divide="ignore"):
        with pytest.raises(IntegrandError, match="interval 3"):
            integrate_MD(pnl, lambda s, u: 1.0 / (s < 0.5) + 0.0 * s)


@given(
    n=st.integers(1, 10),
    refine=st.integers(1, 6),
    seed=st.integers(0, 2**32),
    c=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
)
@settings(max_examples=30, deadline=None)
def test_measure_and_sum_sides_agree(n, refine, seed, c):
    part = Partition.equidistant(1.3, n)
    pnl = build_grid_panel(part, refine, 1, LEVY, SeedSpec(seed, "hyp"))
    Y = lambda s, u: c[0] + c[1] * np.cos(s) + c[2] * u[..., 0] ** 2  # noqa: E731
    Yz = lambda s, z, u: Y(s, u) * z[..., 0]  # noqa: E731
    assert integrate_MD(pnl, Y) == integrate_MD_sum(pnl, Y)
    assert integrate_MB(pnl, 0, Y) == integrate_MB_sum(pnl, 0, Y)
    for comp in (False, True):
        a, b = integrate_MJ(pnl, Yz, comp), integrate_MJ_sum(pnl, Yz, comp)
        assert abs(a - b) <= 1e-12 * max(abs(a), abs(b), 1e-300)


@given(seed=st.integers(0, 10_000), cut=st.floats(0.05, 0.95))
@settings(max_examples=20, deadline=None)
def test_additivity_over_u_regions(seed, cut):
    pnl = panel(seed=seed, levy=LEVY)
    f = lambda s, u: np.exp(s) * (1 + u[..., 0])  # noqa: E731
    A = lambda s, u: f(s, u) * (u[..., 0] <= cut)  # noqa: E731
    B = lambda s, u: f(s, u) * (u[..., 0] > cut)  # noqa: E731
    assert integrate_MD(pnl, A) + integrate_MD(pnl, B) == pytest.approx(integrate_MD(pnl, f), rel=1e-13)
    assert integrate_MB(pnl, 0, A) + integrate_MB(pnl, 0, B) == pytest.approx(integrate_MB(pnl, 0, f), rel=1e-12, abs=1e-14)


def test_identity_suite_exact():
    for res in run_identity_suite(5, seed=1):
        assert res.passed, res


def test_panel_from_parts_matches_builder():
    part = Partition.equidistant(1.0, 3)
    spec = SeedSpec(4, "panel")
    draw = sample_grid_randomization(part, spec.child("xi"))
    noise = build_noise_panel(part.refine(2), 1, LEVY, spec)
    a = GridMeasurePanel(draw, noise)
    b = build_grid_panel(part, 2, 1, LEVY, spec)
    assert integrate_MB(a, 0, ones) == integrate_MB(b, 0, ones)
