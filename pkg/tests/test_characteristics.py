import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridrl.characteristics import (
    BUILTIN_BUNDLES,
    TestFunction,
    TestFunctionBundle,
    TruncationFunction,
    builtin_bundle,
    convergence_report,
    integrated_psi,
    limit_characteristics,
    moment_compare,
    psi,
    sine_test,
    triangular_sum,
    truncation_component,
    truncation_product,
)
from gridrl.errors import InputError, SpecError
from gridrl.model import CompoundPoisson, DiracSizes, NormalSizes, Partition, deterministic_policy
from gridrl.scenarios import build_scenario
from gridrl.quadrature import gauss_legendre_cube
from gridrl.sde import realized_covariation, simulate

TRUNC = TruncationFunction()
# Oracle: 2 * sin(0.3), the rate-2 Poisson functional evaluated on its single atom.
PSI_JUMP_SIN = 0.5910404133226791


def const(*vals):
    v = np.asarray(vals, dtype=float)
    return lambda s, u: np.broadcast_to(v, np.shape(u)[:-1] + v.shape)


def const_z(*vals):
    v = np.asarray(vals, dtype=float)
    return lambda s, z, u: np.broadcast_to(v, np.broadcast_shapes(np.shape(z)[:-1], np.shape(u)[:-1]) + v.shape)


vecs = st.lists(st.floats(-3.0, 3.0), min_size=2, max_size=2).map(np.array)


@given(y=vecs)
def test_truncation_identity_near_zero_and_bounded(y):
    h = TRUNC(y)
    r = np.linalg.norm(y)
    if r <= TRUNC.r_inner:
        assert np.array_equal(h, y)
    assert np.linalg.norm(h) <= TRUNC.r_outer


@given(y=vecs)
@settings(max_examples=60)
def test_truncation_derivatives_match_finite_differences(y):
    eps = 1e-6
    J = TRUNC.jacobian(y)
    H = TRUNC.hessian(y)
    for j in range(2):
        e = np.zeros(2)
        e[j] = eps
        fd_J = (TRUNC(y + e) - TRUNC(y - e)) / (2 * eps)
        fd_H = (TRUNC.jacobian(y + e) - TRUNC.jacobian(y - e)) / (2 * eps)
        assert np.allclose(J[:, j], fd_J, atol=1e-6)
        assert np.allclose(H[:, :, j], fd_H, atol=1e-5)


def test_truncation_second_derivative_continuous_on_shell():
    for r0 in (TRUNC.r_inner, TRUNC.r_outer):
        lo = TRUNC.hessian(np.array([r0 - 1e-9, 0.0]))
        hi = TRUNC.hessian(np.array([r0 + 1e-9, 0.0]))
        assert np.allclose(lo, hi, atol=1e-6)


def test_truncation_validation():
    with pytest.raises(SpecError):
        TruncationFunction(2.0, 1.0)


def test_psi_drift_only_sine():
    b = TestFunctionBundle(f0=const(1.0))
    assert psi(b, sine_test(), s=0.3) == pytest.approx(1.0, abs=1e-14)


def test_psi_brownian_only_second_derivative_two():
    b = TestFunctionBundle(fb=(const(1.0),))
    assert psi(b, truncation_product(TRUNC, 0, 0), s=0.0) == pytest.approx(1.0, abs=1e-14)


def test_psi_large_jump_constant():
    levy = CompoundPoisson(2.0, NormalSizes(0.0, 1.0))
    b = TestFunctionBundle(R=0.0, f_large=const_z(0.3), levy=levy)
    assert psi(b, sine_test(), s=0.5) == pytest.approx(PSI_JUMP_SIN, rel=1e-10)


def test_psi_dimension_mismatch():
    b = TestFunctionBundle(m=2, f0=const(1.0, 0.0))
    with pytest.raises(InputError):
        psi(b, sine_test())


# the rich bundle is polynomial of degree <= 2 in u, so eight nodes are exact
QUAD8 = gauss_legendre_cube(1, 8)


def _rich_bundle():
    levy = CompoundPoisson(1.5, NormalSizes(0.2, 0.6), truncation_radius=0.5)
    return TestFunctionBundle(
        m=2,
        R=0.5,
        f0=lambda s, u: np.stack(np.broadcast_arrays(0.3 * np.cos(s) + 0 * u[..., 0], 0.2 * u[..., 0]), -1),
        fb=(
            lambda s, u: np.stack(np.broadcast_arrays(0.5 + 0.2 * u[..., 0], 0.1 * s + 0 * u[..., 0]), -1),
            lambda s, u: np.stack(np.broadcast_arrays(0.1 + 0 * u[..., 0], 0.4 * u[..., 0] ** 2), -1),
        ),
        f_small=lambda s, z, u: np.stack(np.broadcast_arrays(0.6 + 0.2 * u[..., 0] + 0 * z[..., 0], -0.3 * s + 0 * z[..., 0] * u[..., 0]), -1),
        f_large=lambda s, z, u: np.stack(np.broadcast_arrays(0.8 * np.sin(z[..., 0]) + 0 * u[..., 0], 0.5 * u[..., 0] + 0 * z[..., 0]), -1),
        levy=levy,
        bounds={"f0": 0.4, "fb": 0.71, "small": 0.86, "large": 0.95},
        name="rich",
    )


@given(alpha=st.floats(-3, 3), beta=st.floats(-3, 3), s=st.floats(0, 1))
@settings(max_examples=20, deadline=None)
def test_psi_is_linear_in_g(alpha, beta, s):
    b = _rich_bundle()
    g1 = truncation_product(TRUNC, 0, 1, 2)
    g2 = TestFunction(lambda y: np.sin(y[..., 0]) * np.cos(y[..., 1]), [1.0, 0.0], [[0.0, 0.0], [0.0, 0.0]], "sc")
    lhs = psi(b, g1.combine(g2, alpha, beta), s=s, quad=QUAD8)
    rhs = alpha * psi(b, g1, s=s, quad=QUAD8) + beta * psi(b, g2, s=s, quad=QUAD8)
    assert lhs == pytest.approx(rhs, abs=1e-12 * (1 + abs(alpha) + abs(beta)))


def test_bundle_bounds_checked():
    assert _rich_bundle().check_bounds()
    bad = TestFunctionBundle(f0=const(2.0), bounds={"f0": 1.0})
    with pytest.raises(SpecError):
        bad.check_bounds()


def test_brownian_characteristic_linear_in_time():
    b = TestFunctionBundle(fb=(const(0.7),))
    tri = limit_characteristics(b, grid=np.linspace(0, 1, 5))
    assert np.allclose(tri.C[:, 0, 0], 0.49 * tri.times, rtol=1e-13)


def test_drift_characteristic_without_truncation_effect():
    b = TestFunctionBundle(f0=lambda s, u: 0.3 * u)
    tri = limit_characteristics(b, grid=np.linspace(0, 1, 5))
    assert np.allclose(tri.drift[:, 0], 0.15 * tri.times, rtol=1e-9)


@pytest.mark.parametrize("kappa", [0.1, 0.3, 0.5, 1.0])
def test_tail_mass_below_bound(kappa):
    tri = limit_characteristics(_rich_bundle(), grid=np.linspace(0, 1, 5), quad=QUAD8)
    assert tri.tail_mass(kappa) <= tri.tail_bound(kappa)


def test_modified_second_characteristic_increasing():
    assert limit_characteristics(_rich_bundle(), quad=QUAD8).check_monotone()


@pytest.mark.parametrize("k,k2", [(0, 0), (0, 1), (1, 1)])
def test_characteristics_identity(k, k2):
    b = _rich_bundle()
    g = truncation_product(TRUNC, k, k2, 2)
    tri = limit_characteristics(b, grid=np.linspace(0, 1, 5), quad=QUAD8)
    rhs = tri.C[-1, k, k2] + tri.jump_integral(g)
    assert integrated_psi(b, g, quad=QUAD8, panels=3) == pytest.approx(rhs, rel=1e-9)


def test_triangular_drift_only_exact_sum():
    b, g = builtin_bundle("drift_only")
    for n in (4, 16):
        est = triangular_sum(b, g, Partition.equidistant(1.0, n), n_paths=10)
        assert est.estimate == pytest.approx(n * math.sin(1 / n), rel=1e-13)
        assert est.se < 1e-15


def test_triangular_vanishing_g():
    b = TestFunctionBundle(f0=const(0.1), fb=(const(0.05),))
    flat = TestFunction(lambda y: np.zeros(y.shape[:-1]), [0.0], [[0.0]], "zero")
    assert triangular_sum(b, flat, Partition.equidistant(1.0, 8), n_paths=50).estimate == 0.0


def test_triangular_brownian_only_close_to_horizon():
    b, g = builtin_bundle("brownian_only")
    est = triangular_sum(b, g, Partition.equidistant(1.0, 64), n_paths=10_000, seed=3)
    assert abs(est.estimate - 1.0) < 4 * est.se + 1e-3


def test_triangular_crn_shares_intervals():
    b, g = builtin_bundle("brownian_only")
    a = triangular_sum(b, g, Partition.equidistant(1.0, 4), n_paths=100, seed=1, crn=True)
    c = triangular_sum(b, g, Partition.equidistant(1.0, 8), n_paths=100, seed=1, crn=True)
    d = triangular_sum(b, g, Partition.equidistant(1.0, 8), n_paths=100, seed=1, crn=False)
    assert a.per_interval[0] != c.per_interval[0]  # interval lengths differ
    assert not np.array_equal(c.per_interval, d.per_interval)


def test_convergence_report_zero_bundle():
    b, g = builtin_bundle("zero")
    rep = convergence_report(b, g, (4, 16), n_paths=100)
    assert np.all(rep.errors == 0.0) and rep.trend_ok


def test_convergence_report_drift_only():
    b, g = builtin_bundle("drift_only")
    rep = convergence_report(b, g, (4, 16, 64, 256), n_paths=10)
    assert np.all(np.diff(rep.errors) < 0) and rep.trend_ok
    assert rep.errors[-1] < 3 * (rep.ses[-1] + 1 / 256)
    assert rep.to_csv().splitlines()[0] == "mesh_n,estimate,target,abs_error,mc_se"


def test_convergence_report_jump_only_flat():
    b, g = builtin_bundle("jump_only")
    rep = convergence_report(b, g, (4, 16, 64), n_paths=5000, seed=2)
    assert np.all(rep.errors <= 3 * rep.ses)


def test_convergence_report_rejects_unsorted_meshes():
    b, g = builtin_bundle("zero")
    with pytest.raises(InputError):
        convergence_report(b, g, (16, 4))


def test_builtin_bundle_names():
    for name in BUILTIN_BUNDLES:
        builtin_bundle(name)
    with pytest.raises(InputError):
        builtin_bundle("nope")


def _x_sq(v):
    return v[:, -1, 0, 0] ** 2


def test_moment_compare_example_variance():
    sc = build_scenario("two_controls")
    pol = [sc.policies[0]]
    pre = simulate("grid", sc.model, pol, sc.solver_config(16, 4), 10_000, 1)
    lim = simulate("limit", sc.model, pol, sc.solver_config(16, 4), 10_000, 2)
    (row,) = moment_compare(pre.values, pre.grid, lim.values, lim.grid, [1.0], {"x^2": _x_sq})
    assert row.abs_diff < 4 * row.pooled_se
    for mean in (row.pre_mean, row.limit_mean):
        assert abs(mean - 2.0) < 4 * row.pooled_se * math.sqrt(2)


def test_moment_compare_deterministic_policy():
    sc = build_scenario("linear_control", {"bx": -0.3, "ax": 0.2, "a0": 0.4})
    pol = [deterministic_policy(lambda t, x: 0.5 * np.ones(np.shape(x)[:-1] + (1,)))]
    pre = simulate("grid", sc.model, pol, sc.solver_config(8, 4), 10_000, 3)
    lim = simulate("limit", sc.model, pol, sc.solver_config(8, 4), 10_000, 4)
    rows = moment_compare(pre.values, pre.grid, lim.values, lim.grid, [0.5, 1.0], {"x": lambda v: v[:, -1, 0, 0], "x^2": _x_sq})
    assert all(r.abs_diff < 4 * r.pooled_se for r in rows)


def test_moment_compare_coarse_mesh_covariation():
    sc = build_scenario("two_controls")
    qc = lambda v: (realized_covariation(v[:, :, 0], v[:, :, 1]) - 1.5) ** 2  # noqa: E731
    lim = simulate("limit", sc.model, list(sc.policies), sc.solver_config(64, 2), 2000, 5)
    diffs = {}
    for n in (2, 64):
        pre = simulate("grid", sc.model, list(sc.policies), sc.solver_config(n, 128 // n), 2000, 6)
        (row,) = moment_compare(pre.values, pre.grid, lim.values, lim.grid, [1.0], {"qc": qc})
        diffs[n] = row.abs_diff
    assert diffs[2] > diffs[64]


def test_moment_compare_rejects_off_grid_time():
    sc = build_scenario("two_controls")
    b = simulate("limit", sc.model, [sc.policies[0]], sc.solver_config(4, 1), 4, 1)
    with pytest.raises(InputError):
        moment_compare(b.values, b.grid, b.values, b.grid, [0.3], {"x": lambda v: v[:, -1, 0, 0]})
