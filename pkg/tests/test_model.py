import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridrl.errors import CoefficientError, ConfigError, PolicySpecError, SpecError
from gridrl.model import (
    CompoundPoisson,
    DiracSizes,
    Dimensions,
    JumpDiffusionModel,
    NormalSizes,
    Partition,
    RandomizedPolicy,
    TruncatedStable,
    U_CLAMP,
    deterministic_policy,
    entropy,
    eval_coeffs,
    gaussian_policy,
    inverse_normal_cdf,
    ks_threshold,
    policy_pushforward_check,
    uniform_policy,
)
from gridrl.scenarios import SCENARIOS, build_scenario

# Oracle: scipy.integrate.quad of -rho log rho over the real line.
ENT_STD1 = 1.4189385332046727
ENT_STD2 = 2.112085713764618

finite = st.floats(-5.0, 5.0, allow_nan=False)


def test_linear_control_diffusion_at_y3():
    sc = build_scenario("linear_control", {"a0": 0.0, "a1": 1.0})
    _, a = eval_coeffs(sc.model, 0.3, np.array([0.7]), np.array([3.0]))
    assert a.reshape(-1)[0] == 3.0


def test_zero_drift_model():
    sc = build_scenario("two_controls")
    b, _ = eval_coeffs(sc.model, 0.5, np.array([12.0]), np.array([-4.0]))
    assert np.all(b == 0.0)


def test_two_controls_diffusion_equals_control():
    sc = build_scenario("two_controls")
    _, a = eval_coeffs(sc.model, 0.1, np.array([0.0]), np.array([-0.5]))
    assert a.reshape(-1)[0] == -0.5


def test_eval_coeffs_rejects_non_finite():
    model = JumpDiffusionModel(Dimensions(), [0.0], b=lambda t, x, y: x / 0.0, a=lambda t, x, y: y[..., None])
    with np.errstate(divide="ignore", invalid="ignore"), pytest.raises(CoefficientError, match="drift"):
        eval_coeffs(model, 0.0, np.array([0.0]), np.array([1.0]))


def test_eval_coeffs_rejects_time_outside_horizon():
    sc = build_scenario("two_controls")
    with pytest.raises(ConfigError):
        eval_coeffs(sc.model, 1.5, np.array([0.0]), np.array([1.0]))


@pytest.mark.parametrize("name", SCENARIOS)
@given(t=st.floats(0.0, 1.0), x=finite, y=finite)
@settings(max_examples=25, deadline=None)
def test_eval_coeffs_is_pure(name, t, x, y):
    model = build_scenario(name).model
    first = eval_coeffs(model, t, np.array([x]), np.array([y]))
    second = eval_coeffs(model, t, np.array([x]), np.array([y]))
    for a, b in zip(first, second):
        assert np.array_equal(a, b)


@given(
    params=st.fixed_dictionaries({k: finite for k in ("b0", "bx", "b1", "a0", "ax", "a1")}),
    t=st.floats(0.0, 1.0),
    x=finite,
    y1=finite,
    y2=finite,
    alpha=st.floats(0.0, 1.0),
)
@settings(max_examples=60, deadline=None)
def test_affine_in_control(params, t, x, y1, y2, alpha):
    model = build_scenario("linear_control", params).model
    X = np.array([x])
    mix = model.a(t, X, np.array([alpha * y1 + (1 - alpha) * y2]))
    comb = alpha * model.a(t, X, np.array([y1])) + (1 - alpha) * model.a(t, X, np.array([y2]))
    scale = 1.0 + np.max(np.abs(comb)) + abs(params["a1"]) * (abs(y1) + abs(y2))
    assert np.max(np.abs(mix - comb)) <= 8 * np.finfo(float).eps * scale


def test_partition_validation():
    with pytest.raises(ConfigError):
        Partition(np.array([0.0, 0.5, 0.5, 1.0]))
    with pytest.raises(ConfigError):
        Partition(np.array([0.1, 1.0]))
    with pytest.raises(ConfigError):
        Partition.equidistant(1.0, 0)


def test_partition_interval_convention():
    part = Partition(np.array([0.0, 0.25, 0.5, 1.0]))
    assert part.interval_index(0.0) == 1
    assert part.interval_index(0.25) == 1
    assert part.interval_index(np.nextafter(0.25, 1.0)) == 2
    assert part.interval_index(1.0) == 3
    assert part.rho(0.3) == 0.25 and part.sigma(0.3) == 0.5


@given(n=st.integers(1, 20), k=st.integers(1, 8))
def test_refine_contains_partition(n, k):
    part = Partition.equidistant(2.0, n)
    grid = part.refine(k)
    assert grid.size == n * k + 1
    assert part.contains(grid)


def test_inverse_normal_cdf_clamped():
    z = inverse_normal_cdf(np.array([0.0, 0.5, 1.0]))
    assert np.all(np.isfinite(z))
    assert z[1] == 0.0
    assert z[0] == inverse_normal_cdf(U_CLAMP)


def test_entropy_gaussian_values():
    assert entropy(gaussian_policy(0.0, 1.0), 0.0, [0.0]) == pytest.approx(ENT_STD1, abs=1e-12)
    assert entropy(gaussian_policy(0.0, 2.0), 0.0, [0.0]) == pytest.approx(ENT_STD2, abs=1e-12)
    assert entropy(uniform_policy(), 0.0, [0.0]) == 0.0


def _numeric_only(pol):
    return RandomizedPolicy(pol.h, pol.d, pol.relaxed_density, None, pol.support, pol.name)


def test_entropy_numeric_quadrature_matches_closed_form():
    for std, ref in ((1.0, ENT_STD1), (2.0, ENT_STD2)):
        assert entropy(_numeric_only(gaussian_policy(0.3, std)), 0.0, [0.0]) == pytest.approx(ref, abs=1e-8)


@given(shift=st.floats(-50.0, 50.0), std=st.floats(0.2, 5.0))
@settings(max_examples=20, deadline=None)
def test_entropy_mean_shift_invariant(shift, std):
    base = entropy(_numeric_only(gaussian_policy(0.0, std)), 0.0, [0.0])
    moved = entropy(_numeric_only(gaussian_policy(shift, std)), 0.0, [0.0])
    assert moved == pytest.approx(base, abs=1e-8)


def test_pushforward_gaussian_below_ks_threshold():
    stat = policy_pushforward_check(gaussian_policy(0.4, 1.3), 0.0, [0.0], n_samples=100_000)
    assert stat < ks_threshold(100_000, 0.99)


def test_pushforward_uniform_identity():
    stat = policy_pushforward_check(uniform_policy(), 0.0, [0.0], n_samples=100_000)
    assert stat < ks_threshold(100_000, 0.99)


def test_pushforward_detects_mismatch():
    good = gaussian_policy(0.0, 1.0)
    bad = RandomizedPolicy(gaussian_policy(0.0, 2.0).h, 1, good.relaxed_density, None, good.support, "mismatch")
    stat = policy_pushforward_check(bad, 0.0, [0.0], n_samples=100_000)
    assert stat > ks_threshold(100_000, 0.99)


def test_pushforward_rejects_unnormalized_density():
    pol = gaussian_policy(0.0, 1.0)
    bad = RandomizedPolicy(pol.h, 1, lambda t, x, y: 2 * pol.relaxed_density(t, x, y), None, pol.support)
    with pytest.raises(PolicySpecError):
        policy_pushforward_check(bad, 0.0, [0.0], n_samples=1000)


def test_pushforward_needs_density():
    with pytest.raises(PolicySpecError):
        policy_pushforward_check(deterministic_policy(lambda t, x: x), 0.0, [0.0])


def test_gaussian_policy_rejects_nonpositive_std():
    with pytest.raises(SpecError):
        gaussian_policy(0.0, 0.0)


def test_compound_poisson_masses():
    levy = CompoundPoisson(2.0, NormalSizes(0.0, 0.5), truncation_radius=1.0)
    assert levy.mass(0.0, 0.0) == pytest.approx(2.0, rel=1e-10)
    # P(|Z| > 1) for Z ~ N(0, 0.25) is 2 * (1 - Phi(2))
    assert levy.mass(0.0, 1.0) == pytest.approx(2 * 2 * 0.022750131948179195, rel=1e-8)
    assert levy.second_moment(0.0, 0.0, math.inf) == pytest.approx(2 * 0.25, rel=1e-10)


def test_dirac_sizes_quadrature():
    levy = CompoundPoisson(3.0, DiracSizes(1.0))
    z, w = levy.quadrature(0.0, 0.5, math.inf)
    assert z.reshape(-1).tolist() == [1.0] and w.tolist() == [3.0]
    z, w = levy.quadrature(0.0, 0.0, 0.5)
    assert w.size == 0


def test_truncated_stable_second_moment_matches_quadrature():
    levy = TruncatedStable(0.5, 1.2, 0.05, 2.0)
    z, w = levy.quadrature(0.0, 0.0, 1.0)
    numeric = float(np.sum(w * np.linalg.norm(z, axis=-1) ** 2))
    assert numeric == pytest.approx(levy.second_moment(0.0, 0.0, 1.0), rel=1e-8)
    assert levy.unsampled_second_moment() == pytest.approx(levy.second_moment(0.0, 0.0, 0.05), rel=1e-12)


def test_unbounded_rate_is_spec_error():
    with pytest.raises(SpecError):
        CompoundPoisson(lambda t: 1.0 / t, DiracSizes(1.0), bound=math.inf)


def test_non_finite_levy_mass_is_spec_error():
    levy = CompoundPoisson(lambda t: math.inf if t < 0.5 else 1.0, DiracSizes(1.0), bound=1.0)
    with pytest.raises(SpecError):
        levy.check_integrability(1.0)


def test_scenario_rejects_unknown_parameter():
    with pytest.raises(ConfigError):
        build_scenario("two_controls", {"nope": 1})
    with pytest.raises(ConfigError):
        build_scenario("missing")
