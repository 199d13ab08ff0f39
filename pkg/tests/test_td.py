import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridrl.errors import DivergenceError, InputError, SpecError
from gridrl.model import Partition, gaussian_policy
from gridrl.noise import JumpEvents
from gridrl.rng import RandomizationDraw
from gridrl.scenarios import build_scenario
from gridrl.sde import PathRecord, simulate
from gridrl.td import TDConfig, ValueModel, martingale_loss, run_td0, td0_episode_update

# Oracles: -lam * 0.5 * log(2 pi e sigma^2) with lam = 0.1.
THETA_STAR_SIGMA1 = -0.14189385332046728
THETA_STAR_SIGMA2 = -0.21120857137646182


def bench(**params):
    sc = build_scenario("td0_bench", params)
    ex = sc.extras
    value = ValueModel.time_to_go(ex["terminal_reward"], [lambda x: np.ones(x.shape[:-1])], sc.T)
    return sc, value


def config(sc, episodes, **kw):
    ex = sc.extras
    args = dict(temperature=ex["temperature"], alpha0=ex["alpha0"], k0=ex["k0"])
    args.update(kw)
    return TDConfig(episodes=episodes, partition=sc.partition(), **args)


def test_bench_theta_star_matches_closed_form():
    assert bench()[0].extras["theta_star"] == pytest.approx(THETA_STAR_SIGMA1, rel=1e-14)
    assert bench(sigma=2.0)[0].extras["theta_star"] == pytest.approx(THETA_STAR_SIGMA2, rel=1e-14)


def _one_step_path(y):
    return PathRecord(np.array([0.0, 1.0]), np.array([[0.0], [y]]), np.zeros(2, bool), JumpEvents.empty())


def test_zero_step_size_gives_zero_increment():
    part = Partition.equidistant(1.0, 1)
    pol = gaussian_policy(0.3, 1.2)
    draw = RandomizationDraw(part, np.array([[0.8]]))
    value = ValueModel.time_to_go(lambda x: x[..., 0], [lambda x: np.ones(x.shape[:-1])], 1.0, [0.4])
    cfg = TDConfig(0.1, 0.0, 1.0, 1, part)
    y = float(pol.h(0.0, np.zeros(1), np.array([0.8]))[0])
    assert np.all(td0_episode_update(value, _one_step_path(y), draw, pol, cfg) == 0.0)


def test_single_interval_hand_expansion():
    # X_1 = y for b = y and a = 0, so the TD error is y - theta + lam log density(y)
    part = Partition.equidistant(1.0, 1)
    mu, sd, lam, theta, alpha, xi = 0.3, 1.2, 0.2, 0.4, 0.05, 0.8
    pol = gaussian_policy(mu, sd)
    y = float(pol.h(0.0, np.zeros(1), np.array([xi]))[0])
    logd = -0.5 * ((y - mu) / sd) ** 2 - math.log(sd * math.sqrt(2 * math.pi))
    value = ValueModel.time_to_go(lambda x: x[..., 0], [lambda x: np.ones(x.shape[:-1])], 1.0, [theta])
    cfg = TDConfig(lam, alpha, 1.0, 1, part)
    inc = td0_episode_update(value, _one_step_path(y), RandomizationDraw(part, np.array([[xi]])), pol, cfg)
    assert inc[0] == pytest.approx(alpha * (y - theta + lam * logd), rel=1e-13)


def test_episode_update_matches_recursion():
    sc, value = bench()
    cfg = config(sc, 3)
    res = run_td0(sc.model, sc.policies[0], value, cfg, master_seed=5)
    batch = simulate("grid", sc.model, list(sc.policies), cfg.solver(), 3, 5, purpose="td0")
    theta = value.theta
    for k, row in enumerate(batch.records()):
        draw = RandomizationDraw(cfg.partition, batch.xi[k])
        theta = theta + td0_episode_update(value.with_theta(theta), row[0], draw, sc.policies[0], cfg, k)
        assert np.allclose(theta, res.trajectory[k + 1], rtol=1e-12, atol=1e-15)


def test_episode_update_rejects_other_partition():
    sc, value = bench()
    cfg = config(sc, 1)
    batch = simulate("grid", sc.model, list(sc.policies), cfg.solver(), 1, 0)
    other = RandomizationDraw(Partition.equidistant(sc.T, 2), np.full((2, 1), 0.5))
    with pytest.raises(InputError):
        td0_episode_update(value, batch.records()[0][0], other, sc.policies[0], cfg)


def test_zero_temperature_mean_increment_vanishes_at_zero():
    sc, value = bench(temperature=0.0)
    cfg = config(sc, 1, alpha0=1.0)
    batch = simulate("grid", sc.model, list(sc.policies), cfg.solver(), 2000, 11)
    incs = np.array(
        [
            td0_episode_update(value, row[0], RandomizationDraw(cfg.partition, batch.xi[k]), sc.policies[0], cfg)[0]
            for k, row in enumerate(batch.records())
        ]
    )
    assert abs(incs.mean()) < 4 * incs.std(ddof=1) / math.sqrt(incs.size)


def test_terminal_pin():
    _, value = bench()
    xs = np.linspace(-3, 3, 7)[:, None]
    value.with_theta([5.0]).check_terminal(xs, lambda x: x[..., 0])
    assert np.array_equal(value.with_theta([5.0]).value(4.0, xs), xs[:, 0])
    bad = ValueModel(lambda t, x: x[..., 0], (lambda t, x: np.ones(x.shape[:-1]),), [1.0], 4.0)
    with pytest.raises(SpecError):
        bad.check_terminal(xs)


def test_bench_sigma2_converges():
    sc, value = bench(sigma=2.0)
    res = run_td0(sc.model, sc.policies[0], value, config(sc, 100_000), master_seed=1)
    assert abs(res.tail_average(100)[0] - THETA_STAR_SIGMA2) < 0.01


def test_bench_zero_temperature_converges_to_zero():
    sc, value = bench(temperature=0.0)
    res = run_td0(sc.model, sc.policies[0], value, config(sc, 100_000), master_seed=1)
    assert abs(res.tail_average(100)[0]) < 0.005


def test_shifting_reward_leaves_trajectory_unchanged():
    sc, value = bench()
    shifted = ValueModel.time_to_go(lambda x: x[..., 0] + 3.0, [lambda x: np.ones(x.shape[:-1])], sc.T)
    cfg = config(sc, 200)
    a = run_td0(sc.model, sc.policies[0], value, cfg, 2).trajectory
    b = run_td0(sc.model, sc.policies[0], shifted, cfg, 2).trajectory
    assert np.allclose(a, b, rtol=1e-10, atol=1e-14)


@given(scale=st.floats(0.1, 10.0))
@settings(max_examples=8, deadline=None)
def test_scaling_reward_and_temperature_scales_theta(scale):
    sc, value = bench()
    scaled = ValueModel.time_to_go(lambda x: scale * x[..., 0], [lambda x: np.ones(x.shape[:-1])], sc.T)
    a = run_td0(sc.model, sc.policies[0], value, config(sc, 50), 3).trajectory
    b = run_td0(sc.model, sc.policies[0], scaled, config(sc, 50, temperature=0.1 * scale), 3).trajectory
    assert np.allclose(scale * a, b, rtol=1e-9, atol=1e-13)


def test_large_step_diverges():
    sc, value = bench()
    with pytest.raises(DivergenceError):
        run_td0(sc.model, sc.policies[0], value, config(sc, 100, alpha0=1e3), 0)


def test_trajectory_csv():
    sc, value = bench()
    res = run_td0(sc.model, sc.policies[0], value, config(sc, 5), 0)
    lines = res.to_csv().splitlines()
    assert lines[0] == "episode,theta_1,increment_norm" and len(lines) == 7
    assert res.trajectory.shape == (6, 1)


def test_martingale_loss_degenerate_is_exactly_zero():
    sc = build_scenario("linear_control", {"a1": 0.0, "T": 1.0})
    value = ValueModel.time_to_go(lambda x: x[..., 0], [lambda x: np.ones(x.shape[:-1])], 1.0)
    cfg = TDConfig(0.0, 0.1, 1.0, 1, Partition.equidistant(1.0, 8))
    est = martingale_loss(value, sc.model, sc.policies[0], cfg, n_paths=64)
    assert est.loss == 0.0 and est.se == 0.0


def test_martingale_loss_separates_true_parameter():
    sc, value = bench()
    cfg = config(sc, 1)
    star = martingale_loss(value.with_theta([THETA_STAR_SIGMA1]), sc.model, sc.policies[0], cfg, 4000, master_seed=1)
    off = martingale_loss(value.with_theta([THETA_STAR_SIGMA1 + 1]), sc.model, sc.policies[0], cfg, 4000, master_seed=1)
    # the conditional mean of each step is -dt away from the true parameter, summing to T^2 / n
    assert abs(star.loss) < 4 * star.se + 1e-12
    assert abs(off.loss - 0.5) < 4 * off.se
    assert off.loss - star.loss > 10 * max(off.se, star.se)


def test_martingale_loss_rejects_off_grid_times():
    sc, value = bench()
    with pytest.raises(InputError):
        martingale_loss(value, sc.model, sc.policies[0], config(sc, 1), 16, times=[0.0, 0.01])
