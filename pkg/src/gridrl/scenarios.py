"""Built-in scenarios addressable by name.

Each builder accepts a flat parameter map; unknown keys are rejected.  See
the model cookbook in the README for the equations and defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError
from .model import (
    CompoundPoisson,
    Dimensions,
    JumpDiffusionModel,
    NormalSizes,
    Partition,
    RandomizedPolicy,
    TruncatedStable,
    gaussian_policy,
)
from .sde import SolverConfig

__all__ = ["Scenario", "build_scenario", "SCENARIOS", "scenario_defaults"]


@dataclass(frozen=True, eq=False)
class Scenario:
    """Model, policies and default discretization of a named scenario."""

    name: str
    model: JumpDiffusionModel
    policies: tuple
    n_intervals: int
    refine: int
    params: dict
    extras: dict = field(default_factory=dict)

    @property
    def T(self) -> float:
        return self.model.horizon

    def partition(self, n: Optional[int] = None) -> Partition:
        return Partition.equidistant(self.T, self.n_intervals if n is None else n)

    def solver_config(self, n: Optional[int] = None, refine: Optional[int] = None, **kw) -> SolverConfig:
        return SolverConfig(self.partition(n), refine=self.refine if refine is None else refine, **kw)


def _zeros(x, y):
    return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)[:-1] + (1,)))


def _affine_model(p, name, levy=None, gamma=None, notes=""):
    """``b = b0 + bx x + b1 y``, ``a = a0 + ax x + a1 y`` (scalar)."""
    b0, bx, b1 = p["b0"], p["bx"], p["b1"]
    a0, ax, a1 = p["a0"], p["ax"], p["a1"]

    def b(t, x, y):
        return b0 + bx * x + b1 * y

    def a(t, x, y):
        return (a0 + ax * x + a1 * y)[..., None]

    kw = {}
    if levy is not None:
        kw.update(levy=levy, gamma=gamma)
    state_free = bx == 0.0 and ax == 0.0 and p.get("cx", 0.0) == 0.0
    return JumpDiffusionModel(
        Dimensions(1, 1, 1, 1),
        [p["x0"]],
        b=b,
        a=a,
        horizon=p["T"],
        name=name,
        notes=notes,
        state_free=state_free,
        **kw,
    )


def _two_controls(p):
    def b(t, x, y):
        return _zeros(x, y)

    def a(t, x, y):
        return np.broadcast_to(y, np.broadcast_shapes(np.shape(x), np.shape(y)))[..., None]

    model = JumpDiffusionModel(
        Dimensions(1, 1, 1, 1),
        [p["x0"]],
        b=b,
        a=a,
        horizon=p["T"],
        name="two_controls",
        notes="b = 0, a = y; Lipschitz constant 0 in x, linear growth in y",
        state_free=True,
    )
    pols = (
        gaussian_policy(p["mu1"], p["sigma1"], name="h1"),
        gaussian_policy(p["mu2"], p["sigma2"], name="h2"),
    )
    m1, s1, m2, s2 = p["mu1"], p["sigma1"], p["mu2"], p["sigma2"]
    extras = {
        "target_grid": m1 * m2 + s1 * s2,
        "target_limit": m1 * m2 + s1 * s2,
        "target_exploratory": math.sqrt((m1**2 + s1**2) * (m2**2 + s2**2)),
    }
    return model, pols, extras


def _linear_control(p):
    model = _affine_model(
        p,
        "linear_control",
        notes="affine in the control; Lipschitz constants |bx|, |ax| in x",
    )
    return model, (gaussian_policy(p["mu"], p["sigma"], name="h"),), {}


def _jump_linear(p):
    c0, cx, c1 = p["c0"], p["cx"], p["c1"]

    def gamma(t, x, y, z):
        return (c0 + cx * x + c1 * y) * z[..., :1]

    if p["levy"] == "compound":
        levy = CompoundPoisson(p["rate"], NormalSizes(0.0, p["jump_std"]), truncation_radius=p["r"])
    elif p["levy"] == "stable":
        levy = TruncatedStable(p["stable_c"], p["alpha"], p["cutoff"], p["z_max"], truncation_radius=p["r"])
    else:
        raise ConfigError(f"unknown Levy measure kind {p['levy']!r}")
    levy.check_integrability(p["T"])
    model = _affine_model(
        p,
        "jump_linear",
        levy=levy,
        gamma=gamma,
        notes="gamma = (c0 + cx x + c1 y) z; Lipschitz constant |cx| E|z| in x for the jump part",
    )
    return model, (gaussian_policy(p["mu"], p["sigma"], name="h"),), {}


def _td0_bench(p):
    def b(t, x, y):
        return _zeros(x, y)

    def a(t, x, y):
        return np.broadcast_to(y, np.broadcast_shapes(np.shape(x), np.shape(y)))[..., None]

    model = JumpDiffusionModel(
        Dimensions(1, 1, 1, 1),
        [p["x0"]],
        b=b,
        a=a,
        horizon=p["T"],
        name="td0_bench",
        notes="b = 0, a = y, terminal reward g(x) = x",
        state_free=True,
    )
    pol = gaussian_policy(p["mu"], p["sigma"], name="h")
    ent = 0.5 * math.log(2.0 * math.pi * math.e * p["sigma"] ** 2)
    n, T = p["n"], p["T"]
    gain = T * T * (n + 1) / (2 * n)
    alpha0 = p["alpha0"] if p["alpha0"] is not None else 0.5 / gain
    extras = {
        "theta_star": -p["temperature"] * ent,
        "temperature": p["temperature"],
        "alpha0": alpha0,
        "k0": p["k0"],
        "episodes": p["episodes"],
        "terminal_reward": lambda x: x[..., 0],
    }
    return model, (pol,), extras


_DEFAULTS = {
    "two_controls": dict(mu1=1.0, sigma1=1.0, mu2=-0.5, sigma2=2.0, T=1.0, x0=0.0, n=64, refine=32),
    "linear_control": dict(
        b0=0.0, bx=0.0, b1=0.0, a0=0.0, ax=0.0, a1=1.0, mu=0.0, sigma=1.0, T=1.0, x0=0.0, n=32, refine=32
    ),
    "jump_linear": dict(
        b0=0.0,
        bx=-0.5,
        b1=0.2,
        a0=0.2,
        ax=0.0,
        a1=0.3,
        c0=0.5,
        cx=0.0,
        c1=0.1,
        levy="compound",
        rate=2.0,
        jump_std=0.5,
        r=1.0,
        stable_c=0.5,
        alpha=1.2,
        cutoff=0.05,
        z_max=2.0,
        mu=0.0,
        sigma=1.0,
        T=1.0,
        x0=0.0,
        n=32,
        refine=16,
    ),
    "td0_bench": dict(
        mu=0.0, sigma=1.0, temperature=0.1, T=4.0, x0=0.0, n=32, refine=1, alpha0=None, k0=2.0, episodes=20000
    ),
}

_BUILDERS: dict = {
    "two_controls": _two_controls,
    "linear_control": _linear_control,
    "jump_linear": _jump_linear,
    "td0_bench": _td0_bench,
}

SCENARIOS = tuple(_BUILDERS)


def scenario_defaults(name: str) -> dict:
    if name not in _DEFAULTS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    return dict(_DEFAULTS[name])


def build_scenario(name: str, params: Optional[dict] = None) -> Scenario:
    """Instantiate a built-in scenario with parameter overrides."""
    p = scenario_defaults(name)
    for key, val in (params or {}).items():
        if key not in p:
            raise ConfigError(f"scenario {name} has no parameter {key!r}")
        p[key] = val
    for key in ("n", "refine"):
        if not isinstance(p[key], int) or p[key] < 1:
            raise ConfigError(f"{key} must be a positive integer")
    if not p["T"] > 0:
        raise ConfigError("horizon T must be positive")
    model, pols, extras = _BUILDERS[name](p)
    return Scenario(name, model, pols, p["n"], p["refine"], p, extras)
