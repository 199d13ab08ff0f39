"""Reproducible random streams and the grid-sampling randomization process.

A stream is a pure function of ``(master_seed, purpose, index)``: the
purpose tag is hashed and, together with the index, becomes the spawn key of
a :class:`numpy.random.SeedSequence`.  Paths can therefore be simulated in
any order and on any worker without sharing a generator.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ConfigError
from .model import Partition

__all__ = [
    "ENV_SEED",
    "DEFAULT_SEED",
    "SeedSpec",
    "derive_stream",
    "as_stream",
    "resolve_seed",
    "RandomizationDraw",
    "sample_grid_randomization",
]

ENV_SEED = "GRIDRL_SEED"
DEFAULT_SEED = 20240101
_U64 = 2**64


def _purpose_tag(purpose: str) -> int:
    digest = hashlib.blake2b(purpose.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class SeedSpec:
    """Identifier of one independent stream."""

    master_seed: int
    purpose: str = "main"
    index: int = 0

    def __post_init__(self):
        if not (0 <= int(self.master_seed) < _U64):
            raise ConfigError(f"master seed must be an unsigned 64-bit integer, got {self.master_seed}")
        if int(self.index) < 0:
            raise ConfigError("stream index must be non-negative")

    def child(self, purpose: str, index: Optional[int] = None) -> "SeedSpec":
        """Sub-stream ``<purpose>/<child purpose>`` sharing the master seed."""
        return SeedSpec(self.master_seed, f"{self.purpose}/{purpose}", self.index if index is None else index)

    def with_index(self, index: int) -> "SeedSpec":
        return SeedSpec(self.master_seed, self.purpose, index)


def derive_stream(seed: SeedSpec) -> np.random.Generator:
    """Philox generator keyed by ``(master_seed, purpose, index)``."""
    ss = np.random.SeedSequence(
        entropy=int(seed.master_seed), spawn_key=(_purpose_tag(seed.purpose), int(seed.index))
    )
    return np.random.Generator(np.random.Philox(ss))


StreamLike = Union[SeedSpec, np.random.Generator]


def as_stream(stream: StreamLike) -> np.random.Generator:
    """Accept either a seed spec or an existing generator."""
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, SeedSpec):
        return derive_stream(stream)
    raise ConfigError(f"expected a SeedSpec or numpy Generator, got {type(stream).__name__}")


def resolve_seed(flag: Optional[int] = None, config: Optional[int] = None, default: int = DEFAULT_SEED) -> int:
    """Seed precedence: command-line flag, then ``GRIDRL_SEED``, then config file, then default."""
    if flag is not None:
        value = flag
    elif os.environ.get(ENV_SEED, "").strip():
        raw = os.environ[ENV_SEED].strip()
        try:
            value = int(raw, 0)
        except ValueError as exc:
            raise ConfigError(f"{ENV_SEED}={raw!r} is not an integer") from exc
    elif config is not None:
        value = config
    else:
        value = default
    value = int(value)
    if not (0 <= value < _U64):
        raise ConfigError(f"seed {value} is not an unsigned 64-bit integer")
    return value


@dataclass(frozen=True, eq=False)
class RandomizationDraw:
    """Partition with uniforms ``xi_1..xi_n`` defining the step process ``xi^Pi``.

    ``xi`` has shape ``(n, d)``; row ``i - 1`` is active on ``(t_{i-1}, t_i]``.
    """

    partition: Partition
    xi: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        if xi.ndim == 1:
            xi = xi[:, None]
        if xi.shape[0] != self.partition.n:
            raise ConfigError(f"{xi.shape[0]} draws for a partition with {self.partition.n} intervals")
        if np.any(xi < 0.0) or np.any(xi > 1.0):
            raise ConfigError("randomization draws must lie in [0, 1]")
        xi = xi.copy()
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

    @property
    def d(self) -> int:
        return self.xi.shape[1]

    def lookup(self, t):
        """Value of ``xi^Pi`` at time(s) ``t``; shape ``(..., d)``."""
        idx = np.asarray(self.partition.interval_index(t))
        return self.xi[idx - 1]


def sample_grid_randomization(partition: Partition, seed: StreamLike, d: int = 1) -> RandomizationDraw:
    """Draw ``n`` i.i.d. uniform points of ``[0,1]^d``, one per interval."""
    rng = as_stream(seed)
    return RandomizationDraw(partition, rng.random((partition.n, d)))
