"""Reproducible correlated Brownian increments on an even time grid.

Every (seed, batch_index) pair keys its own Philox counter-based stream, so a
batch produces the same numbers whichever worker runs it and in whatever
order.  Normals come from the inverse normal CDF applied to open-interval
uniforms built from 53 random bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import GridAlignmentError, ValidationError
from .linalg import cholesky_psd
from .params import CorrelationMatrix

_TWO_M53 = 2.0 ** -53
ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class SimGrid:
    """Evenly spaced grid t_n = n * dt on [0, maturity]."""

    maturity: float
    steps_per_year: int
    n_steps: int = field(init=False)
    dt: float = field(init=False)

    def __post_init__(self):
        if not (math.isfinite(self.maturity) and self.maturity > 0):
            raise ValidationError("maturity must be positive")
        if int(self.steps_per_year) != self.steps_per_year or self.steps_per_year < 1:
            raise ValidationError("steps_per_year must be a positive integer")
        n = max(1, int(round(self.maturity * self.steps_per_year)))
        object.__setattr__(self, "steps_per_year", int(self.steps_per_year))
        object.__setattr__(self, "n_steps", n)
        object.__setattr__(self, "dt", self.maturity / n)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def time(self, n: int) -> float:
        return n * self.dt

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; raises if ``t`` is not a grid point."""
        x = t / self.dt
        n = int(round(x))
        if abs(x - n) > ALIGN_TOL * max(1.0, abs(x)) or n < 0 or n > self.n_steps:
            raise GridAlignmentError(f"date not on grid: t={t!r} (dt={self.dt!r}, T={self.maturity!r})")
        return n


def cholesky(corr: CorrelationMatrix) -> np.ndarray:
    """Lower-triangular L with L L^T = corr; raises ``NotPSDError``."""
    return cholesky_psd(corr.entries)


def _philox(seed: int, batch_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(batch_index)])
    return np.random.Generator(np.random.Philox(ss))


class NormalStream:
    """Standard normal variates for one (seed, batch_index) substream."""

    def __init__(self, seed: int, batch_index: int):
        self.seed = int(seed)
        self.batch_index = int(batch_index)
        self._gen = _philox(seed, batch_index)

    def normals(self, shape) -> np.ndarray:
        bits = self._gen.integers(0, 1 << 53, size=shape, dtype=np.uint64)
        u = (bits + 0.5) * _TWO_M53
        return ndtri(u)


class IncrementStream:
    """Successive (n_paths, 4) blocks of correlated increments of size dt."""

    def __init__(self, corr: CorrelationMatrix | np.ndarray, dt: float, seed: int,
                 batch_index: int, n_paths: int):
        factor = corr if isinstance(corr, np.ndarray) else cholesky(corr)
        self._lt = np.ascontiguousarray(factor.T)
        self._identity = bool(np.array_equal(factor, np.eye(4)))
        self._scale = math.sqrt(dt)
        self.n_paths = int(n_paths)
        self._normals = NormalStream(seed, batch_index)

    def next(self) -> np.ndarray:
        z = self._normals.normals((self.n_paths, 4))
        if not self._identity:
            z = z @ self._lt
        z *= self._scale
        return z


@dataclass(frozen=True)
class IncrementBlock:
    """Correlated increments, shape (n_steps, n_paths, 4), columns (s, v, d, f)."""

    values: np.ndarray
    seed: int
    batch_index: int

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_paths(self) -> int:
        return self.values.shape[1]


def sample_block(seed: int, batch_index: int, grid: SimGrid, corr: CorrelationMatrix,
                 n_paths: int = 1) -> IncrementBlock:
    stream = IncrementStream(corr, grid.dt, seed, batch_index, n_paths)
    values = np.stack([stream.next() for _ in range(grid.n_steps)])
    return IncrementBlock(values, int(seed), int(batch_index))
