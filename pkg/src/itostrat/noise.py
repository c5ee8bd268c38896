"""Truncated cylindrical Brownian motion on a uniform time grid.

Each scalar component ``W^i`` of path ``stream`` is drawn from its own PCG64
generator seeded by ``SeedSequence([seed, stream, i])``, so increasing the
mode count or the number of paths never changes already-drawn components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be > 0, got {self.horizon}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def coarsen(self, factor: int) -> TimeGrid:
        if factor < 1 or self.steps % factor:
            raise ValueError(f"factor {factor} does not divide {self.steps} steps")
        return TimeGrid(self.horizon, self.steps // factor)


@dataclass(frozen=True, eq=False)
class BrownianIncrements:
    """Increments ``values[..., i, k] = W^i(t_{k+1}) - W^i(t_k)``.

    A single path has ``values.shape == (M, steps)``; a batch produced by
    :func:`sample_batch` has a leading path axis, one entry per stream.
    ``factor`` records the cumulative coarsening applied.
    """

    values: np.ndarray
    grid: TimeGrid
    seed: int
    streams: tuple
    factor: int = 1

    def __post_init__(self):
        v = self.values.view()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if v.shape[-1] != self.grid.steps:
            raise DimensionError(f"increments have {v.shape[-1]} steps, grid has {self.grid.steps}")

    @property
    def modes(self) -> int:
        return self.values.shape[-2]

    @property
    def batch_shape(self) -> tuple:
        return self.values.shape[:-2]

    def step(self, k: int) -> np.ndarray:
        """Per-mode increments at step ``k``: shape ``batch + (M,)``."""
        return self.values[..., k]

    def path(self) -> np.ndarray:
        """``W`` at every grid point (compensated running sums), leading zero."""
        flat = self.values.reshape(-1, self.grid.steps)
        return kernels.compensated_cumsum(flat).reshape(self.values.shape[:-1] + (-1,))

    def select(self, paths) -> BrownianIncrements:
        """Sub-batch by path index (slice or index array)."""
        idx = np.arange(len(self.streams))[paths]
        return BrownianIncrements(
            self.values[idx], self.grid, self.seed, tuple(self.streams[i] for i in idx), self.factor
        )


def _draw(seed, stream, mode, steps, dt):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream, mode])))
    return rng.standard_normal(steps) * math.sqrt(dt)


def sample_increments(modes: int, grid: TimeGrid, seed: int, stream: int = 0) -> BrownianIncrements:
    """One path of ``modes`` independent Brownian components on ``grid``."""
    if modes < 1:
        raise ValueError(f"modes must be >= 1, got {modes}")
    vals = np.stack([_draw(seed, stream, i, grid.steps, grid.dt) for i in range(modes)])
    return BrownianIncrements(vals, grid, int(seed), (int(stream),))


def sample_batch(modes: int, grid: TimeGrid, seed: int, streams) -> BrownianIncrements:
    """Stack of single paths, one per stream id (path axis first)."""
    streams = tuple(int(s) for s in streams)
    if modes < 1:
        raise ValueError(f"modes must be >= 1, got {modes}")
    vals = np.empty((len(streams), modes, grid.steps))
    for p, s in enumerate(streams):
        for i in range(modes):
            vals[p, i] = _draw(seed, s, i, grid.steps, grid.dt)
    return BrownianIncrements(vals, grid, int(seed), streams)


def coarsen(inc: BrownianIncrements, factor: int) -> BrownianIncrements:
    """Sum consecutive blocks of ``factor`` increments (compensated)."""
    grid = inc.grid.coarsen(factor)
    if factor == 1:
        return inc
    flat = inc.values.reshape(-1, inc.grid.steps)
    vals = kernels.block_sums(flat, factor).reshape(inc.values.shape[:-1] + (grid.steps,))
    return BrownianIncrements(vals, grid, inc.seed, inc.streams, inc.factor * factor)
