"""Discrete cross-variation ``[G_i(., Psi), W^j]`` and the conversion integral.

Brackets are estimated offline from stored trajectories. Spectral
coefficients serve as the basis coordinates, so a field-valued bracket is
just the coordinatewise real bracket. All series are cumulative and start
at the zero field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .integrators import TrajectoryRecord
from .noise import BrownianIncrements, TimeGrid
from .operators import OperatorBundle, fd_frechet
from .spectral import SpectralField, power_spectrum, sobolev_norm


@dataclass(frozen=True, eq=False)
class CrossVarSeries:
    """Cumulative field-valued series on ``grid``; ``values[k]`` is the value at step ``k``."""

    grid: TimeGrid
    values: np.ndarray
    mode: int
    dim_domain: int

    def at(self, k) -> SpectralField:
        return SpectralField(self.values[k], self.dim_domain)

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def mean(self) -> CrossVarSeries:
        """Monte-Carlo mean over the leading batch axis (sample-ordered reduction)."""
        if self.values.ndim < self.dim_domain + 3:
            return self
        return CrossVarSeries(self.grid, self.values.mean(axis=1), self.mode, self.dim_domain)

    def __sub__(self, other):
        _check_grids(self, other)
        return CrossVarSeries(self.grid, self.values - other.values, self.mode, self.dim_domain)

    def __add__(self, other):
        _check_grids(self, other)
        return CrossVarSeries(self.grid, self.values + other.values, self.mode, self.dim_domain)

    def scale(self, c) -> CrossVarSeries:
        return CrossVarSeries(self.grid, self.values * c, self.mode, self.dim_domain)


def _check_grids(a, b):
    if a.grid != b.grid or a.values.shape != b.values.shape:
        raise DimensionError("series live on different grids or shapes")


def _require_full(traj: TrajectoryRecord):
    if traj.stride != 1:
        raise ValueError("bracket estimation needs every step stored (stride 1)")


def _stop_mask(traj, steps):
    """``active[k]``: step ``k`` lies before the stopping index (per path)."""
    k = np.arange(steps).reshape((steps,) + (1,) * len(traj.batch_shape))
    return k < np.asarray(traj.stop_step)


def _expand(arr, ndim_tail):
    return arr.reshape(arr.shape + (1,) * ndim_tail)


def _eval_series(traj, G, i):
    """``G_i(t_k, Psi_k)`` for every stored step, frozen after the stopping index."""
    steps = traj.grid.steps
    out = np.empty_like(traj.states)
    for k in range(steps + 1):
        out[k] = G.eval(i, k * traj.grid.dt, traj.state(k)).coeffs
    stop = np.asarray(traj.stop_step)
    if np.any(stop < steps):
        # G_i(. ^ tau, Psi_{. ^ tau}): stop in time as well as in state
        idx = np.minimum(np.arange(steps + 1).reshape((-1,) + (1,) * stop.ndim), stop)
        out = np.take_along_axis(out, _expand(idx, out.ndim - 1 - stop.ndim), axis=0)
    return out


def _zero_series(traj, i):
    return CrossVarSeries(traj.grid, np.zeros_like(traj.states), i, traj.dim_domain)


def empirical_crossvar(traj: TrajectoryRecord, G: OperatorBundle, i: int, inc: BrownianIncrements,
                       driver: int = None) -> CrossVarSeries:
    """``sum_{k<t} [G_i(t_{k+1}, Psi_{k+1}) - G_i(t_k, Psi_k)] dW^j_k`` with ``j = driver`` (default ``i``)."""
    _require_full(traj)
    if inc.grid != traj.grid:
        raise DimensionError("trajectory and increments use different grids")
    j = i if driver is None else driver
    if j >= inc.modes:
        raise DimensionError(f"driver mode {j} not present in increments ({inc.modes} modes)")
    if i >= G.modes:
        return _zero_series(traj, i)
    gvals = _eval_series(traj, G, i)
    dg = np.diff(gvals, axis=0)
    dw = np.moveaxis(np.asarray(inc.values)[..., j, :], -1, 0)
    terms = dg * _expand(dw, dg.ndim - dw.ndim)
    values = np.concatenate([np.zeros_like(gvals[:1]), np.cumsum(terms, axis=0)])
    return CrossVarSeries(traj.grid, values, i, traj.dim_domain)


def corrector_integral(traj: TrajectoryRecord, G: OperatorBundle, i: int, fd=False) -> CrossVarSeries:
    """Left-endpoint quadrature of ``D_u G_i(t_k, Psi_k)[G_i(t_k, Psi_k)]`` up to the stop."""
    _require_full(traj)
    if i >= G.modes:
        return _zero_series(traj, i)
    steps = traj.grid.steps
    dt = traj.grid.dt
    terms = np.empty_like(traj.states[:-1])
    for k in range(steps):
        t = k * dt
        psi = traj.state(k)
        g = G.eval(i, t, psi)
        d = fd_frechet(G, i, t, psi, g) if (fd or G.frechet is None) else G.frechet(i, t, psi, g)
        terms[k] = d.coeffs
    active = _expand(_stop_mask(traj, steps), terms.ndim - 1 - len(traj.batch_shape))
    terms = np.where(active, terms * dt, 0.0)
    values = np.concatenate([np.zeros_like(terms[:1]), np.cumsum(terms, axis=0)])
    return CrossVarSeries(traj.grid, values, i, traj.dim_domain)


def ito_sum(traj: TrajectoryRecord, G: OperatorBundle, i: int, inc: BrownianIncrements,
            stop_step=None) -> CrossVarSeries:
    """Discrete Ito integral ``sum_{k < t ^ tau} G_i(t_k, Psi_k) dW^i_k``."""
    _require_full(traj)
    if i >= G.modes:
        return _zero_series(traj, i)
    steps = traj.grid.steps
    gvals = _eval_series(traj, G, i)[:-1]
    dw = np.moveaxis(np.asarray(inc.values)[..., i, :], -1, 0)
    stop = traj.stop_step if stop_step is None else stop_step
    k = np.arange(steps).reshape((steps,) + (1,) * np.ndim(stop))
    active = _expand(k < np.asarray(stop), gvals.ndim - 1 - np.ndim(stop))
    terms = np.where(active, gvals * _expand(dw, gvals.ndim - dw.ndim), 0.0)
    values = np.concatenate([np.zeros_like(gvals[:1]), np.cumsum(terms, axis=0)])
    return CrossVarSeries(traj.grid, values, i, traj.dim_domain)


def stopping_index(traj: TrajectoryRecord, threshold: float, m: int = 1) -> np.ndarray:
    """First step where ``max_{j<=k} ||Psi_j||_{W^m}^2 + sum_{j<k} ||Psi_j||_{W^{m+1}}^2 dt >= n``.

    Paths that never reach the threshold get ``min(steps, traj.stop_step)``.
    """
    _require_full(traj)
    steps = traj.grid.steps
    h2 = np.empty((steps + 1,) + traj.batch_shape)
    v2 = np.empty_like(h2)
    for k in range(steps + 1):
        f = traj.state(k)
        p = power_spectrum(f)
        h2[k] = sobolev_norm(f, m, p) ** 2
        v2[k] = sobolev_norm(f, m + 1, p) ** 2
    integral = np.concatenate([np.zeros_like(v2[:1]), np.cumsum(v2[:-1] * traj.grid.dt, axis=0)])
    functional = np.maximum.accumulate(h2, axis=0) + integral
    hit = functional >= threshold
    first = np.where(hit.any(axis=0), hit.argmax(axis=0), steps)
    return np.minimum(first, traj.stop_step)


def _truncate(series: CrossVarSeries, stop) -> CrossVarSeries:
    """Hold the series constant after ``stop`` (per path)."""
    steps = series.grid.steps
    idx = np.minimum(np.arange(steps + 1).reshape((-1,) + (1,) * np.ndim(stop)), stop)
    vals = np.take_along_axis(series.values, _expand(idx, series.values.ndim - 1 - np.ndim(stop)), axis=0)
    return CrossVarSeries(series.grid, vals, series.mode, series.dim_domain)


@dataclass(frozen=True, eq=False)
class PartialSumResult:
    thresholds: tuple
    series: dict
    stop_steps: dict
    stabilized_at: object
    differences: dict


def stratonovich_partial_sum(traj: TrajectoryRecord, G: OperatorBundle, inc: BrownianIncrements,
                             guard_thresholds, m: int = 1, tol: float = 1e-12) -> PartialSumResult:
    """Localised Stratonovich sums ``sum_i (Ito_i + 0.5 [G_i, W^i])`` up to ``t ^ tau_n``.

    ``stabilized_at`` is the first threshold whose series matches the next
    one to ``tol`` in the sup-over-time W^0 norm (``None`` if none does).
    """
    thresholds = tuple(float(n) for n in guard_thresholds)
    if list(thresholds) != sorted(thresholds):
        raise ValueError("thresholds must be ascending")
    itos = [ito_sum(traj, G, i, inc, stop_step=np.full(traj.batch_shape, traj.grid.steps)) for i in range(G.modes)]
    brackets = [empirical_crossvar(traj, G, i, inc) for i in range(G.modes)]
    out, stops = {}, {}
    for n in thresholds:
        stop = stopping_index(traj, n, m)
        total = None
        for ito, br in zip(itos, brackets):
            part = _truncate(ito, stop) + _truncate(br, stop).scale(0.5)
            total = part if total is None else total + part
        if total is None:
            total = _zero_series(traj, 0)
        out[n] = total
        stops[n] = stop
    diffs = {}
    stabilized = None
    for a, b in zip(thresholds, thresholds[1:]):
        diffs[a] = compare(out[a], out[b], 0).sup
        if stabilized is None and np.all(diffs[a] <= tol):
            stabilized = a
    return PartialSumResult(thresholds, out, stops, stabilized, diffs)


@dataclass(frozen=True, eq=False)
class CompareReport:
    sup: object
    per_time: np.ndarray


def compare(a: CrossVarSeries, b: CrossVarSeries, norm: int = 0) -> CompareReport:
    """Sup over time (and per-time series) of ``||a - b||_{W^norm}``."""
    if a.grid != b.grid:
        raise DimensionError("series live on different grids")
    diff = a - b
    per = np.stack([np.atleast_1d(sobolev_norm(diff.at(k), norm)) for k in range(a.grid.steps + 1)])
    if per.shape[1:] == (1,) and diff.values.ndim == a.dim_domain + 2:
        per = per[:, 0]
    return CompareReport(per.max(axis=0), per)


def series_norms(s: CrossVarSeries, norm: int = 0) -> np.ndarray:
    return np.array([sobolev_norm(s.at(k), norm) for k in range(s.grid.steps + 1)])
