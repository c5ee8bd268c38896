"""Time stepping for the corrected Ito form and the Stratonovich form.

``ito_em``
    Euler-Maruyama on ``dPsi = (A + 0.5 sum_i D_u G_i[G_i]) dt + sum_i G_i dW^i``.
``strat_heun``
    Heun predictor-corrector on ``dPsi = A dt + sum_i G_i o dW^i``; the
    predictor uses ``G(t, .)``, the average uses ``G(t + dt, .)``.

States may carry a batch axis (one entry per Monte-Carlo path); increments
then have the same leading batch shape. Localisation follows the stopping
rule ``sup_{r<=s} ||Psi_r||_H^2 + int_0^s ||Psi_r||_V^2 dr >= n`` with
``H = W^m`` and ``V = W^{m+1}``; once a path stops its state is frozen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import DimensionError, NonFiniteError
from .noise import BrownianIncrements, TimeGrid
from .operators import OperatorBundle, corrector_field, corrector_linear
from .spectral import SpectralField, curl2d, power_spectrum, sobolev_norm

SCHEMES = ("ito_em", "strat_heun")


@dataclass(frozen=True, eq=False)
class DriftSpec:
    """Deterministic part ``A(t, psi)``.

    ``growth`` holds the constants ``(c, p)`` of the bound
    ``||A||_U <= c (1 + ||psi||_H^p)(1 + ||psi||_V^2)`` used by validation.
    ``stiff`` optionally gives a real per-mode multiplier ``lambda_k`` of a
    diagonal linear part, with ``nonstiff`` the remainder, for the
    integrating-factor variant.
    """

    apply: Callable[[float, SpectralField], SpectralField]
    growth: tuple = (1.0, 0.0)
    stiff: Optional[np.ndarray] = None
    nonstiff: Optional[Callable] = None
    name: str = "drift"


def zero_drift() -> DriftSpec:
    return DriftSpec(lambda t, psi: psi.replace(np.zeros_like(psi.coeffs)), (0.0, 0.0), name="zero")


def linear_drift(rate: float) -> DriftSpec:
    return DriftSpec(lambda t, psi: psi.scale(rate), (abs(rate), 0.0), name=f"linear({rate})")


class LocalizationGuard:
    """Discrete stopping time for the functional
    ``max_{j<=k} ||Psi_j||_{W^m}^2 + sum_{j<k} ||Psi_j||_{W^{m+1}}^2 dt``.

    ``stop_step`` is the first grid index where the functional reached the
    threshold (``-1`` while running). ``stopped`` never reverts.
    """

    def __init__(self, threshold=math.inf, m=1):
        self.threshold = float(threshold)
        self.m = int(m)
        self.reset(())

    def reset(self, batch_shape):
        self.sup_h = np.zeros(batch_shape)
        self.integral_v = np.zeros(batch_shape)
        self.stopped = np.zeros(batch_shape, dtype=bool)
        self.stop_step = np.full(batch_shape, -1, dtype=np.int64)

    def functional(self):
        return self.sup_h + self.integral_v

    def observe(self, k, psi, dt, power=None):
        """Account for ``Psi_k``; returns the stopped mask valid for step ``k``.

        With an infinite threshold nothing can trigger, so the norms are skipped.
        """
        if self.threshold == math.inf:
            return self.stopped
        if power is None:
            power = power_spectrum(psi)
        h2 = sobolev_norm(psi, self.m, power) ** 2
        self.sup_h = np.maximum(self.sup_h, h2)
        newly = (~self.stopped) & (self.functional() >= self.threshold)
        self.stop_step = np.where(newly, k, self.stop_step)
        self.stopped = self.stopped | newly
        v2 = sobolev_norm(psi, self.m + 1, power) ** 2
        self.integral_v = np.where(self.stopped, self.integral_v, self.integral_v + v2 * dt)
        return self.stopped


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """States and diagnostics along one grid (possibly for a batch of paths).

    ``states[j]`` holds the coefficients at step ``j * stride``. ``stop_step``
    equals ``grid.steps`` for paths that were never stopped (``stopped`` is
    then false).
    """

    grid: TimeGrid
    states: np.ndarray
    stride: int
    dim_domain: int
    stop_step: np.ndarray
    stopped: np.ndarray
    diagnostics: dict
    scheme: str
    flags: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def batch_shape(self):
        return self.stop_step.shape

    @property
    def snapshot_steps(self):
        return np.arange(self.states.shape[0]) * self.stride

    def snapshot(self, j) -> SpectralField:
        return SpectralField(self.states[j], self.dim_domain, **self.flags)

    def state(self, k) -> SpectralField:
        if k % self.stride:
            raise IndexError(f"step {k} not stored at stride {self.stride}")
        return self.snapshot(k // self.stride)

    @property
    def final(self) -> SpectralField:
        return self.state(self.grid.steps)


def _zero(psi):
    return psi.replace(np.zeros_like(psi.coeffs))


def _noise_sum(evals, dw):
    """``sum_i G_i dW^i`` in ascending mode order; ``dw`` is ``batch + (M,)``."""
    total = None
    for i, g in enumerate(evals):
        term = g.scale(dw[..., i])
        total = term if total is None else total + term
    return total


def _resolve_corrector(mode, G):
    """Map a corrector option onto a callable ``(t, psi, evals) -> field | None``."""
    if mode is None or mode == "generic":
        return lambda t, psi, evals: corrector_field(G, t, psi, evals=evals)
    if mode == "closed":
        if G.closed_form is not None:
            return lambda t, psi, evals: G.closed_form(t, psi)
        if G.linear:
            return lambda t, psi, evals: corrector_linear(G, t, psi, evals=evals).field
        return _resolve_corrector("generic", G)
    if mode == "linear":
        return lambda t, psi, evals: corrector_linear(G, t, psi, evals=evals).field
    if mode is False or mode == "off":
        return lambda t, psi, evals: None
    if callable(mode):
        return lambda t, psi, evals: mode(t, psi)
    raise ValueError(f"unknown corrector option {mode!r}")


def _check_modes(G, inc):
    inc = np.asarray(inc)
    if inc.shape[-1] < G.modes:
        raise DimensionError(f"{inc.shape[-1]} increment modes for a {G.modes}-mode operator")
    return inc


def _em(psi, t, dt, drift, G, inc, corr):
    evals = [G.eval(i, t, psi) for i in range(G.modes)]
    c = corr(t, psi, evals)
    a = drift(t, psi)
    if c is not None:
        a = a + c
    out = psi + a.scale(dt)
    if evals:
        out = out + _noise_sum(evals, inc)
    return out, c


def _heun(psi, t, dt, drift, G, inc):
    evals = [G.eval(i, t, psi) for i in range(G.modes)]
    out = psi + drift(t, psi).scale(dt)
    if not evals:
        return out
    pred = psi + _noise_sum(evals, inc)
    pairs = [g + G.eval(i, t + dt, pred) for i, g in enumerate(evals)]
    return out + _noise_sum(pairs, inc).scale(0.5)


def step_ito_em(psi, t, dt, drift: DriftSpec, G: OperatorBundle, inc, corrector=None) -> SpectralField:
    """One Euler-Maruyama step of the corrected Ito equation."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    inc = _check_modes(G, inc)
    return _em(psi, t, dt, drift.apply, G, inc, _resolve_corrector(corrector, G))[0]


def step_strat_heun(psi, t, dt, drift: DriftSpec, G: OperatorBundle, inc) -> SpectralField:
    """One Heun step of the Stratonovich equation."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    inc = _check_modes(G, inc)
    return _heun(psi, t, dt, drift.apply, G, inc)


def _freeze(mask, old, new, N):
    if not mask.shape:
        return old if mask else new
    m = mask.reshape(mask.shape + (1,) * (N + 1))
    return new.replace(np.where(m, old.coeffs, new.coeffs))


def simulate(
    psi0: SpectralField,
    grid: TimeGrid,
    drift: DriftSpec,
    G: OperatorBundle,
    scheme: str,
    inc: BrownianIncrements,
    guard: Optional[LocalizationGuard] = None,
    *,
    stride: int = 1,
    corrector=None,
    integrating_factor: bool = False,
    record_corrector: bool = False,
) -> TrajectoryRecord:
    """Advance ``psi0`` over ``grid`` with the chosen scheme.

    ``corrector`` selects the Ito conversion drift for ``ito_em``:
    ``None``/``"generic"`` (Frechet assembly), ``"closed"`` (reduced formula
    when the bundle has one), ``"linear"``, ``"off"``, or a callable
    ``(t, psi) -> field``. ``record_corrector`` also assembles it for the
    Heun scheme so the diagnostic column is populated.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    if inc.grid != grid:
        raise DimensionError("increments were sampled on a different grid")
    batch = psi0.batch_shape
    if inc.batch_shape != batch:
        raise DimensionError(f"increment batch {inc.batch_shape} does not match state batch {batch}")
    if grid.steps % stride:
        raise ValueError(f"stride {stride} does not divide {grid.steps} steps")
    _check_modes(G, inc.values[..., 0])
    guard = guard or LocalizationGuard()
    guard.reset(batch)
    corr = _resolve_corrector(corrector, G)
    N = psi0.dim_domain
    dt = grid.dt

    use_if = integrating_factor and drift.stiff is not None
    drift_fn = drift.nonstiff if use_if else drift.apply
    factor = np.exp(np.asarray(drift.stiff) * dt) if use_if else None

    steps = grid.steps
    states = np.empty((steps // stride + 1,) + psi0.coeffs.shape, dtype=complex)
    diag = {name: np.full((steps + 1,) + batch, np.nan) for name in ("energy", "enstrophy", "corrector_norm")}
    diag["stopped"] = np.zeros((steps + 1,) + batch, dtype=bool)

    velocity = N == 2 and psi0.dim_range == 2
    psi = psi0
    for k in range(steps + 1):
        power = power_spectrum(psi)
        stopped = guard.observe(k, psi, dt, power)
        if k % stride == 0:
            states[k // stride] = psi.coeffs
        l2 = sobolev_norm(psi, 0, power) ** 2
        diag["energy"][k] = 0.5 * l2
        diag["enstrophy"][k] = sobolev_norm(curl2d(psi), 0) ** 2 if velocity else l2
        diag["stopped"][k] = stopped
        if k == steps:
            break
        if np.all(stopped):
            diag["corrector_norm"][k] = 0.0
            continue
        t = k * dt
        dw = inc.step(k)
        if scheme == "ito_em":
            new, c = _em(psi, t, dt, drift_fn, G, dw, corr)
        else:
            new = _heun(psi, t, dt, drift_fn, G, dw)
            c = corr(t, psi, None) if record_corrector else None
        if c is not None:
            diag["corrector_norm"][k] = np.where(stopped, 0.0, sobolev_norm(c, 0))
        if use_if:
            new = new.replace(new.coeffs * factor)
        if not np.all(np.isfinite(new.coeffs)):
            raise NonFiniteError(f"non-finite state after step {k}", step=k)
        psi = _freeze(stopped, psi, new, N)

    stop_step = np.where(guard.stopped, guard.stop_step, steps)
    return TrajectoryRecord(
        grid=grid,
        states=states,
        stride=stride,
        dim_domain=N,
        stop_step=stop_step,
        stopped=guard.stopped.copy(),
        diagnostics=diag,
        scheme=scheme,
        flags={"zero_mean": psi0.zero_mean, "div_free": psi0.div_free},
        metadata={
            "integrating_factor": bool(use_if),
            "corrector": corrector if isinstance(corrector, (str, type(None), bool)) else "callable",
            "guard_threshold": guard.threshold,
            "guard_m": guard.m,
            "kernel_backend": kernels.BACKEND,
        },
    )


def simulate_linear_scalar(x0, mu, sigmas, inc: BrownianIncrements, scheme, corrector=True, backend=None):
    """Batched scalar paths of ``dX = mu X dt + sum_i sigma_i X (o) dW^i`` via the kernels.

    Equivalent to :func:`simulate` with a constant field, a linear drift and
    :func:`~itostrat.operators.multiplicative_bundle`, without the per-step
    Python overhead. Returns an array ``batch + (steps + 1,)``.
    """
    sigmas = np.atleast_1d(np.asarray(sigmas, float))
    vals = np.asarray(inc.values)
    if vals.ndim == 2:
        vals = vals[None]
    if vals.shape[-2] < len(sigmas):
        raise DimensionError("not enough increment modes")
    vals = vals[..., : len(sigmas), :]
    x0 = np.broadcast_to(np.asarray(x0, float), vals.shape[:1])
    out = kernels.linear_scalar_paths(x0, mu, sigmas, vals, inc.grid.dt, scheme, corrector, backend)
    return out if np.asarray(inc.values).ndim == 3 else out[0]
