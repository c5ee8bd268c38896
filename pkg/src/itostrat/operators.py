"""Noise operators ``G_i(t, psi)`` and the conversion drift.

The Ito form of a Stratonovich equation driven by ``G(t, psi) o dW`` carries
the extra drift ``0.5 * sum_i D_u G_i(t, psi)[G_i(t, psi)]``. This module
assembles that sum for arbitrary bundles (analytic or finite-difference
Frechet derivatives) and provides the closed forms for linear operators and
for modulated transport ``L_xi(f(psi))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import DimensionError, NonFiniteError
from .spectral import (
    SpectralField,
    _from_grid,
    apply_pointwise,
    holm_noise_op,
    leray_project,
    lie_derivative,
    sobolev_norm,
)

TRANSPORT_VARIANTS = ("pure_advection", "holm", "leray_holm", "modulated")


@dataclass(frozen=True, eq=False)
class NoiseFamily:
    """Spatial correlation fields ``xi_i(t)`` with summability constants ``c_i``.

    ``xi(i, t)`` returns an ``N``-vector :class:`SpectralField`. ``xi_dot`` is
    its time derivative (``None`` means time independent). ``tail(M)`` should
    return ``sum_{i >= M} c_i^2`` when known in closed form.
    """

    xi: Callable[[int, float], SpectralField]
    amplitudes: np.ndarray
    div_free: bool = False
    xi_dot: Optional[Callable[[int, float], SpectralField]] = None
    tail: Optional[Callable[[int], float]] = None
    name: str = "family"

    @property
    def modes(self) -> int:
        return len(self.amplitudes)

    @property
    def time_dependent(self) -> bool:
        return self.xi_dot is not None

    @classmethod
    def constant(cls, fields, amplitudes=None, div_free=None, name="constant"):
        fields = tuple(fields)
        if amplitudes is None:
            amplitudes = [max(float(sobolev_norm(f, 0)), 0.0) for f in fields]
        if div_free is None:
            div_free = all(f.div_free for f in fields)
        return cls(lambda i, t: fields[i], np.asarray(amplitudes, float), div_free, name=name)

    def frozen(self, t0: float) -> NoiseFamily:
        """Time-independent family equal to this one at ``t0``."""
        fields = [self.xi(i, t0) for i in range(self.modes)]
        return NoiseFamily.constant(fields, self.amplitudes, self.div_free, name=f"{self.name}@{t0}")

    def summability(self) -> dict:
        c2 = np.asarray(self.amplitudes, float) ** 2
        total = 0.0
        comp = 0.0
        for v in c2:  # ascending, compensated
            t = total + v
            comp += (total - t) + v if abs(total) >= abs(v) else (v - t) + total
            total = t
        return {
            "modes": self.modes,
            "sum_c2": total + comp,
            "tail_c2": None if self.tail is None else float(self.tail(self.modes)),
        }


@dataclass(frozen=True, eq=False)
class OperatorBundle:
    """A noise operator given mode by mode.

    eval(i, t, psi)        -> G_i(t, psi)
    frechet(i, t, psi, phi) -> D_u G_i(t, psi)[phi], or ``None`` (finite differences)
    time_deriv(i, t, psi)  -> d/dt G_i(t, psi), or ``None``
    closed_form(t, psi)    -> the full conversion drift, when a reduced formula is known
    """

    eval: Callable
    modes: int
    frechet: Optional[Callable] = None
    time_deriv: Optional[Callable] = None
    linear: bool = False
    regularity: int = 1
    amplitudes: Optional[np.ndarray] = None
    family: Optional[NoiseFamily] = None
    closed_form: Optional[Callable] = None
    name: str = "custom"
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class CorrectorReport:
    field: SpectralField
    mode_norms: np.ndarray
    tail_c2: Optional[float]
    lower_norms: dict


def zero_bundle(modes: int = 1) -> OperatorBundle:
    def ev(i, t, psi):
        return psi.replace(np.zeros_like(psi.coeffs))

    return OperatorBundle(ev, modes, frechet=lambda i, t, psi, phi: ev(i, t, phi),
                          time_deriv=ev, linear=True, amplitudes=np.zeros(modes), name="zero")


def multiplicative_bundle(sigmas) -> OperatorBundle:
    """``G_i(psi) = sigma_i psi``: the scalar (or pointwise) linear case."""
    sigmas = np.asarray(sigmas, float).ravel()

    def ev(i, t, psi):
        return psi.scale(sigmas[i])

    def zero(i, t, psi):
        return psi.replace(np.zeros_like(psi.coeffs))

    return OperatorBundle(
        ev, len(sigmas), frechet=lambda i, t, psi, phi: phi.scale(sigmas[i]), time_deriv=zero,
        linear=True, amplitudes=np.abs(sigmas), name="multiplicative", meta={"sigmas": sigmas},
    )


def _check_finite(f: SpectralField, what, mode=None):
    if not np.all(np.isfinite(f.coeffs)):
        raise NonFiniteError(f"non-finite values in {what}", mode=mode)


def fd_step(psi: SpectralField):
    return 1e-5 * (1.0 + sobolev_norm(psi, 0))


def fd_frechet(G: OperatorBundle, i, t, psi: SpectralField, phi: SpectralField, eps=None):
    """Central difference ``[G_i(t, psi + eps phi) - G_i(t, psi - eps phi)] / (2 eps)``.

    ``eps`` defaults to ``1e-5 (1 + ||psi||_{W^0})`` (per batch member).
    """
    if eps is None:
        eps = fd_step(psi)
    eps = np.asarray(eps, float)
    if np.any(eps <= 0):
        raise ValueError("finite-difference step must be positive")
    step = phi.scale(eps)
    plus = G.eval(i, t, psi + step)
    minus = G.eval(i, t, psi - step)
    _check_finite(plus, f"G_{i}(psi + eps phi)", i)
    _check_finite(minus, f"G_{i}(psi - eps phi)", i)
    return (plus - minus).scale(0.5 / eps)


class _Compensated:
    """Ascending, elementwise Neumaier sum of same-shaped fields."""

    def __init__(self):
        self.total = None

    def add(self, f: SpectralField):
        flat = np.ascontiguousarray(f.coeffs).view(np.float64).ravel()
        if self.total is None:
            self.template = f
            self.total = flat.copy()
            self.comp = np.zeros_like(flat)
        else:
            kernels.neumaier_accumulate(self.total, self.comp, flat)

    def result(self, scale=1.0) -> SpectralField:
        vals = (self.total + self.comp) * scale
        return SpectralField(vals.view(np.complex128).reshape(self.template.coeffs.shape),
                             self.template.dim_domain)


def _report(G, psi, summands_norms, acc, m):
    if acc.total is None:
        fieldv = psi.replace(np.zeros_like(psi.coeffs), zero_mean=False, div_free=False)
    else:
        fieldv = acc.result(0.5)
    lower = {}
    for mm in (m - 1, m - 2):
        lower[mm] = sobolev_norm(fieldv, mm)
    tail = None
    if G is not None and G.family is not None and G.family.tail is not None:
        tail = float(G.family.tail(G.modes))
    return CorrectorReport(fieldv, np.asarray(summands_norms), tail, lower)


def _generic_summands(G, t, psi, evals, eps):
    for i in range(G.modes):
        g = evals[i] if evals is not None else G.eval(i, t, psi)
        _check_finite(g, f"G_{i}", i)
        if G.frechet is not None:
            s = G.frechet(i, t, psi, g)
        else:
            s = fd_frechet(G, i, t, psi, g, eps)
        _check_finite(s, f"corrector summand {i}", i)
        yield s


def corrector(G: OperatorBundle, t, psi: SpectralField, evals=None, eps=None) -> CorrectorReport:
    """``0.5 * sum_{i<M} D_u G_i(t, psi)[G_i(t, psi)]``, ascending and compensated.

    Uses the analytic Frechet derivative when the bundle has one and
    :func:`fd_frechet` otherwise.
    """
    acc = _Compensated()
    norms = []
    for s in _generic_summands(G, t, psi, evals, eps):
        norms.append(sobolev_norm(s, 0))
        acc.add(s)
    return _report(G, psi, norms, acc, G.regularity)


def corrector_field(G: OperatorBundle, t, psi: SpectralField, evals=None, eps=None) -> SpectralField:
    """The assembled field of :func:`corrector` without the norm bookkeeping."""
    acc = _Compensated()
    for s in _generic_summands(G, t, psi, evals, eps):
        acc.add(s)
    if acc.total is None:
        return psi.replace(np.zeros_like(psi.coeffs), zero_mean=False, div_free=False)
    return acc.result(0.5)


def corrector_linear(G: OperatorBundle, t, psi: SpectralField, evals=None) -> CorrectorReport:
    """``0.5 * sum_i G_i(t, G_i(t, psi))`` for bundles linear in the state."""
    if not G.linear:
        raise ValueError(f"bundle {G.name!r} is not flagged linear")
    acc = _Compensated()
    norms = []
    for i in range(G.modes):
        g = evals[i] if evals is not None else G.eval(i, t, psi)
        s = G.eval(i, t, g)
        _check_finite(s, f"corrector summand {i}", i)
        norms.append(sobolev_norm(s, 0))
        acc.add(s)
    return _report(G, psi, norms, acc, G.regularity)


def _modulated_summand(xi, fprime, psi):
    geo = psi.geometry
    a = np.asarray(fprime(psi.to_grid(geo.pad)), float) ** 2
    inner_ = lie_derivative(xi, psi)
    weighted = SpectralField(_from_grid(a * inner_.to_grid(geo.pad), geo), psi.dim_domain)
    return lie_derivative(xi, weighted)


def corrector_modulated(fam: NoiseFamily, fprime, psi: SpectralField, t=0.0, regularity=1) -> CorrectorReport:
    """``0.5 * sum_i L_xi_i( f'(psi)^2 L_xi_i psi )`` for scalar fields."""
    if psi.dim_range != 1:
        raise DimensionError(f"modulated corrector needs a scalar field, got d={psi.dim_range}")
    acc = _Compensated()
    norms = []
    for i in range(fam.modes):
        s = _modulated_summand(fam.xi(i, t), fprime, psi)
        _check_finite(s, f"corrector summand {i}", i)
        norms.append(sobolev_norm(s, 0))
        acc.add(s)
    report = _report(None, psi, norms, acc, regularity)
    tail = None if fam.tail is None else float(fam.tail(fam.modes))
    return CorrectorReport(report.field, report.mode_norms, tail, report.lower_norms)


def _zero_like(psi):
    return psi.replace(np.zeros_like(psi.coeffs), zero_mean=True, div_free=psi.dim_range == psi.dim_domain)


def make_transport_bundle(fam: NoiseFamily, variant="pure_advection", f=None, fprime=None,
                          sign=1.0, regularity=1) -> OperatorBundle:
    """Transport-type bundle built from a :class:`NoiseFamily`.

    variant
        ``pure_advection``: ``L_xi psi``; ``holm``: ``B_i psi`` (transport +
        stretching); ``leray_holm``: ``P B_i psi``; ``modulated``:
        ``L_xi(f(psi))`` for scalar ``psi`` with ``fprime = f'``.
    ``sign`` multiplies every ``G_i`` (the Navier-Stokes noise enters with -1).
    """
    if variant not in TRANSPORT_VARIANTS:
        raise ValueError(f"unknown transport variant {variant!r}; choose from {TRANSPORT_VARIANTS}")
    sign = float(sign)

    if variant == "pure_advection":
        def op(xi, psi):
            return lie_derivative(xi, psi)
    elif variant == "holm":
        def op(xi, psi):
            return holm_noise_op(xi, psi)
    elif variant == "leray_holm":
        def op(xi, psi):
            return leray_project(holm_noise_op(xi, psi))
    else:
        if f is None or fprime is None:
            raise ValueError("modulated variant needs both f and fprime")

        def op(xi, psi):
            return lie_derivative(xi, apply_pointwise(psi, f))

    def _signed(g):
        return g if sign == 1.0 else g.scale(sign)

    def ev(i, t, psi):
        if variant in ("holm", "leray_holm") and psi.dim_range != psi.dim_domain:
            raise DimensionError(f"{variant} noise acts on N-vector fields")
        if variant == "modulated" and psi.dim_range != 1:
            raise DimensionError("modulated noise acts on scalar fields")
        return _signed(op(fam.xi(i, t), psi))

    if variant == "modulated":
        def frechet(i, t, psi, phi):
            geo = psi.geometry
            a = np.asarray(fprime(psi.to_grid(geo.pad)), float)
            w = SpectralField(_from_grid(a * phi.to_grid(geo.pad), geo), psi.dim_domain)
            return _signed(lie_derivative(fam.xi(i, t), w))

        def closed(t, psi):
            # sign enters squared
            return corrector_modulated(fam, fprime, psi, t, regularity).field
        linear = False
    else:
        def frechet(i, t, psi, phi):
            return ev(i, t, phi)

        closed = None
        linear = True

    if fam.xi_dot is None:
        def tderiv(i, t, psi):
            return _zero_like(psi)
    else:
        def tderiv(i, t, psi):
            return _signed(op(fam.xi_dot(i, t), psi))

    return OperatorBundle(
        ev, fam.modes, frechet=frechet, time_deriv=tderiv, linear=linear,
        regularity=regularity, amplitudes=np.asarray(fam.amplitudes, float), family=fam,
        closed_form=closed, name=variant, meta={"sign": sign},
    )


def without_frechet(G: OperatorBundle) -> OperatorBundle:
    """Copy of ``G`` whose corrector falls back to finite differences."""
    return OperatorBundle(
        G.eval, G.modes, frechet=None, time_deriv=G.time_deriv, linear=G.linear,
        regularity=G.regularity, amplitudes=G.amplitudes, family=G.family,
        closed_form=G.closed_form, name=G.name + "+fd", meta=dict(G.meta),
    )
