"""Concrete models: closed-form oracles and the two transport-noise systems.

Navier-Stokes is integrated in velocity form on the 2-torus with Leray
projection; the noise enters as ``-P B_i(t, u) o dW^i``. The modulated
transport model acts on a scalar (vorticity-like) field with
``L_xi(f(psi)) o dW``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import zeta

from .errors import ConfigError, DimensionError
from .integrators import DriftSpec, linear_drift, zero_drift
from .operators import (
    NoiseFamily,
    OperatorBundle,
    make_transport_bundle,
    multiplicative_bundle,
    zero_bundle,
)
from .spectral import (
    SpectralField,
    geometry,
    laplacian,
    leray_project,
    lie_derivative,
    random_field,
)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Everything needed to run one experiment family.

    ``initial(rng, batch)`` builds the starting state; ``exact`` (if given)
    maps ``(psi0, W_t path values, t)`` to the reference solution.
    ``corrector_mode`` is the default option passed to the EM scheme.
    """

    name: str
    N: int
    d: int
    m: int
    cutoff: int
    drift: DriftSpec
    noise: OperatorBundle
    initial: Callable
    guard: float = math.inf
    corrector_mode: Optional[object] = None
    exact: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.N not in (1, 2) or self.d < 1:
            raise DimensionError(f"model {self.name}: bad dimensions N={self.N}, d={self.d}")
        fam = self.noise.family
        if fam is not None and self.noise.modes != fam.modes:
            raise DimensionError(f"model {self.name}: bundle and family disagree on mode count")

    @property
    def modes(self) -> int:
        return self.noise.modes

    @property
    def linear_scalar(self) -> bool:
        """True when the kernel fast path applies (constant scalar GBM)."""
        return self.name == "gbm"


# -- closed-form oracles -------------------------------------------------------

def gbm_exact(x0, sigma, w_t, mu=0.0, t=0.0):
    """Stratonovich GBM solution ``x0 exp(mu t + sigma w_t)``."""
    return x0 * np.exp(mu * np.asarray(t) + sigma * np.asarray(w_t))


def advection_exact(psi0: SpectralField, xi_const, w_t) -> SpectralField:
    """Translate ``psi0`` by ``xi w_t``: ``psi(x) = psi0(x + xi w_t)``.

    ``w_t`` may be an array over the batch axes of ``psi0``.
    """
    if isinstance(xi_const, SpectralField):
        if not xi_const.is_constant():
            raise ValueError("advection_exact needs a spatially constant transport field")
        xi_const = xi_const.coeffs[(..., slice(None)) + (0,) * xi_const.dim_domain].real
    xi = np.atleast_1d(np.asarray(xi_const, float))
    geo = psi0.geometry
    if xi.shape != (geo.dim,):
        raise DimensionError(f"expected a constant {geo.dim}-vector, got shape {xi.shape}")
    w = np.asarray(w_t, float)
    w = w.reshape(w.shape + (1,) * (geo.dim + 1))
    phase = sum(xi[j] * geo.kvec[j] for j in range(geo.dim))
    shifted = psi0.coeffs * np.exp(1j * phase * w)
    return psi0.replace(shifted)


def biot_savart(w: SpectralField, tol=1e-12) -> SpectralField:
    """Velocity with vorticity ``w`` on the 2-torus: ``u_k = i k^perp w_k / |k|^2``.

    Convention ``k^perp = (k2, -k1)``, so that ``curl u = d1 u2 - d2 u1 = w``;
    ``w = sin(x1)`` maps to ``u = (0, -cos(x1))``.
    """
    if w.dim_domain != 2 or w.dim_range != 1:
        raise DimensionError("biot_savart needs a scalar field on the 2-torus")
    mean = np.abs(w.coeffs[..., 0, 0, 0])
    if np.max(mean, initial=0.0) > tol * (1.0 + np.max(np.abs(w.coeffs), initial=0.0)):
        raise ValueError("vorticity must have zero mean")
    geo = w.geometry
    k1, k2 = geo.kvec
    ksq = np.where(geo.ksq == 0, 1.0, geo.ksq)
    wk = w.coeffs[..., 0, :, :]
    u1 = 1j * k2 * wk / ksq
    u2 = -1j * k1 * wk / ksq
    u = np.stack([u1, u2], axis=-3)
    u[..., 0, 0] = 0.0
    return SpectralField(u, 2, zero_mean=True, div_free=True)


def taylor_green(cutoff: int, amplitude: float = 1.0) -> SpectralField:
    """``u = A (sin x1 cos x2, -cos x1 sin x2)``: a steady Euler flow whose
    Navier-Stokes energy decays as ``exp(-2 nu |k|^2 t)`` with ``|k|^2 = 2``."""
    if cutoff < 1:
        raise ValueError("Taylor-Green data needs cutoff >= 1")
    return SpectralField.from_function(
        lambda x, y: [amplitude * np.sin(x) * np.cos(y), -amplitude * np.cos(x) * np.sin(y)],
        2, cutoff, zero_mean=True, div_free=True,
    )


# -- noise families -------------------------------------------------------------

def _shear_wavevectors(count: int, dim: int):
    """Half-lattice wavevectors ordered by ``|k|^2`` then lexicographically."""
    out = []
    r = 1
    while len(out) < 2 * count:
        ring = []
        for a in range(-r, r + 1):
            for b in ([0] if dim == 1 else range(-r, r + 1)):
                k = (a,) if dim == 1 else (a, b)
                if max(abs(x) for x in k) != r:
                    continue
                # one representative per +-k pair
                if next(x for x in k if x != 0) < 0:
                    continue
                ring.append(k)
        ring.sort(key=lambda k: (sum(x * x for x in k), k))
        out.extend(ring)
        r += 1
    out.sort(key=lambda k: (sum(x * x for x in k), k))
    return out


def shear_family(modes: int, cutoff: int, s: float = 2.0, *, eps: float = 0.0, omega: float = 1.0,
                 scale: float = 1.0, dim: int = 2, kmax: Optional[int] = None) -> NoiseFamily:
    """Divergence-free Fourier shear fields ``xi_i = a_i(t) c_i k^perp/|k| trig(k.x)``.

    ``c_i = scale * i^-s`` (1-based ``i``) so that ``sum c_i^2`` has the
    closed-form tail ``scale^2 zeta(2s, M+1)``.  Modes alternate cosine and
    sine over wavevectors ordered by ``|k|``. The modulation is
    ``a_i(t) = 1 + eps (sin(omega t + i) - sin(i))``, smooth in time with ``a_i(0) = 1``;
    ``eps = 0`` gives a time-independent family.  ``kmax`` caps ``|k_j|``
    (``cutoff // 2`` by default, keeping products band-limited).

    In one dimension the only divergence-free fields are constants; there the
    family is ``xi_i = c_i`` (constant shifts).
    """
    if s <= 0.5:
        raise ValueError("need s > 1/2 for a summable family")
    if dim not in (1, 2):
        raise DimensionError("dimension must be 1 or 2")
    amps = scale * np.arange(1, modes + 1, dtype=float) ** (-s)
    kmax = max(1, cutoff // 2) if kmax is None else kmax
    base = []
    if dim == 1:
        for i in range(modes):
            base.append(SpectralField.constant([amps[i]], 1, cutoff))
    else:
        ks = [k for k in _shear_wavevectors(modes, 2) if max(map(abs, k)) <= kmax]
        if 2 * len(ks) < modes:
            raise ValueError(f"cutoff {cutoff} too small for {modes} shear modes")
        for i in range(modes):
            k = ks[i // 2]
            norm = math.hypot(*k)
            perp = (k[1] / norm, -k[0] / norm)
            trig = np.cos if i % 2 == 0 else np.sin
            func = (lambda x, y, k=k, perp=perp, trig=trig, c=amps[i]:
                    [c * perp[0] * trig(k[0] * x + k[1] * y), c * perp[1] * trig(k[0] * x + k[1] * y)])
            f = SpectralField.from_function(func, 2, cutoff, zero_mean=True)
            # scrub projection rounding so the field is exactly divergence-free
            base.append(leray_project(f))
    base = tuple(base)

    if eps == 0.0:
        return NoiseFamily(lambda i, t: base[i], amps, div_free=True,
                           tail=lambda M: scale**2 * float(zeta(2 * s, M + 1)), name="shear")

    def a(i, t):
        # exactly 1 at t = 0, so the flow at t = 0 is the unmodulated family
        return 1.0 + eps * (math.sin(omega * t + i) - math.sin(i))

    def adot(i, t):
        return eps * omega * math.cos(omega * t + i)

    def xi(i, t):
        c = a(i, t)
        return base[i] if c == 1.0 else base[i].scale(c)

    def xi_dot(i, t):
        return base[i].scale(adot(i, t))

    return NoiseFamily(xi, amps, div_free=True, xi_dot=xi_dot,
                       tail=lambda M: scale**2 * float(zeta(2 * s, M + 1)), name="shear(t)")


# -- models -----------------------------------------------------------------------

def gbm_model(mu=0.0, sigma=1.0, x0=1.0, modes=1) -> ModelSpec:
    """Scalar ``dX = mu X dt + sigma X o dW`` as a constant field (``K = 0``)."""
    sig = np.full(modes, float(sigma)) if np.ndim(sigma) == 0 else np.asarray(sigma, float)
    if modes != len(sig):
        raise ConfigError("sigma length does not match modes")

    def initial(rng, batch=()):
        return SpectralField.constant(np.full(tuple(batch) + (1,), float(x0)), 1, 0)

    def exact(psi0, wpath, t):
        # wpath: batch + (M,) array of W_t
        coeff = psi0.coeffs[..., 0, 0].real
        expo = mu * t + np.tensordot(np.asarray(wpath), sig, axes=([-1], [0]))
        return coeff * np.exp(expo)

    return ModelSpec("gbm", 1, 1, 0, 0, linear_drift(mu), multiplicative_bundle(sig), initial,
                     corrector_mode="linear", exact=exact,
                     params={"mu": float(mu), "sigma": sig.tolist(), "x0": float(x0)})


def _profile(name, N, d, cutoff, amplitude):
    if N == 1 and d == 1:
        if name == "sin":
            return SpectralField.from_function(lambda x: amplitude * np.sin(x), 1, cutoff)
        if name == "lowmode":
            return SpectralField.from_function(
                lambda x: amplitude * (np.sin(x) + 0.5 * np.cos(2 * x) + 0.25 * np.sin(3 * x)), 1, cutoff)
    if N == 2 and d == 1:
        if name == "lowmode":
            return SpectralField.from_function(
                lambda x, y: amplitude * (np.sin(x) * np.cos(y) + 0.5 * np.cos(2 * x + y)), 2, cutoff,
                zero_mean=True)
        if name == "sin":
            return SpectralField.from_function(lambda x, y: amplitude * np.sin(x), 2, cutoff, zero_mean=True)
    if N == 2 and d == 2 and name == "taylor_green":
        return taylor_green(cutoff, amplitude)
    raise ConfigError(f"no initial profile {name!r} for N={N}, d={d}")


def _load_initial(path, N, d, cutoff):
    from .fieldio import read_field

    f = read_field(path)
    if (f.dim_domain, f.dim_range, f.cutoff) != (N, d, cutoff) or f.batch_shape:
        raise ConfigError(f"{path}: field has N={f.dim_domain}, d={f.dim_range}, K={f.cutoff}, "
                          f"batch={f.batch_shape}; model needs N={N}, d={d}, K={cutoff}, unbatched")
    return f


def _initial_from(profile, N, d, cutoff, amplitude, random=False, zero_mean=False):
    """Initial-data generator. ``profile`` is a named profile, ``"random"`` or ``"file:PATH"``."""
    random = random or profile == "random"
    fixed = None
    if profile.startswith("file:"):
        fixed = _load_initial(profile[5:], N, d, cutoff)
    elif not random:
        fixed = _profile(profile, N, d, cutoff, amplitude)

    def initial(rng, batch=()):
        if fixed is not None:
            f = fixed
        else:
            rng = np.random.default_rng(0) if rng is None else rng
            f = random_field(rng, N, d, cutoff, decay=3.0, active=max(1, cutoff // 4),
                             zero_mean=zero_mean or N == 2).scale(amplitude)
            if N == d == 2:
                f = leray_project(f)
        if batch:
            c = np.broadcast_to(f.coeffs, tuple(batch) + f.coeffs.shape).copy()
            f = f.replace(c)
        return f

    return initial


def advection1d_model(xi=1.0, cutoff=32, profile="lowmode", amplitude=1.0) -> ModelSpec:
    """Pure transport ``dpsi = xi d_x psi o dW`` on the circle with its exact solution."""
    fam = NoiseFamily.constant([SpectralField.constant([float(xi)], 1, cutoff)], [abs(float(xi))],
                               div_free=True, name="constant")
    G = make_transport_bundle(fam, "pure_advection")

    def exact(psi0, wpath, t):
        return advection_exact(psi0, [float(xi)], np.asarray(wpath)[..., 0])

    return ModelSpec("advection1d", 1, 1, 1, cutoff, zero_drift(), G,
                     _initial_from(profile, 1, 1, cutoff, amplitude), corrector_mode="linear",
                     exact=exact, params={"xi": float(xi), "cutoff": cutoff, "profile": profile})


def transport2d_model(fam: NoiseFamily, cutoff: int, profile="lowmode", amplitude=1.0, m=1) -> ModelSpec:
    """Scalar pure transport on the 2-torus (enstrophy-conserving in the Stratonovich sense)."""
    if not fam.div_free:
        raise ValueError("transport2d needs a divergence-free family")
    G = make_transport_bundle(fam, "pure_advection", regularity=m)
    return ModelSpec("transport2d", 2, 1, m, cutoff, zero_drift(), G,
                     _initial_from(profile, 2, 1, cutoff, amplitude), corrector_mode="linear",
                     params={"cutoff": cutoff, "profile": profile})


def nse_drift(nu: float, cutoff: int) -> DriftSpec:
    """``nu Lap u - P(u . grad u)`` with 2/3-rule dealiasing."""
    geo = geometry(2, cutoff)

    def nonlinear(t, u):
        adv = lie_derivative(u, u)
        return leray_project(adv).scale(-1.0)

    def apply(t, u):
        return laplacian(u).scale(nu) + nonlinear(t, u)

    stiff = -nu * geo.ksq
    return DriftSpec(apply, growth=(max(nu, 1.0), 1.0), stiff=stiff, nonstiff=nonlinear, name=f"nse(nu={nu})")


def nse2d_model(fam: NoiseFamily, nu: float = 0.05, m: int = 1, cutoff: int = 16,
                profile="taylor_green", amplitude=0.1, guard=math.inf) -> ModelSpec:
    """Stochastic Navier-Stokes in velocity form with Leray-Holm noise ``-P B_i``."""
    if not fam.div_free:
        raise ValueError("Navier-Stokes noise needs a divergence-free family")
    probe = fam.xi(0, 0.0) if fam.modes else None
    if probe is not None and (probe.dim_domain != 2 or probe.dim_range != 2):
        raise DimensionError("Navier-Stokes model needs 2D vector fields")
    G = make_transport_bundle(fam, "leray_holm", sign=-1.0, regularity=m) if fam.modes else zero_bundle(1)
    return ModelSpec("nse2d", 2, 2, m, cutoff, nse_drift(nu, cutoff), G,
                     _initial_from(profile, 2, 2, cutoff, amplitude), guard=guard,
                     corrector_mode="linear",
                     params={"nu": nu, "m": m, "cutoff": cutoff, "profile": profile, "amplitude": amplitude})


def modulated_model(fam: NoiseFamily, f, fprime, cutoff: int, N: int = 2, profile="lowmode",
                    amplitude=1.0, m=1) -> ModelSpec:
    """Scalar transport with modulated noise ``L_xi(f(psi)) o dW``; ``d = 1``."""
    probe = fam.xi(0, 0.0) if fam.modes else None
    if probe is not None and probe.dim_range != probe.dim_domain:
        raise DimensionError("transport fields must be N-vectors")
    G = make_transport_bundle(fam, "modulated", f=f, fprime=fprime, regularity=m)
    return ModelSpec("modulated", N, 1, m, cutoff, zero_drift(), G,
                     _initial_from(profile, N, 1, cutoff, amplitude), corrector_mode="closed",
                     params={"cutoff": cutoff, "profile": profile})


MODULATIONS = {
    "identity": (lambda u: u, lambda u: np.ones_like(u)),
    "quadratic": (lambda u: u + 0.5 * u * u, lambda u: 1.0 + u),
    "square": (lambda u: 0.5 * u * u, lambda u: u),
    "constant": (lambda u: np.ones_like(u), lambda u: np.zeros_like(u)),
}


def _fget(params, key, default, cast=float):
    v = params.get(key, default)
    try:
        return cast(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter {key}={v!r} is not a valid {cast.__name__}") from exc


def build_model(name: str, params: Optional[dict] = None) -> ModelSpec:
    """Construct a model from a flat parameter mapping (as read from a config file)."""
    p = dict(params or {})
    cutoff = _fget(p, "cutoff", 16, int)
    if name == "gbm":
        return gbm_model(_fget(p, "mu", 0.0), _fget(p, "sigma", 1.0), _fget(p, "x0", 1.0), _fget(p, "modes", 1, int))
    if name == "advection1d":
        return advection1d_model(_fget(p, "xi", 1.0), cutoff, p.get("profile", "lowmode"), _fget(p, "amplitude", 1.0))
    fam = shear_family(_fget(p, "modes", 4, int), cutoff, _fget(p, "s", 2.0), eps=_fget(p, "eps", 0.0),
                       omega=_fget(p, "omega", 1.0), scale=_fget(p, "xi_scale", 0.2))
    if name == "transport2d":
        return transport2d_model(fam, cutoff, p.get("profile", "lowmode"), _fget(p, "amplitude", 1.0))
    if name == "nse2d":
        return nse2d_model(fam, _fget(p, "nu", 0.05), _fget(p, "m", 1, int), cutoff, p.get("profile", "taylor_green"),
                           _fget(p, "amplitude", 0.1), _fget(p, "guard", math.inf))
    if name == "modulated":
        key = p.get("f", "quadratic")
        if key not in MODULATIONS:
            raise ConfigError(f"unknown modulation {key!r}; choose from {sorted(MODULATIONS)}")
        f, fp = MODULATIONS[key]
        return modulated_model(fam, f, fp, cutoff, 2, p.get("profile", "lowmode"), _fget(p, "amplitude", 1.0))
    raise ConfigError(f"unknown model {name!r}; choose from {MODEL_NAMES}")


MODEL_NAMES = ("gbm", "advection1d", "transport2d", "nse2d", "modulated")
