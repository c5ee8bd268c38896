"""Real vector fields on the N-torus in truncated Fourier representation.

Conventions
-----------
* The torus is ``[0, 2*pi)^N`` with the normalised measure ``(2*pi)^-N dx``,
  so ``||f||_{W^0}^2 = sum_k |f_k|^2`` (Parseval) and
  ``||f||_{W^m}^2 = sum_k (1 + |k|^2)^m |f_k|^2``.
* ``f(x) = sum_{|k_j| <= K} f_k exp(i k.x)``. Coefficients are stored in FFT
  order along each of the last ``N`` axes (length ``n = 2K + 1``), preceded by
  the range (component) axis of length ``d``. Any further leading axes are a
  batch of independent fields sharing the same geometry; every operation acts
  on the trailing ``N + 1`` axes only.
* Pointwise products are evaluated on a zero-padded grid of at least
  ``3K + 1`` points per axis (the 2/3 rule), so the product of two retained
  fields is the exact truncation of the true product.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import CutoffMismatchError, DimensionError, InvariantError

SUPPORTED_DIMS = (1, 2)


@dataclass(frozen=True)
class Geometry:
    """Precomputed lattice data for one ``(N, K)`` pair. Read-only."""

    dim: int
    cutoff: int
    n: int
    pad: int
    ks: np.ndarray
    kvec: tuple
    ksq: np.ndarray
    negidx: np.ndarray


@functools.lru_cache(maxsize=None)
def geometry(dim: int, cutoff: int) -> Geometry:
    if dim not in SUPPORTED_DIMS:
        raise DimensionError(f"domain dimension {dim} not supported (use 1 or 2)")
    if cutoff < 0:
        raise DimensionError(f"cutoff must be >= 0, got {cutoff}")
    n = 2 * cutoff + 1
    ks = np.fft.fftfreq(n, 1.0 / n).round().astype(np.int64)
    grids = np.meshgrid(*([ks] * dim), indexing="ij")
    kvec = tuple(g.astype(float) for g in grids)
    ksq = sum(k * k for k in kvec)
    pad = sfft.next_fast_len(3 * cutoff + 1, real=True) if cutoff else 1
    negidx = (n - np.arange(n)) % n
    for arr in (ks, ksq, negidx, *kvec):
        arr.setflags(write=False)
    return Geometry(dim, cutoff, n, pad, ks, kvec, ksq, negidx)


def _to_grid(coeffs: np.ndarray, geo: Geometry, size: int) -> np.ndarray:
    """Evaluate Hermitian coefficients on a uniform grid of ``size`` points per axis."""
    K = geo.cutoff
    if size < geo.n:
        raise DimensionError(f"grid size {size} cannot resolve cutoff {K}")
    lead = coeffs.shape[: coeffs.ndim - geo.dim]
    h = size // 2 + 1
    if geo.dim == 1:
        half = np.zeros(lead + (h,), dtype=complex)
        half[..., : K + 1] = coeffs[..., : K + 1]
        return sfft.irfft(half, n=size, norm="forward")
    rows = geo.ks % size
    half = np.zeros(lead + (size, h), dtype=complex)
    half[..., rows, : K + 1] = coeffs[..., :, : K + 1]
    return sfft.irfftn(half, s=(size, size), axes=(-2, -1), norm="forward")


def _from_grid(values: np.ndarray, geo: Geometry) -> np.ndarray:
    """Transform real grid values and truncate to the retained modes.

    The result is Hermitian symmetric bit-for-bit.
    """
    K = geo.cutoff
    size = values.shape[-1]
    if size < geo.n:
        raise DimensionError(f"grid size {size} cannot resolve cutoff {K}")
    if geo.dim == 1:
        half = sfft.rfft(values, norm="forward")[..., : K + 1]
        out = np.concatenate([half, np.conj(half[..., K:0:-1])], axis=-1)
        out[..., 0] = out[..., 0].real
        return out
    half = sfft.rfftn(values, axes=(-2, -1), norm="forward")
    sub = half[..., geo.ks % size, : K + 1]
    out = np.empty(sub.shape[:-1] + (geo.n,), dtype=complex)
    out[..., : K + 1] = sub
    out[..., K + 1 :] = np.conj(sub[..., geo.negidx, K:0:-1])
    line = out[..., :, 0]
    out[..., :, 0] = 0.5 * (line + np.conj(line[..., geo.negidx]))
    return out


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Truncated Fourier representation of a real ``d``-vector field on the torus.

    ``coeffs`` has shape ``batch + (d,) + (2K+1,)*N``. Instances are immutable;
    the coefficient array is exposed as a read-only view.
    """

    coeffs: np.ndarray
    dim_domain: int
    zero_mean: bool = False
    div_free: bool = False

    def __post_init__(self):
        N = self.dim_domain
        if N not in SUPPORTED_DIMS:
            raise DimensionError(f"domain dimension {N} not supported (use 1 or 2)")
        c = self.coeffs
        if type(c) is not np.ndarray or c.dtype != np.complex128:
            c = np.asarray(c).astype(np.complex128)
        if c.ndim < N + 1:
            raise DimensionError(f"coefficient array needs at least {N + 1} axes, got {c.ndim}")
        n = c.shape[-1]
        if n % 2 != 1 or any(s != n for s in c.shape[-N:]):
            raise DimensionError(f"trailing axes must all have the same odd length, got {c.shape}")
        view = c.view()
        view.flags.writeable = False
        object.__setattr__(self, "coeffs", view)

    # -- shape information ---------------------------------------------------
    @property
    def cutoff(self) -> int:
        return (self.coeffs.shape[-1] - 1) // 2

    @property
    def dim_range(self) -> int:
        return self.coeffs.shape[-self.dim_domain - 1]

    @property
    def batch_shape(self) -> tuple:
        return self.coeffs.shape[: -self.dim_domain - 1]

    @property
    def geometry(self) -> Geometry:
        return geometry(self.dim_domain, self.cutoff)

    def __repr__(self):
        flags = [name for name in ("zero_mean", "div_free") if getattr(self, name)]
        return (
            f"SpectralField(N={self.dim_domain}, d={self.dim_range}, K={self.cutoff}, "
            f"batch={self.batch_shape}, flags={flags})"
        )

    # -- constructors --------------------------------------------------------
    @classmethod
    def zeros(cls, dim_domain, dim_range, cutoff, batch=(), **flags):
        n = 2 * cutoff + 1
        shape = tuple(batch) + (dim_range,) + (n,) * dim_domain
        return cls(np.zeros(shape, dtype=complex), dim_domain, **flags)

    @classmethod
    def constant(cls, value, dim_domain, cutoff):
        """A spatially constant field; ``value`` is a real d-vector (or scalar)."""
        value = np.atleast_1d(np.asarray(value, dtype=float))
        f = cls.zeros(dim_domain, value.shape[-1], cutoff, batch=value.shape[:-1])
        c = np.array(f.coeffs)
        c[(..., slice(None)) + (0,) * dim_domain] = value
        return cls(c, dim_domain)

    @classmethod
    def from_grid(cls, values, dim_domain, cutoff, **flags):
        """Build from real samples on a uniform grid (``values[..., d, M, (M)]``).

        Modes above ``cutoff`` are discarded; the grid must have at least
        ``2K + 1`` points per axis.
        """
        values = np.asarray(values, dtype=float)
        geo = geometry(dim_domain, cutoff)
        return cls(_from_grid(values, geo), dim_domain, **flags)

    @classmethod
    def from_function(cls, func, dim_domain, cutoff, size=None, **flags):
        """Sample ``func(*x)`` on a grid and project onto the retained modes.

        ``func`` receives ``N`` coordinate arrays and returns either a scalar
        array of grid shape (``d = 1``) or a sequence of ``d`` such arrays.
        """
        geo = geometry(dim_domain, cutoff)
        size = size or max(geo.pad, geo.n)
        x = grid_points(size)
        xs = np.meshgrid(*([x] * dim_domain), indexing="ij")
        vals = np.asarray(func(*xs), dtype=float)
        if vals.shape == xs[0].shape:
            vals = vals[None]
        return cls.from_grid(vals, dim_domain, cutoff, **flags)

    # -- conversion ----------------------------------------------------------
    def to_grid(self, size=None) -> np.ndarray:
        """Real values on a uniform grid (default ``2K + 1`` points per axis)."""
        return _to_grid(self.coeffs, self.geometry, size or self.geometry.n)

    def replace(self, coeffs=None, **flags):
        kw = {"zero_mean": self.zero_mean, "div_free": self.div_free}
        kw.update(flags)
        return SpectralField(self.coeffs if coeffs is None else coeffs, self.dim_domain, **kw)

    def component(self, j) -> SpectralField:
        N = self.dim_domain
        if not 0 <= j < self.dim_range:
            raise DimensionError(f"component {j} out of range for d={self.dim_range}")
        return SpectralField(self.coeffs[(..., slice(j, j + 1)) + (slice(None),) * N], N)

    def mode(self, k) -> np.ndarray:
        """Complex d-vector (with batch axes) of the coefficient at lattice point ``k``."""
        k = np.atleast_1d(k)
        if len(k) != self.dim_domain or np.any(np.abs(k) > self.cutoff):
            raise DimensionError(f"mode {tuple(k)} not retained at K={self.cutoff}")
        idx = tuple(int(kj) % self.geometry.n for kj in k)
        return self.coeffs[(...,) + (slice(None),) + idx]

    def batch_item(self, index) -> SpectralField:
        return self.replace(self.coeffs[index])

    def is_constant(self) -> bool:
        c = self.coeffs.reshape(self.coeffs.shape[: -self.dim_domain] + (-1,))
        return not np.any(c[..., 1:])

    # -- arithmetic ----------------------------------------------------------
    def _check_compatible(self, other):
        if not isinstance(other, SpectralField):
            raise TypeError(f"expected SpectralField, got {type(other).__name__}")
        if other.dim_domain != self.dim_domain:
            raise DimensionError("fields live on tori of different dimension")
        if other.cutoff != self.cutoff:
            raise CutoffMismatchError(f"cutoffs differ: {self.cutoff} vs {other.cutoff}")
        if other.dim_range != self.dim_range:
            raise DimensionError(f"range dimensions differ: {self.dim_range} vs {other.dim_range}")

    def __add__(self, other):
        self._check_compatible(other)
        return SpectralField(
            self.coeffs + other.coeffs,
            self.dim_domain,
            zero_mean=self.zero_mean and other.zero_mean,
            div_free=self.div_free and other.div_free,
        )

    def __sub__(self, other):
        self._check_compatible(other)
        return SpectralField(
            self.coeffs - other.coeffs,
            self.dim_domain,
            zero_mean=self.zero_mean and other.zero_mean,
            div_free=self.div_free and other.div_free,
        )

    def __neg__(self):
        return self.replace(-self.coeffs)

    def __mul__(self, scalar):
        return self.scale(scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self.scale(1.0 / np.asarray(scalar, dtype=float))

    def scale(self, factor) -> SpectralField:
        """Multiply by a real scalar or by a real array of the batch shape."""
        factor = np.asarray(factor)
        if np.iscomplexobj(factor):
            raise TypeError("only real scale factors preserve the reality invariant")
        if factor.ndim:
            factor = factor.reshape(factor.shape + (1,) * (self.dim_domain + 1))
        return self.replace(self.coeffs * factor)


def grid_points(size: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(size) / size


def _same_geometry(*fields):
    first = fields[0]
    for f in fields[1:]:
        if f.dim_domain != first.dim_domain:
            raise DimensionError("fields live on tori of different dimension")
        if f.cutoff != first.cutoff:
            raise CutoffMismatchError(f"cutoffs differ: {first.cutoff} vs {f.cutoff}")
    return first.geometry


def partial_derivative(f: SpectralField, j: int) -> SpectralField:
    """Spectral ``d/dx_j``: multiplies the coefficient at ``k`` by ``i k_j``."""
    if not 0 <= j < f.dim_domain:
        raise DimensionError(f"axis {j} out of range for N={f.dim_domain}")
    mult = 1j * f.geometry.kvec[j]
    return f.replace(f.coeffs * mult, zero_mean=True)


def gradient(f: SpectralField) -> SpectralField:
    """Gradient of a scalar field (``d = 1``) as an ``N``-vector field."""
    if f.dim_range != 1:
        raise DimensionError("gradient expects a scalar field")
    geo = f.geometry
    c = np.concatenate([f.coeffs * (1j * k) for k in geo.kvec], axis=-geo.dim - 1)
    return SpectralField(c, f.dim_domain, zero_mean=True)


def divergence(f: SpectralField) -> SpectralField:
    N = f.dim_domain
    if f.dim_range != N:
        raise DimensionError("divergence expects an N-vector field")
    geo = f.geometry
    comp = -N - 1
    c = sum(np.take(f.coeffs, [j], axis=comp) * (1j * geo.kvec[j]) for j in range(N))
    return SpectralField(c, N, zero_mean=True)


def curl2d(u: SpectralField) -> SpectralField:
    """Scalar vorticity ``d1 u2 - d2 u1`` of a velocity field on the 2-torus."""
    if u.dim_domain != 2 or u.dim_range != 2:
        raise DimensionError("curl2d expects a 2-vector field on the 2-torus")
    k1, k2 = u.geometry.kvec
    c = 1j * k1 * u.coeffs[..., 1:2, :, :] - 1j * k2 * u.coeffs[..., 0:1, :, :]
    return SpectralField(c, 2, zero_mean=True)


def laplacian(f: SpectralField) -> SpectralField:
    return f.replace(-f.geometry.ksq * f.coeffs, zero_mean=True)


def _broadcast_components(a, b):
    if a.dim_range == b.dim_range or a.dim_range == 1 or b.dim_range == 1:
        return
    raise DimensionError(f"cannot multiply fields with d={a.dim_range} and d={b.dim_range}")


def dealiased_product(f: SpectralField, g: SpectralField, contraction=None) -> SpectralField:
    """Pointwise product on the padded grid, truncated back to the cutoff.

    Components multiply elementwise, with ``d = 1`` broadcasting against any
    ``d``. ``contraction="dot"`` additionally sums over components.
    """
    geo = _same_geometry(f, g)
    _broadcast_components(f, g)
    vals = f.to_grid(geo.pad) * g.to_grid(geo.pad)
    if contraction == "dot":
        vals = vals.sum(axis=-geo.dim - 1, keepdims=True)
    elif contraction is not None:
        raise ValueError(f"unknown contraction {contraction!r}")
    return SpectralField(_from_grid(vals, geo), f.dim_domain)


def apply_pointwise(f: SpectralField, func, size=None) -> SpectralField:
    """Apply a real scalar function pointwise on the padded grid and truncate.

    Exact for polynomials of degree ``p`` when ``size >= (p + 1) K + 1``;
    the default grid is the 2/3-rule grid (exact for quadratics).
    """
    geo = f.geometry
    size = size or geo.pad
    vals = np.asarray(func(f.to_grid(size)), dtype=float)
    return SpectralField(_from_grid(vals, geo), f.dim_domain)


def _constant_vector(xi: SpectralField) -> np.ndarray:
    return xi.coeffs[(..., slice(None)) + (0,) * xi.dim_domain].real


def lie_derivative(xi: SpectralField, f: SpectralField) -> SpectralField:
    """``L_xi f = sum_j xi^j d_j f`` with dealiased products."""
    geo = _same_geometry(xi, f)
    N = geo.dim
    if xi.dim_range != N:
        raise DimensionError(f"transporting field needs d={N}, got d={xi.dim_range}")
    comp = -N - 1
    if xi.is_constant():
        # product with a constant is exact without a grid round trip
        cvec = _constant_vector(xi)
        mult = sum(
            cvec[..., j].reshape(cvec.shape[:-1] + (1,) * (N + 1)) * (1j * geo.kvec[j])
            for j in range(N)
        )
        return SpectralField(f.coeffs * mult, N)
    dfs = np.stack([f.coeffs * (1j * k) for k in geo.kvec], axis=comp - 1)
    dvals = _to_grid(dfs, geo, geo.pad)
    xvals = np.expand_dims(xi.to_grid(geo.pad), comp)
    total = (xvals * dvals).sum(axis=comp - 1)
    return SpectralField(_from_grid(total, geo), N)


def holm_noise_op(xi: SpectralField, f: SpectralField) -> SpectralField:
    """Transport plus stretching: ``sum_j xi^j d_j f + f^j grad(xi^j)``."""
    geo = _same_geometry(xi, f)
    N = geo.dim
    if xi.dim_range != N or f.dim_range != N:
        raise DimensionError("holm_noise_op expects N-vector fields for both arguments")
    if xi.is_constant():
        return lie_derivative(xi, f)
    comp = -N - 1
    dfs = np.stack([f.coeffs * (1j * k) for k in geo.kvec], axis=comp - 1)
    dxi = np.stack([xi.coeffs * (1j * k) for k in geo.kvec], axis=comp - 1)
    shape = np.broadcast_shapes(dfs.shape, dxi.shape)
    stacked = np.concatenate([np.broadcast_to(dfs, shape), np.broadcast_to(dxi, shape)], axis=comp - 1)
    dvals = _to_grid(stacked, geo, geo.pad)
    dfv = np.take(dvals, range(N), axis=comp - 1)
    dxv = np.take(dvals, range(N, 2 * N), axis=comp - 1)
    xv = xi.to_grid(geo.pad)
    fv = f.to_grid(geo.pad)
    transport = (np.expand_dims(xv, comp) * dfv).sum(axis=comp - 1)
    # dxv[..., l, j] = d_l xi^j ; stretching_l = sum_j f^j d_l xi^j
    stretch = (np.expand_dims(fv, comp - 1) * dxv).sum(axis=comp)
    return SpectralField(_from_grid(transport + stretch, geo), N)


def leray_project(f: SpectralField) -> SpectralField:
    """Orthogonal projection onto zero-mean divergence-free fields."""
    geo = f.geometry
    N = geo.dim
    if f.dim_range != N:
        raise DimensionError("Leray projection expects an N-vector field")
    comp = -N - 1
    ksq = np.where(geo.ksq == 0, 1.0, geo.ksq)
    kdotc = sum(np.take(f.coeffs, [j], axis=comp) * geo.kvec[j] for j in range(N)) / ksq
    c = np.concatenate(
        [np.take(f.coeffs, [j], axis=comp) - geo.kvec[j] * kdotc for j in range(N)], axis=comp
    )
    c[(..., slice(None)) + (0,) * N] = 0.0
    return SpectralField(c, N, zero_mean=True, div_free=True)


def _reduce(values, f):
    out = values.reshape(values.shape[: values.ndim - f.dim_domain - 1] + (-1,)).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


@functools.lru_cache(maxsize=None)
def _sobolev_weight(dim, cutoff, m):
    w = (1.0 + geometry(dim, cutoff).ksq) ** m
    w.setflags(write=False)
    return w


def power_spectrum(f: SpectralField) -> np.ndarray:
    """``|f_k|^2`` summed over components: shape ``batch + (n,)*N``."""
    c = f.coeffs
    p = c.real**2 + c.imag**2
    return p.sum(axis=-f.dim_domain - 1)


def sobolev_norm(f: SpectralField, m: int = 0, power=None):
    """``(sum_k (1 + |k|^2)^m |f_k|^2)^(1/2)`` summed over components.

    Returns a float, or an array over the batch axes. ``power`` may pass a
    precomputed :func:`power_spectrum` of ``f``.
    """
    if power is None:
        power = power_spectrum(f)
    if m == 0 or f.cutoff == 0:
        w = power
    else:
        w = _sobolev_weight(f.dim_domain, f.cutoff, m) * power
    out = w.reshape(w.shape[: w.ndim - f.dim_domain] + (-1,)).sum(axis=-1)
    return float(np.sqrt(out)) if out.ndim == 0 else np.sqrt(out)


def inner(f: SpectralField, g: SpectralField):
    """W^0 inner product; equals the normalised-measure integral of f.g."""
    _same_geometry(f, g)
    return _reduce((f.coeffs * np.conj(g.coeffs)).real, f)


def enstrophy(f: SpectralField):
    """Squared L^2 norm of vorticity: curl for 2D velocities, the field itself otherwise."""
    if f.dim_domain == 2 and f.dim_range == 2:
        f = curl2d(f)
    return sobolev_norm(f, 0) ** 2


def energy(f: SpectralField):
    return 0.5 * sobolev_norm(f, 0) ** 2


def reality_defect(f: SpectralField) -> float:
    geo = f.geometry
    c = f.coeffs
    flipped = c
    for ax in range(-geo.dim, 0):
        flipped = np.take(flipped, geo.negidx, axis=ax)
    return float(np.max(np.abs(c - np.conj(flipped)), initial=0.0))


def divergence_defect(f: SpectralField) -> float:
    if f.dim_range != f.dim_domain:
        return float("inf")
    return float(np.max(np.abs(divergence(f).coeffs), initial=0.0))


def check_invariants(f: SpectralField, tol: float = 1e-12) -> None:
    """Raise :class:`InvariantError` unless reality and flagged properties hold."""
    scale = 1.0 + float(np.max(np.abs(f.coeffs), initial=0.0))
    if reality_defect(f) > tol * scale:
        raise InvariantError(f"reality violated by {reality_defect(f):.3e}")
    if f.zero_mean:
        mean = np.abs(f.coeffs[(..., slice(None)) + (0,) * f.dim_domain])
        if np.max(mean, initial=0.0) > tol * scale:
            raise InvariantError("zero-mean flag set but mean mode is nonzero")
    if f.div_free and divergence_defect(f) > tol * scale * (1 + f.cutoff):
        raise InvariantError(f"divergence-free flag set but k.f_k = {divergence_defect(f):.3e}")


def random_field(
    rng, dim_domain, dim_range, cutoff, *, decay=2.0, active=None, batch=(), zero_mean=False
) -> SpectralField:
    """Random smooth real field with coefficient amplitudes ``(1 + |k|)^-decay``.

    ``active`` restricts the excitation to ``|k_j| <= active``.
    """
    geo = geometry(dim_domain, cutoff)
    shape = tuple(batch) + (dim_range,) + (geo.n,) * dim_domain
    raw = rng.standard_normal(shape + (2,))
    amp = (1.0 + np.sqrt(geo.ksq)) ** (-decay)
    if active is not None:
        mask = np.ones_like(amp, dtype=bool)
        for k in geo.kvec:
            mask &= np.abs(k) <= active
        amp = amp * mask
    c = (raw[..., 0] + 1j * raw[..., 1]) * amp
    if zero_mean:
        c[(..., slice(None)) + (0,) * dim_domain] = 0.0
    # project onto real fields by Hermitian symmetrisation
    flipped = c
    for ax in range(-dim_domain, 0):
        flipped = np.take(flipped, geo.negidx, axis=ax)
    c = 0.5 * (c + np.conj(flipped))
    return SpectralField(c, dim_domain, zero_mean=zero_mean)
