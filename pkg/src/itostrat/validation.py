"""Sampled checks of the operator hypotheses behind the conversion.

None of these prove anything: they evaluate the growth and summability
bounds on random inputs and report the worst observed ratios, so that a
model definition that plainly violates them is caught.
"""

from __future__ import annotations

import math

import numpy as np

from .operators import NoiseFamily, OperatorBundle, fd_frechet
from .spectral import (
    SpectralField,
    divergence_defect,
    partial_derivative,
    random_field,
    reality_defect,
    sobolev_norm,
)


def summability_report(fam: NoiseFamily) -> dict:
    """``sum_{i<M} c_i^2`` and, if known, the tail ``sum_{i>=M} c_i^2``."""
    rep = fam.summability()
    rep["relative_tail"] = (
        None if rep["tail_c2"] is None else rep["tail_c2"] / (rep["sum_c2"] + rep["tail_c2"])
    )
    return rep


def _sample_states(rng, like: SpectralField, count, scales=(0.1, 1.0, 3.0)):
    out = []
    for j in range(count):
        f = random_field(rng, like.dim_domain, like.dim_range, like.cutoff, decay=3.0,
                         active=max(1, like.cutoff // 3), zero_mean=like.zero_mean)
        out.append(f.scale(scales[j % len(scales)]))
    return out


def drift_growth_check(drift, like: SpectralField, m=1, samples=20, seed=0, t=0.0) -> dict:
    """Worst ratio ``||A(t, psi)||_{W^{m-1}} / c (1 + ||psi||_{W^m}^p)(1 + ||psi||_{W^{m+1}}^2)``.

    A ratio above 1 means the declared ``(c, p)`` does not bound the drift.
    """
    c, p = drift.growth
    rng = np.random.default_rng(seed)
    worst = 0.0
    for psi in _sample_states(rng, like, samples):
        a = drift.apply(t, psi)
        if not np.all(np.isfinite(a.coeffs)):
            return {"ok": False, "worst_ratio": math.inf, "c": c, "p": p}
        bound = (1 + sobolev_norm(psi, m) ** p) * (1 + sobolev_norm(psi, m + 1) ** 2)
        val = sobolev_norm(a, m - 1)
        if c == 0:
            ratio = 0.0 if val == 0 else math.inf
        else:
            ratio = val / (c * bound)
        worst = max(worst, ratio)
    return {"ok": worst <= 1.0, "worst_ratio": worst, "c": c, "p": p}


def linearity_check(G: OperatorBundle, like: SpectralField, trials=10, seed=0, t=0.3) -> float:
    """Max relative defect of ``G_i(a x + b y) = a G_i(x) + b G_i(y)`` over modes and trials."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        x, y = _sample_states(rng, like, 2)
        a, b = rng.standard_normal(2)
        for i in range(G.modes):
            lhs = G.eval(i, t, x.scale(a) + y.scale(b))
            rhs = G.eval(i, t, x).scale(a) + G.eval(i, t, y).scale(b)
            scale = 1.0 + sobolev_norm(rhs)
            worst = max(worst, sobolev_norm(lhs - rhs) / scale)
    return worst


def frechet_linearity_check(G: OperatorBundle, like: SpectralField, trials=10, seed=0, t=0.3) -> float:
    """Max relative defect of additivity/homogeneity of ``phi -> D_u G_i(t, psi)[phi]``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    if G.frechet is None:
        return 0.0
    for _ in range(trials):
        psi, x, y = _sample_states(rng, like, 3)
        a, b = rng.standard_normal(2)
        for i in range(G.modes):
            lhs = G.frechet(i, t, psi, x.scale(a) + y.scale(b))
            rhs = G.frechet(i, t, psi, x).scale(a) + G.frechet(i, t, psi, y).scale(b)
            worst = max(worst, sobolev_norm(lhs - rhs) / (1.0 + sobolev_norm(rhs)))
    return worst


def frechet_vs_fd(G: OperatorBundle, like: SpectralField, trials=5, seed=0, t=0.3) -> float:
    """Max relative W^0 gap between the analytic Frechet derivative and central differences."""
    if G.frechet is None:
        return 0.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        psi, phi = _sample_states(rng, like, 2, scales=(1.0,))
        for i in range(G.modes):
            a = G.frechet(i, t, psi, phi)
            b = fd_frechet(G, i, t, psi, phi)
            worst = max(worst, sobolev_norm(a - b) / max(sobolev_norm(a), 1e-300))
    return worst


def summand_bound(G: OperatorBundle, states, m=None, t=0.0):
    """Ratios ``||D_u G_i[G_i]||_{W^0} / (c_i^2 (1 + ||psi||_{W^{m+1}}))`` (modes x states)."""
    m = G.regularity if m is None else m
    c = np.asarray(G.amplitudes if G.amplitudes is not None else np.ones(G.modes), float)
    out = np.zeros((G.modes, len(states)))
    for j, psi in enumerate(states):
        denom = 1.0 + sobolev_norm(psi, m + 1)
        for i in range(G.modes):
            g = G.eval(i, t, psi)
            s = G.frechet(i, t, psi, g) if G.frechet is not None else fd_frechet(G, i, t, psi, g)
            w = c[i] ** 2 * denom
            out[i, j] = sobolev_norm(s) / w if w > 0 else (0.0 if sobolev_norm(s) == 0 else math.inf)
    return out


def fit_summand_constant(G: OperatorBundle, like: SpectralField, train=8, test=8, seed=0) -> dict:
    """Fit ``C`` on one batch of states and check it bounds a fresh batch."""
    rng = np.random.default_rng(seed)
    C = float(summand_bound(G, _sample_states(rng, like, train)).max())
    fresh = float(summand_bound(G, _sample_states(rng, like, test)).max())
    # headroom: the fit is a sample maximum
    return {"C": C, "fresh_max": fresh, "ok": fresh <= 2.0 * C}


def fit_derivative_exponent(G: OperatorBundle, like: SpectralField, q=None, seed=0, t=0.0,
                            lambdas=(1.0, 2.0, 4.0, 8.0, 16.0, 32.0)) -> dict:
    """Estimate ``q`` in ``||D_u G_i(t, psi)|| <= c_i (1 + ||psi||_H^q)`` along rays ``lambda psi``.

    The operator norm is probed with a fixed unit direction. ``q_hat`` is the
    log-log slope over the two largest ``lambda`` values; ``finite`` is false
    when the slope is still growing there (no polynomial bound fits).
    """
    rng = np.random.default_rng(seed)
    psi, phi = _sample_states(rng, like, 2, scales=(1.0,))
    phi = phi.scale(1.0 / sobolev_norm(phi, G.regularity + 1))
    m = G.regularity
    xs, ys = [], []
    for lam in lambdas:
        p = psi.scale(lam)
        r = 0.0
        for i in range(G.modes):
            d = G.frechet(i, t, p, phi) if G.frechet is not None else fd_frechet(G, i, t, p, phi)
            r = max(r, sobolev_norm(d))
        xs.append(math.log(1.0 + sobolev_norm(p, m)))
        ys.append(math.log(max(r, 1e-300)))
    slopes = np.diff(ys) / np.diff(xs)
    q_hat = float(slopes[-1])
    finite = bool(np.isfinite(q_hat) and slopes[-1] <= slopes[-2] + 0.25)
    res = {"q_hat": q_hat, "slopes": slopes.tolist(), "finite": finite}
    if q is not None:
        res["q"] = q
        res["consistent"] = finite and q_hat <= q + 0.25
    return res


def xi_spot_check(fam: NoiseFamily, times, order=2) -> dict:
    """Sampled ``max_t max_x |D^a xi_i(t)|`` for ``|a| <= order`` and divergence defects."""
    if fam.modes == 0:
        return {"sup_norms": [], "div_defect": 0.0, "reality_defect": 0.0}
    sups = np.zeros(fam.modes)
    div = 0.0
    real = 0.0
    for t in times:
        for i in range(fam.modes):
            xi = fam.xi(i, float(t))
            real = max(real, reality_defect(xi))
            if fam.div_free:
                div = max(div, divergence_defect(xi))
            frontier = [xi]
            for _ in range(order + 1):
                nxt = []
                for f in frontier:
                    sups[i] = max(sups[i], float(np.max(np.abs(f.to_grid(f.geometry.pad)))))
                    nxt.extend(partial_derivative(f, j) for j in range(f.dim_domain))
                frontier = nxt
    return {"sup_norms": sups.tolist(), "div_defect": div, "reality_defect": real}


def validate_model(model, seed=0, samples=8) -> dict:
    """Run every applicable check on a :class:`~itostrat.models.ModelSpec`."""
    rng = np.random.default_rng(seed)
    like = model.initial(rng)
    G = model.noise
    report = {"model": model.name, "modes": G.modes}
    if G.family is not None:
        report["summability"] = summability_report(G.family)
        report["xi"] = xi_spot_check(G.family, np.linspace(0.0, 1.0, 3))
    elif G.amplitudes is not None:
        c2 = np.asarray(G.amplitudes, float) ** 2
        report["summability"] = {"modes": G.modes, "sum_c2": float(c2.sum()), "tail_c2": 0.0,
                                 "relative_tail": 0.0}
    report["drift_growth"] = drift_growth_check(model.drift, like, max(model.m, 1), samples, seed)
    if G.linear:
        report["linearity_defect"] = linearity_check(G, like, 3, seed)
    report["frechet_linearity_defect"] = frechet_linearity_check(G, like, 3, seed)
    report["frechet_vs_fd"] = frechet_vs_fd(G, like, 2, seed)
    report["summand_bound"] = fit_summand_constant(G, like, samples // 2, samples // 2, seed)
    report["derivative_exponent"] = fit_derivative_exponent(G, like, G.meta.get("q"), seed)
    return report


__all__ = [
    "drift_growth_check",
    "fit_derivative_exponent",
    "fit_summand_constant",
    "frechet_linearity_check",
    "frechet_vs_fd",
    "linearity_check",
    "summability_report",
    "summand_bound",
    "validate_model",
    "xi_spot_check",
]
