"""Kernel backend selection.

The compiled extension is used when it was built; otherwise (or when the
environment variable ``ITOSTRAT_PURE_PYTHON`` is set to a non-empty value
other than ``0``) the numpy fallback is used. ``BACKEND`` names the choice.
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("ITOSTRAT_PURE_PYTHON", "0") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

SCHEMES = {"ito_em": 0, "strat_heun": 1}


def backend_module(name=None):
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def neumaier_accumulate(total, comp, x, backend=None):
    """In-place compensated ``total += x`` on flat float64 arrays."""
    backend_module(backend).neumaier_accumulate(total, comp, x)


def block_sums(values, factor, backend=None):
    """Compensated sums over consecutive blocks of ``factor`` columns."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    return backend_module(backend).block_sums(values, int(factor))


def compensated_cumsum(values, backend=None):
    """Row-wise compensated running sums with a leading zero column."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    return backend_module(backend).compensated_cumsum(values)


def linear_scalar_paths(x0, mu, sigma, dW, dt, scheme, corrector=True, backend=None):
    """Batched paths of ``dX = mu X dt + sum_i sigma_i X dW^i``.

    ``scheme="ito_em"`` integrates the Ito form with the conversion drift
    ``0.5 sum sigma_i^2 X`` (omitted when ``corrector`` is false);
    ``scheme="strat_heun"`` integrates the Stratonovich form.
    ``dW`` has shape ``(paths, modes, steps)``; returns ``(paths, steps + 1)``.
    """
    return backend_module(backend).linear_scalar_paths(
        np.ascontiguousarray(x0, dtype=np.float64),
        float(mu),
        np.ascontiguousarray(sigma, dtype=np.float64),
        np.ascontiguousarray(dW, dtype=np.float64),
        float(dt),
        SCHEMES[scheme],
        1.0 if corrector else 0.0,
    )
