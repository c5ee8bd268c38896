"""Pure-numpy fallback for the compiled kernels in ``_ckernels.pyx``.

Loops run over the sequential axis only; everything else is vectorised.
"""

import numpy as np


def neumaier_accumulate(total, comp, x):
    t = total + x
    big = np.abs(total) >= np.abs(x)
    comp += np.where(big, (total - t) + x, (x - t) + total)
    total[...] = t


def block_sums(values, factor):
    rows, steps = values.shape
    blocks = values.reshape(rows, steps // factor, factor)
    s = np.zeros((rows, steps // factor))
    c = np.zeros_like(s)
    for j in range(factor):
        neumaier_accumulate(s, c, np.ascontiguousarray(blocks[:, :, j]))
    return s + c


def compensated_cumsum(values):
    rows, steps = values.shape
    out = np.zeros((rows, steps + 1))
    s = np.zeros(rows)
    c = np.zeros(rows)
    for j in range(steps):
        neumaier_accumulate(s, c, values[:, j])
        out[:, j + 1] = s + c
    return out


def linear_scalar_paths(x0, mu, sigma, dW, dt, scheme, corr_weight):
    P, M, S = dW.shape
    half_s2 = 0.0
    for i in range(M):
        half_s2 += 0.5 * sigma[i] * sigma[i]
    out = np.empty((P, S + 1))
    x = np.array(x0, dtype=float)
    out[:, 0] = x
    for k in range(S):
        n0 = np.zeros(P)
        for i in range(M):
            n0 += sigma[i] * x * dW[:, i, k]
        if scheme == 0:
            x = x + dt * (mu * x + corr_weight * half_s2 * x) + n0
        else:
            xbar = x + n0
            n1 = np.zeros(P)
            for i in range(M):
                n1 += (sigma[i] * x + sigma[i] * xbar) * dW[:, i, k]
            x = x + dt * (mu * x) + 0.5 * n1
        out[:, k + 1] = x
    return out
